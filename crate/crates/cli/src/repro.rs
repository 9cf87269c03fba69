//! Bundled reproduction runs: the published experiment configurations, the
//! published distances, and the comparison report.
//!
//! The extended-mode length-4 controller on the full 16-point lattice takes
//! hours to synthesize; without `--allow-long` the runner substitutes an
//! 8-point lattice and compares against values computed locally with this
//! pipeline instead of the published ones.

use std::path::Path;

use serde::Serialize;

use rdcontrol::reduce::K2Method;
use rdcontrol::synth::guarantee_bound;

use crate::commands::{run_reduction, write_simulation_outputs, write_synthesis_outputs};
use crate::config::{prepare, RunConfig};
use crate::error::{CliError, CliResult};
use crate::pipeline::{run_simulation, run_synthesis};

pub const EXAMPLE1_SIGMA1_P1: &str = include_str!("../configs/example1-sigma1-p1.json");
pub const EXAMPLE1_SIGMA1_P2: &str = include_str!("../configs/example1-sigma1-p2.json");
pub const EXAMPLE1_SIGMA1_P4: &str = include_str!("../configs/example1-sigma1-p4.json");
pub const EXAMPLE1_SIGMA05_P1: &str = include_str!("../configs/example1-sigma05-p1.json");
pub const EXAMPLE1_SIGMA05_P2: &str = include_str!("../configs/example1-sigma05-p2.json");
pub const EXAMPLE1_SIGMA05_P4: &str = include_str!("../configs/example1-sigma05-p4.json");
pub const EXAMPLE2_FULL_SIGMA1: &str = include_str!("../configs/example2-full-sigma1.json");
pub const EXAMPLE2_FULL_SIGMA05: &str = include_str!("../configs/example2-full-sigma05.json");

/// Published final distances `||z(T) - y_f||` on the 5-node system
/// (extended-mode lengths 1, 2, 4; sigma = 1).
pub const PUBLISHED_E1_SIGMA1: [f64; 3] = [0.27642, 0.44496, 0.15294];

/// Published full-system distances `||y2(T) - y2_f||` (sigma = 1).
pub const PUBLISHED_E2_TABLE1_SIGMA1: [f64; 3] = [0.39904, 0.50092, 0.16738];

/// Published projection distances `||Pi y2(T) - y1_f||`.
pub const PUBLISHED_E2_TABLE2_SIGMA1: [f64; 3] = [0.67429, 0.27501, 0.31385];
pub const PUBLISHED_E2_TABLE2_SIGMA05: [f64; 3] = [0.77322, 0.72322, 0.21481];

/// Published OSL constant for the 5-node system, used for the reduction
/// bound in reproduction mode.
pub const PUBLISHED_LAMBDA_H1: f64 = -0.322;

/// Absolute tolerance for distance comparisons.
pub const DISTANCE_TOLERANCE: f64 = 0.10;

/// References computed locally with this pipeline on the 8-point fallback
/// lattice (length-4 extended modes only); regenerated by running the
/// corresponding `reproduce` id and reading the reported distances.
pub mod local_reference {
    /// `||z(T) - y_f||`, 5-node system, p = 4, sigma = 1, P = 8.
    pub const E1_SIGMA1_P4: f64 = 0.09082091857720288;
    /// `||y2(T) - y2_f||`, p = 4, sigma = 1, P = 8 pattern.
    pub const E2_TABLE1_SIGMA1_P4: f64 = 0.15610382188873675;
    /// `||Pi y2(T) - y1_f||`, p = 4, sigma = 1, P = 8 pattern.
    pub const E2_TABLE2_SIGMA1_P4: f64 = 0.33736056094983063;
    /// `||Pi y2(T) - y1_f||`, p = 4, sigma = 0.5, P = 8 pattern.
    pub const E2_TABLE2_SIGMA05_P4: f64 = 0.2518717129526261;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReproId {
    Example1P1,
    Example1P2,
    Example1P4,
    Example2Sigma1,
    Example2Sigma05,
}

impl ReproId {
    pub fn parse(text: &str) -> CliResult<Self> {
        match text {
            "example1-p1" => Ok(ReproId::Example1P1),
            "example1-p2" => Ok(ReproId::Example1P2),
            "example1-p4" => Ok(ReproId::Example1P4),
            "example2-sigma1" => Ok(ReproId::Example2Sigma1),
            "example2-sigma05" => Ok(ReproId::Example2Sigma05),
            other => Err(CliError::Usage(format!(
                "unknown reproduction id `{other}`; expected one of example1-p1, example1-p2, \
                 example1-p4, example2-sigma1, example2-sigma05"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ReproId::Example1P1 => "example1-p1",
            ReproId::Example1P2 => "example1-p2",
            ReproId::Example1P4 => "example1-p4",
            ReproId::Example2Sigma1 => "example2-sigma1",
            ReproId::Example2Sigma05 => "example2-sigma05",
        }
    }
}

/// How a comparison row is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    /// `|achieved - reference| <= tolerance`.
    AbsDiff,
    /// `achieved <= reference` (slack rows from the chaining bound).
    UpperBound,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub quantity: String,
    /// `published` for the originally published numbers, `local` for values produced by
    /// this pipeline on the fallback lattice.
    pub reference_source: &'static str,
    pub reference: f64,
    pub achieved: f64,
    pub tolerance: f64,
    pub kind: RowKind,
    pub pass: bool,
}

impl ComparisonRow {
    fn abs_diff(
        quantity: String,
        reference_source: &'static str,
        reference: f64,
        achieved: f64,
    ) -> Self {
        let pass = reference.is_finite() && (achieved - reference).abs() <= DISTANCE_TOLERANCE;
        ComparisonRow {
            quantity,
            reference_source,
            reference,
            achieved,
            tolerance: DISTANCE_TOLERANCE,
            kind: RowKind::AbsDiff,
            pass,
        }
    }

    fn upper_bound(quantity: String, reference: f64, achieved: f64) -> Self {
        ComparisonRow {
            quantity,
            reference_source: "published",
            reference,
            achieved,
            tolerance: 0.0,
            kind: RowKind::UpperBound,
            pass: achieved <= reference,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub id: &'static str,
    pub rows: Vec<ComparisonRow>,
    pub all_pass: bool,
}

fn bundled(text: &str) -> CliResult<RunConfig> {
    RunConfig::from_json(text)
}

fn example1_config(sigma05: bool, p: usize) -> CliResult<RunConfig> {
    bundled(match (sigma05, p) {
        (false, 1) => EXAMPLE1_SIGMA1_P1,
        (false, 2) => EXAMPLE1_SIGMA1_P2,
        (false, 4) => EXAMPLE1_SIGMA1_P4,
        (true, 1) => EXAMPLE1_SIGMA05_P1,
        (true, 2) => EXAMPLE1_SIGMA05_P2,
        (true, 4) => EXAMPLE1_SIGMA05_P4,
        _ => unreachable!("bundled configs cover p in {{1, 2, 4}}"),
    })
}

/// Fallback variant for the long length-4 run: an 8-point lattice with an
/// automatically chosen substep count.
pub fn reduced_grid_variant(config: &RunConfig) -> RunConfig {
    let mut variant = config.clone();
    variant.grid.points_per_dim = 8;
    variant.bounds.substeps = None;
    variant
}

struct Example1Outcome {
    final_distance: f64,
    stages: usize,
    cell_radius: f64,
}

fn run_example1(config: &RunConfig, out_dir: Option<&Path>) -> CliResult<Example1Outcome> {
    let prepared = prepare(config)?;
    let synthesis = run_synthesis(&prepared)?;
    let simulation = run_simulation(&prepared, &synthesis.artifact)?;
    if let Some(dir) = out_dir {
        write_synthesis_outputs(&prepared, &synthesis, dir)?;
        write_simulation_outputs(&prepared, &simulation, dir)?;
    }
    Ok(Example1Outcome {
        final_distance: simulation.final_distance,
        stages: prepared.stages,
        cell_radius: prepared.grid.cell_radius(),
    })
}

fn example1_report(
    id: ReproId,
    p: usize,
    out_dir: Option<&Path>,
    allow_long: bool,
) -> CliResult<ComparisonReport> {
    let published = PUBLISHED_E1_SIGMA1[p.trailing_zeros() as usize];
    let mut rows = Vec::new();
    let config = example1_config(false, p)?;
    let (config, source, reference) = if p == 4 && !allow_long {
        (
            reduced_grid_variant(&config),
            "local",
            local_reference::E1_SIGMA1_P4,
        )
    } else {
        (config, "published", published)
    };
    let outcome = run_example1(&config, out_dir)?;
    rows.push(ComparisonRow::abs_diff(
        format!("example1 final distance, p = {p}"),
        source,
        reference,
        outcome.final_distance,
    ));
    if source == "published" {
        // pattern-optimality slack from the chaining argument
        let slack = 2.0 * outcome.stages as f64 * outcome.cell_radius;
        rows.push(ComparisonRow::upper_bound(
            format!("example1 final distance within chaining slack, p = {p}"),
            published + slack,
            outcome.final_distance,
        ));
        rows.push(ComparisonRow::upper_bound(
            format!("example1 final distance within distance guarantee, p = {p}"),
            guarantee_bound(outcome.stages, outcome.cell_radius),
            outcome.final_distance,
        ));
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(ComparisonReport {
        id: id.as_str(),
        rows,
        all_pass,
    })
}

fn example2_report(
    id: ReproId,
    sigma05: bool,
    out_dir: Option<&Path>,
    allow_long: bool,
) -> CliResult<ComparisonReport> {
    let full_config = bundled(if sigma05 {
        EXAMPLE2_FULL_SIGMA05
    } else {
        EXAMPLE2_FULL_SIGMA1
    })?;

    let mut rows = Vec::new();
    for (slot, &p) in [1usize, 2, 4].iter().enumerate() {
        let base = example1_config(sigma05, p)?;
        let (reduced_config, p4_local) = if p == 4 && !allow_long {
            (reduced_grid_variant(&base), true)
        } else {
            (base, false)
        };
        let prepared = prepare(&reduced_config)?;
        let synthesis = run_synthesis(&prepared)?;
        if let Some(dir) = out_dir {
            let sub = dir.join(format!("p{p}"));
            std::fs::create_dir_all(&sub)
                .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", sub.display())))?;
            write_synthesis_outputs(&prepared, &synthesis, &sub)?;
        }
        let report = run_reduction(
            &full_config,
            &reduced_config,
            vec![synthesis.artifact],
            Some(PUBLISHED_LAMBDA_H1),
            K2Method::VertexEnumeration,
        )?;
        let row = &report.rows[0];

        if !sigma05 {
            let (source, reference) = if p4_local {
                ("local", local_reference::E2_TABLE1_SIGMA1_P4)
            } else {
                ("published", PUBLISHED_E2_TABLE1_SIGMA1[slot])
            };
            rows.push(ComparisonRow::abs_diff(
                format!("example2 full-system distance, p = {p}, sigma = 1"),
                source,
                reference,
                row.table1_row,
            ));
        }
        let published_table2 = if sigma05 {
            PUBLISHED_E2_TABLE2_SIGMA05[slot]
        } else {
            PUBLISHED_E2_TABLE2_SIGMA1[slot]
        };
        let (source, reference) = if p4_local {
            (
                "local",
                if sigma05 {
                    local_reference::E2_TABLE2_SIGMA05_P4
                } else {
                    local_reference::E2_TABLE2_SIGMA1_P4
                },
            )
        } else {
            ("published", published_table2)
        };
        rows.push(ComparisonRow::abs_diff(
            format!(
                "example2 projection distance, p = {p}, sigma = {}",
                if sigma05 { 0.5 } else { 1.0 }
            ),
            source,
            reference,
            row.table2_row,
        ));
        rows.push(ComparisonRow::upper_bound(
            format!(
                "example2 projection distance within a-priori bound, p = {p}, sigma = {}",
                if sigma05 { 0.5 } else { 1.0 }
            ),
            row.apriori_bound,
            row.table2_row,
        ));
        if let Some(dir) = out_dir {
            let sub = dir.join(format!("p{p}"));
            crate::commands::write_reduction_report(&report, &sub)?;
        }
    }

    let all_pass = rows.iter().all(|r| r.pass);
    Ok(ComparisonReport {
        id: id.as_str(),
        rows,
        all_pass,
    })
}

/// Run one bundled reproduction and compare against the reference values.
pub fn run_reproduce(
    id: ReproId,
    out_dir: Option<&Path>,
    allow_long: bool,
) -> CliResult<ComparisonReport> {
    let report = match id {
        ReproId::Example1P1 => example1_report(id, 1, out_dir, allow_long)?,
        ReproId::Example1P2 => example1_report(id, 2, out_dir, allow_long)?,
        ReproId::Example1P4 => example1_report(id, 4, out_dir, allow_long)?,
        ReproId::Example2Sigma1 => example2_report(id, false, out_dir, allow_long)?,
        ReproId::Example2Sigma05 => example2_report(id, true, out_dir, allow_long)?,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join("comparison_report.json");
        let file = std::fs::File::create(&path)
            .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))?;
        serde_json::to_writer_pretty(file, &report)
            .map_err(|e| CliError::Internal(format!("cannot serialize report: {e}")))?;
    }
    Ok(report)
}
