//! Command implementations: each runs a pipeline stage and persists its
//! outputs under the chosen directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use rdcontrol::artifact::{read_controller, write_controller, ControllerArtifact};
use rdcontrol::integrate::{write_trace_csv, Pattern, Trace};
use rdcontrol::model::extend_modes;
use rdcontrol::reduce::{cross_apply, K2Method, ReductionPair};
use rdcontrol::synth::extract_pattern;

use crate::config::{prepare, Prepared, RunConfig};
use crate::error::{CliError, CliResult};
use crate::pipeline::{run_hypothesis, run_simulation, run_synthesis, SimulationRun};

pub const CONTROLLER_FILE: &str = "controller.rcpl";

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Internal(format!("cannot create output dir {}: {e}", dir.display()))
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let file = fs::File::create(path)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)
        .map_err(|e| CliError::Internal(format!("cannot serialize {}: {e}", path.display())))?;
    writer
        .write_all(b"\n")
        .and_then(|_| writer.flush())
        .map_err(|e| CliError::Internal(format!("cannot flush {}: {e}", path.display())))?;
    Ok(())
}

/// `analyze`: hypothesis check, report written either way; the unsatisfied
/// verdict is reflected in the exit code by the caller.
pub fn cmd_analyze(config_path: &Path, out_dir: &Path) -> CliResult<bool> {
    let config = RunConfig::from_path(config_path)?;
    let prepared = prepare(&config)?;
    let report = run_hypothesis(&prepared)?;
    ensure_dir(out_dir)?;
    write_json(&out_dir.join("bounds_report.json"), &report)?;
    println!(
        "hypothesis {}; report written to {}",
        if report.satisfied { "satisfied" } else { "UNSATISFIED" },
        out_dir.join("bounds_report.json").display()
    );
    Ok(report.satisfied)
}

#[derive(Serialize)]
struct SynthesisLog {
    nodes: u64,
    actions: usize,
    stages: usize,
    delta_t: f64,
    substeps: u32,
    wall_seconds: f64,
}

/// `synthesize`: re-check the hypothesis, build the successor table, run
/// value iteration and persist the controller artifact.
pub fn cmd_synthesize(config_path: &Path, out_dir: &Path) -> CliResult<PathBuf> {
    let config = RunConfig::from_path(config_path)?;
    let prepared = prepare(&config)?;
    let run = run_synthesis(&prepared)?;
    let artifact_path = write_synthesis_outputs(&prepared, &run, out_dir)?;
    println!(
        "synthesized {} stages over {} nodes x {} actions in {:.1} s -> {}",
        prepared.stages,
        prepared.grid.node_count(),
        prepared.actions.len(),
        run.wall_seconds,
        artifact_path.display()
    );
    Ok(artifact_path)
}

/// Persist a finished synthesis: the controller artifact plus a small log.
pub fn write_synthesis_outputs(
    prepared: &Prepared,
    run: &crate::pipeline::SynthesisRun,
    out_dir: &Path,
) -> CliResult<PathBuf> {
    ensure_dir(out_dir)?;
    let artifact_path = out_dir.join(CONTROLLER_FILE);
    let file = fs::File::create(&artifact_path)
        .map_err(|e| CliError::Internal(format!("cannot create artifact: {e}")))?;
    let mut writer = BufWriter::new(file);
    write_controller(&mut writer, &run.artifact).map_err(|e| CliError::Internal(e.to_string()))?;
    writer
        .flush()
        .map_err(|e| CliError::Internal(format!("cannot flush artifact: {e}")))?;

    let log = SynthesisLog {
        nodes: prepared.grid.node_count(),
        actions: prepared.actions.len(),
        stages: prepared.stages,
        delta_t: run.delta_t,
        substeps: run.hypothesis.substeps_per_tau.unwrap(),
        wall_seconds: run.wall_seconds,
    };
    write_json(&out_dir.join("synthesis_log.json"), &log)?;
    Ok(artifact_path)
}

pub fn load_artifact(path: &Path) -> CliResult<ControllerArtifact> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Usage(format!("cannot open artifact {}: {e}", path.display())))?;
    let mut reader = std::io::BufReader::new(file);
    read_controller(&mut reader).map_err(|e| CliError::Usage(e.to_string()))
}

#[derive(Serialize)]
struct SimulationSummary {
    final_distance: f64,
    guarantee_bound: f64,
    pattern: Vec<usize>,
    /// Base modes applied per switching period, in order.
    pattern_modes: Vec<[f64; 2]>,
}

/// `simulate`: walk the stored policy from the initial state's
/// representative and write the trace plus a summary.
pub fn cmd_simulate(
    config_path: &Path,
    artifact_path: &Path,
    out_dir: &Path,
) -> CliResult<SimulationRun> {
    let config = RunConfig::from_path(config_path)?;
    let prepared = prepare(&config)?;
    let artifact = load_artifact(artifact_path)?;
    let run = run_simulation(&prepared, &artifact)?;
    ensure_dir(out_dir)?;
    write_simulation_outputs(&prepared, &run, out_dir)?;
    println!(
        "final distance {:.5} (guarantee {:.4}); outputs in {}",
        run.final_distance,
        run.guarantee,
        out_dir.display()
    );
    Ok(run)
}

pub fn write_simulation_outputs(
    prepared: &Prepared,
    run: &SimulationRun,
    out_dir: &Path,
) -> CliResult<()> {
    ensure_dir(out_dir)?;
    let trace_path = out_dir.join("trace.csv");
    let file = fs::File::create(&trace_path)
        .map_err(|e| CliError::Internal(format!("cannot create trace: {e}")))?;
    let mut writer = BufWriter::new(file);
    write_trace_csv(&run.trace, prepared.system.tau, &mut writer)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    writer
        .flush()
        .map_err(|e| CliError::Internal(format!("cannot flush trace: {e}")))?;

    write_heatmap_csv(&run.trace, &prepared.system, &out_dir.join("heatmap.csv"))?;
    fs::write(out_dir.join("plot_recipe.txt"), PLOT_RECIPE)
        .map_err(|e| CliError::Internal(format!("cannot write plot recipe: {e}")))?;

    let summary = SimulationSummary {
        final_distance: run.final_distance,
        guarantee_bound: run.guarantee,
        pattern: run.pattern.steps.clone(),
        pattern_modes: run
            .trace
            .mode_log
            .iter()
            .map(|m| [m.u0, m.u_l])
            .collect(),
    };
    write_json(&out_dir.join("summary.json"), &summary)
}

/// Long-format heatmap data `t,x,y` for external plotting.
fn write_heatmap_csv(
    trace: &Trace,
    sys: &rdcontrol::DiscreteSystem,
    path: &Path,
) -> CliResult<()> {
    let file = fs::File::create(path)
        .map_err(|e| CliError::Internal(format!("cannot create heatmap: {e}")))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| CliError::Internal(format!("heatmap write failed: {e}"));
    writeln!(w, "t,x,y").map_err(io_err)?;
    for (t, state) in trace.times.iter().zip(&trace.states) {
        for (j, v) in state.iter().enumerate() {
            writeln!(w, "{t:.16e},{:.16e},{v:.16e}", sys.node_position(j)).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

const PLOT_RECIPE: &str = "\
Heatmap: plot heatmap.csv as a (t, x) -> y surface, e.g. with gnuplot:
  set datafile separator ','
  set view map
  splot 'heatmap.csv' using 1:2:3 every ::1 with points pointtype 5 palette

Profiles: trace.csv holds one row per recorded instant with columns
t, y1..yM, u0, uL; plot single node trajectories with:
  plot 'trace.csv' using 1:2 every ::1 with lines
";

#[derive(Serialize)]
pub struct ReductionRow {
    pub extended_p: usize,
    /// `||y2(T) - y2_f||` on the full system.
    pub table1_row: f64,
    /// `||Pi y2(T) - y1_f||`.
    pub table2_row: f64,
    pub reduced_distance: f64,
    pub apriori_bound: f64,
    /// Action indices of the applied pattern, for trace regeneration.
    pub pattern: Vec<usize>,
}

#[derive(Serialize)]
pub struct ReductionReport {
    #[serde(rename = "M1")]
    pub m1: usize,
    #[serde(rename = "M2")]
    pub m2: usize,
    pub k2: f64,
    pub lambda_h1: f64,
    pub sigma: f64,
    pub bound: f64,
    pub rows: Vec<ReductionRow>,
}

/// `reduce`: apply controllers synthesized on the reduced system to the
/// full system and report the certified and measured distances.
pub fn cmd_reduce(
    config_full_path: &Path,
    config_reduced_path: &Path,
    artifact_paths: &[PathBuf],
    lambda_override: Option<f64>,
    k2_method: K2Method,
    out_dir: &Path,
) -> CliResult<ReductionReport> {
    let config_full = RunConfig::from_path(config_full_path)?;
    let config_reduced = RunConfig::from_path(config_reduced_path)?;
    let report = run_reduction(
        &config_full,
        &config_reduced,
        artifact_paths
            .iter()
            .map(|p| load_artifact(p))
            .collect::<CliResult<Vec<_>>>()?,
        lambda_override,
        k2_method,
    )?;
    write_reduction_report(&report, out_dir)?;
    write_reduction_traces(&config_full, &config_reduced, &report, out_dir)?;
    for row in &report.rows {
        println!(
            "p={}: ||y2(T)-y2_f|| = {:.5}, ||Pi y2(T)-y1_f|| = {:.5} (bound {:.3})",
            row.extended_p, row.table1_row, row.table2_row, row.apriori_bound
        );
    }
    Ok(report)
}

/// Re-simulate each cross-application with per-period recording and write
/// the full and reduced traces next to the report.
fn write_reduction_traces(
    config_full: &RunConfig,
    config_reduced: &RunConfig,
    report: &ReductionReport,
    out_dir: &Path,
) -> CliResult<()> {
    let full_sys = config_full.build_system()?;
    let reduced = prepare(config_reduced)?;
    let hypothesis = run_hypothesis(&reduced)?;
    let (Some(delta_t), Some(substeps)) = (hypothesis.delta_t, hypothesis.substeps_per_tau)
    else {
        return Ok(());
    };
    let full_initial = config_full.initial_vector(&full_sys);
    let z0 = reduced.grid.representative(&reduced.initial);
    let reduced_initial = reduced.grid.coords(z0);
    for row in &report.rows {
        let actions =
            extend_modes(&reduced.system, row.extended_p).map_err(CliError::from_run)?;
        let pattern = Pattern {
            steps: row.pattern.clone(),
        };
        for (label, sys, start) in [
            ("full", &full_sys, &full_initial),
            ("reduced", &reduced.system, &reduced_initial),
        ] {
            let trace = rdcontrol::integrate::simulate_pattern(
                sys,
                &actions,
                &pattern,
                start,
                delta_t,
                substeps as usize,
            )
            .map_err(CliError::from_run)?;
            let path = out_dir.join(format!("cross_p{}_{label}.csv", row.extended_p));
            let file = fs::File::create(&path)
                .map_err(|e| CliError::Internal(format!("cannot create trace: {e}")))?;
            let mut writer = BufWriter::new(file);
            write_trace_csv(&trace, sys.tau, &mut writer)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            writer
                .flush()
                .map_err(|e| CliError::Internal(format!("cannot flush trace: {e}")))?;
        }
    }
    Ok(())
}

pub fn write_reduction_report(report: &ReductionReport, out_dir: &Path) -> CliResult<()> {
    ensure_dir(out_dir)?;
    write_json(&out_dir.join("reduction_report.json"), report)
}

/// Filesystem-free core of `reduce`, shared with `reproduce` and tests.
pub fn run_reduction(
    config_full: &RunConfig,
    config_reduced: &RunConfig,
    artifacts: Vec<ControllerArtifact>,
    lambda_override: Option<f64>,
    k2_method: K2Method,
) -> CliResult<ReductionReport> {
    let full_sys = config_full.build_system()?;
    let reduced = prepare(config_reduced)?;
    if full_sys.node_count != 2 * reduced.system.node_count {
        return Err(CliError::Usage(format!(
            "full system has {} nodes; expected twice the reduced {}",
            full_sys.node_count, reduced.system.node_count
        )));
    }
    if full_sys.modes != reduced.system.modes || full_sys.tau != reduced.system.tau {
        return Err(CliError::Usage(
            "full and reduced systems must share the mode set and tau".into(),
        ));
    }

    let hypothesis = run_hypothesis(&reduced)?;
    if !hypothesis.satisfied {
        return Err(CliError::Hypothesis(format!(
            "stability hypothesis unsatisfied on the reduced system: {}",
            hypothesis.failures.join("; ")
        )));
    }
    let delta_t = hypothesis.delta_t.unwrap();

    let pair = ReductionPair::build(
        full_sys.clone(),
        reduced.system.clone(),
        k2_method,
        lambda_override,
    )
    .map_err(CliError::from_run)?;

    let full_target = config_full.target_vector();
    let full_initial = config_full.initial_vector(&full_sys);
    let z0 = reduced.grid.representative(&reduced.initial);
    let reduced_initial = reduced.grid.coords(z0);

    let base_mode_count = reduced.system.modes.len();
    let mut rows = Vec::with_capacity(artifacts.len());
    for artifact in &artifacts {
        let p = infer_extended_p(artifact.mode_count as usize, base_mode_count)?;
        let actions = extend_modes(&reduced.system, p).map_err(CliError::from_run)?;
        let stages = artifact.stages as usize;
        let pattern: Pattern = extract_pattern(
            &artifact.policy,
            &reduced.grid,
            &artifact.next_map,
            z0,
            stages,
        )
        .map_err(CliError::from_run)?;
        let report = cross_apply(
            &pair,
            &actions,
            &pattern,
            &full_initial,
            &full_target,
            &reduced_initial,
            &reduced.target,
            delta_t,
        )
        .map_err(CliError::from_run)?;
        rows.push(ReductionRow {
            extended_p: p,
            table1_row: report.full_distance,
            table2_row: report.projected_distance,
            reduced_distance: report.reduced_distance,
            apriori_bound: report.apriori_bound,
            pattern: pattern.steps,
        });
    }

    Ok(ReductionReport {
        m1: reduced.system.node_count,
        m2: full_sys.node_count,
        k2: pair.k2,
        lambda_h1: pair.lambda_reduced,
        sigma: full_sys.sigma,
        bound: pair.bound,
        rows,
    })
}

/// Recover the block length `p` from an artifact's action count `m^p`.
fn infer_extended_p(action_count: usize, base_mode_count: usize) -> CliResult<usize> {
    if base_mode_count <= 1 {
        return if action_count == base_mode_count {
            Ok(1)
        } else {
            Err(CliError::Usage(format!(
                "artifact action count {action_count} does not match the single base mode"
            )))
        };
    }
    let mut p = 1usize;
    let mut n = base_mode_count;
    while n < action_count {
        n = n.saturating_mul(base_mode_count);
        p += 1;
    }
    if n != action_count {
        return Err(CliError::Usage(format!(
            "artifact action count {action_count} is not a power of the {base_mode_count} base modes"
        )));
    }
    Ok(p)
}
