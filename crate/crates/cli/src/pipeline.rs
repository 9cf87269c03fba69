//! Shared pipeline stages behind the CLI commands, usable directly from
//! tests without touching the filesystem.

use std::time::Instant;

use rdcontrol::artifact::ControllerArtifact;
use rdcontrol::bounds::{check_hypothesis, HypothesisReport};
use rdcontrol::grid::build_next_map;
use rdcontrol::integrate::{default_record_every, simulate_pattern, Pattern, Trace};
use rdcontrol::synth::{extract_pattern, guarantee_bound, value_iteration};

use crate::config::Prepared;
use crate::error::{CliError, CliResult};

pub fn run_hypothesis(prepared: &Prepared) -> CliResult<HypothesisReport> {
    check_hypothesis(
        &prepared.system,
        prepared.e0,
        &prepared.config.bounds.c,
        prepared.config.bounds.substeps,
    )
    .map_err(CliError::from_run)
}

pub struct SynthesisRun {
    pub hypothesis: HypothesisReport,
    pub delta_t: f64,
    pub artifact: ControllerArtifact,
    pub wall_seconds: f64,
}

/// Hypothesis check, successor-table build and value iteration.
pub fn run_synthesis(prepared: &Prepared) -> CliResult<SynthesisRun> {
    let hypothesis = run_hypothesis(prepared)?;
    if !hypothesis.satisfied {
        return Err(CliError::Hypothesis(format!(
            "stability hypothesis unsatisfied: {}",
            hypothesis.failures.join("; ")
        )));
    }
    let delta_t = hypothesis.delta_t.expect("satisfied report has a step");

    let started = Instant::now();
    let next_map = build_next_map(&prepared.grid, &prepared.system, &prepared.actions, delta_t)
        .map_err(CliError::from_run)?;
    let (_, policy) = value_iteration(&prepared.grid, &next_map, &prepared.target, prepared.stages)
        .map_err(CliError::from_run)?;
    let wall_seconds = started.elapsed().as_secs_f64();

    let artifact = ControllerArtifact {
        dim: prepared.grid.dim() as u32,
        points_per_dim: prepared.grid.points_per_dim() as u32,
        mode_count: prepared.actions.len() as u32,
        stages: prepared.stages as u32,
        target: prepared.target.clone(),
        policy,
        next_map,
    };
    Ok(SynthesisRun {
        hypothesis,
        delta_t,
        artifact,
        wall_seconds,
    })
}

pub fn validate_artifact(prepared: &Prepared, artifact: &ControllerArtifact) -> CliResult<()> {
    let checks = [
        ("dimension", artifact.dim as usize, prepared.grid.dim()),
        (
            "points per dimension",
            artifact.points_per_dim as usize,
            prepared.grid.points_per_dim(),
        ),
        ("action count", artifact.mode_count as usize, prepared.actions.len()),
        ("stage count", artifact.stages as usize, prepared.stages),
    ];
    for (name, got, expected) in checks {
        if got != expected {
            return Err(CliError::Usage(format!(
                "artifact {name} is {got} but the config implies {expected}"
            )));
        }
    }
    if artifact.target != prepared.target {
        return Err(CliError::Usage(
            "artifact target differs from the config objective".into(),
        ));
    }
    Ok(())
}

pub struct SimulationRun {
    pub z0: u64,
    pub pattern: Pattern,
    pub trace: Trace,
    pub final_distance: f64,
    pub guarantee: f64,
    pub delta_t: f64,
}

/// Extract the pattern at the initial state's representative and simulate
/// the subsampled Euler trajectory from that node.
pub fn run_simulation(
    prepared: &Prepared,
    artifact: &ControllerArtifact,
) -> CliResult<SimulationRun> {
    validate_artifact(prepared, artifact)?;
    let hypothesis = run_hypothesis(prepared)?;
    if !hypothesis.satisfied {
        return Err(CliError::Hypothesis(format!(
            "stability hypothesis unsatisfied: {}",
            hypothesis.failures.join("; ")
        )));
    }
    let delta_t = hypothesis.delta_t.expect("satisfied report has a step");
    let substeps = hypothesis.substeps_per_tau.unwrap() as usize;

    let z0 = prepared.grid.representative(&prepared.initial);
    let pattern = extract_pattern(
        &artifact.policy,
        &prepared.grid,
        &artifact.next_map,
        z0,
        prepared.stages,
    )
    .map_err(CliError::from_run)?;

    let record_every = default_record_every(prepared.system.node_count, substeps);
    let trace = simulate_pattern(
        &prepared.system,
        &prepared.actions,
        &pattern,
        &prepared.grid.coords(z0),
        delta_t,
        record_every,
    )
    .map_err(CliError::from_run)?;

    let final_distance = distance(trace.final_state(), &prepared.target);
    let guarantee = guarantee_bound(prepared.stages, prepared.grid.cell_radius());
    Ok(SimulationRun {
        z0,
        pattern,
        trace,
        final_distance,
        guarantee,
        delta_t,
    })
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
