//! Explicit Euler time integration with subsampling, pattern simulation and
//! a high-accuracy reference integrator.
//!
//! Integrated states are deliberately never clamped to `[0, 1]^M`; clamping
//! happens only when a state is mapped to its grid representative.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{vector_field_into, DiscreteSystem, ExtendedMode, Mode, ReactionSpec};

/// A finite sequence of control actions, stored as indices into an action
/// set (base modes or extended modes), in application order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub steps: Vec<usize>,
}

impl Pattern {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Sampled trajectory. `times` and `states` pair up one to one; `mode_log`
/// records the base mode applied over each switching period.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub mode_log: Vec<Mode>,
}

impl Trace {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trace is never empty")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trace is never empty")
    }
}

/// Number of elementary steps tiling `horizon`, rejecting non-integer tilings.
pub fn tile_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if horizon < 0.0 || !horizon.is_finite() {
        return Err(Error::InvalidInput(format!(
            "horizon must be non-negative, got {horizon}"
        )));
    }
    let n = (horizon / dt).round();
    if (n * dt - horizon).abs() > 1e-9 * horizon.max(dt) {
        return Err(Error::InvalidInput(format!(
            "horizon {horizon} is not an integer multiple of dt {dt}"
        )));
    }
    Ok(n as usize)
}

// ---------------------------------------------------------------------------
// Euler kernel
// ---------------------------------------------------------------------------

/// Advance `y` in place by `steps` Euler steps of size `dt` under one mode.
/// Returns the offending local step index on blow-up.
///
/// Single rolling pass per step; the update expression matches
/// `model::vector_field_into` term for term so both paths round identically.
pub(crate) fn euler_run_into(
    sys: &DiscreteSystem,
    mode: &Mode,
    y: &mut [f64],
    dt: f64,
    steps: usize,
) -> std::result::Result<(), usize> {
    let s = sys.sigma / (sys.spacing * sys.spacing);
    match &sys.reaction {
        ReactionSpec::BistableCubic { theta } => {
            let th = *theta;
            euler_loop(y, dt, steps, s, mode, |v| v * (1.0 - v) * (v - th))
        }
        ReactionSpec::Polynomial { coeffs } => euler_loop(y, dt, steps, s, mode, |v| {
            let mut acc = 0.0;
            for &c in coeffs.iter().rev() {
                acc = acc * v + c;
            }
            acc
        }),
    }
}

#[inline]
fn euler_loop(
    y: &mut [f64],
    dt: f64,
    steps: usize,
    s: f64,
    mode: &Mode,
    f: impl Fn(f64) -> f64,
) -> std::result::Result<(), usize> {
    let m = y.len();
    for step in 0..steps {
        let mut prev = 0.0;
        let mut cur = y[0];
        let mut acc = 0.0;
        for i in 0..m {
            let next = if i + 1 < m { y[i + 1] } else { 0.0 };
            let mut d = s * (prev - 2.0 * cur + next) + f(cur);
            if i == 0 {
                d += s * mode.u0;
            }
            if i + 1 == m {
                d += s * mode.u_l;
            }
            let updated = cur + dt * d;
            y[i] = updated;
            acc += updated;
            prev = cur;
            cur = next;
        }
        if !acc.is_finite() {
            return Err(step);
        }
    }
    Ok(())
}

/// One explicit Euler step `y + dt * f_u(y)`.
pub fn euler_step(sys: &DiscreteSystem, mode: &Mode, y: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_state(sys, y)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let mut out = y.to_vec();
    euler_run_into(sys, mode, &mut out, dt, 1).map_err(|step| Error::BlowUp {
        step,
        context: " during a single Euler step".into(),
    })?;
    Ok(out)
}

/// Compose `horizon / dt` Euler steps under one mode.
pub fn integrate_mode(
    sys: &DiscreteSystem,
    mode: &Mode,
    y: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    check_state(sys, y)?;
    let steps = tile_count(horizon, dt)?;
    let mut out = y.to_vec();
    euler_run_into(sys, mode, &mut out, dt, steps).map_err(|step| Error::BlowUp {
        step,
        context: format!(" while integrating a mode over horizon {horizon}"),
    })?;
    Ok(out)
}

fn check_state(sys: &DiscreteSystem, y: &[f64]) -> Result<()> {
    if y.len() != sys.node_count {
        return Err(Error::DimensionMismatch {
            expected: sys.node_count,
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial state must be finite".into()));
    }
    Ok(())
}

fn check_pattern(actions: &[ExtendedMode], pattern: &Pattern, mode_count: usize) -> Result<()> {
    if actions.is_empty() {
        return Err(Error::InvalidInput("action set must be non-empty".into()));
    }
    for action in actions {
        if action.is_empty() {
            return Err(Error::InvalidInput("extended mode must be non-empty".into()));
        }
        if let Some(&bad) = action.parts.iter().find(|&&p| p >= mode_count) {
            return Err(Error::InvalidInput(format!(
                "extended mode references base mode {bad} of {mode_count}"
            )));
        }
    }
    if let Some(&bad) = pattern.steps.iter().find(|&&s| s >= actions.len()) {
        return Err(Error::InvalidInput(format!(
            "pattern references action {bad} of {}",
            actions.len()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// pattern simulation
// ---------------------------------------------------------------------------

/// Simulate a pattern with Euler subsampling, recording every
/// `record_every`-th substep (the initial and final states always).
///
/// Each pattern step selects one action; extended actions apply their parts
/// back to back, one switching period each, with no grid interaction.
pub fn simulate_pattern(
    sys: &DiscreteSystem,
    actions: &[ExtendedMode],
    pattern: &Pattern,
    y0: &[f64],
    dt: f64,
    record_every: usize,
) -> Result<Trace> {
    check_state(sys, y0)?;
    check_pattern(actions, pattern, sys.modes.len())?;
    if record_every == 0 {
        return Err(Error::InvalidInput("record_every must be >= 1".into()));
    }
    let substeps = tile_count(sys.tau, dt)?;
    if substeps == 0 {
        return Err(Error::InvalidInput("dt must not exceed tau".into()));
    }

    let total_periods: usize = pattern.steps.iter().map(|&a| actions[a].len()).sum();
    let total_steps = total_periods * substeps;

    let mut state = y0.to_vec();
    let mut times = Vec::with_capacity(total_steps / record_every + 2);
    let mut states = Vec::with_capacity(total_steps / record_every + 2);
    let mut mode_log = Vec::with_capacity(total_periods);
    times.push(0.0);
    states.push(state.clone());

    let mut global_step = 0usize;
    for &action_idx in &pattern.steps {
        for &part in &actions[action_idx].parts {
            let mode = sys.modes[part];
            mode_log.push(mode);
            for _ in 0..substeps {
                euler_run_into(sys, &mode, &mut state, dt, 1).map_err(|_| Error::BlowUp {
                    step: global_step,
                    context: format!(" while simulating period {} of the pattern", mode_log.len()),
                })?;
                global_step += 1;
                if global_step.is_multiple_of(record_every) || global_step == total_steps {
                    times.push(global_step as f64 * dt);
                    states.push(state.clone());
                }
            }
        }
    }

    Ok(Trace {
        times,
        states,
        mode_log,
    })
}

/// Simulate a batch of initial states; results are identical to running
/// [`simulate_pattern`] sequentially on each.
pub fn simulate_batch(
    sys: &DiscreteSystem,
    actions: &[ExtendedMode],
    pattern: &Pattern,
    initial_states: &[Vec<f64>],
    dt: f64,
    record_every: usize,
) -> Result<Vec<Trace>> {
    initial_states
        .par_iter()
        .map(|y0| simulate_pattern(sys, actions, pattern, y0, dt, record_every))
        .collect()
}

/// Default trace cadence: every substep for small systems, once per
/// switching period otherwise (file-size control).
pub fn default_record_every(node_count: usize, substeps_per_tau: usize) -> usize {
    if node_count <= 16 {
        1
    } else {
        substeps_per_tau.max(1)
    }
}

// ---------------------------------------------------------------------------
// reference integrator (test oracle standing in for the exact flow)
// ---------------------------------------------------------------------------

/// Default reference step bound: `1e-4 * tau`.
pub fn reference_step_bound(sys: &DiscreteSystem) -> f64 {
    1e-4 * sys.tau
}

/// Classical fourth-order one-step method with a fixed step of at most
/// `max_step`, used as the stand-in for the exact flow.
pub fn reference_integrate_with_step(
    sys: &DiscreteSystem,
    mode: &Mode,
    y: &[f64],
    horizon: f64,
    max_step: f64,
) -> Result<Vec<f64>> {
    check_state(sys, y)?;
    if horizon < 0.0 || !horizon.is_finite() {
        return Err(Error::InvalidInput(format!(
            "horizon must be non-negative, got {horizon}"
        )));
    }
    if horizon == 0.0 {
        return Ok(y.to_vec());
    }
    if !(max_step > 0.0) {
        return Err(Error::InvalidInput("max_step must be positive".into()));
    }
    let n = (horizon / max_step).ceil().max(1.0) as usize;
    let h = horizon / n as f64;
    let m = sys.node_count;

    let mut state = y.to_vec();
    let mut k1 = vec![0.0; m];
    let mut k2 = vec![0.0; m];
    let mut k3 = vec![0.0; m];
    let mut k4 = vec![0.0; m];
    let mut tmp = vec![0.0; m];
    for step in 0..n {
        vector_field_into(sys, mode, &state, &mut k1);
        for i in 0..m {
            tmp[i] = state[i] + 0.5 * h * k1[i];
        }
        vector_field_into(sys, mode, &tmp, &mut k2);
        for i in 0..m {
            tmp[i] = state[i] + 0.5 * h * k2[i];
        }
        vector_field_into(sys, mode, &tmp, &mut k3);
        for i in 0..m {
            tmp[i] = state[i] + h * k3[i];
        }
        vector_field_into(sys, mode, &tmp, &mut k4);
        let mut acc = 0.0;
        for i in 0..m {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            acc += state[i];
        }
        if !acc.is_finite() {
            return Err(Error::BlowUp {
                step,
                context: " in the reference integrator".into(),
            });
        }
    }
    Ok(state)
}

/// Reference integration at the default step bound.
pub fn reference_integrate(
    sys: &DiscreteSystem,
    mode: &Mode,
    y: &[f64],
    horizon: f64,
) -> Result<Vec<f64>> {
    reference_integrate_with_step(sys, mode, y, horizon, reference_step_bound(sys))
}

/// Reference integration with the documented convergence check: halving the
/// step must change the result by less than `1e-9` relative.
pub fn reference_integrate_checked(
    sys: &DiscreteSystem,
    mode: &Mode,
    y: &[f64],
    horizon: f64,
) -> Result<Vec<f64>> {
    let step = reference_step_bound(sys);
    let coarse = reference_integrate_with_step(sys, mode, y, horizon, step)?;
    let fine = reference_integrate_with_step(sys, mode, y, horizon, step / 2.0)?;
    let diff = norm_of_diff(&coarse, &fine);
    let scale = fine.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    if diff > 1e-9 * scale {
        return Err(Error::Numerical(format!(
            "reference integrator did not converge: step halving moved the result by {diff:e}"
        )));
    }
    Ok(fine)
}

/// Reference flow under a whole pattern, recorded on the same substep grid
/// as [`simulate_pattern`] so traces can be compared time point by time point.
pub fn reference_simulate_pattern(
    sys: &DiscreteSystem,
    actions: &[ExtendedMode],
    pattern: &Pattern,
    y0: &[f64],
    dt: f64,
    record_every: usize,
) -> Result<Trace> {
    check_state(sys, y0)?;
    check_pattern(actions, pattern, sys.modes.len())?;
    if record_every == 0 {
        return Err(Error::InvalidInput("record_every must be >= 1".into()));
    }
    let substeps = tile_count(sys.tau, dt)?;
    let total_periods: usize = pattern.steps.iter().map(|&a| actions[a].len()).sum();
    let total_steps = total_periods * substeps;
    let max_step = (dt / 20.0).min(reference_step_bound(sys));

    let mut state = y0.to_vec();
    let mut times = vec![0.0];
    let mut states = vec![state.clone()];
    let mut mode_log = Vec::with_capacity(total_periods);

    let mut global_step = 0usize;
    for &action_idx in &pattern.steps {
        for &part in &actions[action_idx].parts {
            let mode = sys.modes[part];
            mode_log.push(mode);
            for _ in 0..substeps {
                state = reference_integrate_with_step(sys, &mode, &state, dt, max_step)?;
                global_step += 1;
                if global_step.is_multiple_of(record_every) || global_step == total_steps {
                    times.push(global_step as f64 * dt);
                    states.push(state.clone());
                }
            }
        }
    }

    Ok(Trace {
        times,
        states,
        mode_log,
    })
}

fn norm_of_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

// ---------------------------------------------------------------------------
// trace CSV
// ---------------------------------------------------------------------------

/// Write a trace as CSV: header `t,y1,...,yM,u0,uL`, one row per recorded
/// instant, 17-significant-digit floats, LF line endings.
pub fn write_trace_csv(trace: &Trace, tau: f64, out: &mut impl std::io::Write) -> Result<()> {
    let m = trace.states.first().map_or(0, |s| s.len());
    write!(out, "t")?;
    for j in 1..=m {
        write!(out, ",y{j}")?;
    }
    writeln!(out, ",u0,uL")?;
    for (t, state) in trace.times.iter().zip(&trace.states) {
        // the row's mode is the one applied on the period starting at t
        let period = if trace.mode_log.is_empty() {
            None
        } else {
            Some(((t / tau + 1e-9).floor() as usize).min(trace.mode_log.len() - 1))
        };
        write!(out, "{t:.16e}")?;
        for v in state {
            write!(out, ",{v:.16e}")?;
        }
        match period {
            Some(p) => writeln!(
                out,
                ",{:.16e},{:.16e}",
                trace.mode_log[p].u0, trace.mode_log[p].u_l
            )?,
            None => writeln!(out, ",,")?,
        }
    }
    Ok(())
}
