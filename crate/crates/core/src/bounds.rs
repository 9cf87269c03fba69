//! Certified per-mode constants and the Euler error-ball machinery.
//!
//! For each mode `u` the module derives
//!
//! * `lambda_u` — a valid one-sided Lipschitz (OSL) constant, from the
//!   closed-form largest eigenvalue of the diffusion stencil plus the scalar
//!   OSL constant of the reaction,
//! * `L_u` — a Lipschitz constant from the stencil spectral norm,
//! * `C_u` — the curvature-scale constant entering the error ball (three
//!   strategies; the literal definition `L_u * sup ||f_u||` is the sound
//!   default),
//!
//! and from them the stability window `(G_u, alpha_u, tau_max)` plus the
//! hypothesis verdict that licenses subsampled explicit Euler integration
//! with non-amplifying errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{laplacian_apply_into, vector_field_into, DiscreteSystem, Mode, ReactionSpec};

/// `|lambda|` below this routes the error ball to the `lambda = 0` branch.
///
/// The side branches scale like `C^2 t^3 / (3 |lambda|)` and are useless as
/// `lambda -> 0`; for `lambda <= 0` the value `0` is itself a valid OSL
/// constant, so the zero branch stays sound.
pub const ZERO_LAMBDA_THRESHOLD: f64 = 1e-8;

/// Sample count for polynomial range estimation.
const POLY_SCAN_SAMPLES: usize = 20_001;

// ---------------------------------------------------------------------------
// reaction range helpers
// ---------------------------------------------------------------------------

/// Scalar OSL constant of the reaction: `max f'(y)` over `[0, 1]`.
///
/// Exact for the bistable cubic (interior critical point of `f'` against the
/// endpoints); dense scan with a second-derivative padding for polynomials.
pub fn reaction_osl(spec: &ReactionSpec) -> f64 {
    match spec {
        ReactionSpec::BistableCubic { theta } => {
            // f' is a downward parabola with vertex at (1 + theta) / 3
            let vertex = (1.0 + theta) / 3.0;
            let mut best = spec.derivative(0.0).max(spec.derivative(1.0));
            if (0.0..=1.0).contains(&vertex) {
                best = best.max(spec.derivative(vertex));
            }
            best
        }
        ReactionSpec::Polynomial { coeffs } => {
            scan_max(|y| spec.derivative(y), poly_abs_coeff_bound(coeffs, 2))
        }
    }
}

/// `max |f'(y)|` over `[0, 1]`.
pub fn reaction_slope_sup(spec: &ReactionSpec) -> f64 {
    match spec {
        ReactionSpec::BistableCubic { theta } => {
            let vertex = (1.0 + theta) / 3.0;
            let mut best = spec.derivative(0.0).abs().max(spec.derivative(1.0).abs());
            if (0.0..=1.0).contains(&vertex) {
                best = best.max(spec.derivative(vertex).abs());
            }
            best
        }
        ReactionSpec::Polynomial { coeffs } => {
            scan_max(|y| spec.derivative(y).abs(), poly_abs_coeff_bound(coeffs, 2))
        }
    }
}

/// `max |f(y)|` over `[0, 1]`.
pub fn reaction_abs_sup(spec: &ReactionSpec) -> f64 {
    match spec {
        ReactionSpec::BistableCubic { theta } => {
            // critical points of f are the roots of the derivative parabola
            let disc = 1.0 - theta + theta * theta;
            let root = disc.sqrt();
            let mut best = spec.eval(0.0).abs().max(spec.eval(1.0).abs());
            for y in [(1.0 + theta + root) / 3.0, (1.0 + theta - root) / 3.0] {
                if (0.0..=1.0).contains(&y) {
                    best = best.max(spec.eval(y).abs());
                }
            }
            best
        }
        ReactionSpec::Polynomial { coeffs } => {
            scan_max(|y| spec.eval(y).abs(), poly_abs_coeff_bound(coeffs, 1))
        }
    }
}

/// Dense scan over `[0, 1]` padded by `slope_bound * step / 2`, an upper
/// bound on the excursion between sample points.
fn scan_max(f: impl Fn(f64) -> f64, slope_bound: f64) -> f64 {
    let step = 1.0 / (POLY_SCAN_SAMPLES - 1) as f64;
    let mut best = f64::NEG_INFINITY;
    for i in 0..POLY_SCAN_SAMPLES {
        best = best.max(f(i as f64 * step));
    }
    best + slope_bound * step / 2.0
}

/// Bound on `max |d^order f / dy^order|` over `[0, 1]` by absolute
/// coefficient sums of the differentiated polynomial.
fn poly_abs_coeff_bound(coeffs: &[f64], order: usize) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(order)
        .map(|(k, &c)| {
            let mut factor = 1.0;
            for j in 0..order {
                factor *= (k - j) as f64;
            }
            factor * c.abs()
        })
        .sum()
}

// ---------------------------------------------------------------------------
// stencil spectrum (closed forms for the symmetric tridiagonal (-2, 1)/h^2)
// ---------------------------------------------------------------------------

/// Largest eigenvalue of the stencil: `(2 / h^2) (cos(pi / (M + 1)) - 1)`.
pub fn laplacian_lambda_max(sys: &DiscreteSystem) -> f64 {
    let m = sys.node_count as f64;
    let inv_h2 = 1.0 / (sys.spacing * sys.spacing);
    2.0 * inv_h2 * ((std::f64::consts::PI / (m + 1.0)).cos() - 1.0)
}

/// Spectral norm of the stencil: `(2 / h^2) (1 - cos(M pi / (M + 1)))`.
pub fn laplacian_spectral_norm(sys: &DiscreteSystem) -> f64 {
    let m = sys.node_count as f64;
    let inv_h2 = 1.0 / (sys.spacing * sys.spacing);
    2.0 * inv_h2 * (1.0 - (m * std::f64::consts::PI / (m + 1.0)).cos())
}

// ---------------------------------------------------------------------------
// per-mode constants
// ---------------------------------------------------------------------------

/// A valid (possibly non-minimal) OSL constant for `f_u`:
/// `sigma * lambda_max(L_h) + max f'`. Independent of the mode, which only
/// shifts the field by a constant.
pub fn osl_constant(sys: &DiscreteSystem, _mode: &Mode) -> f64 {
    sys.sigma * laplacian_lambda_max(sys) + reaction_osl(&sys.reaction)
}

/// Lipschitz constant `L_u = sigma * ||L_h||_2 + max |f'|`.
pub fn lipschitz_constant(sys: &DiscreteSystem, _mode: &Mode) -> f64 {
    sys.sigma * laplacian_spectral_norm(sys) + reaction_slope_sup(&sys.reaction)
}

/// Certified upper bound on `sup_{y in [0,1]^M} ||f_u(y)||` by componentwise
/// interval arithmetic: every component sees at most two unit neighbors and
/// the `-2 y_i` term, plus the boundary injection on the edge components.
pub fn sup_field_norm(sys: &DiscreteSystem, mode: &Mode) -> f64 {
    let m = sys.node_count;
    let s = sys.sigma / (sys.spacing * sys.spacing);
    let f_sup = reaction_abs_sup(&sys.reaction);
    let mut sq_sum = 0.0;
    for i in 0..m {
        let mut u_contrib = 0.0;
        if i == 0 {
            u_contrib += mode.u0;
        }
        if i + 1 == m {
            u_contrib += mode.u_l;
        }
        let linear = (u_contrib + 2.0).abs().max((u_contrib - 2.0).abs());
        let comp = s * linear + f_sup;
        sq_sum += comp * comp;
    }
    sq_sum.sqrt()
}

/// How to obtain `C_u` for one mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum CStrategy {
    /// `L_u * sup ||f_u||` — sound but conservative.
    #[default]
    DefinitionLiteral,
    /// `1.2 * max_y ||J_u(y) f_u(y)||` over sampled states,
    /// `J_u = sigma L_h + diag(f'(y_i))`.
    SampledCurvature { samples: usize, seed: u64 },
    /// Caller-supplied value, must be positive.
    Explicit { value: f64 },
}

/// Compute `C_u` for one mode under the given strategy.
pub fn c_constant(sys: &DiscreteSystem, mode: &Mode, strategy: &CStrategy) -> Result<f64> {
    match strategy {
        CStrategy::DefinitionLiteral => {
            Ok(lipschitz_constant(sys, mode) * sup_field_norm(sys, mode))
        }
        CStrategy::SampledCurvature { samples, seed } => {
            if *samples == 0 {
                return Err(Error::InvalidInput("sample count must be positive".into()));
            }
            Ok(sampled_curvature(sys, mode, *samples, *seed) * 1.2)
        }
        CStrategy::Explicit { value } => {
            if !value.is_finite() || *value <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "explicit C must be finite and positive, got {value}"
                )));
            }
            Ok(*value)
        }
    }
}

fn sampled_curvature(sys: &DiscreteSystem, mode: &Mode, samples: usize, seed: u64) -> f64 {
    let m = sys.node_count;
    let mut rng = SplitMix64::new(seed);
    let mut y = vec![0.0; m];
    let mut field = vec![0.0; m];
    let mut jf = vec![0.0; m];
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        for v in y.iter_mut() {
            *v = rng.next_unit();
        }
        vector_field_into(sys, mode, &y, &mut field);
        laplacian_apply_into(sys, &field, &mut jf);
        let mut sq = 0.0;
        for i in 0..m {
            let v = sys.sigma * jf[i] + sys.reaction.derivative(y[i]) * field[i];
            sq += v * v;
        }
        best = best.max(sq.sqrt());
    }
    best
}

/// Minimal deterministic generator for state sampling; keeps the crate free
/// of an RNG dependency.
struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

// ---------------------------------------------------------------------------
// error ball
// ---------------------------------------------------------------------------

/// `2 (e^s - 1 - s - s^2/2) / s^2`, the shared tail factor of all three
/// error-ball branches. Series evaluation near zero avoids the cancellation
/// that otherwise destroys the bracket for small `|lambda| t`.
fn phi(s: f64) -> f64 {
    if s.abs() < 0.25 {
        // sum_{n >= 1} 2 s^n / (n + 2)!
        let mut term = s / 3.0;
        let mut acc = term;
        let mut n = 1.0;
        while term.abs() > 1e-20 * acc.abs().max(1e-300) {
            term *= s / (n + 3.0);
            acc += term;
            n += 1.0;
        }
        acc
    } else {
        2.0 * (s.exp_m1() - s - 0.5 * s * s) / (s * s)
    }
}

/// Radius of the certified ball between the exact flow from `y0` and the
/// Euler image from `z0` at time `t`, given `||y0 - z0|| <= mu`.
///
/// Evaluates the branch for the sign of `lambda`; `|lambda|` below
/// [`ZERO_LAMBDA_THRESHOLD`] routes to the zero branch.
pub fn delta_bound(lambda: f64, c: f64, mu: f64, t: f64) -> Result<f64> {
    for (name, v) in [("lambda", lambda), ("c", c), ("mu", mu), ("t", t)] {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("{name} must be finite")));
        }
    }
    if c < 0.0 || mu < 0.0 || t < 0.0 {
        return Err(Error::InvalidInput(
            "c, mu and t must be non-negative".into(),
        ));
    }
    let bracket = if lambda.abs() < ZERO_LAMBDA_THRESHOLD {
        mu * mu * t.exp() + c * c * t * t * phi(t)
    } else if lambda < 0.0 {
        let s = lambda * t;
        mu * mu * s.exp() + (c * c) / (lambda * lambda) * (t * t) * (-phi(s))
    } else {
        let s = 3.0 * lambda * t;
        mu * mu * s.exp() + (c * c) / (3.0 * lambda * lambda) * (t * t) * phi(s)
    };
    if bracket < -1e-12 {
        return Err(Error::Numerical(format!(
            "error-ball bracket is negative ({bracket:e})"
        )));
    }
    Ok(bracket.max(0.0).sqrt())
}

/// Stability window of one mode under a negative OSL constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityParams {
    /// `G = sqrt(3) e0 |lambda| / C`.
    pub g: f64,
    /// Smallest positive root of the damping equation, in `(0, 1)`.
    pub alpha: f64,
    /// `G (1 - alpha)`: largest elementary step with non-amplifying errors.
    pub tau_max: f64,
}

/// Compute `(G, alpha, tau_max)` for `lambda < 0`, `c > 0`, `e0 > 0`.
///
/// `alpha = 1 + |lambda| G / 4 - sqrt(1 + (lambda G / 4)^2)`, evaluated in
/// the cancellation-free form `x - x^2 / (1 + sqrt(1 + x^2))`.
pub fn stability_params(lambda: f64, c: f64, e0: f64) -> Result<StabilityParams> {
    if !lambda.is_finite() || lambda >= 0.0 {
        return Err(Error::InvalidInput(format!(
            "stability parameters need lambda < 0, got {lambda}"
        )));
    }
    if !(c > 0.0) || !(e0 > 0.0) {
        return Err(Error::InvalidInput("c and e0 must be positive".into()));
    }
    let g = 3.0_f64.sqrt() * e0 * lambda.abs() / c;
    let x = lambda.abs() * g / 4.0;
    if x >= 1.0 {
        return Err(Error::Unsatisfiable(format!(
            "|lambda| G / 4 = {x} >= 1"
        )));
    }
    let alpha = x - x * x / (1.0 + (1.0 + x * x).sqrt());
    let tau_max = g * (1.0 - alpha);
    Ok(StabilityParams { g, alpha, tau_max })
}

// ---------------------------------------------------------------------------
// hypothesis check
// ---------------------------------------------------------------------------

/// How `e0` (the initial error bound fed to the stability window) is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum E0Mode {
    /// `sqrt(M) * eta / 2` — the grid cell radius.
    CellRadius,
    /// `eta / 2` — half the lattice spacing.
    HalfSpacing,
    Explicit { value: f64 },
}

impl E0Mode {
    pub fn resolve(&self, dim: usize, eta: f64) -> Result<f64> {
        let e0 = match self {
            E0Mode::CellRadius => (dim as f64).sqrt() * eta / 2.0,
            E0Mode::HalfSpacing => eta / 2.0,
            E0Mode::Explicit { value } => *value,
        };
        if !e0.is_finite() || e0 <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "resolved e0 must be positive, got {e0}"
            )));
        }
        Ok(e0)
    }
}

/// Per-mode `C` assignment for a whole-system hypothesis check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum CPlan {
    DefinitionLiteral,
    SampledCurvature { samples: usize, seed: u64 },
    /// One value per mode, in mode-list order.
    Explicit { values: Vec<f64> },
}

impl CPlan {
    fn strategy_for(&self, mode_index: usize, mode_count: usize) -> Result<CStrategy> {
        match self {
            CPlan::DefinitionLiteral => Ok(CStrategy::DefinitionLiteral),
            CPlan::SampledCurvature { samples, seed } => Ok(CStrategy::SampledCurvature {
                samples: *samples,
                seed: *seed,
            }),
            CPlan::Explicit { values } => {
                if values.len() != mode_count {
                    return Err(Error::InvalidInput(format!(
                        "explicit C list has {} entries for {} modes",
                        values.len(),
                        mode_count
                    )));
                }
                Ok(CStrategy::Explicit {
                    value: values[mode_index],
                })
            }
        }
    }
}

/// Certified constants for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeBounds {
    pub lambda: f64,
    pub lipschitz: f64,
    #[serde(rename = "c")]
    pub c_const: f64,
    /// Present only when `lambda < 0` and `|lambda| G / 4 < 1`.
    #[serde(flatten)]
    pub stability: Option<StabilityParams>,
}

/// Outcome of checking the stability hypothesis over the whole mode set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub per_mode: Vec<ModeBounds>,
    pub e0: f64,
    /// Chosen elementary step, `tau / substeps`; absent when unsatisfiable.
    pub delta_t: Option<f64>,
    #[serde(rename = "substeps")]
    pub substeps_per_tau: Option<u32>,
    pub satisfied: bool,
    /// Human-readable reasons when `satisfied` is false.
    pub failures: Vec<String>,
}

impl HypothesisReport {
    /// Smallest per-mode `tau_max`, when every mode has one.
    pub fn min_tau_max(&self) -> Option<f64> {
        self.per_mode
            .iter()
            .map(|b| b.stability.map(|s| s.tau_max))
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().fold(f64::INFINITY, f64::min))
    }
}

/// Check the stability hypothesis for every mode and pick the elementary
/// step `delta_t = tau / n` (smallest integer `n` unless overridden).
pub fn check_hypothesis(
    sys: &DiscreteSystem,
    e0: f64,
    c_plan: &CPlan,
    substeps_override: Option<u32>,
) -> Result<HypothesisReport> {
    if !e0.is_finite() || e0 <= 0.0 {
        return Err(Error::InvalidInput(format!("e0 must be positive, got {e0}")));
    }
    let mode_count = sys.modes.len();
    let mut per_mode = Vec::with_capacity(mode_count);
    let mut failures = Vec::new();
    for (i, mode) in sys.modes.iter().enumerate() {
        let lambda = osl_constant(sys, mode);
        let lipschitz = lipschitz_constant(sys, mode);
        let c_const = c_constant(sys, mode, &c_plan.strategy_for(i, mode_count)?)?;
        let stability = if lambda < 0.0 {
            match stability_params(lambda, c_const, e0) {
                Ok(s) => Some(s),
                Err(_) => {
                    failures.push(format!(
                        "mode {i}: |lambda| G / 4 >= 1 (lambda = {lambda}, C = {c_const})"
                    ));
                    None
                }
            }
        } else {
            failures.push(format!("mode {i}: OSL constant {lambda} is not negative"));
            None
        };
        per_mode.push(ModeBounds {
            lambda,
            lipschitz,
            c_const,
            stability,
        });
    }

    let mut delta_t = None;
    let mut substeps = None;
    if failures.is_empty() {
        let min_tau_max = per_mode
            .iter()
            .map(|b| b.stability.unwrap().tau_max)
            .fold(f64::INFINITY, f64::min);
        let n = match substeps_override {
            Some(n) if n >= 1 => n,
            Some(_) => {
                return Err(Error::InvalidInput("substeps must be >= 1".into()));
            }
            None => {
                let needed = (sys.tau / min_tau_max).ceil();
                if !needed.is_finite() || needed > u32::MAX as f64 {
                    failures.push(format!(
                        "required substep count {needed} is out of range"
                    ));
                    0
                } else {
                    (needed as u32).max(1)
                }
            }
        };
        if n >= 1 {
            let dt = sys.tau / n as f64;
            if dt <= min_tau_max * (1.0 + 1e-12) {
                delta_t = Some(dt);
                substeps = Some(n);
            } else {
                failures.push(format!(
                    "delta_t = {dt} exceeds the admissible step {min_tau_max}"
                ));
            }
        }
    }

    Ok(HypothesisReport {
        per_mode,
        e0,
        delta_t,
        substeps_per_tau: substeps,
        satisfied: failures.is_empty() && delta_t.is_some(),
        failures,
    })
}
