//! Spatially discretized 1D reaction-diffusion model.
//!
//! The PDE on `[0, L]` with Dirichlet boundary control is reduced by the
//! second-order centered difference to the ODE system
//!
//! ```text
//!   dy/dt = sigma * L_h y + sigma * phi_h(u) + f(y)
//! ```
//!
//! on `M` interior nodes with spacing `h = L / (M + 1)`. The Laplacian is
//! never materialized: every apply works directly on the tridiagonal
//! `(-2, 1) / h^2` stencil, so the cost stays `O(M)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cap on the number of extended modes produced by [`extend_modes`].
pub const DEFAULT_EXTENDED_MODE_CAP: usize = 100_000;

/// Maximum polynomial reaction degree accepted by validation.
pub const MAX_POLY_DEGREE: usize = 6;

/// Pointwise reaction term `f(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReactionSpec {
    /// The bistable cubic `y (1 - y) (y - theta)` with threshold `theta`.
    BistableCubic { theta: f64 },
    /// Polynomial with coefficients in ascending degree order.
    Polynomial { coeffs: Vec<f64> },
}

impl ReactionSpec {
    /// Evaluate `f(y)`.
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            ReactionSpec::BistableCubic { theta } => y * (1.0 - y) * (y - theta),
            ReactionSpec::Polynomial { coeffs } => horner(coeffs, y),
        }
    }

    /// Evaluate the derivative `f'(y)`.
    #[inline]
    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            ReactionSpec::BistableCubic { theta } => {
                -3.0 * y * y + 2.0 * (1.0 + theta) * y - theta
            }
            ReactionSpec::Polynomial { coeffs } => {
                let mut acc = 0.0;
                for (k, &c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * y + c * k as f64;
                }
                acc
            }
        }
    }

    /// True when `f` is identically zero.
    pub fn is_zero(&self) -> bool {
        match self {
            ReactionSpec::BistableCubic { .. } => false,
            ReactionSpec::Polynomial { coeffs } => coeffs.iter().all(|&c| c == 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ReactionSpec::BistableCubic { theta } => {
                if !theta.is_finite() {
                    return Err(Error::InvalidModel("non-finite theta".into()));
                }
            }
            ReactionSpec::Polynomial { coeffs } => {
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidModel("non-finite polynomial coefficient".into()));
                }
                if coeffs.len() > MAX_POLY_DEGREE + 1 {
                    return Err(Error::InvalidModel(format!(
                        "polynomial degree {} exceeds cap {}",
                        coeffs.len().saturating_sub(1),
                        MAX_POLY_DEGREE
                    )));
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn horner(coeffs: &[f64], y: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * y + c;
    }
    acc
}

/// One constant boundary-control value pair, held for a switching period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// Dirichlet value injected at `x = 0`.
    pub u0: f64,
    /// Dirichlet value injected at `x = L`.
    pub u_l: f64,
}

impl Mode {
    pub fn new(u0: f64, u_l: f64) -> Self {
        Mode { u0, u_l }
    }

    fn validate(&self) -> Result<()> {
        for v in [self.u0, self.u_l] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidModel(format!(
                    "mode component {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Block of `p >= 1` consecutive base modes treated as one control action.
///
/// The parts are applied back to back, one switching period each, with no
/// intermediate grid rounding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtendedMode {
    /// Indices into the system's base mode list, in application order.
    pub parts: Vec<usize>,
}

impl ExtendedMode {
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

/// Inputs to [`DiscreteSystem::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Number of interior nodes `M`.
    pub node_count: usize,
    /// Domain length `L`.
    pub length: f64,
    /// Diffusion coefficient.
    pub sigma: f64,
    pub reaction: ReactionSpec,
    /// Ordered mode set; the order defines tie-breaking downstream.
    pub modes: Vec<Mode>,
    /// Switching period `tau`.
    pub tau: f64,
}

/// The method-of-lines ODE system.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSystem {
    /// Number of interior nodes `M`.
    pub node_count: usize,
    /// Domain length `L`.
    pub length: f64,
    /// Node spacing `h = L / (M + 1)`.
    pub spacing: f64,
    /// Diffusion coefficient.
    pub sigma: f64,
    pub reaction: ReactionSpec,
    pub modes: Vec<Mode>,
    /// Switching period `tau`.
    pub tau: f64,
}

impl DiscreteSystem {
    /// Validate parameters and construct the system with `h = L / (M + 1)`.
    pub fn build(params: SystemParams) -> Result<Self> {
        let SystemParams {
            node_count,
            length,
            sigma,
            reaction,
            modes,
            tau,
        } = params;
        if node_count < 1 {
            return Err(Error::InvalidModel("node count must be >= 1".into()));
        }
        for (name, v) in [("length", length), ("sigma", sigma), ("tau", tau)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidModel(format!("{name} must be finite and > 0")));
            }
        }
        reaction.validate()?;
        if modes.is_empty() {
            return Err(Error::InvalidModel("mode list must be non-empty".into()));
        }
        for mode in &modes {
            mode.validate()?;
        }
        let spacing = length / (node_count as f64 + 1.0);
        Ok(DiscreteSystem {
            node_count,
            length,
            spacing,
            sigma,
            reaction,
            modes,
            tau,
        })
    }

    /// Interior node abscissa `x_j = j h`, with `j` starting at 1.
    pub fn node_position(&self, j: usize) -> f64 {
        (j as f64 + 1.0) * self.spacing
    }

    /// Diagonal entry of the stencil, `-2 / h^2`.
    pub fn stencil_diagonal(&self) -> f64 {
        -2.0 / (self.spacing * self.spacing)
    }

    /// Off-diagonal entry of the stencil, `1 / h^2`.
    pub fn stencil_off_diagonal(&self) -> f64 {
        1.0 / (self.spacing * self.spacing)
    }

    fn check_dim(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.node_count {
            return Err(Error::DimensionMismatch {
                expected: self.node_count,
                got: y.len(),
            });
        }
        Ok(())
    }

    fn check_mode(&self, mode: &Mode) -> Result<()> {
        mode.validate()
    }
}

/// Apply the tridiagonal Laplacian stencil: component `i` is
/// `(y_{i-1} - 2 y_i + y_{i+1}) / h^2` with zero virtual boundary values
/// (boundary data enters through [`boundary_input`] instead).
pub fn laplacian_apply(sys: &DiscreteSystem, y: &[f64]) -> Result<Vec<f64>> {
    sys.check_dim(y)?;
    let mut out = vec![0.0; y.len()];
    laplacian_apply_into(sys, y, &mut out);
    Ok(out)
}

pub(crate) fn laplacian_apply_into(sys: &DiscreteSystem, y: &[f64], out: &mut [f64]) {
    let m = y.len();
    let inv_h2 = 1.0 / (sys.spacing * sys.spacing);
    for i in 0..m {
        let left = if i == 0 { 0.0 } else { y[i - 1] };
        let right = if i + 1 == m { 0.0 } else { y[i + 1] };
        out[i] = inv_h2 * (left - 2.0 * y[i] + right);
    }
}

/// Boundary injection `phi_h(u) = [u0, 0, ..., 0, uL] / h^2`.
///
/// For `M = 1` the single component receives both ends: `(u0 + uL) / h^2`.
pub fn boundary_input(sys: &DiscreteSystem, mode: &Mode) -> Vec<f64> {
    let inv_h2 = 1.0 / (sys.spacing * sys.spacing);
    let mut out = vec![0.0; sys.node_count];
    out[0] += mode.u0 * inv_h2;
    let last = sys.node_count - 1;
    out[last] += mode.u_l * inv_h2;
    out
}

/// Full vector field `f_u(y) = sigma L_h y + sigma phi_h(u) + f(y)`.
pub fn vector_field(sys: &DiscreteSystem, mode: &Mode, y: &[f64]) -> Result<Vec<f64>> {
    sys.check_dim(y)?;
    sys.check_mode(mode)?;
    let mut out = vec![0.0; y.len()];
    vector_field_into(sys, mode, y, &mut out);
    Ok(out)
}

/// In-place variant of [`vector_field`]; `y` and `out` must both have length `M`.
///
/// Kept textually aligned with the Euler kernel in `integrate` so that the
/// two paths produce bit-identical values.
pub(crate) fn vector_field_into(sys: &DiscreteSystem, mode: &Mode, y: &[f64], out: &mut [f64]) {
    let s = sys.sigma / (sys.spacing * sys.spacing);
    match &sys.reaction {
        ReactionSpec::BistableCubic { theta } => {
            let th = *theta;
            field_into(y, out, s, mode, |v| v * (1.0 - v) * (v - th));
        }
        ReactionSpec::Polynomial { coeffs } => {
            field_into(y, out, s, mode, |v| horner(coeffs, v));
        }
    }
}

#[inline]
fn field_into(y: &[f64], out: &mut [f64], s: f64, mode: &Mode, f: impl Fn(f64) -> f64) {
    let m = y.len();
    for i in 0..m {
        let left = if i == 0 { 0.0 } else { y[i - 1] };
        let right = if i + 1 == m { 0.0 } else { y[i + 1] };
        let mut d = s * (left - 2.0 * y[i] + right) + f(y[i]);
        if i == 0 {
            d += s * mode.u0;
        }
        if i + 1 == m {
            d += s * mode.u_l;
        }
        out[i] = d;
    }
}

/// Enumerate all `m^p` extended modes in lexicographic order over base-mode
/// indices (index 0 varies slowest).
pub fn extend_modes(sys: &DiscreteSystem, p: usize) -> Result<Vec<ExtendedMode>> {
    extend_modes_capped(sys, p, DEFAULT_EXTENDED_MODE_CAP)
}

pub fn extend_modes_capped(sys: &DiscreteSystem, p: usize, cap: usize) -> Result<Vec<ExtendedMode>> {
    if p < 1 {
        return Err(Error::InvalidInput("extended mode length must be >= 1".into()));
    }
    let m = sys.modes.len();
    let total = (m as u128).checked_pow(p as u32).unwrap_or(u128::MAX);
    if total > cap as u128 {
        return Err(Error::BudgetExceeded {
            requested: total.min(u64::MAX as u128) as u64,
            budget: cap as u64,
        });
    }
    let total = total as usize;
    let mut out = Vec::with_capacity(total);
    let mut parts = vec![0usize; p];
    loop {
        out.push(ExtendedMode { parts: parts.clone() });
        // increment least-significant-last so the order is lexicographic
        let mut pos = p;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            parts[pos] += 1;
            if parts[pos] < m {
                break;
            }
            parts[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1_system() -> DiscreteSystem {
        DiscreteSystem::build(SystemParams {
            node_count: 5,
            length: 4.0,
            sigma: 1.0,
            reaction: ReactionSpec::BistableCubic { theta: 0.3 },
            modes: standard_modes(),
            tau: 0.1,
        })
        .unwrap()
    }

    fn standard_modes() -> Vec<Mode> {
        [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
            .iter()
            .map(|&v| Mode::new(v, v))
            .collect()
    }

    #[test]
    fn build_sets_spacing_and_stencil() {
        let sys = example1_system();
        assert!((sys.spacing - 2.0 / 3.0).abs() < 1e-15);
        assert!((sys.stencil_diagonal() + 4.5).abs() < 1e-12);
        assert!((sys.stencil_off_diagonal() - 2.25).abs() < 1e-12);
        // h * (M + 1) = L
        assert!((sys.spacing * 6.0 - sys.length).abs() <= f64::EPSILON * sys.length);
    }

    #[test]
    fn build_single_node() {
        let sys = DiscreteSystem::build(SystemParams {
            node_count: 1,
            length: 2.0,
            sigma: 1.0,
            reaction: ReactionSpec::Polynomial { coeffs: vec![] },
            modes: vec![Mode::new(0.0, 0.0)],
            tau: 0.1,
        })
        .unwrap();
        assert_eq!(sys.spacing, 1.0);
        assert_eq!(sys.stencil_diagonal(), -2.0);
    }

    #[test]
    fn build_rejects_bad_params() {
        let ok = SystemParams {
            node_count: 5,
            length: 4.0,
            sigma: 1.0,
            reaction: ReactionSpec::BistableCubic { theta: 0.3 },
            modes: standard_modes(),
            tau: 0.1,
        };
        let mut p = ok.clone();
        p.node_count = 0;
        assert!(DiscreteSystem::build(p).is_err());
        let mut p = ok.clone();
        p.sigma = f64::NAN;
        assert!(DiscreteSystem::build(p).is_err());
        let mut p = ok.clone();
        p.modes = vec![Mode::new(1.2, 0.0)];
        assert!(DiscreteSystem::build(p).is_err());
        let mut p = ok.clone();
        p.modes.clear();
        assert!(DiscreteSystem::build(p).is_err());
        let mut p = ok;
        p.reaction = ReactionSpec::Polynomial {
            coeffs: vec![0.0; 8],
        };
        assert!(DiscreteSystem::build(p).is_err());
    }

    #[test]
    fn laplacian_constant_vector() {
        let sys = DiscreteSystem::build(SystemParams {
            node_count: 3,
            length: 4.0,
            sigma: 1.0,
            reaction: ReactionSpec::Polynomial { coeffs: vec![] },
            modes: vec![Mode::new(0.0, 0.0)],
            tau: 0.1,
        })
        .unwrap();
        // h = 1 here, so the stencil acts with unit scaling
        assert_eq!(sys.spacing, 1.0);
        let out = laplacian_apply(&sys, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(out, vec![-1.0, 0.0, -1.0]);
    }

    #[test]
    fn laplacian_unit_vector() {
        let sys = example1_system();
        let out = laplacian_apply(&sys, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((out[0] + 4.5).abs() < 1e-12);
        assert!((out[1] - 2.25).abs() < 1e-12);
        assert_eq!(&out[2..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn laplacian_dimension_mismatch() {
        let sys = example1_system();
        assert!(matches!(
            laplacian_apply(&sys, &[0.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn laplacian_quadratic_form_negative() {
        let sys = example1_system();
        let y = [1.0, 0.0, 1.0, 0.0, 1.0];
        let ly = laplacian_apply(&sys, &y).unwrap();
        let q: f64 = y.iter().zip(&ly).map(|(a, b)| a * b).sum();
        assert!(q < 0.0, "quadratic form must be negative, got {q}");
    }

    #[test]
    fn boundary_input_cases() {
        let sys = example1_system();
        let out = boundary_input(&sys, &Mode::new(1.0, 1.0));
        assert!((out[0] - 2.25).abs() < 1e-12);
        assert!((out[4] - 2.25).abs() < 1e-12);
        assert_eq!(&out[1..4], &[0.0, 0.0, 0.0]);

        let zero = boundary_input(&sys, &Mode::new(0.0, 0.0));
        assert!(zero.iter().all(|&v| v == 0.0));

        let single = DiscreteSystem::build(SystemParams {
            node_count: 1,
            length: 2.0,
            sigma: 1.0,
            reaction: ReactionSpec::Polynomial { coeffs: vec![] },
            modes: vec![Mode::new(0.4, 0.4)],
            tau: 0.1,
        })
        .unwrap();
        let out = boundary_input(&single, &Mode::new(0.4, 0.4));
        assert!((out[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn vector_field_single_node() {
        let sys = DiscreteSystem::build(SystemParams {
            node_count: 1,
            length: 2.0,
            sigma: 1.0,
            reaction: ReactionSpec::BistableCubic { theta: 0.3 },
            modes: vec![Mode::new(1.0, 1.0)],
            tau: 0.1,
        })
        .unwrap();
        let out = vector_field(&sys, &Mode::new(1.0, 1.0), &[0.5]).unwrap();
        // -1 (diffusion) + 2 (boundary) + 0.05 (reaction)
        assert!((out[0] - 1.05).abs() < 1e-12);
    }

    #[test]
    fn vector_field_zero_everything() {
        let sys = DiscreteSystem::build(SystemParams {
            node_count: 4,
            length: 1.0,
            sigma: 1.0,
            reaction: ReactionSpec::Polynomial {
                coeffs: vec![0.0, 0.0],
            },
            modes: vec![Mode::new(0.0, 0.0)],
            tau: 0.1,
        })
        .unwrap();
        let out = vector_field(&sys, &Mode::new(0.0, 0.0), &[0.0; 4]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vector_field_zero_reaction_matches_scaled_laplacian() {
        let build = |sigma: f64| {
            DiscreteSystem::build(SystemParams {
                node_count: 5,
                length: 4.0,
                sigma,
                reaction: ReactionSpec::Polynomial { coeffs: vec![] },
                modes: vec![Mode::new(0.0, 0.0)],
                tau: 0.1,
            })
            .unwrap()
        };
        let y = [0.3, 0.7, 0.1, 0.9, 0.5];

        // at sigma = 1 the two paths share the exact operation sequence
        let sys = build(1.0);
        let field = vector_field(&sys, &Mode::new(0.0, 0.0), &y).unwrap();
        let lap = laplacian_apply(&sys, &y).unwrap();
        assert_eq!(field, lap);

        let sys = build(2.5);
        let field = vector_field(&sys, &Mode::new(0.0, 0.0), &y).unwrap();
        let lap = laplacian_apply(&sys, &y).unwrap();
        for i in 0..5 {
            let expected = sys.sigma * lap[i];
            assert!((field[i] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn extend_modes_counts_and_order() {
        let sys = example1_system();
        assert_eq!(extend_modes(&sys, 1).unwrap().len(), 6);
        let p2 = extend_modes(&sys, 2).unwrap();
        assert_eq!(p2.len(), 36);
        assert_eq!(p2[0].parts, vec![0, 0]);
        assert_eq!(p2[1].parts, vec![0, 1]);
        assert_eq!(p2[6].parts, vec![1, 0]);
        assert_eq!(p2[35].parts, vec![5, 5]);
        assert_eq!(extend_modes(&sys, 4).unwrap().len(), 1296);
    }

    #[test]
    fn extend_modes_distinct_and_capped() {
        let sys = example1_system();
        let p2 = extend_modes(&sys, 2).unwrap();
        let mut seen = std::collections::HashSet::new();
        for em in &p2 {
            assert!(seen.insert(em.parts.clone()));
        }
        assert!(matches!(
            extend_modes_capped(&sys, 8, 100_000),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn reaction_eval_and_derivative() {
        let f = ReactionSpec::BistableCubic { theta: 0.3 };
        assert!((f.eval(0.5) - 0.05).abs() < 1e-15);
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(1.0), 0.0);
        // derivative matches -3y^2 + 2(1+theta)y - theta
        assert!((f.derivative(0.0) + 0.3).abs() < 1e-15);
        assert!((f.derivative(1.0) + 0.7).abs() < 1e-15);

        let p = ReactionSpec::Polynomial {
            coeffs: vec![1.0, -2.0, 3.0],
        };
        assert!((p.eval(2.0) - (1.0 - 4.0 + 12.0)).abs() < 1e-12);
        assert!((p.derivative(2.0) - (-2.0 + 12.0)).abs() < 1e-12);
        assert!(ReactionSpec::Polynomial { coeffs: vec![0.0] }.is_zero());
    }
}
