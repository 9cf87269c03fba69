//! Projection-based model order reduction at ratio 2:1.
//!
//! The pair-summing projection `Pi` (rows of `1/sqrt(2)` over adjacent
//! columns) maps the full `M2`-dimensional system onto the reduced
//! `M1 = M2 / 2` system. The commutation defect `D = Pi L_h2 - L_h1 Pi`
//! yields the constant `K2 = sup ||D w||` over the full state box, and with
//! a negative reduced OSL constant the projected full trajectory stays
//! within `K2 sigma / |lambda|` of the reduced trajectory, uniformly in time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::osl_constant;
use crate::error::{Error, Result};
use crate::integrate::{simulate_pattern, Pattern};
use crate::model::{DiscreteSystem, ExtendedMode};

/// Vertex enumeration is exact but scans `2^M2` corners.
pub const VERTEX_ENUMERATION_DIM_CAP: usize = 24;

/// The `M1 x 2 M1` pair-summing reduction matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    reduced_dim: usize,
}

/// Row `i` carries `1/sqrt(2)` at columns `2i` and `2i + 1` (0-based).
pub fn build_projection(reduced_dim: usize) -> Projection {
    assert!(reduced_dim >= 1, "projection needs at least one row");
    Projection { reduced_dim }
}

impl Projection {
    pub fn reduced_dim(&self) -> usize {
        self.reduced_dim
    }

    pub fn full_dim(&self) -> usize {
        2 * self.reduced_dim
    }

    /// `Pi w`: component `i` is `(w_{2i} + w_{2i+1}) / sqrt(2)`.
    pub fn project_state(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.full_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.full_dim(),
                got: w.len(),
            });
        }
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        Ok((0..self.reduced_dim)
            .map(|i| (w[2 * i] + w[2 * i + 1]) * inv_sqrt2)
            .collect())
    }

    /// Dense rows, mostly for tests and defect assembly.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        (0..self.reduced_dim)
            .map(|i| {
                let mut row = vec![0.0; self.full_dim()];
                row[2 * i] = inv_sqrt2;
                row[2 * i + 1] = inv_sqrt2;
                row
            })
            .collect()
    }
}

/// `D = Pi L_h2 - L_h1 Pi`, assembled exactly from the two stencils.
/// `reduced_dim` rows and `2 * reduced_dim` columns.
pub fn commutation_defect(reduced_dim: usize, length: f64) -> Vec<Vec<f64>> {
    let m1 = reduced_dim;
    let m2 = 2 * m1;
    let h1 = length / (m1 as f64 + 1.0);
    let h2 = length / (m2 as f64 + 1.0);
    let inv_h1_sq = 1.0 / (h1 * h1);
    let inv_h2_sq = 1.0 / (h2 * h2);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;

    let l2 = |r: isize, c: isize| -> f64 {
        if r < 0 || r >= m2 as isize || c < 0 || c >= m2 as isize {
            0.0
        } else if r == c {
            -2.0 * inv_h2_sq
        } else if (r - c).abs() == 1 {
            inv_h2_sq
        } else {
            0.0
        }
    };
    let pi = |r: isize, c: isize| -> f64 {
        if r < 0 || r >= m1 as isize || c < 0 || c >= m2 as isize {
            0.0
        } else if c == 2 * r || c == 2 * r + 1 {
            inv_sqrt2
        } else {
            0.0
        }
    };

    (0..m1 as isize)
        .map(|i| {
            (0..m2 as isize)
                .map(|j| {
                    let pi_l2 = inv_sqrt2 * (l2(2 * i, j) + l2(2 * i + 1, j));
                    let l1_pi = inv_h1_sq * (pi(i - 1, j) - 2.0 * pi(i, j) + pi(i + 1, j));
                    pi_l2 - l1_pi
                })
                .collect()
        })
        .collect()
}

/// Method for bounding `K2 = sup_{w in [0,1]^M2} ||D w||`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum K2Method {
    /// Exact: `||D w||^2` is convex, so the sup sits at a vertex of the box.
    VertexEnumeration,
    /// Euclidean norm of per-row interval maxima; always >= the exact value.
    IntervalBound,
}

pub fn k2_constant(defect: &[Vec<f64>], method: K2Method) -> Result<f64> {
    let rows = defect.len();
    if rows == 0 {
        return Err(Error::InvalidInput("defect matrix must be non-empty".into()));
    }
    let cols = defect[0].len();
    if defect.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidInput("defect matrix must be rectangular".into()));
    }
    match method {
        K2Method::IntervalBound => {
            let mut sq = 0.0;
            for row in defect {
                let pos: f64 = row.iter().filter(|&&v| v > 0.0).sum();
                let neg: f64 = row.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
                let hi = pos.max(neg);
                sq += hi * hi;
            }
            Ok(sq.sqrt())
        }
        K2Method::VertexEnumeration => {
            if cols > VERTEX_ENUMERATION_DIM_CAP {
                return Err(Error::InvalidInput(format!(
                    "vertex enumeration supports up to {VERTEX_ENUMERATION_DIM_CAP} columns, got {cols}"
                )));
            }
            Ok(vertex_max(defect, rows, cols))
        }
    }
}

/// Gray-code walk over all `2^cols` vertices, split into fixed chunks so the
/// result is identical for any worker count.
fn vertex_max(defect: &[Vec<f64>], rows: usize, cols: usize) -> f64 {
    let total: u64 = 1 << cols;
    let chunk: u64 = 1 << 16;
    let chunks = total.div_ceil(chunk);
    (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * chunk;
            let hi = (lo + chunk).min(total);
            let mut acc = vec![0.0f64; rows];
            let start_gray = lo ^ (lo >> 1);
            for bit in 0..cols {
                if start_gray & (1 << bit) != 0 {
                    for (r, a) in acc.iter_mut().enumerate() {
                        *a += defect[r][bit];
                    }
                }
            }
            let mut best = 0.0f64;
            for v in lo..hi {
                if v > lo {
                    let bit = v.trailing_zeros() as usize;
                    let gray = v ^ (v >> 1);
                    if gray & (1 << bit) != 0 {
                        for (r, a) in acc.iter_mut().enumerate() {
                            *a += defect[r][bit];
                        }
                    } else {
                        for (r, a) in acc.iter_mut().enumerate() {
                            *a -= defect[r][bit];
                        }
                    }
                }
                let sq: f64 = acc.iter().map(|a| a * a).sum();
                best = best.max(sq);
            }
            best
        })
        .reduce(|| 0.0, f64::max)
        .sqrt()
}

/// Time-uniform reduction error bound `K2 sigma / |lambda_h1|`, valid only
/// for a negative reduced OSL constant.
pub fn reduction_error_bound(k2: f64, sigma: f64, lambda_h1: f64) -> Result<f64> {
    if !lambda_h1.is_finite() || lambda_h1 >= 0.0 {
        return Err(Error::InvalidInput(format!(
            "the reduction bound needs lambda_h1 < 0, got {lambda_h1}"
        )));
    }
    if k2 < 0.0 || sigma < 0.0 {
        return Err(Error::InvalidInput("k2 and sigma must be non-negative".into()));
    }
    Ok(k2 * sigma / lambda_h1.abs())
}

/// A full system, its halved reduction, and the certified constants tying
/// their trajectories together.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionPair {
    pub full: DiscreteSystem,
    pub reduced: DiscreteSystem,
    pub projection: Projection,
    pub defect: Vec<Vec<f64>>,
    pub k2: f64,
    /// OSL constant of the reduced system used in the bound.
    pub lambda_reduced: f64,
    /// `K2 sigma / |lambda_reduced|`.
    pub bound: f64,
}

impl ReductionPair {
    /// Validate compatibility (`M2 = 2 M1`, shared length, diffusion,
    /// reaction, modes and switching period) and compute the constants.
    ///
    /// `lambda_override` substitutes a caller-supplied OSL constant for the
    /// computed one; reproduction runs use the published value.
    pub fn build(
        full: DiscreteSystem,
        reduced: DiscreteSystem,
        method: K2Method,
        lambda_override: Option<f64>,
    ) -> Result<Self> {
        if full.node_count != 2 * reduced.node_count {
            return Err(Error::InvalidInput(format!(
                "full dimension {} must be twice the reduced dimension {}",
                full.node_count, reduced.node_count
            )));
        }
        if full.length != reduced.length
            || full.sigma != reduced.sigma
            || full.tau != reduced.tau
            || full.reaction != reduced.reaction
            || full.modes != reduced.modes
        {
            return Err(Error::InvalidInput(
                "full and reduced systems must share length, sigma, reaction, modes and tau"
                    .into(),
            ));
        }
        let projection = build_projection(reduced.node_count);
        let defect = commutation_defect(reduced.node_count, full.length);
        let k2 = k2_constant(&defect, method)?;
        let lambda_reduced =
            lambda_override.unwrap_or_else(|| osl_constant(&reduced, &reduced.modes[0]));
        let bound = reduction_error_bound(k2, full.sigma, lambda_reduced)?;
        Ok(ReductionPair {
            full,
            reduced,
            projection,
            defect,
            k2,
            lambda_reduced,
            bound,
        })
    }
}

/// Distances reported by one cross-application run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossApplyReport {
    /// `||y2(T) - y2_f||` on the full system.
    pub full_distance: f64,
    /// `||Pi y2(T) - y1_f||`, the a-posteriori projection distance.
    pub projected_distance: f64,
    /// `||y1(T) - y1_f||` on the reduced system.
    pub reduced_distance: f64,
    /// `reduced_distance + K2 sigma / |lambda|`, the a-priori bound on the
    /// projection distance.
    pub apriori_bound: f64,
}

/// Apply a pattern synthesized on the reduced system to both systems and
/// report the final distances.
///
/// The reduced run starts from `reduced_initial` (the grid-sampled profile,
/// not the projection of the full state, which can leave the unit box).
#[allow(clippy::too_many_arguments)]
pub fn cross_apply(
    pair: &ReductionPair,
    actions: &[ExtendedMode],
    pattern: &Pattern,
    full_initial: &[f64],
    full_target: &[f64],
    reduced_initial: &[f64],
    reduced_target: &[f64],
    dt: f64,
) -> Result<CrossApplyReport> {
    if full_target.len() != pair.full.node_count {
        return Err(Error::DimensionMismatch {
            expected: pair.full.node_count,
            got: full_target.len(),
        });
    }
    if reduced_target.len() != pair.reduced.node_count {
        return Err(Error::DimensionMismatch {
            expected: pair.reduced.node_count,
            got: reduced_target.len(),
        });
    }
    let full_trace = simulate_pattern(&pair.full, actions, pattern, full_initial, dt, usize::MAX)?;
    let reduced_trace =
        simulate_pattern(&pair.reduced, actions, pattern, reduced_initial, dt, usize::MAX)?;

    let y2_final = full_trace.final_state();
    let y1_final = reduced_trace.final_state();
    let projected = pair.projection.project_state(y2_final)?;

    let reduced_distance = distance(y1_final, reduced_target);
    Ok(CrossApplyReport {
        full_distance: distance(y2_final, full_target),
        projected_distance: distance(&projected, reduced_target),
        reduced_distance,
        apriori_bound: reduced_distance + pair.bound,
    })
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
