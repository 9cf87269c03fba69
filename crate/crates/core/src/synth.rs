//! Dynamic-programming synthesis over the successor table: stage-indexed
//! value iteration, optimal-pattern extraction, a brute-force oracle, and
//! the distance guarantee.
//!
//! Stage values are computed in 64-bit and narrowed to `f32` for storage
//! (the narrowing error is orders of magnitude below the cell radius).
//! Because every stage value is the minimum over copies of stage-0 values,
//! propagation through the table is exact and reproducible bit for bit for
//! any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, NextMap};
use crate::integrate::Pattern;

/// Enumeration cap for [`brute_force_optimal`].
pub const BRUTE_FORCE_BUDGET: u64 = 1_000_000;

/// Per-node values after some number of stages.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub values: Vec<f32>,
    pub stage: usize,
}

/// Best action per stage and node; `stages[t - 1][z]` is the argmin at
/// stage `t` (the action applied when `t` stages remain).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub stages: Vec<Vec<u16>>,
}

impl Policy {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }
}

/// Distance from a node to the target, the stage-0 cost. Computed against
/// the exact target vector, not its grid representative.
pub fn terminal_cost(grid: &Grid, node: u64, y_f: &[f64]) -> f32 {
    let coords = grid.coords(node);
    let sq: f64 = coords
        .iter()
        .zip(y_f)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    sq.sqrt() as f32
}

fn validate_target(grid: &Grid, y_f: &[f64]) -> Result<()> {
    if y_f.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: y_f.len(),
        });
    }
    if y_f.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput("target must lie in [0, 1]^M".into()));
    }
    Ok(())
}

fn validate_map(grid: &Grid, next_map: &NextMap) -> Result<()> {
    if next_map.node_count() != grid.node_count() {
        return Err(Error::DimensionMismatch {
            expected: grid.node_count() as usize,
            got: next_map.node_count() as usize,
        });
    }
    Ok(())
}

/// Backward value iteration over `k` stages.
///
/// Stage 0 is the node-to-target distance; stage `t` takes the minimum of
/// the stage `t - 1` value across all successors, with argmin ties broken
/// toward the lowest action index.
pub fn value_iteration(
    grid: &Grid,
    next_map: &NextMap,
    y_f: &[f64],
    k: usize,
) -> Result<(ValueTable, Policy)> {
    validate_target(grid, y_f)?;
    validate_map(grid, next_map)?;
    if next_map.mode_count() > u16::MAX as usize {
        return Err(Error::InvalidInput(format!(
            "{} actions exceed the policy index range",
            next_map.mode_count()
        )));
    }
    let n = grid.node_count() as usize;

    let mut prev: Vec<f32> = (0..n)
        .into_par_iter()
        .map(|node| terminal_cost(grid, node as u64, y_f))
        .collect();

    let mut stages: Vec<Vec<u16>> = Vec::with_capacity(k);
    for _stage in 1..=k {
        let mut values = vec![0.0f32; n];
        let mut policy = vec![0u16; n];
        let prev_ref = &prev;
        (0..n)
            .into_par_iter()
            .map(|node| {
                let mut best_value = f32::INFINITY;
                let mut best_action = 0u16;
                for (action, &succ) in next_map.row(node as u64).iter().enumerate() {
                    let v = prev_ref[succ as usize];
                    if v < best_value {
                        best_value = v;
                        best_action = action as u16;
                    }
                }
                (best_value, best_action)
            })
            .unzip_into_vecs(&mut values, &mut policy);
        stages.push(policy);
        prev = values;
    }

    Ok((
        ValueTable {
            values: prev,
            stage: k,
        },
        Policy { stages },
    ))
}

/// Walk the policy from a node: the stage-`k` action first, then follow the
/// successor table down to stage 1. Returns the action sequence in
/// application order.
pub fn extract_pattern(
    policy: &Policy,
    grid: &Grid,
    next_map: &NextMap,
    z0: u64,
    k: usize,
) -> Result<Pattern> {
    validate_map(grid, next_map)?;
    if z0 >= grid.node_count() {
        return Err(Error::InvalidInput(format!("node {z0} out of range")));
    }
    if k > policy.horizon() {
        return Err(Error::InvalidInput(format!(
            "requested {k} stages from a policy with horizon {}",
            policy.horizon()
        )));
    }
    let mut steps = Vec::with_capacity(k);
    let mut node = z0;
    for stage in (1..=k).rev() {
        let action = policy.stages[stage - 1][node as usize] as usize;
        steps.push(action);
        node = next_map.successor(node, action);
    }
    Ok(Pattern { steps })
}

/// Endpoint of a pattern walked through the successor table.
pub fn walk_pattern(next_map: &NextMap, z0: u64, pattern: &Pattern) -> u64 {
    let mut node = z0;
    for &action in &pattern.steps {
        node = next_map.successor(node, action);
    }
    node
}

/// Exhaustive enumeration of all `m^k` patterns through the successor
/// table; returns the lexicographically first minimizer and its value.
pub fn brute_force_optimal(
    grid: &Grid,
    next_map: &NextMap,
    z0: u64,
    y_f: &[f64],
    k: usize,
) -> Result<(Pattern, f32)> {
    validate_target(grid, y_f)?;
    validate_map(grid, next_map)?;
    let m = next_map.mode_count() as u64;
    let total = (m as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if total > BRUTE_FORCE_BUDGET as u128 {
        return Err(Error::BudgetExceeded {
            requested: total.min(u64::MAX as u128) as u64,
            budget: BRUTE_FORCE_BUDGET,
        });
    }

    let mut best_pattern = Vec::new();
    let mut best_value = f32::INFINITY;
    let mut path = Vec::with_capacity(k);
    descend(
        grid,
        next_map,
        y_f,
        z0,
        k,
        &mut path,
        &mut best_pattern,
        &mut best_value,
    );
    Ok((
        Pattern {
            steps: best_pattern,
        },
        best_value,
    ))
}

#[allow(clippy::too_many_arguments)]
fn descend(
    grid: &Grid,
    next_map: &NextMap,
    y_f: &[f64],
    node: u64,
    remaining: usize,
    path: &mut Vec<usize>,
    best_pattern: &mut Vec<usize>,
    best_value: &mut f32,
) {
    if remaining == 0 {
        let value = terminal_cost(grid, node, y_f);
        if value < *best_value {
            *best_value = value;
            best_pattern.clone_from(path);
        }
        return;
    }
    for action in 0..next_map.mode_count() {
        path.push(action);
        descend(
            grid,
            next_map,
            y_f,
            next_map.successor(node, action),
            remaining - 1,
            path,
            best_pattern,
            best_value,
        );
        path.pop();
    }
}

/// The distance guarantee `(2k + 1) * epsilon` for a `k`-stage pattern on a
/// grid with cell radius `epsilon`.
pub fn guarantee_bound(k: usize, epsilon: f64) -> f64 {
    (2.0 * k as f64 + 1.0) * epsilon
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, build_next_map};
    use crate::model::{extend_modes, DiscreteSystem, Mode, ReactionSpec, SystemParams};

    fn toy(m_nodes: usize, modes: usize) -> DiscreteSystem {
        let values: Vec<f64> = (0..modes).map(|i| i as f64 / (modes - 1) as f64).collect();
        DiscreteSystem::build(SystemParams {
            node_count: m_nodes,
            length: 1.0,
            sigma: 1.0,
            reaction: ReactionSpec::BistableCubic { theta: 0.3 },
            modes: values.iter().map(|&v| Mode::new(v, v)).collect(),
            tau: 0.05,
        })
        .unwrap()
    }

    struct Instance {
        grid: crate::grid::Grid,
        map: crate::grid::NextMap,
        y_f: Vec<f64>,
    }

    fn instance(m_nodes: usize, points: usize, modes: usize) -> Instance {
        let sys = toy(m_nodes, modes);
        let grid = build_grid(m_nodes, points).unwrap();
        let actions = extend_modes(&sys, 1).unwrap();
        let map = build_next_map(&grid, &sys, &actions, sys.tau / 10.0).unwrap();
        Instance {
            grid,
            map,
            y_f: vec![0.3; m_nodes],
        }
    }

    #[test]
    fn stage_zero_cost_at_target_node() {
        let grid = build_grid(2, 5).unwrap();
        // node coordinates (0.25, 0.5) used as the exact target
        let y_f = vec![0.25, 0.5];
        let node = grid.representative(&y_f);
        let (table, policy) = value_iteration(&grid, &dummy_map(&grid), &y_f, 0).unwrap();
        assert_eq!(table.values[node as usize], 0.0);
        assert_eq!(policy.horizon(), 0);
    }

    fn dummy_map(grid: &crate::grid::Grid) -> NextMap {
        let n = grid.node_count();
        let table: Vec<u32> = (0..n as u32).collect();
        NextMap::from_raw(table, 1, n).unwrap()
    }

    #[test]
    fn value_iteration_matches_brute_force_small() {
        let inst = instance(1, 4, 2);
        let k = 2;
        let (table, policy) = value_iteration(&inst.grid, &inst.map, &inst.y_f, k).unwrap();
        for node in 0..inst.grid.node_count() {
            let (pattern, value) =
                brute_force_optimal(&inst.grid, &inst.map, node, &inst.y_f, k).unwrap();
            assert_eq!(
                table.values[node as usize], value,
                "node {node}: DP and enumeration disagree"
            );
            let extracted =
                extract_pattern(&policy, &inst.grid, &inst.map, node, k).unwrap();
            let end = walk_pattern(&inst.map, node, &extracted);
            assert_eq!(terminal_cost(&inst.grid, end, &inst.y_f), value);
            // both walks end at the same value even if patterns differ in ties
            let bf_end = walk_pattern(&inst.map, node, &pattern);
            assert_eq!(terminal_cost(&inst.grid, bf_end, &inst.y_f), value);
        }
    }

    #[test]
    fn value_iteration_matches_brute_force_larger_mode_set() {
        let inst = instance(2, 4, 3);
        let k = 3;
        let (table, _) = value_iteration(&inst.grid, &inst.map, &inst.y_f, k).unwrap();
        for node in 0..inst.grid.node_count() {
            let (_, value) =
                brute_force_optimal(&inst.grid, &inst.map, node, &inst.y_f, k).unwrap();
            assert_eq!(table.values[node as usize], value);
        }
    }

    #[test]
    fn brute_force_k1_is_one_step_min() {
        let inst = instance(1, 4, 2);
        let (pattern, value) =
            brute_force_optimal(&inst.grid, &inst.map, 0, &inst.y_f, 1).unwrap();
        let direct = (0..inst.map.mode_count())
            .map(|a| terminal_cost(&inst.grid, inst.map.successor(0, a), &inst.y_f))
            .fold(f32::INFINITY, f32::min);
        assert_eq!(value, direct);
        assert_eq!(pattern.len(), 1);
    }

    #[test]
    fn brute_force_budget() {
        let inst = instance(1, 4, 2);
        assert!(matches!(
            brute_force_optimal(&inst.grid, &inst.map, 0, &inst.y_f, 40),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn extract_empty_pattern() {
        let inst = instance(1, 4, 2);
        let (_, policy) = value_iteration(&inst.grid, &inst.map, &inst.y_f, 0).unwrap();
        let pattern = extract_pattern(&policy, &inst.grid, &inst.map, 0, 0).unwrap();
        assert!(pattern.is_empty());
    }

    #[test]
    fn bellman_consistency_is_exact() {
        let inst = instance(2, 4, 3);
        let k = 3;
        let (table, _) = value_iteration(&inst.grid, &inst.map, &inst.y_f, k).unwrap();
        let (prev, _) = value_iteration(&inst.grid, &inst.map, &inst.y_f, k - 1).unwrap();
        for node in 0..inst.grid.node_count() {
            let recomputed = inst
                .map
                .row(node)
                .iter()
                .map(|&s| prev.values[s as usize])
                .fold(f32::INFINITY, f32::min);
            assert_eq!(table.values[node as usize], recomputed);
            // v_t(z) <= v_{t-1}(next^u(z)) for every action
            for &s in inst.map.row(node) {
                assert!(table.values[node as usize] <= prev.values[s as usize]);
            }
        }
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let inst = instance(2, 5, 3);
        let baseline = value_iteration(&inst.grid, &inst.map, &inst.y_f, 4).unwrap();
        for workers in [1usize, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .unwrap();
            let run =
                pool.install(|| value_iteration(&inst.grid, &inst.map, &inst.y_f, 4).unwrap());
            assert_eq!(run, baseline);
        }
    }

    #[test]
    fn guarantee_bound_values() {
        let eps = 5.0_f64.sqrt() / 30.0;
        let b20 = guarantee_bound(20, eps);
        assert!((b20 - 41.0 * 5.0_f64.sqrt() / 30.0).abs() < 1e-12);
        assert!(b20 < 3.1);
        let b10 = guarantee_bound(10, eps);
        assert!(b10 < 1.57);
        assert_eq!(guarantee_bound(0, 0.25), 0.25);
    }

    #[test]
    fn rejects_bad_targets() {
        let inst = instance(1, 4, 2);
        assert!(value_iteration(&inst.grid, &inst.map, &[0.3, 0.3], 1).is_err());
        assert!(value_iteration(&inst.grid, &inst.map, &[1.5], 1).is_err());
    }
}
