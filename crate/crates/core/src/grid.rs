//! Finite state-space abstraction: a uniform lattice over `[0, 1]^M` with a
//! node id codec, the representative map, and the precomputed successor
//! table `node x action -> node`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrate::{euler_run_into, tile_count};
use crate::model::{DiscreteSystem, ExtendedMode};

/// Default cap on the node count `P^M`.
pub const DEFAULT_NODE_CAP: u64 = 1 << 24;

/// Uniform lattice `{0, eta, 2 eta, ..., 1}^M` with `P` points per axis.
///
/// Node ids are mixed-radix with dimension 1 least significant, so the codec
/// is a bijection between `0..P^M` and index tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    points_per_dim: usize,
    eta: f64,
    node_count: u64,
}

pub fn build_grid(dim: usize, points_per_dim: usize) -> Result<Grid> {
    build_grid_with_cap(dim, points_per_dim, DEFAULT_NODE_CAP)
}

pub fn build_grid_with_cap(dim: usize, points_per_dim: usize, cap: u64) -> Result<Grid> {
    if dim < 1 {
        return Err(Error::InvalidInput("grid dimension must be >= 1".into()));
    }
    if points_per_dim < 2 {
        return Err(Error::InvalidInput("points per dimension must be >= 2".into()));
    }
    // node ids must fit the 4-byte table slots
    let cap = cap.min(u32::MAX as u64 + 1);
    let node_count = (points_per_dim as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
    if node_count > cap as u128 {
        return Err(Error::GridCapExceeded {
            requested: node_count.min(u64::MAX as u128) as u64,
            cap,
        });
    }
    Ok(Grid {
        dim,
        points_per_dim,
        eta: 1.0 / (points_per_dim as f64 - 1.0),
        node_count: node_count as u64,
    })
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    /// Lattice spacing `eta = 1 / (P - 1)`.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn node_count(&self) -> u64 {
        self.node_count
    }

    /// Half cell diagonal `epsilon = sqrt(M) * eta / 2`: every state is at
    /// most this far from its representative.
    pub fn cell_radius(&self) -> f64 {
        (self.dim as f64).sqrt() * self.eta / 2.0
    }

    /// Coordinates of a node id.
    pub fn coords(&self, node: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.coords_into(node, &mut out);
        out
    }

    pub fn coords_into(&self, node: u64, out: &mut [f64]) {
        debug_assert!(node < self.node_count);
        let p = self.points_per_dim as u64;
        let mut rest = node;
        for slot in out.iter_mut() {
            *slot = (rest % p) as f64 * self.eta;
            rest /= p;
        }
    }

    /// Node id of an index tuple (dimension 1 first).
    pub fn node_of_indices(&self, indices: &[usize]) -> u64 {
        debug_assert_eq!(indices.len(), self.dim);
        let p = self.points_per_dim as u64;
        let mut id = 0u64;
        for &idx in indices.iter().rev() {
            debug_assert!(idx < self.points_per_dim);
            id = id * p + idx as u64;
        }
        id
    }

    /// Nearest lattice node after clamping each component to `[0, 1]`.
    /// Exact half-spacing ties round toward the lower index.
    pub fn representative(&self, y: &[f64]) -> u64 {
        debug_assert_eq!(y.len(), self.dim);
        let p = self.points_per_dim as u64;
        let scale = self.points_per_dim as f64 - 1.0;
        let mut id = 0u64;
        for &v in y.iter().rev() {
            let clamped = v.max(0.0).min(1.0);
            let idx = ((clamped * scale - 0.5).ceil()).max(0.0) as u64;
            id = id * p + idx.min(p - 1);
        }
        id
    }
}

/// Precomputed successor table: `table[node * mode_count + action]` is the
/// representative of the Euler image of the node under that action.
#[derive(Debug, Clone, PartialEq)]
pub struct NextMap {
    table: Vec<u32>,
    mode_count: usize,
}

impl NextMap {
    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn node_count(&self) -> u64 {
        (self.table.len() / self.mode_count) as u64
    }

    #[inline]
    pub fn successor(&self, node: u64, action: usize) -> u64 {
        self.table[node as usize * self.mode_count + action] as u64
    }

    /// All successors of one node, indexed by action.
    #[inline]
    pub fn row(&self, node: u64) -> &[u32] {
        let start = node as usize * self.mode_count;
        &self.table[start..start + self.mode_count]
    }

    pub fn table(&self) -> &[u32] {
        &self.table
    }

    /// Rebuild from raw parts (artifact loading).
    pub fn from_raw(table: Vec<u32>, mode_count: usize, node_count: u64) -> Result<Self> {
        if mode_count == 0 || table.len() as u64 != node_count * mode_count as u64 {
            return Err(Error::Artifact(format!(
                "successor table size {} does not match {} nodes x {} actions",
                table.len(),
                node_count,
                mode_count
            )));
        }
        if let Some(&bad) = table.iter().find(|&&id| id as u64 >= node_count) {
            return Err(Error::Artifact(format!(
                "successor id {bad} out of range for {node_count} nodes"
            )));
        }
        Ok(NextMap { table, mode_count })
    }
}

/// Build the successor table for every node and action.
///
/// Each action integrates one switching period per part with `tau / dt`
/// Euler substeps and no intermediate rounding; only the final state is
/// mapped back to the lattice. The build is data-parallel over nodes and
/// bit-identical for any worker count.
///
/// The caller is responsible for having verified the stability hypothesis
/// for this `dt`.
pub fn build_next_map(
    grid: &Grid,
    sys: &DiscreteSystem,
    actions: &[ExtendedMode],
    dt: f64,
) -> Result<NextMap> {
    if grid.dim() != sys.node_count {
        return Err(Error::DimensionMismatch {
            expected: sys.node_count,
            got: grid.dim(),
        });
    }
    if actions.is_empty() {
        return Err(Error::InvalidInput("action set must be non-empty".into()));
    }
    for action in actions {
        if action.is_empty() || action.parts.iter().any(|&p| p >= sys.modes.len()) {
            return Err(Error::InvalidInput("invalid extended mode in action set".into()));
        }
    }
    let substeps = tile_count(sys.tau, dt)?;
    if substeps == 0 {
        return Err(Error::InvalidInput("dt must not exceed tau".into()));
    }

    let mode_count = actions.len();
    let n = grid.node_count() as usize;
    let mut table = vec![0u32; n * mode_count];

    table
        .par_chunks_mut(mode_count)
        .enumerate()
        .try_for_each_init(
            || vec![0.0f64; grid.dim()],
            |state, (node, row)| -> Result<()> {
                for (slot, action) in row.iter_mut().zip(actions) {
                    grid.coords_into(node as u64, state);
                    for &part in &action.parts {
                        euler_run_into(sys, &sys.modes[part], state, dt, substeps).map_err(
                            |step| Error::BlowUp {
                                step,
                                context: format!(
                                    " while expanding node {node} under action {:?}",
                                    action.parts
                                ),
                            },
                        )?;
                    }
                    *slot = grid.representative(state) as u32;
                }
                Ok(())
            },
        )?;

    Ok(NextMap { table, mode_count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::integrate_mode;
    use crate::model::{extend_modes, Mode, ReactionSpec, SystemParams};

    #[test]
    fn example1_grid_shape() {
        let grid = build_grid(5, 16).unwrap();
        assert_eq!(grid.node_count(), 1_048_576);
        assert!((grid.eta() - 1.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn two_point_grid() {
        let grid = build_grid(1, 2).unwrap();
        assert_eq!(grid.node_count(), 2);
        assert_eq!(grid.coords(0), vec![0.0]);
        assert_eq!(grid.coords(1), vec![1.0]);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            build_grid(8, 16),
            Err(Error::GridCapExceeded { .. })
        ));
        assert!(build_grid_with_cap(2, 4, 10).is_err());
        assert!(build_grid_with_cap(2, 4, 16).is_ok());
    }

    #[test]
    fn codec_round_trip() {
        let grid = build_grid(5, 16).unwrap();
        let mut rng = 0x1234_5678_u64;
        for _ in 0..1000 {
            // xorshift is plenty for id sampling
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            let id = rng % grid.node_count();
            let coords = grid.coords(id);
            assert_eq!(grid.representative(&coords), id);
        }
    }

    #[test]
    fn codec_dimension_order() {
        let grid = build_grid(3, 4).unwrap();
        // id = i1 + 4 i2 + 16 i3
        assert_eq!(grid.node_of_indices(&[1, 2, 3]), 1 + 8 + 48);
        let coords = grid.coords(57);
        assert_eq!(grid.representative(&coords), 57);
    }

    #[test]
    fn representative_rounding() {
        let grid = build_grid(1, 16).unwrap();
        // 0.49 / eta = 7.35 rounds down to node 7
        assert_eq!(grid.representative(&[0.49]), 7);
        assert_eq!(grid.representative(&[-0.2]), 0);
        assert_eq!(grid.representative(&[1.7]), 15);
        // lattice points are fixed points
        for i in 0..16 {
            assert_eq!(grid.representative(&[i as f64 / 15.0]), i);
        }
    }

    #[test]
    fn representative_ties_round_down() {
        let grid = build_grid(1, 3).unwrap();
        // eta = 0.5; 0.25 is an exact half-spacing tie
        assert_eq!(grid.representative(&[0.25]), 0);
        assert_eq!(grid.representative(&[0.75]), 1);
    }

    #[test]
    fn cell_radius_values() {
        assert!((build_grid(5, 16).unwrap().cell_radius() - 5.0_f64.sqrt() / 30.0).abs() < 1e-15);
        assert_eq!(build_grid(1, 2).unwrap().cell_radius(), 0.5);
        assert!((build_grid(4, 11).unwrap().cell_radius() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn representative_distance_bounded_by_cell_radius() {
        let grid = build_grid(3, 7).unwrap();
        let mut rng = 0xDEAD_BEEF_u64;
        let mut unit = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let y = [unit() * 1.4 - 0.2, unit() * 1.4 - 0.2, unit() * 1.4 - 0.2];
            let z = grid.coords(grid.representative(&y));
            let dist: f64 = y
                .iter()
                .zip(&z)
                .map(|(a, b)| {
                    let c = a.max(0.0).min(1.0);
                    (c - b) * (c - b)
                })
                .sum::<f64>()
                .sqrt();
            assert!(dist <= grid.cell_radius() * (1.0 + 1e-12));
        }
    }

    fn toy_system() -> DiscreteSystem {
        DiscreteSystem::build(SystemParams {
            node_count: 1,
            length: 1.0,
            sigma: 1.0,
            reaction: ReactionSpec::BistableCubic { theta: 0.3 },
            modes: vec![Mode::new(0.0, 0.0), Mode::new(1.0, 1.0)],
            tau: 0.05,
        })
        .unwrap()
    }

    #[test]
    fn next_map_fixed_point_at_origin() {
        let sys = DiscreteSystem::build(SystemParams {
            node_count: 2,
            length: 1.0,
            sigma: 1.0,
            reaction: ReactionSpec::Polynomial { coeffs: vec![] },
            modes: vec![Mode::new(0.0, 0.0)],
            tau: 0.05,
        })
        .unwrap();
        let grid = build_grid(2, 4).unwrap();
        let actions = extend_modes(&sys, 1).unwrap();
        let map = build_next_map(&grid, &sys, &actions, 0.005).unwrap();
        assert_eq!(map.successor(0, 0), 0);
    }

    #[test]
    fn next_map_matches_direct_integration() {
        let sys = toy_system();
        let grid = build_grid(1, 4).unwrap();
        let actions = extend_modes(&sys, 1).unwrap();
        let dt = sys.tau / 10.0;
        let map = build_next_map(&grid, &sys, &actions, dt).unwrap();
        for node in 0..grid.node_count() {
            for (a, action) in actions.iter().enumerate() {
                let y0 = grid.coords(node);
                let mode = sys.modes[action.parts[0]];
                let img = integrate_mode(&sys, &mode, &y0, sys.tau, dt).unwrap();
                assert_eq!(map.successor(node, a), grid.representative(&img));
            }
        }
    }

    #[test]
    fn next_map_deterministic_across_worker_counts() {
        let sys = toy_system();
        let grid = build_grid(1, 8).unwrap();
        let actions = extend_modes(&sys, 2).unwrap();
        let dt = sys.tau / 20.0;
        let reference = build_next_map(&grid, &sys, &actions, dt).unwrap();
        for workers in [1usize, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .unwrap();
            let map = pool.install(|| build_next_map(&grid, &sys, &actions, dt).unwrap());
            assert_eq!(map, reference);
        }
    }

    #[test]
    fn next_map_from_raw_validates() {
        assert!(NextMap::from_raw(vec![0, 1, 1, 0], 2, 2).is_ok());
        assert!(NextMap::from_raw(vec![0, 5, 1, 0], 2, 2).is_err());
        assert!(NextMap::from_raw(vec![0, 1, 1], 2, 2).is_err());
    }
}
