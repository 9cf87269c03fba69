//! JSON run configuration: parsing, strict validation, and conversion into
//! the core types.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rdcontrol::bounds::{CPlan, E0Mode};
use rdcontrol::grid::{build_grid, build_grid_with_cap, Grid};
use rdcontrol::model::{extend_modes, DiscreteSystem, ExtendedMode, Mode, ReactionSpec,
    SystemParams};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub control: ControlSection,
    pub grid: GridSection,
    pub bounds: BoundsSection,
    pub objective: ObjectiveSection,
    pub initial: InitialSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub length: f64,
    pub nodes: usize,
    pub sigma: f64,
    pub reaction: ReactionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    /// `[u0, uL]` pairs, in priority order (ties resolve to the first).
    pub modes: Vec<[f64; 2]>,
    pub tau: f64,
    /// Horizon in switching periods: `T = k tau`.
    pub k: usize,
    /// Block length for extended modes; must divide `k`.
    #[serde(default = "default_extended_p")]
    pub extended_p: usize,
}

fn default_extended_p() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub points_per_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_cap: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub e0: E0Mode,
    pub c: CPlan,
    /// Forced substep count per switching period; chosen automatically when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub y_f: ScalarOrVec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// `a x / L + b (1 - x / L)` sampled at the interior nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearProfile {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Usage(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    fn validate(&self) -> CliResult<()> {
        if self.control.extended_p == 0 {
            return Err(CliError::Usage("control.extended_p must be >= 1".into()));
        }
        if self.control.k % self.control.extended_p != 0 {
            return Err(CliError::Usage(format!(
                "control.k = {} is not a multiple of extended_p = {}",
                self.control.k, self.control.extended_p
            )));
        }
        match (&self.initial.linear, &self.initial.explicit) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(CliError::Usage(
                    "initial must specify exactly one of `linear` or `explicit`".into(),
                ));
            }
            _ => {}
        }
        if let Some(values) = &self.initial.explicit {
            if values.len() != self.model.nodes {
                return Err(CliError::Usage(format!(
                    "initial.explicit has {} entries for {} nodes",
                    values.len(),
                    self.model.nodes
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Usage("initial.explicit must be finite".into()));
            }
        }
        if let ScalarOrVec::Vector(v) = &self.objective.y_f {
            if v.len() != self.model.nodes {
                return Err(CliError::Usage(format!(
                    "objective.y_f has {} entries for {} nodes",
                    v.len(),
                    self.model.nodes
                )));
            }
        }
        Ok(())
    }

    pub fn build_system(&self) -> CliResult<DiscreteSystem> {
        DiscreteSystem::build(SystemParams {
            node_count: self.model.nodes,
            length: self.model.length,
            sigma: self.model.sigma,
            reaction: self.model.reaction.clone(),
            modes: self
                .control
                .modes
                .iter()
                .map(|&[u0, u_l]| Mode::new(u0, u_l))
                .collect(),
            tau: self.control.tau,
        })
        .map_err(CliError::from_config)
    }

    pub fn target_vector(&self) -> Vec<f64> {
        match &self.objective.y_f {
            ScalarOrVec::Scalar(v) => vec![*v; self.model.nodes],
            ScalarOrVec::Vector(v) => v.clone(),
        }
    }

    /// Initial profile sampled at the interior nodes `x_j = j h`.
    pub fn initial_vector(&self, sys: &DiscreteSystem) -> Vec<f64> {
        match (&self.initial.linear, &self.initial.explicit) {
            (Some(profile), None) => (0..sys.node_count)
                .map(|j| {
                    let ratio = sys.node_position(j) / sys.length;
                    profile.a * ratio + profile.b * (1.0 - ratio)
                })
                .collect(),
            (None, Some(values)) => values.clone(),
            _ => unreachable!("validated at parse time"),
        }
    }
}

/// A parsed configuration turned into ready-to-run core objects.
pub struct Prepared {
    pub config: RunConfig,
    pub system: DiscreteSystem,
    pub grid: Grid,
    pub actions: Vec<ExtendedMode>,
    /// DP stages: `k / extended_p`.
    pub stages: usize,
    pub e0: f64,
    pub target: Vec<f64>,
    pub initial: Vec<f64>,
}

pub fn prepare(config: &RunConfig) -> CliResult<Prepared> {
    let system = config.build_system()?;
    let grid = match config.grid.node_cap {
        Some(cap) => build_grid_with_cap(system.node_count, config.grid.points_per_dim, cap),
        None => build_grid(system.node_count, config.grid.points_per_dim),
    }
    .map_err(CliError::from_config)?;
    let actions = extend_modes(&system, config.control.extended_p).map_err(CliError::from_config)?;
    let e0 = config
        .bounds
        .e0
        .resolve(grid.dim(), grid.eta())
        .map_err(CliError::from_config)?;
    let target = config.target_vector();
    if target.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(CliError::Usage("objective.y_f must lie in [0, 1]".into()));
    }
    let initial = config.initial_vector(&system);
    Ok(Prepared {
        config: config.clone(),
        system,
        grid,
        actions,
        stages: config.control.k / config.control.extended_p,
        e0,
        target,
        initial,
    })
}
