//! Controller artifact persistence.
//!
//! One little-endian binary file holds the synthesized policy followed by
//! the successor table:
//!
//! ```text
//! "RCPL" | version u32 | M u32 | P u32 | mode_count u32 | k u32 | y_f: M x f64
//! policy: k stages x N nodes of u16 action indices (stage 1 first)
//! "RCNM" | version u32 | M u32 | P u32 | mode_count u32
//! table: N x mode_count node ids as u32 (node-major)
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::NextMap;
use crate::synth::Policy;

pub const POLICY_MAGIC: &[u8; 4] = b"RCPL";
pub const NEXT_MAP_MAGIC: &[u8; 4] = b"RCNM";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to drive a synthesized controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerArtifact {
    pub dim: u32,
    pub points_per_dim: u32,
    pub mode_count: u32,
    pub stages: u32,
    pub target: Vec<f64>,
    pub policy: Policy,
    pub next_map: NextMap,
}

impl ControllerArtifact {
    pub fn node_count(&self) -> u64 {
        (self.points_per_dim as u64).pow(self.dim)
    }
}

pub fn write_controller(out: &mut impl Write, artifact: &ControllerArtifact) -> Result<()> {
    let n = artifact.node_count() as usize;
    if artifact.policy.stages.len() != artifact.stages as usize
        || artifact.policy.stages.iter().any(|s| s.len() != n)
    {
        return Err(Error::Artifact("policy shape does not match the header".into()));
    }
    if artifact.next_map.node_count() != n as u64
        || artifact.next_map.mode_count() != artifact.mode_count as usize
    {
        return Err(Error::Artifact("successor table shape does not match the header".into()));
    }
    if artifact.target.len() != artifact.dim as usize {
        return Err(Error::Artifact("target length does not match the header".into()));
    }

    out.write_all(POLICY_MAGIC)?;
    for v in [
        FORMAT_VERSION,
        artifact.dim,
        artifact.points_per_dim,
        artifact.mode_count,
        artifact.stages,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in &artifact.target {
        out.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(n * 2);
    for stage in &artifact.policy.stages {
        buf.clear();
        for &a in stage {
            buf.extend_from_slice(&a.to_le_bytes());
        }
        out.write_all(&buf)?;
    }

    out.write_all(NEXT_MAP_MAGIC)?;
    for v in [
        FORMAT_VERSION,
        artifact.dim,
        artifact.points_per_dim,
        artifact.mode_count,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    let table = artifact.next_map.table();
    let mut buf = Vec::with_capacity(table.len().min(1 << 20) * 4);
    for chunk in table.chunks(1 << 18) {
        buf.clear();
        for &id in chunk {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_controller(input: &mut impl Read) -> Result<ControllerArtifact> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != POLICY_MAGIC {
        return Err(Error::Artifact(format!(
            "bad policy magic {magic:?}, expected {POLICY_MAGIC:?}"
        )));
    }
    let version = read_u32(input)?;
    if version != FORMAT_VERSION {
        return Err(Error::Artifact(format!(
            "unsupported format version {version}"
        )));
    }
    let dim = read_u32(input)?;
    let points_per_dim = read_u32(input)?;
    let mode_count = read_u32(input)?;
    let stages = read_u32(input)?;
    if dim == 0 || points_per_dim < 2 || mode_count == 0 {
        return Err(Error::Artifact("degenerate header".into()));
    }
    let node_count = (points_per_dim as u128).pow(dim);
    if node_count > u32::MAX as u128 + 1 {
        return Err(Error::Artifact("node count exceeds the id range".into()));
    }
    let n = node_count as usize;

    let mut target = vec![0.0f64; dim as usize];
    for v in target.iter_mut() {
        *v = read_f64(input)?;
    }

    let mut policy_stages = Vec::with_capacity(stages as usize);
    let mut raw = vec![0u8; n * 2];
    for _ in 0..stages {
        input.read_exact(&mut raw)?;
        let stage: Vec<u16> = raw
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect();
        if let Some(&bad) = stage.iter().find(|&&a| a as u32 >= mode_count) {
            return Err(Error::Artifact(format!(
                "policy action {bad} out of range for {mode_count} actions"
            )));
        }
        policy_stages.push(stage);
    }

    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != NEXT_MAP_MAGIC {
        return Err(Error::Artifact(format!(
            "bad successor-table magic {magic:?}, expected {NEXT_MAP_MAGIC:?}"
        )));
    }
    let nm_version = read_u32(input)?;
    if nm_version != FORMAT_VERSION {
        return Err(Error::Artifact(format!(
            "unsupported successor-table version {nm_version}"
        )));
    }
    for (name, expected) in [
        ("dimension", dim),
        ("points per dimension", points_per_dim),
        ("mode count", mode_count),
    ] {
        let got = read_u32(input)?;
        if got != expected {
            return Err(Error::Artifact(format!(
                "successor-table {name} {got} disagrees with the policy header {expected}"
            )));
        }
    }
    let entries = n * mode_count as usize;
    let mut raw = vec![0u8; entries * 4];
    input.read_exact(&mut raw)?;
    let table: Vec<u32> = raw
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let next_map = NextMap::from_raw(table, mode_count as usize, n as u64)?;

    Ok(ControllerArtifact {
        dim,
        points_per_dim,
        mode_count,
        stages,
        target,
        policy: Policy {
            stages: policy_stages,
        },
        next_map,
    })
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(input: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
