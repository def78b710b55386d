//! Policy checkpoints.
//!
//! Layout: the magic bytes `CHIMCKPT`, a little-endian `u32` format version,
//! a little-endian `u64` header length, a JSON header, then every array named
//! in the header as consecutive little-endian `f64` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nn::{Activation, Mlp, RunningNorm};
use super::policy::Policy;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CHIMCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub iteration: u64,
    pub seed: u64,
    pub lock_waist: bool,
    pub activation: Activation,
    pub actor_sizes: Vec<usize>,
    pub critic_sizes: Vec<usize>,
    pub obs_clip: f64,
    pub actor_norm_count: f64,
    pub critic_norm_count: f64,
    pub arrays: Vec<ArrayInfo>,
    /// Snapshot of the configuration that produced the weights.
    pub config: serde_json::Value,
}

fn arrays(policy: &Policy) -> Vec<(&'static str, &[f64])> {
    vec![
        ("actor", policy.actor.params()),
        ("critic", policy.critic.params()),
        ("actor_norm_mean", &policy.actor_norm.mean),
        ("actor_norm_var", &policy.actor_norm.var),
        ("critic_norm_mean", &policy.critic_norm.mean),
        ("critic_norm_var", &policy.critic_norm.var),
    ]
}

pub fn encode(policy: &Policy, iteration: u64, seed: u64, config: serde_json::Value) -> Vec<u8> {
    let arrs = arrays(policy);
    let header = CheckpointHeader {
        iteration,
        seed,
        lock_waist: policy.lock_waist,
        activation: policy.actor.activation(),
        actor_sizes: policy.actor.sizes().to_vec(),
        critic_sizes: policy.critic.sizes().to_vec(),
        obs_clip: policy.actor_norm.clip,
        actor_norm_count: policy.actor_norm.count,
        critic_norm_count: policy.critic_norm.count,
        arrays: arrs
            .iter()
            .map(|(n, a)| ArrayInfo {
                name: (*n).to_string(),
                len: a.len(),
            })
            .collect(),
        config,
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(20 + json.len() + arrs.iter().map(|(_, a)| 8 * a.len()).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, a) in arrs {
        for v in a {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<(Policy, CheckpointHeader)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut data = &bytes[20 + hlen..];
    let mut take = |name: &str| -> Result<Vec<f64>> {
        let info = header
            .arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing array {name}")))?;
        let n = 8 * info.len;
        if data.len() < n {
            return Err(Error::Checkpoint(format!("array {name} is truncated")));
        }
        let (head, rest) = data.split_at(n);
        data = rest;
        Ok(head.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    // Arrays are read in header order.
    let mut values = std::collections::HashMap::new();
    for info in header.arrays.clone() {
        values.insert(info.name.clone(), take(&info.name)?);
    }
    let mut get = |name: &str| values.remove(name).ok_or_else(|| Error::Checkpoint(format!("missing array {name}")));
    let actor = Mlp::from_params(&header.actor_sizes, header.activation, get("actor")?)?;
    let critic = Mlp::from_params(&header.critic_sizes, header.activation, get("critic")?)?;
    let norm = |mean: Vec<f64>, var: Vec<f64>, count: f64, dim: usize| -> Result<RunningNorm> {
        if mean.len() != dim || var.len() != dim {
            return Err(Error::Checkpoint("normaliser size does not match the network".into()));
        }
        Ok(RunningNorm {
            mean,
            var,
            count,
            clip: header.obs_clip,
        })
    };
    let actor_norm = norm(get("actor_norm_mean")?, get("actor_norm_var")?, header.actor_norm_count, actor.input_dim())?;
    let critic_norm = norm(get("critic_norm_mean")?, get("critic_norm_var")?, header.critic_norm_count, critic.input_dim())?;
    let policy = Policy {
        actor,
        critic,
        actor_norm,
        critic_norm,
        lock_waist: header.lock_waist,
    };
    Ok((policy, header))
}

pub fn save(path: &Path, policy: &Policy, iteration: u64, seed: u64, config: serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode(policy, iteration, seed, config))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Policy, CheckpointHeader)> {
    if !path.exists() {
        return Err(Error::MissingCheckpoint(path.to_path_buf()));
    }
    decode(&fs::read(path)?)
}
