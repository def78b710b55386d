//! Experiment configuration: a TOML file with one section per command.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! Unknown keys are rejected with the offending line number.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kinematics::LegChain;
use crate::sim::EnvConfig;
use crate::terrain::TerrainSpec;
use crate::torque_atlas::{BracingParams, GridSpec, MotorLimits};
use crate::trainer::{EvalSpec, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtlasSection {
    pub chain: LegChain,
    pub bracing: BracingParams,
    pub grid: GridSpec,
    pub motor: MotorLimits,
    pub safety_factor: f64,
}

impl Default for AtlasSection {
    fn default() -> Self {
        Self {
            chain: LegChain::default(),
            bracing: BracingParams::default(),
            grid: GridSpec::default(),
            motor: MotorLimits::default(),
            safety_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainSection {
    pub spec: TerrainSpec,
    /// When set, junction radius and roughness come from this curriculum
    /// level instead of `spec`.
    pub level: Option<u32>,
    /// Vertical spacing of exported rows (m).
    pub export_step: f64,
}

impl Default for TerrainSection {
    fn default() -> Self {
        Self {
            spec: TerrainSpec::default(),
            level: None,
            export_step: 0.01,
        }
    }
}

/// Settings shared by `eval` and `rollout`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: Option<PathBuf>,
    /// Number of episodes (`eval` only).
    pub episodes: usize,
    pub level: u32,
    pub wall_width: Option<f64>,
    pub v_ref: Option<f64>,
    pub fixed_r: Option<f64>,
    pub duration: Option<f64>,
    pub perturb: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        let spec = EvalSpec::default();
        Self {
            checkpoint: None,
            episodes: spec.episodes,
            level: spec.level,
            wall_width: spec.wall_width,
            v_ref: spec.v_ref,
            fixed_r: spec.fixed_r,
            duration: spec.duration,
            perturb: spec.perturb,
        }
    }
}

impl EvalSection {
    pub fn spec(&self, seed: u64) -> EvalSpec {
        EvalSpec {
            episodes: self.episodes,
            level: self.level,
            wall_width: self.wall_width,
            v_ref: self.v_ref,
            fixed_r: self.fixed_r,
            duration: self.duration,
            perturb: self.perturb,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepEval {
    /// Evaluate each arm on the fixed-r terrain it was trained on.
    #[default]
    Train,
    /// Evaluate each arm on the vertical wall.
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RsweepSection {
    pub r_values: Vec<f64>,
    /// Training iterations per arm; overrides `train.max_iterations`.
    pub iterations: usize,
    pub episodes: usize,
    pub wall_width: f64,
    pub v_ref: f64,
    pub eval_on: SweepEval,
}

impl Default for RsweepSection {
    fn default() -> Self {
        Self {
            r_values: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
            iterations: 300,
            episodes: 10,
            wall_width: 0.9,
            v_ref: 0.5,
            eval_on: SweepEval::Train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub free_checkpoint: Option<PathBuf>,
    pub locked_checkpoint: Option<PathBuf>,
    /// Train any arm whose checkpoint is not given, using `[train]`.
    pub train_missing: bool,
    pub widths: Vec<f64>,
    pub v_refs: Vec<f64>,
    pub seeds: usize,
    pub duration: f64,
    pub level: u32,
    /// Velocity at which traces are written.
    pub trace_v_ref: f64,
}

impl Default for AblateSection {
    fn default() -> Self {
        Self {
            free_checkpoint: None,
            locked_checkpoint: None,
            train_missing: false,
            widths: vec![0.8, 0.9, 1.0, 1.1],
            v_refs: vec![0.2, 0.3, 0.4, 0.5],
            seeds: 10,
            duration: 5.0,
            level: 10,
            trace_v_ref: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Worker threads; 1 gives bit-reproducible runs.
    pub threads: usize,
    pub atlas: AtlasSection,
    pub terrain: TerrainSection,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub rollout: EvalSection,
    pub rsweep: RsweepSection,
    pub ablate: AblateSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 1,
            atlas: AtlasSection::default(),
            terrain: TerrainSection::default(),
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
            rollout: EvalSection::default(),
            rsweep: RsweepSection::default(),
            ablate: AblateSection::default(),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: path.display().to_string(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialises")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        content_hash(&serde_json::to_vec(&self.snapshot()).expect("json"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        self.env.validate()?;
        self.train.validate()
    }
}

/// Git-style content hash: SHA-256 over `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let c = Config::from_toml("", Path::new("x.toml")).unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = Config::default();
        c.seed = 7;
        c.train.n_envs = 3;
        c.env.fixed_r = Some(0.1);
        let back = Config::from_toml(&c.to_toml(), Path::new("x.toml")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "seed = 1\n\n[train]\nn_envs = 4\nbogus = 2\n";
        match Config::from_toml(text, Path::new("c.toml")) {
            Err(Error::ConfigParse { line, message, .. }) => {
                assert_eq!(line, 5);
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_error_reports_line() {
        let text = "[atlas.bracing]\nrobot_mass = \"heavy\"\n";
        match Config::from_toml(text, Path::new("c.toml")) {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        // git's empty-blob identity, with SHA-256
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
