//! Asymmetric actor-critic PPO over vectorised environments, with the
//! terrain curriculum.
//!
//! Every environment owns its RNG stream and results are gathered by
//! environment index, so a run is reproducible for a given seed regardless
//! of the thread count.

pub mod checkpoint;
pub mod curriculum;
pub mod nn;
pub mod policy;
pub mod ppo;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use curriculum::{CurriculumConfig, CurriculumTracker};
pub use policy::{Policy, PolicyConfig, ACTION_DIM};
pub use ppo::{gae, gae_advantages, ppo_update, Batch, LossStats, Optimizers, PpoConfig};

use crate::error::{Error, Result};
use crate::rewards::tracking_score;
use crate::sim::{ActorObs, ClimbEnv, CriticObs, Done, EnvConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_envs: usize,
    pub steps_per_rollout: usize,
    pub ppo_epochs: usize,
    pub minibatches: usize,
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub max_iterations: usize,
    /// Iterations between periodic checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub lock_waist: bool,
    /// Roll out the mean action instead of sampling.
    pub deterministic_rollouts: bool,
    /// Give every environment's first episode a random length so episode
    /// ends are spread across iterations.
    pub desync_episodes: bool,
    pub policy: PolicyConfig,
    pub curriculum: CurriculumConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let ppo = PpoConfig::default();
        Self {
            n_envs: 64,
            steps_per_rollout: 24,
            ppo_epochs: ppo.epochs,
            minibatches: ppo.minibatches,
            clip: ppo.clip,
            gamma: ppo.gamma,
            gae_lambda: ppo.gae_lambda,
            learning_rate: ppo.learning_rate,
            entropy_coef: ppo.entropy_coef,
            value_coef: ppo.value_coef,
            max_grad_norm: ppo.max_grad_norm,
            max_iterations: 1500,
            checkpoint_every: 250,
            lock_waist: false,
            deterministic_rollouts: false,
            desync_episodes: true,
            policy: PolicyConfig::default(),
            curriculum: CurriculumConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            epochs: self.ppo_epochs,
            minibatches: self.minibatches,
            clip: self.clip,
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            learning_rate: self.learning_rate,
            entropy_coef: self.entropy_coef,
            value_coef: self.value_coef,
            max_grad_norm: self.max_grad_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ppo().validate()?;
        if self.n_envs == 0 || self.steps_per_rollout == 0 {
            return Err(Error::InvalidConfig("n_envs and steps_per_rollout must be positive".into()));
        }
        if self.policy.hidden.is_empty() || self.policy.hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iter: usize,
    pub mean_reward: f64,
    pub tracking_score: f64,
    pub success_rate: f64,
    pub mean_level: f64,
    pub episodes: usize,
    pub loss: LossStats,
}

pub const METRICS_HEADER: &str = "iter,mean_reward,tracking_score,success_rate,mean_level";

impl IterationMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.4}",
            self.iter, self.mean_reward, self.tracking_score, self.success_rate, self.mean_level
        )
    }
}

struct Slot {
    env: ClimbEnv,
    rng: ChaCha8Rng,
    actor: ActorObs,
    critic: CriticObs,
}

pub struct Trainer {
    config: TrainConfig,
    slots: Vec<Slot>,
    pub policy: Policy,
    opt: Optimizers,
    tracker: CurriculumTracker,
    update_rng: ChaCha8Rng,
    iteration: usize,
    aborts: usize,
    seed: u64,
}

/// Finished episodes of one rollout, in environment order per step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutSummary {
    pub finished: Vec<Done>,
}

fn obs_matrix<T, F: Fn(&T, &mut Vec<f64>)>(items: &[T], dim: usize, write: F) -> DMatrix<f64> {
    let mut data = Vec::with_capacity(dim * items.len());
    for it in items {
        write(it, &mut data);
    }
    DMatrix::from_vec(dim, items.len(), data)
}

impl Trainer {
    pub fn new(config: &TrainConfig, env_config: &EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut env_config = env_config.clone();
        env_config.lock_waist = config.lock_waist;
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let policy = Policy::new(&config.policy, config.lock_waist, &mut master);
        let tracker = CurriculumTracker::new(&config.curriculum, config.n_envs, env_config.curriculum.levels);
        let mut slots = Vec::with_capacity(config.n_envs);
        for i in 0..config.n_envs {
            let env_seed: u64 = master.random();
            let act_seed: u64 = master.random();
            let mut env = ClimbEnv::new(env_config.clone(), env_seed)?;
            let (actor, critic) = env.reset(tracker.level(i))?;
            if config.desync_episodes {
                let step = env_config.control_dt;
                let steps = (env_config.episode_time / step).round().max(1.0) as u64;
                env.truncate_episode(step * master.random_range(1..=steps) as f64);
            }
            slots.push(Slot {
                env,
                rng: ChaCha8Rng::seed_from_u64(act_seed),
                actor,
                critic,
            });
        }
        let update_rng = ChaCha8Rng::seed_from_u64(master.random());
        Ok(Self {
            opt: Optimizers::new(&policy, config.learning_rate),
            config: config.clone(),
            slots,
            policy,
            tracker,
            update_rng,
            iteration: 0,
            aborts: 0,
            seed,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn tracker(&self) -> &CurriculumTracker {
        &self.tracker
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Steps every environment `steps` times with the current policy.
    pub fn collect_rollouts(&mut self, steps: usize) -> Result<(Batch, RolloutSummary)> {
        let e = self.slots.len();
        let mut batch = Batch::new(e, steps);
        let mut summary = RolloutSummary::default();
        for t in 0..steps {
            let a_raw = obs_matrix(&self.slots, ActorObs::DIM, |s, out| s.actor.write_to(out));
            let c_raw = obs_matrix(&self.slots, CriticObs::DIM, |s, out| s.critic.write_to(out));
            let g = self.policy.distribution(&a_raw);
            let values = self.policy.values(&c_raw);
            let policy = &self.policy;
            let deterministic = self.config.deterministic_rollouts;
            let outcomes: Vec<_> = self
                .slots
                .par_iter_mut()
                .enumerate()
                .map(|(i, s)| {
                    let (a, lp) = if deterministic {
                        let a = policy.masked(std::array::from_fn(|j| g.mean[(j, i)]));
                        (a, policy.log_prob(&g, i, &a))
                    } else {
                        policy.sample(&g, i, &mut s.rng)
                    };
                    s.env.step(&a).map(|out| (a, lp, out))
                })
                .collect();
            let mut next_critic = Vec::with_capacity(e);
            for (i, res) in outcomes.into_iter().enumerate() {
                let (a, lp, out) = res?;
                let idx = t * e + i;
                batch.actor_obs.column_mut(idx).copy_from(&a_raw.column(i));
                batch.critic_obs.column_mut(idx).copy_from(&c_raw.column(i));
                batch.actions[idx] = a;
                batch.log_probs[idx] = lp;
                batch.values[idx] = values[i];
                batch.rewards[idx] = out.reward.weighted_total;
                batch.tracking[idx] = out.reward.tracking_velocity;
                batch.dones[idx] = out.done;
                next_critic.push(out.critic);
                let slot = &mut self.slots[i];
                slot.actor = out.actor;
                slot.critic = out.critic;
            }
            let next_raw = obs_matrix(&next_critic, CriticObs::DIM, |c, out| c.write_to(out));
            let next_values = self.policy.values(&next_raw);
            for i in 0..e {
                let idx = t * e + i;
                batch.next_values[idx] = if batch.dones[idx] == Done::Fell { 0.0 } else { next_values[i] };
            }
            let mut to_reset = Vec::new();
            for i in 0..e {
                let done = batch.dones[t * e + i];
                if done.is_terminal() {
                    summary.finished.push(done);
                    to_reset.push((i, self.tracker.record(i, done)));
                }
            }
            for (i, level) in to_reset {
                let slot = &mut self.slots[i];
                let (a, c) = slot.env.reset(level)?;
                slot.actor = a;
                slot.critic = c;
            }
        }
        Ok((batch, summary))
    }

    /// One rollout plus one PPO update.
    pub fn iterate(&mut self) -> Result<IterationMetrics> {
        let (batch, summary) = self.collect_rollouts(self.config.steps_per_rollout)?;
        let loss = match ppo_update(&mut self.policy, &mut self.opt, &batch, &self.config.ppo(), &mut self.update_rng) {
            Ok(stats) => {
                self.aborts = 0;
                stats
            }
            Err(Error::NonFiniteLoss(_)) => {
                self.aborts += 1;
                if self.aborts >= 3 {
                    return Err(Error::NonFiniteLoss(self.aborts));
                }
                LossStats::default()
            }
            Err(e) => return Err(e),
        };
        self.policy.actor_norm.update(&batch.actor_obs);
        self.policy.critic_norm.update(&batch.critic_obs);
        self.iteration += 1;
        let n = batch.len() as f64;
        let successes = summary.finished.iter().filter(|d| **d == Done::Success).count();
        Ok(IterationMetrics {
            iter: self.iteration,
            mean_reward: batch.rewards.iter().sum::<f64>() / n,
            tracking_score: batch.tracking.iter().sum::<f64>() / n,
            success_rate: if summary.finished.is_empty() {
                0.0
            } else {
                successes as f64 / summary.finished.len() as f64
            },
            mean_level: self.tracker.mean_level(),
            episodes: summary.finished.len(),
            loss,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub iterations: usize,
    pub metrics: Vec<IterationMetrics>,
    pub checkpoint: PathBuf,
}

/// Runs the full loop, writing `metrics.csv`, `levels.csv`, periodic
/// checkpoints under `checkpoints/` and the final `policy.ckpt`.
pub fn train(
    config: &TrainConfig,
    env_config: &EnvConfig,
    seed: u64,
    out_dir: &Path,
    snapshot: serde_json::Value,
    metadata: &str,
    mut progress: impl FnMut(&IterationMetrics),
) -> Result<TrainSummary> {
    fs::create_dir_all(out_dir)?;
    let mut trainer = Trainer::new(config, env_config, seed)?;
    let mut metrics_csv = format!("# {metadata}\n{METRICS_HEADER}\n");
    let levels = env_config.curriculum.levels as usize;
    let mut levels_csv = format!("# {metadata}\niter");
    for l in 0..=levels {
        let _ = write!(levels_csv, ",level_{l}");
    }
    levels_csv.push('\n');
    let mut all = Vec::with_capacity(config.max_iterations);
    for _ in 0..config.max_iterations {
        let m = trainer.iterate()?;
        metrics_csv.push_str(&m.csv_row());
        metrics_csv.push('\n');
        let _ = write!(levels_csv, "{}", m.iter);
        for c in trainer.tracker().histogram() {
            let _ = write!(levels_csv, ",{c}");
        }
        levels_csv.push('\n');
        progress(&m);
        all.push(m);
        if config.checkpoint_every > 0 && m.iter % config.checkpoint_every == 0 {
            let path = out_dir.join("checkpoints").join(format!("iter_{:06}.ckpt", m.iter));
            checkpoint::save(&path, &trainer.policy, m.iter as u64, seed, snapshot.clone())?;
        }
    }
    fs::write(out_dir.join("metrics.csv"), metrics_csv)?;
    fs::write(out_dir.join("levels.csv"), levels_csv)?;
    let path = out_dir.join("policy.ckpt");
    checkpoint::save(&path, &trainer.policy, trainer.iteration() as u64, seed, snapshot)?;
    Ok(TrainSummary {
        iterations: trainer.iteration(),
        metrics: all,
        checkpoint: path,
    })
}

/// Conditions for evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    pub episodes: usize,
    pub level: u32,
    pub wall_width: Option<f64>,
    pub v_ref: Option<f64>,
    pub fixed_r: Option<f64>,
    /// Episode length override in seconds.
    pub duration: Option<f64>,
    pub perturb: bool,
    pub seed: u64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            episodes: 10,
            level: 10,
            wall_width: Some(0.9),
            v_ref: Some(0.5),
            fixed_r: None,
            duration: None,
            perturb: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub done: Done,
    pub duration: f64,
    pub start_z: f64,
    pub final_z: f64,
    pub max_z: f64,
    /// Net height gained per second.
    pub climb_speed: f64,
    pub tracking_score: f64,
    /// `(t, z, vz)` samples at the control rate.
    pub trace: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: Vec<EpisodeResult>,
    pub success_rate: f64,
    pub tracking_score: f64,
    /// Mean climb speed over successful episodes (0 when none succeeded).
    pub success_climb_speed: f64,
}

impl EvalReport {
    fn from_episodes(episodes: Vec<EpisodeResult>) -> Self {
        let n = episodes.len().max(1) as f64;
        let succ: Vec<_> = episodes.iter().filter(|e| e.done == Done::Success).collect();
        Self {
            success_rate: succ.len() as f64 / n,
            tracking_score: episodes.iter().map(|e| e.tracking_score).sum::<f64>() / n,
            success_climb_speed: if succ.is_empty() {
                0.0
            } else {
                succ.iter().map(|e| e.climb_speed).sum::<f64>() / succ.len() as f64
            },
            episodes,
        }
    }
}

pub fn eval_env_config(env_config: &EnvConfig, spec: &EvalSpec, lock_waist: bool) -> EnvConfig {
    let mut cfg = env_config.clone();
    if spec.wall_width.is_some() {
        cfg.wall_width = spec.wall_width;
    }
    if spec.v_ref.is_some() {
        cfg.v_ref = spec.v_ref;
    }
    if spec.fixed_r.is_some() {
        cfg.fixed_r = spec.fixed_r;
    }
    if let Some(d) = spec.duration {
        cfg.episode_time = d;
    }
    cfg.perturb.enabled = spec.perturb;
    cfg.lock_waist = lock_waist;
    cfg
}

/// Runs one deterministic episode (mean actions).
pub fn run_episode(policy: &Policy, env: &mut ClimbEnv, level: u32, seed: u64) -> Result<EpisodeResult> {
    let (mut obs, _) = env.reset_seeded(level, seed)?;
    let start_z = env.base_position().y;
    let mut trace = vec![(0.0, start_z, 0.0)];
    let mut track = Vec::new();
    let mut done = Done::Running;
    while !done.is_terminal() {
        let a = policy.act_deterministic(&obs);
        let out = env.step(&a)?;
        let v = env.base_velocity();
        track.push((v.y, v.x, env.state().v_ref));
        trace.push((env.state().time, env.base_position().y, v.y));
        obs = out.actor;
        done = out.done;
    }
    let duration = env.state().time;
    let final_z = env.base_position().y;
    Ok(EpisodeResult {
        seed,
        done,
        duration,
        start_z,
        final_z,
        max_z: trace.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max),
        climb_speed: if duration > 0.0 { (final_z - start_z) / duration } else { 0.0 },
        tracking_score: tracking_score(&track).unwrap_or(0.0),
        trace,
    })
}

/// Evaluates `policy` on `spec.episodes` seeded episodes.
pub fn evaluate(policy: &Policy, env_config: &EnvConfig, spec: &EvalSpec) -> Result<EvalReport> {
    let cfg = eval_env_config(env_config, spec, policy.lock_waist);
    let episodes: Vec<EpisodeResult> = (0..spec.episodes)
        .into_par_iter()
        .map(|k| {
            let seed = spec.seed.wrapping_add(k as u64);
            let mut env = ClimbEnv::new(cfg.clone(), seed)?;
            run_episode(policy, &mut env, spec.level, seed)
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport::from_episodes(episodes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            n_envs: 2,
            steps_per_rollout: 3,
            ppo_epochs: 1,
            minibatches: 2,
            max_iterations: 1,
            policy: PolicyConfig {
                hidden: vec![16, 8],
                ..PolicyConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn batch_shape() {
        let mut t = Trainer::new(&small(), &EnvConfig::default(), 0).unwrap();
        let (b, _) = t.collect_rollouts(3).unwrap();
        assert_eq!(b.len(), 6);
        assert_eq!(b.actor_obs.ncols(), 6);
    }

    #[test]
    fn deterministic_rollouts_repeat() {
        let cfg = TrainConfig {
            deterministic_rollouts: true,
            ..small()
        };
        let mut a = Trainer::new(&cfg, &EnvConfig::default(), 5).unwrap();
        let mut b = Trainer::new(&cfg, &EnvConfig::default(), 5).unwrap();
        assert_eq!(a.collect_rollouts(4).unwrap(), b.collect_rollouts(4).unwrap());
    }

    #[test]
    fn validation() {
        let bad = TrainConfig {
            clip: 1.5,
            ..small()
        };
        assert!(Trainer::new(&bad, &EnvConfig::default(), 0).is_err());
        let bad = TrainConfig {
            gamma: 0.0,
            ..small()
        };
        assert!(bad.validate().is_err());
    }
}
