//! Rollout storage, advantage estimation and the clipped PPO update.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{clip_grad_norm, Adam};
use super::policy::{Policy, ACTION_DIM};
use crate::error::{Error, Result};
use crate::sim::{ActorObs, CriticObs, Done};

/// Transitions stored time-major: index `t * n_envs + env`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub n_envs: usize,
    pub steps: usize,
    /// Raw observations, one column per transition.
    pub actor_obs: DMatrix<f64>,
    pub critic_obs: DMatrix<f64>,
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<Done>,
    pub values: Vec<f64>,
    /// Bootstrap value of the following state; zero after a fall.
    pub next_values: Vec<f64>,
    /// Tracking kernel of each step, for logging.
    pub tracking: Vec<f64>,
}

impl Batch {
    pub fn new(n_envs: usize, steps: usize) -> Self {
        let n = n_envs * steps;
        Self {
            n_envs,
            steps,
            actor_obs: DMatrix::zeros(ActorObs::DIM, n),
            critic_obs: DMatrix::zeros(CriticObs::DIM, n),
            actions: vec![[0.0; ACTION_DIM]; n],
            log_probs: vec![0.0; n],
            rewards: vec![0.0; n],
            dones: vec![Done::Running; n],
            values: vec![0.0; n],
            next_values: vec![0.0; n],
            tracking: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Generalised advantage estimates for one environment's time-ordered
/// transitions. `next_values[t]` is the bootstrap for step `t`; recursion
/// stops where `ends[t]` is set.
pub fn gae(rewards: &[f64], values: &[f64], next_values: &[f64], ends: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        let carry = if ends[t] { 0.0 } else { next };
        adv[t] = delta + gamma * lambda * carry;
        next = adv[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Textbook form: `values` has one extra bootstrap entry and a done flag
/// zeroes both the bootstrap and the recursion.
pub fn gae_advantages(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n + 1, "values needs a bootstrap entry");
    let next: Vec<f64> = (0..n).map(|t| if dones[t] { 0.0 } else { values[t + 1] }).collect();
    gae(rewards, &values[..n], &next, dones, gamma, lambda)
}

/// Advantages and returns for a whole batch.
pub fn batch_advantages(batch: &Batch, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let (e, t) = (batch.n_envs, batch.steps);
    let mut adv = vec![0.0; batch.len()];
    let mut ret = vec![0.0; batch.len()];
    for env in 0..e {
        let idx: Vec<usize> = (0..t).map(|s| s * e + env).collect();
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let ends: Vec<bool> = idx.iter().map(|&i| batch.dones[i].is_terminal()).collect();
        let (a, r) = gae(&pick(&batch.rewards), &pick(&batch.values), &pick(&batch.next_values), &ends, gamma, lambda);
        for (k, &i) in idx.iter().enumerate() {
            adv[i] = a[k];
            ret[i] = r[k];
        }
    }
    (adv, ret)
}

pub fn normalize(values: &mut [f64]) {
    let n = values.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v = if std > 1e-12 { (*v - mean) / std } else { *v - mean };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub epochs: usize,
    pub minibatches: usize,
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            minibatches: 4,
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            entropy_coef: 0.01,
            value_coef: 1.0,
            max_grad_norm: 1.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0 && self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad("gamma and gae_lambda must lie in (0, 1]");
        }
        if self.epochs == 0 || self.minibatches == 0 {
            return bad("epochs and minibatches must be positive");
        }
        if !(self.learning_rate > 0.0 && self.max_grad_norm > 0.0) {
            return bad("learning_rate and max_grad_norm must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Minibatch updates skipped for non-finite values.
    pub aborted: usize,
}

/// Loss terms and gradients for one minibatch, without touching weights.
pub struct MinibatchGrad {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub actor_grad: Vec<f64>,
    pub critic_grad: Vec<f64>,
}

/// Clipped-surrogate, value and entropy losses and their gradients on the
/// samples `idx` of already-normalised inputs.
#[allow(clippy::too_many_arguments)]
pub fn minibatch_grad(
    policy: &Policy,
    actor_in: &DMatrix<f64>,
    critic_in: &DMatrix<f64>,
    actions: &[[f64; ACTION_DIM]],
    old_log_probs: &[f64],
    advantages: &[f64],
    returns: &[f64],
    idx: &[usize],
    cfg: &PpoConfig,
) -> MinibatchGrad {
    let m = idx.len();
    let mf = m as f64;
    let xa = actor_in.select_columns(idx);
    let xc = critic_in.select_columns(idx);
    let mask = policy.mask();

    let tape = policy.actor.forward_train(&xa);
    let g = policy.split(&tape.output);
    let mut grad_out = DMatrix::zeros(2 * ACTION_DIM, m);
    let (mut pl, mut ent, mut kl, mut clipped) = (0.0, 0.0, 0.0, 0.0);
    for (c, &i) in idx.iter().enumerate() {
        let a = &actions[i];
        let lp = policy.log_prob(&g, c, a);
        let ratio = (lp - old_log_probs[i]).exp();
        let adv = advantages[i];
        let unclipped = ratio * adv;
        let clipped_obj = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
        pl -= unclipped.min(clipped_obj);
        if (ratio - 1.0).abs() > cfg.clip {
            clipped += 1.0;
        }
        kl += old_log_probs[i] - lp;
        ent += policy.entropy(&g, c);
        // d(-surrogate)/d(logp) when the unclipped branch is the minimum.
        let dlp = if unclipped <= clipped_obj { -ratio * adv / mf } else { 0.0 };
        for j in 0..ACTION_DIM {
            if !mask[j] {
                continue;
            }
            let ls = g.log_std[(j, c)];
            let inv_var = (-2.0 * ls).exp();
            let diff = a[j] - g.mean[(j, c)];
            grad_out[(j, c)] = dlp * diff * inv_var;
            if g.log_std_free[(j, c)] {
                grad_out[(ACTION_DIM + j, c)] = dlp * (diff * diff * inv_var - 1.0) - cfg.entropy_coef / mf;
            }
        }
    }
    let mut actor_grad = vec![0.0; policy.actor.params().len()];
    policy.actor.backward(&tape, &grad_out, &mut actor_grad);

    let ctape = policy.critic.forward_train(&xc);
    let mut vgrad = DMatrix::zeros(1, m);
    let mut vl = 0.0;
    for (c, &i) in idx.iter().enumerate() {
        let err = ctape.output[(0, c)] - returns[i];
        vl += err * err;
        vgrad[(0, c)] = 2.0 * cfg.value_coef * err / mf;
    }
    let mut critic_grad = vec![0.0; policy.critic.params().len()];
    policy.critic.backward(&ctape, &vgrad, &mut critic_grad);

    MinibatchGrad {
        policy_loss: pl / mf,
        value_loss: vl / mf,
        entropy: ent / mf,
        approx_kl: kl / mf,
        clip_fraction: clipped / mf,
        actor_grad,
        critic_grad,
    }
}

pub struct Optimizers {
    pub actor: Adam,
    pub critic: Adam,
}

impl Optimizers {
    pub fn new(policy: &Policy, lr: f64) -> Self {
        Self {
            actor: Adam::new(policy.actor.params().len(), lr),
            critic: Adam::new(policy.critic.params().len(), lr),
        }
    }
}

/// Runs the PPO epochs on `batch`. Minibatches with non-finite losses or
/// gradients are skipped; if every minibatch is skipped the weights are left
/// untouched and `NonFiniteLoss` is returned.
pub fn ppo_update<R: Rng>(policy: &mut Policy, opt: &mut Optimizers, batch: &Batch, cfg: &PpoConfig, rng: &mut R) -> Result<LossStats> {
    let (mut adv, ret) = batch_advantages(batch, cfg.gamma, cfg.gae_lambda);
    normalize(&mut adv);
    let actor_in = policy.actor_input(&batch.actor_obs);
    let critic_in = policy.critic_input(&batch.critic_obs);
    let n = batch.len();
    let mb = n.div_ceil(cfg.minibatches).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = LossStats::default();
    let mut count = 0.0;
    let backup = (policy.actor.params().to_vec(), policy.critic.params().to_vec());
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for idx in order.chunks(mb) {
            let mut g = minibatch_grad(policy, &actor_in, &critic_in, &batch.actions, &batch.log_probs, &adv, &ret, idx, cfg);
            let finite = [g.policy_loss, g.value_loss, g.entropy].iter().all(|v| v.is_finite())
                && g.actor_grad.iter().chain(&g.critic_grad).all(|v| v.is_finite());
            if !finite {
                stats.aborted += 1;
                continue;
            }
            clip_grad_norm(&mut g.actor_grad, cfg.max_grad_norm);
            clip_grad_norm(&mut g.critic_grad, cfg.max_grad_norm);
            opt.actor.step(policy.actor.params_mut(), &g.actor_grad);
            opt.critic.step(policy.critic.params_mut(), &g.critic_grad);
            stats.policy_loss += g.policy_loss;
            stats.value_loss += g.value_loss;
            stats.entropy += g.entropy;
            stats.approx_kl += g.approx_kl;
            stats.clip_fraction += g.clip_fraction;
            count += 1.0;
        }
    }
    let weights_finite = policy.actor.params().iter().chain(policy.critic.params()).all(|v| v.is_finite());
    if count == 0.0 || !weights_finite {
        policy.actor.params_mut().copy_from_slice(&backup.0);
        policy.critic.params_mut().copy_from_slice(&backup.1);
        return Err(Error::NonFiniteLoss(1));
    }
    stats.policy_loss /= count;
    stats.value_loss /= count;
    stats.entropy /= count;
    stats.approx_kl /= count;
    stats.clip_fraction /= count;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::super::policy::PolicyConfig;
    use super::*;

    #[test]
    fn hand_example() {
        let (adv, ret) = gae_advantages(&[1.0, 1.0, 1.0], &[0.0; 4], &[false; 3], 0.5, 1.0);
        assert!((adv[0] - 1.75).abs() < 1e-15);
        assert!((adv[1] - 1.5).abs() < 1e-15);
        assert!((adv[2] - 1.0).abs() < 1e-15);
        assert_eq!(adv, ret);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [0.5, -1.0, 2.0, 0.3];
        let v = [0.1, 0.2, -0.3, 0.4, 0.9];
        let d = [false, true, false, false];
        let (adv, _) = gae_advantages(&r, &v, &d, 0.9, 0.0);
        for t in 0..4 {
            let next = if d[t] { 0.0 } else { v[t + 1] };
            assert_eq!(adv[t], r[t] + 0.9 * next - v[t]);
        }
    }

    #[test]
    fn zero_rewards_zero_values() {
        let (adv, _) = gae_advantages(&[0.0; 5], &[0.0; 6], &[false, false, true, false, false], 0.99, 0.95);
        assert!(adv.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn normalisation() {
        let mut v: Vec<f64> = (0..100).map(|i| (i as f64).powi(2) * 0.1 - 3.0).collect();
        normalize(&mut v);
        let mean = v.iter().sum::<f64>() / 100.0;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 100.0).sqrt();
        assert!(mean.abs() < 1e-6);
        assert!((std - 1.0).abs() < 1e-6);
    }

    fn toy_batch(rng: &mut ChaCha8Rng, policy: &Policy, n: usize) -> Batch {
        let mut b = Batch::new(n, 1);
        for c in 0..n {
            for r in 0..ActorObs::DIM {
                b.actor_obs[(r, c)] = rng.random_range(-1.0..1.0);
            }
            for r in 0..CriticObs::DIM {
                b.critic_obs[(r, c)] = rng.random_range(-1.0..1.0);
            }
        }
        let g = policy.distribution(&b.actor_obs);
        for c in 0..n {
            let (a, lp) = policy.sample(&g, c, rng);
            b.actions[c] = a;
            b.log_probs[c] = lp;
            b.rewards[c] = rng.random_range(-1.0..1.0);
        }
        b
    }

    fn tiny_policy(rng: &mut ChaCha8Rng) -> Policy {
        let cfg = PolicyConfig {
            hidden: vec![6, 5],
            ..PolicyConfig::default()
        };
        let mut p = Policy::new(&cfg, false, rng);
        // Larger output weights so the surrogate is not flat.
        let n = p.actor.params().len();
        for v in &mut p.actor.params_mut()[n - 100..n - 10] {
            *v *= 30.0;
        }
        p
    }

    #[test]
    fn identity_ratio_surrogate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let policy = tiny_policy(&mut rng);
        let b = toy_batch(&mut rng, &policy, 16);
        let adv: Vec<f64> = (0..16).map(|i| (i as f64 - 7.0) * 0.1).collect();
        let ret = vec![0.0; 16];
        let idx: Vec<usize> = (0..16).collect();
        let cfg = PpoConfig::default();
        let ai = policy.actor_input(&b.actor_obs);
        let ci = policy.critic_input(&b.critic_obs);
        let g = minibatch_grad(&policy, &ai, &ci, &b.actions, &b.log_probs, &adv, &ret, &idx, &cfg);
        let mean_adv = adv.iter().sum::<f64>() / 16.0;
        assert!((g.policy_loss + mean_adv).abs() < 1e-12);
        assert!(g.approx_kl.abs() < 1e-12);
    }

    #[test]
    fn zero_advantage_gives_no_policy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = tiny_policy(&mut rng);
        let b = toy_batch(&mut rng, &policy, 8);
        let idx: Vec<usize> = (0..8).collect();
        let cfg = PpoConfig {
            entropy_coef: 0.0,
            ..PpoConfig::default()
        };
        let ai = policy.actor_input(&b.actor_obs);
        let ci = policy.critic_input(&b.critic_obs);
        let g = minibatch_grad(&policy, &ai, &ci, &b.actions, &b.log_probs, &[0.0; 8], &[0.0; 8], &idx, &cfg);
        assert!(g.actor_grad.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn surrogate_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut policy = tiny_policy(&mut rng);
        let b = toy_batch(&mut rng, &policy, 12);
        // Move the policy so ratios differ from one but stay unclipped.
        let n = policy.actor.params().len();
        for k in 0..n {
            policy.actor.params_mut()[k] += 1e-3 * ((k as f64) * 0.7).sin();
        }
        let adv: Vec<f64> = (0..12).map(|i| ((i as f64) * 1.3).cos()).collect();
        let ret: Vec<f64> = (0..12).map(|i| (i as f64) * 0.1).collect();
        let idx: Vec<usize> = (0..12).collect();
        let cfg = PpoConfig {
            clip: 0.9,
            ..PpoConfig::default()
        };
        let ai = policy.actor_input(&b.actor_obs);
        let ci = policy.critic_input(&b.critic_obs);
        let loss = |p: &Policy| {
            let g = minibatch_grad(p, &ai, &ci, &b.actions, &b.log_probs, &adv, &ret, &idx, &cfg);
            g.policy_loss - cfg.entropy_coef * g.entropy
        };
        let g = minibatch_grad(&policy, &ai, &ci, &b.actions, &b.log_probs, &adv, &ret, &idx, &cfg);
        let h = 1e-6;
        let mut checked = 0;
        for k in (0..n).step_by(7) {
            let orig = policy.actor.params()[k];
            policy.actor.params_mut()[k] = orig + h;
            let lp = loss(&policy);
            policy.actor.params_mut()[k] = orig - h;
            let lm = loss(&policy);
            policy.actor.params_mut()[k] = orig;
            let fd = (lp - lm) / (2.0 * h);
            if fd.abs() < 1e-7 && g.actor_grad[k].abs() < 1e-7 {
                continue;
            }
            let rel = (fd - g.actor_grad[k]).abs() / fd.abs().max(g.actor_grad[k].abs());
            assert!(rel < 1e-4, "param {k}: fd {fd} analytic {}", g.actor_grad[k]);
            checked += 1;
        }
        assert!(checked > 20);
    }

    #[test]
    fn update_changes_weights_and_reports() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut policy = tiny_policy(&mut rng);
        let b = toy_batch(&mut rng, &policy, 32);
        let before = policy.clone();
        let mut opt = Optimizers::new(&policy, 1e-3);
        let stats = ppo_update(&mut policy, &mut opt, &b, &PpoConfig::default(), &mut rng).unwrap();
        assert_ne!(before.actor.params(), policy.actor.params());
        assert!(stats.value_loss.is_finite());
    }

    #[test]
    fn non_finite_batch_keeps_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut policy = tiny_policy(&mut rng);
        let mut b = toy_batch(&mut rng, &policy, 8);
        b.rewards[3] = f64::NAN;
        let before = policy.clone();
        let mut opt = Optimizers::new(&policy, 1e-3);
        let err = ppo_update(&mut policy, &mut opt, &b, &PpoConfig::default(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss(_)));
        assert_eq!(before, policy);
    }
}
