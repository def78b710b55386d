//! Gaussian actor and value critic over separate observation sets.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nn::{Activation, Mlp, RunningNorm};
use crate::sim::{ActorObs, CriticObs};

pub const ACTION_DIM: usize = 5;
pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;
const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Initial bias of the log-std outputs.
    pub init_log_std: f64,
    pub obs_clip: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128, 64],
            activation: Activation::Elu,
            init_log_std: -0.5,
            obs_clip: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_norm: RunningNorm,
    pub critic_norm: RunningNorm,
    pub lock_waist: bool,
}

/// Means and clamped log standard deviations, one column per sample.
#[derive(Debug, Clone)]
pub struct Gaussian {
    pub mean: DMatrix<f64>,
    pub log_std: DMatrix<f64>,
    /// Whether the raw log-std lay inside the clamp range.
    pub log_std_free: DMatrix<bool>,
}

impl Policy {
    pub fn new<R: Rng>(config: &PolicyConfig, lock_waist: bool, rng: &mut R) -> Self {
        let mut actor_sizes = vec![ActorObs::DIM];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(2 * ACTION_DIM);
        let mut critic_sizes = vec![CriticObs::DIM];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);
        let mut actor = Mlp::new(&actor_sizes, config.activation, 0.01, rng);
        let critic = Mlp::new(&critic_sizes, config.activation, 1.0, rng);
        let n = actor.params().len();
        let bias = &mut actor.params_mut()[n - 2 * ACTION_DIM..];
        for b in &mut bias[ACTION_DIM..] {
            *b = config.init_log_std;
        }
        Self {
            actor,
            critic,
            actor_norm: RunningNorm::new(ActorObs::DIM, config.obs_clip),
            critic_norm: RunningNorm::new(CriticObs::DIM, config.obs_clip),
            lock_waist,
        }
    }

    /// Action dimensions that carry probability mass.
    pub fn mask(&self) -> [bool; ACTION_DIM] {
        let mut m = [true; ACTION_DIM];
        if self.lock_waist {
            m[0] = false;
        }
        m
    }

    pub fn split(&self, out: &DMatrix<f64>) -> Gaussian {
        let b = out.ncols();
        let mean = out.rows(0, ACTION_DIM).into_owned();
        let raw = out.rows(ACTION_DIM, ACTION_DIM);
        let log_std = DMatrix::from_fn(ACTION_DIM, b, |i, j| raw[(i, j)].clamp(LOG_STD_MIN, LOG_STD_MAX));
        let log_std_free = DMatrix::from_fn(ACTION_DIM, b, |i, j| (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw[(i, j)]));
        Gaussian { mean, log_std, log_std_free }
    }

    /// Normalises raw actor observations (one per column).
    pub fn actor_input(&self, raw: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = raw.clone();
        self.actor_norm.normalize_batch(&mut x);
        x
    }

    pub fn critic_input(&self, raw: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = raw.clone();
        self.critic_norm.normalize_batch(&mut x);
        x
    }

    pub fn distribution(&self, raw_actor: &DMatrix<f64>) -> Gaussian {
        self.split(&self.actor.forward(&self.actor_input(raw_actor)))
    }

    pub fn values(&self, raw_critic: &DMatrix<f64>) -> Vec<f64> {
        self.critic.forward(&self.critic_input(raw_critic)).as_slice().to_vec()
    }

    /// Mean action for one observation.
    pub fn act_deterministic(&self, obs: &ActorObs) -> [f64; ACTION_DIM] {
        let raw = DMatrix::from_column_slice(ActorObs::DIM, 1, &obs.to_vec());
        let g = self.distribution(&raw);
        self.masked(std::array::from_fn(|i| g.mean[(i, 0)]))
    }

    pub fn masked(&self, mut a: [f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
        for (v, m) in a.iter_mut().zip(self.mask()) {
            if !m {
                *v = 0.0;
            }
        }
        a
    }

    /// Samples column `col` of `g`; returns the action and its log-probability.
    pub fn sample<R: Rng>(&self, g: &Gaussian, col: usize, rng: &mut R) -> ([f64; ACTION_DIM], f64) {
        let mut a = [0.0; ACTION_DIM];
        for (i, v) in a.iter_mut().enumerate() {
            let eps: f64 = StandardNormal.sample(rng);
            *v = g.mean[(i, col)] + g.log_std[(i, col)].exp() * eps;
        }
        let a = self.masked(a);
        (a, self.log_prob(g, col, &a))
    }

    pub fn log_prob(&self, g: &Gaussian, col: usize, a: &[f64; ACTION_DIM]) -> f64 {
        gaussian_log_prob(a, g, col, &self.mask())
    }

    pub fn entropy(&self, g: &Gaussian, col: usize) -> f64 {
        self.mask()
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| g.log_std[(i, col)] + 0.5 + LOG_SQRT_2PI)
            .sum()
    }
}

pub fn gaussian_log_prob(a: &[f64; ACTION_DIM], g: &Gaussian, col: usize, mask: &[bool; ACTION_DIM]) -> f64 {
    let mut lp = 0.0;
    for i in 0..ACTION_DIM {
        if !mask[i] {
            continue;
        }
        let ls = g.log_std[(i, col)];
        let z = (a[i] - g.mean[(i, col)]) / ls.exp();
        lp += -0.5 * z * z - ls - LOG_SQRT_2PI;
    }
    lp
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn initial_std_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Policy::new(&PolicyConfig::default(), false, &mut rng);
        let raw = DMatrix::zeros(ActorObs::DIM, 3);
        let g = p.distribution(&raw);
        assert_eq!(g.mean.shape(), (ACTION_DIM, 3));
        for v in g.log_std.iter() {
            assert!((v + 0.5).abs() < 0.1, "{v}");
        }
        assert_eq!(p.values(&DMatrix::zeros(CriticObs::DIM, 2)).len(), 2);
    }

    #[test]
    fn locked_waist_is_masked() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Policy::new(&PolicyConfig::default(), true, &mut rng);
        let raw = DMatrix::from_element(ActorObs::DIM, 1, 0.3);
        let g = p.distribution(&raw);
        for _ in 0..10 {
            let (a, lp) = p.sample(&g, 0, &mut rng);
            assert_eq!(a[0], 0.0);
            assert!(lp.is_finite());
        }
        assert_eq!(p.act_deterministic(&ActorObs::default())[0], 0.0);
    }

    #[test]
    fn log_prob_of_standard_normal() {
        let g = Gaussian {
            mean: DMatrix::zeros(ACTION_DIM, 1),
            log_std: DMatrix::zeros(ACTION_DIM, 1),
            log_std_free: DMatrix::from_element(ACTION_DIM, 1, true),
        };
        let lp = gaussian_log_prob(&[0.0; ACTION_DIM], &g, 0, &[true; ACTION_DIM]);
        assert!((lp + 5.0 * LOG_SQRT_2PI).abs() < 1e-12);
        let lp1 = gaussian_log_prob(&[1.0, 0.0, 0.0, 0.0, 0.0], &g, 0, &[true; ACTION_DIM]);
        assert!((lp - lp1 - 0.5).abs() < 1e-12);
    }
}
