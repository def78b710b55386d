//! Per-environment terrain level tracking.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::sim::Done;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub enabled: bool,
    /// Level every environment starts at.
    pub start_level: u32,
    pub window: usize,
    pub promote_ratio: f64,
    pub demote_ratio: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            start_level: 0,
            window: 5,
            promote_ratio: 0.8,
            demote_ratio: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumTracker {
    config: CurriculumConfig,
    max_level: u32,
    levels: Vec<u32>,
    history: Vec<VecDeque<Done>>,
}

impl CurriculumTracker {
    pub fn new(config: &CurriculumConfig, n_envs: usize, max_level: u32) -> Self {
        Self {
            config: config.clone(),
            max_level,
            levels: vec![config.start_level.min(max_level); n_envs],
            history: vec![VecDeque::new(); n_envs],
        }
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn level(&self, env: usize) -> u32 {
        self.levels[env]
    }

    pub fn mean_level(&self) -> f64 {
        if self.levels.is_empty() {
            return 0.0;
        }
        self.levels.iter().map(|l| f64::from(*l)).sum::<f64>() / self.levels.len() as f64
    }

    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.max_level as usize + 1];
        for l in &self.levels {
            h[*l as usize] += 1;
        }
        h
    }

    /// Records a finished episode and returns the environment's new level.
    pub fn record(&mut self, env: usize, done: Done) -> u32 {
        if !self.config.enabled || !done.is_terminal() {
            return self.levels[env];
        }
        let window = self.config.window.max(1);
        let hist = &mut self.history[env];
        hist.push_back(done);
        while hist.len() > window {
            hist.pop_front();
        }
        if hist.len() == window {
            let frac = |kind: Done| hist.iter().filter(|d| **d == kind).count() as f64 / window as f64;
            let level = &mut self.levels[env];
            if frac(Done::Success) >= self.config.promote_ratio - 1e-12 {
                *level = (*level + 1).min(self.max_level);
                hist.clear();
            } else if frac(Done::Fell) >= self.config.demote_ratio - 1e-12 {
                *level = level.saturating_sub(1);
                hist.clear();
            }
        }
        self.levels[env]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracker(start: u32) -> CurriculumTracker {
        let cfg = CurriculumConfig {
            start_level: start,
            ..CurriculumConfig::default()
        };
        CurriculumTracker::new(&cfg, 1, 10)
    }

    #[test]
    fn five_successes_promote() {
        let mut t = tracker(3);
        for _ in 0..5 {
            t.record(0, Done::Success);
        }
        assert_eq!(t.level(0), 4);
    }

    #[test]
    fn mixed_results_hold() {
        let mut t = tracker(3);
        for d in [Done::Success, Done::Fell, Done::Success, Done::Timeout, Done::Success] {
            t.record(0, d);
        }
        assert_eq!(t.level(0), 3);
    }

    #[test]
    fn falls_at_zero_stay() {
        let mut t = tracker(0);
        for _ in 0..5 {
            t.record(0, Done::Fell);
        }
        assert_eq!(t.level(0), 0);
        let mut t = tracker(2);
        for _ in 0..5 {
            t.record(0, Done::Fell);
        }
        assert_eq!(t.level(0), 1);
    }

    #[test]
    fn clamps_at_top() {
        let mut t = tracker(10);
        for _ in 0..5 {
            t.record(0, Done::Success);
        }
        assert_eq!(t.level(0), 10);
    }

    #[test]
    fn disabled_never_moves() {
        let cfg = CurriculumConfig {
            enabled: false,
            start_level: 10,
            ..CurriculumConfig::default()
        };
        let mut t = CurriculumTracker::new(&cfg, 2, 10);
        for _ in 0..10 {
            t.record(1, Done::Fell);
        }
        assert_eq!(t.levels(), &[10, 10]);
        assert_eq!(t.histogram()[10], 2);
    }
}
