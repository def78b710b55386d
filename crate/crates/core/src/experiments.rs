//! Command implementations behind the `chimney` binary.
//!
//! Each command writes its artifacts into an output directory together with
//! a `manifest.json` naming the config snapshot, its hash, the seeds used and
//! the files produced. Every CSV starts with a `#` metadata line carrying the
//! config hash.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Config, SweepEval};
use crate::error::{Error, Result};
use crate::rewards::RewardBreakdown;
use crate::sim::{ClimbEnv, TRAJECTORY_HEADER};
use crate::terrain::{curriculum_params, make_terrain};
use crate::torque_atlas::{assess_motor, build_atlas, extract_curve_c};
use crate::trainer::{self, checkpoint, eval_env_config, EvalReport, EvalSpec, IterationMetrics, Policy};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
}

/// Collects written files for the manifest.
pub struct Outputs<'a> {
    dir: &'a Path,
    experiment: &'static str,
    config: &'a Config,
    files: Vec<String>,
    seeds: Vec<u64>,
}

impl<'a> Outputs<'a> {
    pub fn new(dir: &'a Path, experiment: &'static str, config: &'a Config) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir,
            experiment,
            config,
            files: Vec::new(),
            seeds: vec![config.seed],
        })
    }

    pub fn metadata(&self) -> String {
        metadata_line(self.config, self.experiment)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.record(name);
        Ok(path)
    }

    pub fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn finish(mut self) -> Result<Manifest> {
        self.seeds.sort_unstable();
        self.seeds.dedup();
        let manifest = Manifest {
            experiment: self.experiment.to_string(),
            config_hash: self.config.hash(),
            seeds: self.seeds,
            outputs: self.files,
            config: self.config.snapshot(),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        fs::write(self.dir.join("manifest.json"), json + "\n")?;
        Ok(manifest)
    }
}

pub fn metadata_line(config: &Config, experiment: &str) -> String {
    format!("experiment={experiment} config_hash={} seed={}", config.hash(), config.seed)
}

pub fn cmd_atlas(config: &Config, out: &Path) -> Result<Manifest> {
    let a = &config.atlas;
    let mut o = Outputs::new(out, "atlas", config)?;
    let meta = o.metadata();
    let map = build_atlas(&a.chain, &a.bracing, &a.grid)?;
    let curve = extract_curve_c(&map)?;
    let report = assess_motor(&map, a.safety_factor, &a.motor)?;
    o.write("atlas.csv", &map.to_csv(&meta))?;
    o.write("curve_c.csv", &curve.to_csv(&meta))?;
    o.write("motor_report.txt", &format!("# {meta}\n{}", report.render()))?;
    o.finish()
}

pub fn cmd_terrain(config: &Config, out: &Path) -> Result<Manifest> {
    let t = &config.terrain;
    let mut spec = t.spec.clone();
    if let Some(level) = t.level {
        let l = curriculum_params(level, &config.env.curriculum);
        spec.junction_r = l.r_of_level;
        spec.roughness_amp = l.roughness_of_level;
    }
    let mut o = Outputs::new(out, "terrain", config)?;
    let meta = o.metadata();
    let profile = make_terrain(&spec)?;
    o.write("terrain.csv", &profile.to_csv(t.export_step, &meta))?;
    o.finish()
}

pub fn cmd_train(config: &Config, out: &Path, progress: impl FnMut(&IterationMetrics)) -> Result<Manifest> {
    config.validate()?;
    let mut o = Outputs::new(out, "train", config)?;
    let meta = o.metadata();
    let summary = trainer::train(&config.train, &config.env, config.seed, out, config.snapshot(), &meta, progress)?;
    for f in ["metrics.csv", "levels.csv", "policy.ckpt"] {
        o.record(f);
    }
    let every = config.train.checkpoint_every;
    if every > 0 {
        for it in (every..=summary.iterations).step_by(every) {
            o.record(&format!("checkpoints/iter_{it:06}.ckpt"));
        }
    }
    o.finish()
}

fn checkpoint_path(given: &Option<PathBuf>, out: &Path) -> PathBuf {
    given.clone().unwrap_or_else(|| out.join("policy.ckpt"))
}

pub fn load_policy(path: &Path) -> Result<Policy> {
    Ok(checkpoint::load(path)?.0)
}

const EPISODE_HEADER: &str = "episode,seed,done,duration,start_z,final_z,max_z,climb_speed,tracking_score";
const TRACE_HEADER: &str = "episode,t,z,vz";

fn episodes_csv(meta: &str, report: &EvalReport) -> String {
    let mut s = format!("# {meta}\n{EPISODE_HEADER}\n");
    for (k, e) in report.episodes.iter().enumerate() {
        let _ = writeln!(
            s,
            "{k},{},{},{:.4},{:.6},{:.6},{:.6},{:.6},{:.6}",
            e.seed,
            e.done.as_str(),
            e.duration,
            e.start_z,
            e.final_z,
            e.max_z,
            e.climb_speed,
            e.tracking_score
        );
    }
    s
}

fn traces_csv(meta: &str, report: &EvalReport) -> String {
    let mut s = format!("# {meta}\n{TRACE_HEADER}\n");
    for (k, e) in report.episodes.iter().enumerate() {
        for (t, z, vz) in &e.trace {
            let _ = writeln!(s, "{k},{t:.4},{z:.6},{vz:.6}");
        }
    }
    s
}

pub fn cmd_eval(config: &Config, out: &Path) -> Result<(Manifest, EvalReport)> {
    let policy = load_policy(&checkpoint_path(&config.eval.checkpoint, out))?;
    let spec = config.eval.spec(config.seed);
    let report = trainer::evaluate(&policy, &config.env, &spec)?;
    let mut o = Outputs::new(out, "eval", config)?;
    o.seeds = (0..spec.episodes as u64).map(|k| spec.seed.wrapping_add(k)).collect();
    let meta = o.metadata();
    o.write("eval_episodes.csv", &episodes_csv(&meta, &report))?;
    o.write("z_trace.csv", &traces_csv(&meta, &report))?;
    o.write(
        "eval_summary.csv",
        &format!(
            "# {meta}\nepisodes,success_rate,tracking_score,success_climb_speed\n{},{:.6},{:.6},{:.6}\n",
            report.episodes.len(),
            report.success_rate,
            report.tracking_score,
            report.success_climb_speed
        ),
    )?;
    Ok((o.finish()?, report))
}

pub fn cmd_rollout(config: &Config, out: &Path) -> Result<Manifest> {
    let policy = load_policy(&checkpoint_path(&config.rollout.checkpoint, out))?;
    let spec = config.rollout.spec(config.seed);
    let env_cfg = eval_env_config(&config.env, &spec, policy.lock_waist);
    let mut env = ClimbEnv::new(env_cfg, spec.seed)?;
    let (mut obs, _) = env.reset_seeded(spec.level, spec.seed)?;
    let mut o = Outputs::new(out, "rollout", config)?;
    let meta = o.metadata();
    let mut traj = format!("# {meta}\n{TRAJECTORY_HEADER}\n");
    let mut rewards = format!("# {meta}\nt,{}\n", RewardBreakdown::csv_header());
    traj.push_str(&env.trajectory_row(0.0).csv());
    traj.push('\n');
    loop {
        let a = policy.act_deterministic(&obs);
        let step = env.step(&a)?;
        let _ = writeln!(traj, "{}", env.trajectory_row(step.reward.weighted_total).csv());
        let _ = writeln!(rewards, "{:.4},{}", env.state().time, step.reward.csv_row());
        obs = step.actor;
        if step.done.is_terminal() {
            break;
        }
    }
    o.write("trajectory.csv", &traj)?;
    o.write("rewards.csv", &rewards)?;
    o.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepArm {
    pub r: f64,
    pub report: std::result::Result<EvalReport, String>,
}

fn r_label(r: f64) -> String {
    format!("r_{:03}", (r * 1000.0).round() as i64)
}

/// Trains one fixed-r policy per entry of `rsweep.r_values` and evaluates it.
/// A failed arm is reported and the sweep continues.
pub fn cmd_rsweep(config: &Config, out: &Path, mut progress: impl FnMut(f64, &IterationMetrics)) -> Result<(Manifest, Vec<SweepArm>)> {
    config.validate()?;
    let s = &config.rsweep;
    let mut o = Outputs::new(out, "rsweep", config)?;
    let meta = o.metadata();
    let mut arms = Vec::new();
    for &r in &s.r_values {
        let mut train = config.train.clone();
        train.max_iterations = s.iterations;
        train.curriculum.enabled = false;
        let mut env = config.env.clone();
        env.fixed_r = Some(r);
        let dir = out.join(r_label(r));
        let result = trainer::train(&train, &env, config.seed, &dir, config.snapshot(), &meta, |m| progress(r, m))
            .and_then(|summary| {
                let policy = load_policy(&summary.checkpoint)?;
                let spec = EvalSpec {
                    episodes: s.episodes,
                    level: train.curriculum.start_level,
                    wall_width: Some(s.wall_width),
                    v_ref: Some(s.v_ref),
                    fixed_r: Some(match s.eval_on {
                        SweepEval::Train => r,
                        SweepEval::Vertical => 0.0,
                    }),
                    duration: None,
                    perturb: false,
                    seed: config.seed,
                };
                trainer::evaluate(&policy, &env, &spec)
            });
        for f in ["metrics.csv", "levels.csv", "policy.ckpt"] {
            if dir.join(f).exists() {
                o.record(&format!("{}/{f}", r_label(r)));
            }
        }
        arms.push(SweepArm {
            r,
            report: result.map_err(|e| e.to_string()),
        });
    }
    let mut table = format!("# {meta}\nr,status,success_rate,tracking_score,success_climb_speed\n");
    let mut traces = format!("# {meta}\nr,episode,t,z\n");
    for arm in &arms {
        match &arm.report {
            Ok(rep) => {
                let _ = writeln!(
                    table,
                    "{:.3},ok,{:.6},{:.6},{:.6}",
                    arm.r, rep.success_rate, rep.tracking_score, rep.success_climb_speed
                );
                for (k, e) in rep.episodes.iter().enumerate() {
                    for (t, z, _) in &e.trace {
                        let _ = writeln!(traces, "{:.3},{k},{t:.4},{z:.6}", arm.r);
                    }
                }
            }
            Err(msg) => {
                let _ = writeln!(table, "{:.3},failed: {},,,", arm.r, msg.replace(',', ";"));
            }
        }
    }
    o.write("rsweep.csv", &table)?;
    o.write("rsweep_traces.csv", &traces)?;
    Ok((o.finish()?, arms))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationCell {
    pub arm: &'static str,
    pub width: f64,
    pub v_ref: f64,
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
}

pub fn mean_ci95(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Scores both arms over every (width, v_ref) cell.
pub fn ablation_table(config: &Config, free: &Policy, locked: &Policy) -> Result<(Vec<AblationCell>, Vec<(&'static str, f64, EvalReport)>)> {
    let a = &config.ablate;
    let mut cells = Vec::new();
    let mut traces = Vec::new();
    for (arm, policy) in [("free", free), ("locked", locked)] {
        for &width in &a.widths {
            for &v_ref in &a.v_refs {
                let spec = EvalSpec {
                    episodes: a.seeds,
                    level: a.level,
                    wall_width: Some(width),
                    v_ref: Some(v_ref),
                    fixed_r: None,
                    duration: Some(a.duration),
                    perturb: false,
                    seed: config.seed,
                };
                let rep = trainer::evaluate(policy, &config.env, &spec)?;
                let scores: Vec<f64> = rep.episodes.iter().map(|e| e.tracking_score).collect();
                let (mean, ci95) = mean_ci95(&scores);
                cells.push(AblationCell {
                    arm,
                    width,
                    v_ref,
                    scores,
                    mean,
                    ci95,
                });
                if (v_ref - a.trace_v_ref).abs() < 1e-9 {
                    traces.push((arm, width, rep));
                }
            }
        }
    }
    Ok((cells, traces))
}

pub fn cmd_ablate(config: &Config, out: &Path, mut progress: impl FnMut(&str, &IterationMetrics)) -> Result<(Manifest, Vec<AblationCell>)> {
    config.validate()?;
    let a = &config.ablate;
    let mut o = Outputs::new(out, "ablate", config)?;
    let meta = o.metadata();
    let mut arm_policy = |name: &'static str, given: &Option<PathBuf>, lock: bool| -> Result<Policy> {
        if let Some(p) = given {
            return load_policy(p);
        }
        if !a.train_missing {
            return Err(Error::MissingCheckpoint(out.join(name).join("policy.ckpt")));
        }
        let mut train = config.train.clone();
        train.lock_waist = lock;
        let summary = trainer::train(&train, &config.env, config.seed, &out.join(name), config.snapshot(), &meta, |m| progress(name, m))?;
        load_policy(&summary.checkpoint)
    };
    let free = arm_policy("free", &a.free_checkpoint, false)?;
    let locked = arm_policy("locked", &a.locked_checkpoint, true)?;
    for (name, given) in [("free", &a.free_checkpoint), ("locked", &a.locked_checkpoint)] {
        if given.is_none() {
            o.record(&format!("{name}/policy.ckpt"));
        }
    }
    let (cells, traces) = ablation_table(config, &free, &locked)?;
    let mut table = format!("# {meta}\narm,width,v_ref,mean_score,ci95,n\n");
    for c in &cells {
        let _ = writeln!(table, "{},{:.3},{:.3},{:.6},{:.6},{}", c.arm, c.width, c.v_ref, c.mean, c.ci95, c.scores.len());
    }
    let mut tr = format!("# {meta}\narm,width,episode,t,z,vz\n");
    for (arm, width, rep) in &traces {
        for (k, e) in rep.episodes.iter().enumerate() {
            for (t, z, vz) in &e.trace {
                let _ = writeln!(tr, "{arm},{width:.3},{k},{t:.4},{z:.6},{vz:.6}");
            }
        }
    }
    o.write("ablate.csv", &table)?;
    o.write("ablate_traces.csv", &tr)?;
    Ok((o.finish()?, cells))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_of_constant_is_zero() {
        assert_eq!(mean_ci95(&[0.5; 4]), (0.5, 0.0));
        let (m, h) = mean_ci95(&[0.0, 1.0]);
        assert_eq!(m, 0.5);
        assert!((h - 1.96 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn labels() {
        assert_eq!(r_label(0.25), "r_250");
        assert_eq!(r_label(0.0), "r_000");
    }

    #[test]
    fn atlas_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = cmd_atlas(&Config::default(), dir.path()).unwrap();
        assert_eq!(m.outputs, ["atlas.csv", "curve_c.csv", "motor_report.txt"]);
        let csv = fs::read_to_string(dir.path().join("curve_c.csv")).unwrap();
        assert!(csv.lines().next().unwrap().contains("experiment=atlas config_hash="));
        assert!(dir.path().join("manifest.json").exists());
    }
}
