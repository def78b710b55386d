//! Climbing environment: reset, control step, perturbations and logging.

use std::f64::consts::TAU;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dynamics::{Applied, Body, ContactParams, Coords, Frame, Physics, PhysicsFlags, ProbeContact, ShapeVec, SubstepReport};
use super::model::{pd_torques, RobotModel, FOOT_B, FOOT_F, N_BODIES, N_CONTACTS, N_JOINTS};
use super::obs::{angular_velocity, gravity_dir, pitch_quaternion, ActorObs, CriticObs};
use crate::error::{Error, Result};
use crate::rewards::{compute_rewards, RewardBreakdown, RewardConfig, RewardInputs, CLIMB_HEIGHT, FALL_GRAVITY_Z};
use crate::terrain::{curriculum_params, make_terrain, CgclConfig, CurriculumLevel, TerrainProfile, TerrainSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub enabled: bool,
    pub kick_period: f64,
    pub kick_max: f64,
    pub wrench_period: f64,
    pub force_max: f64,
    pub torque_max: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            kick_period: 2.0,
            kick_max: 1.0,
            wrench_period: 1.0,
            force_max: 10.0,
            torque_max: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizeConfig {
    pub enabled: bool,
    pub friction: [f64; 2],
    pub mass_scale: [f64; 2],
    pub v_ref: [f64; 2],
    pub wall_width: [f64; 2],
    /// Used for both feet when randomisation is off.
    pub nominal_friction: f64,
}

impl Default for RandomizeConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            friction: [0.7, 0.95],
            mass_scale: [0.9, 1.1],
            v_ref: [0.0, 0.6],
            wall_width: [0.8, 1.1],
            nominal_friction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub model: RobotModel,
    pub contact: ContactParams,
    pub reward: RewardConfig,
    /// Base terrain; radius and roughness come from the level.
    pub terrain: TerrainSpec,
    pub curriculum: CgclConfig,
    pub perturb: PerturbConfig,
    pub randomize: RandomizeConfig,
    pub control_dt: f64,
    pub substeps: usize,
    pub episode_time: f64,
    pub gravity: f64,
    pub lock_waist: bool,
    /// Overrides the level's junction radius.
    pub fixed_r: Option<f64>,
    /// Overrides the sampled command.
    pub v_ref: Option<f64>,
    /// Overrides the sampled wall width.
    pub wall_width: Option<f64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            model: RobotModel::default(),
            contact: ContactParams::default(),
            reward: RewardConfig::default(),
            terrain: TerrainSpec::default(),
            curriculum: CgclConfig::default(),
            perturb: PerturbConfig::default(),
            randomize: RandomizeConfig::default(),
            control_dt: 0.02,
            substeps: 4,
            episode_time: 20.0,
            gravity: 9.81,
            lock_waist: false,
            fixed_r: None,
            v_ref: None,
            wall_width: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.control_dt > 0.0 && self.substeps > 0 && self.episode_time > 0.0) {
            return bad("control_dt, substeps and episode_time must be positive");
        }
        if !(self.gravity >= 0.0) {
            return bad("gravity must be non-negative");
        }
        let c = &self.contact;
        if [c.stiffness, c.damping, c.tangential_damping, c.limit_stiffness, c.limit_damping, c.max_penetration]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return bad("contact coefficients must be non-negative");
        }
        let r = &self.randomize;
        for [lo, hi] in [r.friction, r.mass_scale, r.v_ref, r.wall_width] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return bad("randomisation ranges must be ordered");
            }
        }
        if r.mass_scale[0] <= 0.0 || r.wall_width[0] <= 0.0 {
            return bad("mass scales and wall widths must be positive");
        }
        let p = &self.perturb;
        if !(p.kick_period > 0.0 && p.wrench_period > 0.0 && p.kick_max >= 0.0 && p.force_max >= 0.0 && p.torque_max >= 0.0) {
            return bad("perturbation periods must be positive and magnitudes non-negative");
        }
        if self.curriculum.levels == 0 {
            return bad("curriculum needs at least one level");
        }
        self.terrain.validate()
    }

    pub fn substep_dt(&self) -> f64 {
        self.control_dt / self.substeps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Done {
    #[default]
    Running,
    Fell,
    Success,
    Timeout,
}

impl Done {
    pub fn is_terminal(self) -> bool {
        self != Done::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Done::Running => "running",
            Done::Fell => "fell",
            Done::Success => "success",
            Done::Timeout => "timeout",
        }
    }
}

/// Dynamic state plus the per-episode draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub coords: Coords,
    pub time: f64,
    pub level: CurriculumLevel,
    pub v_ref: f64,
    pub wall_width: f64,
    pub friction: [f64; 2],
    pub mass_scales: [f64; N_BODIES],
    pub f_ext: Vector2<f64>,
    pub tau_ext: f64,
    /// Torques applied in the last substep.
    pub torques: [f64; N_JOINTS],
    pub contacts: [ProbeContact; N_CONTACTS],
    pub prev_joint_vel: [f64; N_JOINTS],
    pub done: Done,
}

impl SimState {
    pub fn joint_pos(&self) -> [f64; N_JOINTS] {
        std::array::from_fn(|j| self.coords.shape[j + 1])
    }

    pub fn joint_vel(&self) -> [f64; N_JOINTS] {
        std::array::from_fn(|j| self.coords.shape_vel[j + 1])
    }

    pub fn pitch(&self) -> f64 {
        self.coords.shape[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub actor: ActorObs,
    pub critic: CriticObs,
    pub reward: RewardBreakdown,
    pub done: Done,
}

/// Per-episode statistics useful for checks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeStats {
    pub max_penetration: f64,
    /// Largest `|tau| / limit` seen.
    pub max_torque_ratio: f64,
    pub substeps: u64,
}

pub struct ClimbEnv {
    config: EnvConfig,
    rng: ChaCha8Rng,
    terrain: TerrainProfile,
    body: Body,
    state: SimState,
    flags: PhysicsFlags,
    next_kick: f64,
    next_wrench: f64,
    time_limit: f64,
    stats: EpisodeStats,
}

/// Random planar velocity kick with magnitude `U(0, max)`.
pub fn sample_kick<R: Rng>(rng: &mut R, max: f64) -> Vector2<f64> {
    let mag = rng.random_range(0.0..=max);
    let ang = rng.random_range(0.0..TAU);
    Vector2::new(ang.cos(), ang.sin()) * mag
}

/// External force of magnitude `U(0, force_max)` and torque `U(-torque_max, torque_max)`.
pub fn sample_wrench<R: Rng>(rng: &mut R, force_max: f64, torque_max: f64) -> (Vector2<f64>, f64) {
    let mag = rng.random_range(0.0..=force_max);
    let ang = rng.random_range(0.0..TAU);
    let torque = rng.random_range(-torque_max..=torque_max);
    (Vector2::new(ang.cos(), ang.sin()) * mag, torque)
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

impl ClimbEnv {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let body = Body::new(&config.model, &[1.0; N_BODIES]);
        let terrain = make_terrain(&config.terrain)?;
        let coords = Coords {
            com: Vector2::zeros(),
            com_vel: Vector2::zeros(),
            shape: ShapeVec::zeros(),
            shape_vel: ShapeVec::zeros(),
        };
        let state = SimState {
            coords,
            time: 0.0,
            level: curriculum_params(0, &config.curriculum),
            v_ref: 0.0,
            wall_width: config.terrain.wall_width,
            friction: [config.randomize.nominal_friction; 2],
            mass_scales: [1.0; N_BODIES],
            f_ext: Vector2::zeros(),
            tau_ext: 0.0,
            torques: [0.0; N_JOINTS],
            contacts: [ProbeContact::default(); N_CONTACTS],
            prev_joint_vel: [0.0; N_JOINTS],
            done: Done::Running,
        };
        let mut env = Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            terrain,
            body,
            state,
            flags: PhysicsFlags::all(),
            next_kick: 0.0,
            next_wrench: 0.0,
            time_limit: 0.0,
            stats: EpisodeStats::default(),
        };
        env.reset(0)?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn terrain(&self) -> &TerrainProfile {
        &self.terrain
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    pub fn stats(&self) -> EpisodeStats {
        self.stats
    }

    pub fn flags(&self) -> PhysicsFlags {
        self.flags
    }

    pub fn set_flags(&mut self, flags: PhysicsFlags) {
        self.flags = flags;
    }

    /// Turns the perturbation schedule on or off for the running episode.
    pub fn set_perturbations(&mut self, enabled: bool) {
        self.config.perturb.enabled = enabled;
        if !enabled {
            self.state.f_ext = Vector2::zeros();
            self.state.tau_ext = 0.0;
        }
    }

    /// Reseeds the environment stream, then resets.
    pub fn reset_seeded(&mut self, level: u32, seed: u64) -> Result<(ActorObs, CriticObs)> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.reset(level)
    }

    pub fn reset(&mut self, level: u32) -> Result<(ActorObs, CriticObs)> {
        let cfg = &self.config;
        let level = curriculum_params(level, &cfg.curriculum);
        let rnd = &cfg.randomize;
        let rng = &mut self.rng;
        let width = match cfg.wall_width {
            Some(w) => w,
            None if rnd.enabled => uniform(rng, rnd.wall_width),
            None => cfg.terrain.wall_width,
        };
        let r = cfg.fixed_r.unwrap_or(level.r_of_level).clamp(0.0, 0.5 * width);
        let spec = TerrainSpec {
            wall_width: width,
            junction_r: r,
            roughness_amp: level.roughness_of_level,
            seed: rng.random(),
            ..cfg.terrain.clone()
        };
        let (friction, mass_scales) = if rnd.enabled {
            let f = [uniform(rng, rnd.friction), uniform(rng, rnd.friction)];
            let m: [f64; N_BODIES] = std::array::from_fn(|_| uniform(rng, rnd.mass_scale));
            (f, m)
        } else {
            ([rnd.nominal_friction; 2], [1.0; N_BODIES])
        };
        let v_ref = match cfg.v_ref {
            Some(v) => v,
            None => uniform(rng, rnd.v_ref),
        };
        self.terrain = make_terrain(&spec)?;
        self.body = Body::new(&cfg.model, &mass_scales);
        let shape = self.initial_shape();
        let frame = Frame::new(&self.body, &shape, &ShapeVec::zeros());
        let base = Vector2::new(0.0, cfg.model.stand_height);
        self.state = SimState {
            coords: Coords {
                com: base + frame.com_offset(&self.body),
                com_vel: Vector2::zeros(),
                shape,
                shape_vel: ShapeVec::zeros(),
            },
            time: 0.0,
            level,
            v_ref,
            wall_width: width,
            friction,
            mass_scales,
            f_ext: Vector2::zeros(),
            tau_ext: 0.0,
            torques: [0.0; N_JOINTS],
            contacts: [ProbeContact::default(); N_CONTACTS],
            prev_joint_vel: [0.0; N_JOINTS],
            done: Done::Running,
        };
        self.next_kick = self.config.perturb.kick_period;
        self.next_wrench = 0.0;
        self.time_limit = self.config.episode_time;
        self.stats = EpisodeStats::default();
        self.apply_perturbations();
        Ok((self.actor_obs(), self.critic_obs()))
    }

    /// Standing pose at the base height. The body bends at the waist when
    /// the walls are too close for a level body, and each foot goes to the
    /// first reachable ground point found searching inward from below its hip.
    fn initial_shape(&self) -> ShapeVec {
        let model = &self.config.model;
        let params = &self.config.contact;
        let base = Vector2::new(0.0, model.stand_height);
        let lb = model.body_half_length;
        let stand = model.standing_joints();
        let fallback = ShapeVec::from_row_slice(&[0.0, stand[0], stand[1], stand[2], stand[3], stand[4]]);
        let clear = |p: Vector2<f64>, r: f64| self.terrain.surface_query_near(p.x, p.y, r + 0.005).is_none();
        // Hips lowered first, then raised, at growing bend angles.
        let bends = (0..=60).flat_map(|i| {
            let b = 0.02 * f64::from(i);
            [b, -b]
        });
        for beta in bends {
            let front_hip = base + Vector2::new(beta.cos(), -beta.sin()) * lb;
            let back_hip = base - Vector2::new(beta.cos(), beta.sin()) * lb;
            let body_ok = [base, front_hip, back_hip, (base + front_hip) * 0.5, (base + back_hip) * 0.5]
                .iter()
                .all(|p| clear(*p, params.body_radius));
            if !body_ok {
                continue;
            }
            let front = self.place_foot(front_hip, 1.0, -beta, &model.front_leg);
            let back = self.place_foot(back_hip, -1.0, beta, &model.back_leg);
            if let (Some((hf, kf)), Some((hb, kb))) = (front, back) {
                return ShapeVec::from_row_slice(&[-beta, 2.0 * beta, hf, kf, hb, kb]);
            }
        }
        fallback
    }

    // Returns joint (hip, knee) for the leg whose thigh is measured from a
    // body link at world angle `link_angle`.
    fn place_foot(&self, hip: Vector2<f64>, side: f64, link_angle: f64, chain: &crate::kinematics::LegChain) -> Option<(f64, f64)> {
        let params = &self.config.contact;
        let (l1, l2) = (chain.thigh_length, chain.calf_length);
        let margin = self.config.model.action_margin;
        let mut x = hip.x;
        for _ in 0..200 {
            if x * side < 0.0 {
                break;
            }
            let step_x = x;
            x -= side * 0.005;
            let Some(ground) = self.terrain.ground_height(step_x) else {
                continue;
            };
            let mut target = Vector2::new(step_x, ground + params.foot_radius);
            for _ in 0..3 {
                if let Ok(hit) = self.terrain.surface_query(target.x, target.y) {
                    target += hit.normal * (params.foot_radius - hit.distance);
                }
            }
            let d = target - hip;
            let n = d.norm();
            if n > l1 + l2 - 1e-3 || n < (l1 - l2).abs() + 1e-3 {
                continue;
            }
            let ck = ((n * n - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
            let knee = side * ck.acos();
            let hip_world = d.x.atan2(-d.y) - (l2 * knee.sin()).atan2(l1 + l2 * knee.cos());
            let hip_joint = hip_world - link_angle;
            let [hlo, hhi] = chain.joint_limits[1];
            let [klo, khi] = chain.joint_limits[2];
            if hip_joint < hlo + margin || hip_joint > hhi - margin || knee < klo + margin || knee > khi - margin {
                continue;
            }
            let knee_pos = hip + Vector2::new(hip_world.sin(), -hip_world.cos()) * l1;
            if self.terrain.surface_query_near(knee_pos.x, knee_pos.y, params.knee_radius).is_some() {
                continue;
            }
            return Some((hip_joint, knee));
        }
        None
    }

    fn physics(&self) -> Physics<'_> {
        let mut friction = [self.config.contact.body_friction; N_CONTACTS];
        friction[FOOT_F] = self.state.friction[0];
        friction[FOOT_B] = self.state.friction[1];
        Physics {
            body: &self.body,
            params: &self.config.contact,
            terrain: &self.terrain,
            friction,
            joint_limits: self.config.model.joint_limits(),
            gravity: self.config.gravity,
            flags: self.flags,
        }
    }

    fn frame(&self) -> Frame {
        Frame::new(&self.body, &self.state.coords.shape, &self.state.coords.shape_vel)
    }

    /// Base (waist) position.
    pub fn base_position(&self) -> Vector2<f64> {
        self.state.coords.com - self.frame().com_offset(&self.body)
    }

    pub fn base_velocity(&self) -> Vector2<f64> {
        let c = &self.state.coords;
        c.com_vel - self.frame().com_jacobian(&self.body) * c.shape_vel
    }

    /// World position of a contact probe.
    pub fn probe_position(&self, probe: usize) -> Vector2<f64> {
        self.state.coords.com + self.frame().probe_offset(&self.body, probe)
    }

    /// `(x, z, pitch, waist, hip_f, knee_f, hip_b, knee_b)`.
    pub fn q(&self) -> [f64; 8] {
        let p = self.base_position();
        let s = &self.state.coords.shape;
        [p.x, p.y, s[0], s[1], s[2], s[3], s[4], s[5]]
    }

    pub fn qdot(&self) -> [f64; 8] {
        let v = self.base_velocity();
        let s = &self.state.coords.shape_vel;
        [v.x, v.y, s[0], s[1], s[2], s[3], s[4], s[5]]
    }

    /// Places the base and joints directly, zeroing velocities.
    pub fn set_configuration(&mut self, base: Vector2<f64>, shape: [f64; 6]) {
        let shape = ShapeVec::from_row_slice(&shape);
        let frame = Frame::new(&self.body, &shape, &ShapeVec::zeros());
        let c = &mut self.state.coords;
        c.shape = shape;
        c.shape_vel = ShapeVec::zeros();
        c.com = base + frame.com_offset(&self.body);
        c.com_vel = Vector2::zeros();
    }

    /// Sets generalised velocities (COM velocity and shape rates).
    pub fn set_velocity(&mut self, com_vel: Vector2<f64>, shape_vel: [f64; 6]) {
        self.state.coords.com_vel = com_vel;
        self.state.coords.shape_vel = ShapeVec::from_row_slice(&shape_vel);
    }

    pub fn total_energy(&self) -> f64 {
        self.physics().energy(&self.state.coords)
    }

    /// Total linear momentum.
    pub fn momentum(&self) -> Vector2<f64> {
        self.state.coords.com_vel * self.body.total_mass
    }

    /// Advances one substep with the given joint torques and the current
    /// external wrench.
    pub fn substep(&mut self, torques: [f64; N_JOINTS]) -> SubstepReport {
        let applied = Applied {
            joint_torques: torques,
            force: self.state.f_ext,
            torque: self.state.tau_ext,
        };
        let dt = self.config.substep_dt();
        let mut coords = self.state.coords.clone();
        let report = self.physics().substep(&mut coords, &applied, dt);
        self.state.coords = coords;
        self.state.torques = torques;
        self.state.contacts = report.contacts;
        self.stats.substeps += 1;
        let limits = self.config.model.torque_limits();
        for (t, l) in torques.iter().zip(limits) {
            self.stats.max_torque_ratio = self.stats.max_torque_ratio.max(t.abs() / l);
        }
        for c in &report.contacts {
            if c.active {
                self.stats.max_penetration = self.stats.max_penetration.max(c.penetration);
            }
        }
        report
    }

    fn apply_perturbations(&mut self) {
        let p = self.config.perturb.clone();
        if !p.enabled {
            return;
        }
        let t = self.state.time + 1e-9;
        if t >= self.next_kick {
            let kick = sample_kick(&mut self.rng, p.kick_max);
            self.state.coords.com_vel += kick;
            self.next_kick += p.kick_period;
        }
        if t >= self.next_wrench {
            let (f, tau) = sample_wrench(&mut self.rng, p.force_max, p.torque_max);
            self.state.f_ext = f;
            self.state.tau_ext = tau;
            self.next_wrench += p.wrench_period;
        }
    }

    pub fn targets(&self, action: &[f64; N_JOINTS]) -> [f64; N_JOINTS] {
        let mut targets = self.config.model.action_to_targets(action);
        if self.config.lock_waist {
            targets[0] = 0.0;
        }
        targets
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if action.len() != N_JOINTS {
            return Err(Error::InvalidConfig(format!("action must have {N_JOINTS} components, got {}", action.len())));
        }
        if let Some(index) = action.iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFiniteAction { index });
        }
        if self.state.done.is_terminal() {
            return Err(Error::EpisodeDone);
        }
        let action: [f64; N_JOINTS] = std::array::from_fn(|j| action[j]);
        let targets = self.targets(&action);
        let gains = self.config.model.gains();
        let limits = self.config.model.torque_limits();
        self.state.prev_joint_vel = self.state.joint_vel();
        for _ in 0..self.config.substeps {
            let tau = pd_torques(&self.state.joint_pos(), &self.state.joint_vel(), &targets, &gains, &limits);
            self.substep(tau);
        }
        self.state.time += self.config.control_dt;
        // The schedule fires at control-step boundaries.
        self.apply_perturbations();
        self.finish_step()
    }

    fn finish_step(&mut self) -> Result<StepOutcome> {
        let reward = compute_rewards(&self.reward_inputs(), &self.config.reward).unwrap_or_default();
        let done = self.done_kind();
        self.state.done = done;
        Ok(StepOutcome {
            actor: self.actor_obs(),
            critic: self.critic_obs(),
            reward,
            done,
        })
    }

    fn finite(&self) -> bool {
        let c = &self.state.coords;
        c.com.iter().chain(c.com_vel.iter()).chain(c.shape.iter()).chain(c.shape_vel.iter()).all(|v| v.is_finite())
    }

    fn done_kind(&self) -> Done {
        if !self.finite() {
            return Done::Fell;
        }
        let g = gravity_dir(self.state.pitch());
        if g[2] > FALL_GRAVITY_Z {
            Done::Fell
        } else if self.base_position().y >= CLIMB_HEIGHT {
            Done::Success
        } else if self.state.time >= self.time_limit - 1e-9 {
            Done::Timeout
        } else {
            Done::Running
        }
    }

    /// Shortens the current episode's timeout to `limit` seconds. Used to
    /// spread episode ends across a batch of environments.
    pub fn truncate_episode(&mut self, limit: f64) {
        self.time_limit = limit.min(self.config.episode_time);
    }

    /// Re-evaluates the terminal condition of the current state, e.g. after
    /// [`Self::set_configuration`].
    pub fn evaluate(&mut self) -> Result<StepOutcome> {
        self.state.prev_joint_vel = self.state.joint_vel();
        self.finish_step()
    }

    pub fn reward_inputs(&self) -> RewardInputs {
        let model = &self.config.model;
        let s = &self.state;
        let p = self.base_position();
        let v = self.base_velocity();
        let jv = s.joint_vel();
        let c = &s.contacts;
        let force = |i: usize| c[i].force;
        let limits = model.joint_limits();
        let vel_limits = model.vel_limits();
        let foot = |i: usize| self.probe_position(i).y - self.config.contact.foot_radius;
        let clean = |x: f64| if x.is_finite() { x } else { 0.0 };
        RewardInputs {
            base_vel: [clean(v.x), 0.0, clean(v.y)],
            v_ref: s.v_ref,
            penalized_contact_forces: vec![
                (force(0) + force(1)).norm(),
                force(2).norm(),
                force(3).norm(),
                force(3).norm(),
                force(4).norm(),
                force(4).norm(),
            ],
            base_pos: [clean(p.x), 0.0, clean(p.y)],
            gravity: gravity_dir(clean(s.pitch())),
            yaw: 0.0,
            torques: s.torques.to_vec(),
            rated_torques: model.rated_torques().to_vec(),
            torque_max: model.torque_limits().to_vec(),
            joint_pos: s.joint_pos().iter().map(|x| clean(*x)).collect(),
            joint_vel: jv.iter().map(|x| clean(*x)).collect(),
            joint_acc: jv
                .iter()
                .zip(&s.prev_joint_vel)
                .map(|(a, b)| clean((a - b) / self.config.control_dt))
                .collect(),
            pos_min: limits.iter().map(|l| l[0]).collect(),
            pos_max: limits.iter().map(|l| l[1]).collect(),
            vel_min: vel_limits.iter().map(|l| -l).collect(),
            vel_max: vel_limits.to_vec(),
            collar_angles: vec![0.0; 4],
            foot_heights: vec![clean(foot(FOOT_F)), clean(foot(FOOT_F)), clean(foot(FOOT_B)), clean(foot(FOOT_B))],
        }
    }

    pub fn actor_obs(&self) -> ActorObs {
        let s = &self.state;
        ActorObs {
            angular_velocity: angular_velocity(s.coords.shape_vel[0]),
            gravity_dir: gravity_dir(s.pitch()),
            joint_pos: s.joint_pos(),
            joint_vel: s.joint_vel(),
            v_ref_z: s.v_ref,
        }
    }

    pub fn critic_obs(&self) -> CriticObs {
        let s = &self.state;
        let p = self.base_position();
        let v = self.base_velocity();
        let (d, n) = match self.terrain.surface_query(p.x, p.y) {
            Ok(hit) => (hit.distance.max(0.0), [hit.normal.x, 0.0, hit.normal.y]),
            Err(_) => (0.0, [0.0, 0.0, 1.0]),
        };
        let avg_pitch = s.pitch() + 0.5 * s.coords.shape[1];
        CriticObs {
            actor: self.actor_obs(),
            wall_distance: d,
            wall_normal: n,
            torques: s.torques,
            base_pos: [p.x, 0.0, p.y],
            orientation: pitch_quaternion(avg_pitch),
            base_vel: [v.x, 0.0, v.y],
            angular_velocity: angular_velocity(s.coords.shape_vel[0]),
            friction: s.friction,
            link_masses: self.body.masses,
            f_ext: [s.f_ext.x, 0.0, s.f_ext.y],
            tau_ext: [0.0, -s.tau_ext, 0.0],
        }
    }

    /// One row of the trajectory log.
    pub fn trajectory_row(&self, reward_total: f64) -> TrajectoryRow {
        let q = self.q();
        TrajectoryRow {
            t: self.state.time,
            q,
            vz: self.base_velocity().y,
            reward_total,
            done: self.state.done,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub q: [f64; 8],
    pub vz: f64,
    pub reward_total: f64,
    pub done: Done,
}

pub const TRAJECTORY_HEADER: &str = "t,x,z,pitch,waist,hip_f,knee_f,hip_b,knee_b,vz,reward_total,done";

impl TrajectoryRow {
    pub fn csv(&self) -> String {
        let mut out = format!("{:.4}", self.t);
        for v in self.q {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push_str(&format!(",{:.6},{:.6},{}", self.vz, self.reward_total, self.done.as_str()));
        out
    }
}
