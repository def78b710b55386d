//! C ABI over the chimney-climbing simulator, leg statics and trained
//! policies.
//!
//! Objects are opaque heap handles created by `*_new`/`*_load` and released
//! with the matching `*_free`. Every fallible call returns a
//! [`ChimneyStatus`]; on failure the message is kept per thread and can be
//! copied out with [`chimney_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use chimney::config::Config;
use chimney::kinematics::{joint_torques, FootForce, LegAngles, LegChain};
use chimney::nalgebra::Vector3;
use chimney::sim::{ActorObs, ClimbEnv, CriticObs, Done, N_JOINTS};
use chimney::trainer::{checkpoint, Policy};
use chimney::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChimneyStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NonFinite = 3,
    EpisodeDone = 4,
    Io = 5,
    Checkpoint = 6,
    Config = 7,
    Unreachable = 8,
    Panic = 9,
}

/// Episode state reported by [`chimney_env_step`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChimneyDone {
    Running = 0,
    Fell = 1,
    Success = 2,
    Timeout = 3,
}

impl From<Done> for ChimneyDone {
    fn from(d: Done) -> Self {
        match d {
            Done::Running => ChimneyDone::Running,
            Done::Fell => ChimneyDone::Fell,
            Done::Success => ChimneyDone::Success,
            Done::Timeout => ChimneyDone::Timeout,
        }
    }
}

/// Opaque simulation environment.
pub struct ChimneyEnv {
    env: ClimbEnv,
}

/// Opaque trained policy.
pub struct ChimneyPolicy {
    policy: Policy,
}

pub const CHIMNEY_ACTION_DIM: usize = 5;
pub const CHIMNEY_ACTOR_OBS_DIM: usize = 17;
pub const CHIMNEY_CRITIC_OBS_DIM: usize = 53;
/// Entries of the generalized coordinate vector written by [`chimney_env_q`].
pub const CHIMNEY_Q_DIM: usize = 8;

const _: () = assert!(CHIMNEY_ACTION_DIM == N_JOINTS);
const _: () = assert!(CHIMNEY_ACTOR_OBS_DIM == ActorObs::DIM);
const _: () = assert!(CHIMNEY_CRITIC_OBS_DIM == CriticObs::DIM);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> ChimneyStatus {
    match err {
        Error::NonFiniteAction { .. } | Error::NonFiniteInput { .. } | Error::NonFiniteLoss(_) => ChimneyStatus::NonFinite,
        Error::EpisodeDone => ChimneyStatus::EpisodeDone,
        Error::Io(_) => ChimneyStatus::Io,
        Error::MissingCheckpoint(_) | Error::Checkpoint(_) => ChimneyStatus::Checkpoint,
        Error::ConfigParse { .. } | Error::InvalidConfig(_) | Error::InvalidSpec(_) => ChimneyStatus::Config,
        Error::Unreachable { .. } => ChimneyStatus::Unreachable,
        _ => ChimneyStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (ChimneyStatus, String)>) -> ChimneyStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            ChimneyStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ChimneyStatus::Panic
        }
    }
}

fn fail(e: Error) -> (ChimneyStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (ChimneyStatus, String) {
    (ChimneyStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (ChimneyStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (ChimneyStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, want: usize, what: &str) -> Result<&'a [f64], (ChimneyStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != want {
        return Err((ChimneyStatus::InvalidArgument, format!("{what} must have {want} entries, got {len}")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(p: *mut f64, values: &[f64]) {
    if !p.is_null() {
        ptr::copy_nonoverlapping(values.as_ptr(), p, values.len());
    }
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn chimney_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn chimney_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an environment. `config_toml` is the text of a full configuration
/// file (only `[env]` is used) or null for defaults.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chimney_env_new(config_toml: *const c_char, seed: u64, out: *mut *mut ChimneyEnv) -> ChimneyStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = if config_toml.is_null() {
            Config::default()
        } else {
            Config::from_toml(str_arg(config_toml, "config_toml")?, Path::new("<ffi>")).map_err(fail)?
        };
        let env = ClimbEnv::new(config.env, seed).map_err(fail)?;
        *out = Box::into_raw(Box::new(ChimneyEnv { env }));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle from [`chimney_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chimney_env_free(env: *mut ChimneyEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Resets to curriculum `level` and writes the actor observation
/// (`CHIMNEY_ACTOR_OBS_DIM` values) to `obs_out` if non-null.
///
/// # Safety
/// `env` must be a live handle; `obs_out` null or sized as above.
#[no_mangle]
pub unsafe extern "C" fn chimney_env_reset(env: *mut ChimneyEnv, level: u32, obs_out: *mut f64) -> ChimneyStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let (obs, _) = env.env.reset(level).map_err(fail)?;
        write_out(obs_out, &obs.to_vec());
        Ok(())
    })
}

/// Advances one control step with `action` (`CHIMNEY_ACTION_DIM` values).
/// Outputs are written only where the pointer is non-null.
///
/// # Safety
/// `env` must be a live handle; `action` must hold `action_len` values;
/// `obs_out` holds `CHIMNEY_ACTOR_OBS_DIM` values.
#[no_mangle]
pub unsafe extern "C" fn chimney_env_step(
    env: *mut ChimneyEnv,
    action: *const f64,
    action_len: usize,
    obs_out: *mut f64,
    reward_out: *mut f64,
    done_out: *mut ChimneyDone,
) -> ChimneyStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let action = slice_arg(action, action_len, CHIMNEY_ACTION_DIM, "action")?;
        let step = env.env.step(action).map_err(fail)?;
        write_out(obs_out, &step.actor.to_vec());
        if !reward_out.is_null() {
            *reward_out = step.reward.weighted_total;
        }
        if !done_out.is_null() {
            *done_out = step.done.into();
        }
        Ok(())
    })
}

/// Writes the privileged critic observation (`CHIMNEY_CRITIC_OBS_DIM` values).
///
/// # Safety
/// `env` must be a live handle; `out` must hold the values.
#[no_mangle]
pub unsafe extern "C" fn chimney_env_critic_obs(env: *const ChimneyEnv, out: *mut f64) -> ChimneyStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, &env.env.critic_obs().to_vec());
        Ok(())
    })
}

/// Writes `x, z, pitch, waist, hip_f, knee_f, hip_b, knee_b`
/// (`CHIMNEY_Q_DIM` values) and returns the simulated time through `time_out`.
///
/// # Safety
/// `env` must be a live handle; `q_out` must hold the values.
#[no_mangle]
pub unsafe extern "C" fn chimney_env_q(env: *const ChimneyEnv, q_out: *mut f64, time_out: *mut f64) -> ChimneyStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        if q_out.is_null() {
            return Err(null("q_out"));
        }
        write_out(q_out, &env.env.q());
        if !time_out.is_null() {
            *time_out = env.env.state().time;
        }
        Ok(())
    })
}

/// Loads a policy checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chimney_policy_load(path: *const c_char, out: *mut *mut ChimneyPolicy) -> ChimneyStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let (policy, _) = checkpoint::load(Path::new(path)).map_err(fail)?;
        *out = Box::into_raw(Box::new(ChimneyPolicy { policy }));
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or a handle from [`chimney_policy_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn chimney_policy_free(policy: *mut ChimneyPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Mean action for one actor observation.
///
/// # Safety
/// `policy` must be a live handle; `obs` must hold `obs_len` values and
/// `action_out` `CHIMNEY_ACTION_DIM` values.
#[no_mangle]
pub unsafe extern "C" fn chimney_policy_act(
    policy: *const ChimneyPolicy,
    obs: *const f64,
    obs_len: usize,
    action_out: *mut f64,
) -> ChimneyStatus {
    guard(|| {
        let policy = policy.as_ref().ok_or_else(|| null("policy"))?;
        let obs = slice_arg(obs, obs_len, CHIMNEY_ACTOR_OBS_DIM, "obs")?;
        if action_out.is_null() {
            return Err(null("action_out"));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err((ChimneyStatus::NonFinite, "observation is not finite".into()));
        }
        let obs = ActorObs::from_slice(obs);
        write_out(action_out, &policy.policy.act_deterministic(&obs));
        Ok(())
    })
}

/// Joint torques `-Jᵀ f` (collar, hip, knee) that hold `force` at the foot of
/// a leg with the given link lengths, angles in radians.
///
/// # Safety
/// `angles`, `force` and `torques_out` must each point to 3 values.
#[no_mangle]
pub unsafe extern "C" fn chimney_leg_torques(
    thigh_length: f64,
    calf_length: f64,
    angles: *const f64,
    force: *const f64,
    torques_out: *mut f64,
) -> ChimneyStatus {
    guard(|| {
        let a = slice_arg(angles, 3, 3, "angles")?;
        let f = slice_arg(force, 3, 3, "force")?;
        if torques_out.is_null() {
            return Err(null("torques_out"));
        }
        let chain = LegChain {
            thigh_length,
            calf_length,
            ..LegChain::default()
        };
        chain.validate().map_err(fail)?;
        if a.iter().chain(f).any(|v| !v.is_finite()) {
            return Err((ChimneyStatus::NonFinite, "angles and force must be finite".into()));
        }
        let t = joint_torques(&chain, LegAngles::new(a[0], a[1], a[2]), FootForce(Vector3::new(f[0], f[1], f[2])));
        write_out(torques_out, &t.as_array());
        Ok(())
    })
}
