//! C ABI over the armrl simulator, rewards and trained policies.
//!
//! Every function returns an [`ArmrlStatus`]. On failure the message is kept in
//! a thread-local slot readable with [`armrl_last_error_message`]. Objects are
//! opaque handles created by `*_new` / `*_load` and released with `*_free`.
//! Array arguments have fixed lengths given by the `ARMRL_*_DIM` constants.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use armrl::armsim::{self, Action, EnvConfig, Goal, Scenario, WorldState};
use armrl::harness::checkpoint::{self, Checkpoint};
use armrl::harness::evaluate::evaluate;
use armrl::harness::train::seeded_stream;
use armrl::rewards::{self, RewardMode, RewardParams};
use armrl::Error;
use rand_chacha::ChaCha8Rng;

pub const ARMRL_OBS_DIM: usize = 28;
pub const ARMRL_GOAL_DIM: usize = 3;
pub const ARMRL_ACTION_DIM: usize = 5;

const _: () = assert!(ARMRL_OBS_DIM == armsim::OBS_DIM);
const _: () = assert!(ARMRL_GOAL_DIM == armsim::GOAL_DIM);
const _: () = assert!(ARMRL_ACTION_DIM == armsim::ACTION_DIM);

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmrlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    EpisodeComplete = 4,
    CheckpointError = 5,
    IoError = 6,
    Divergence = 7,
    ConfigError = 8,
    Panic = 9,
    Internal = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmrlScenario {
    NoObstacle = 1,
    MovingObstacle = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmrlRewardMode {
    Sparse = 0,
    Dense = 1,
}

/// Per-step diagnostics reported by [`armrl_env_step`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmrlStepInfo {
    pub target_distance: f64,
    /// Infinity when the scenario has no obstacle.
    pub obstacle_distance: f64,
    pub reward: f64,
    pub collision: bool,
    pub is_success: bool,
    pub grasped: bool,
    pub step_index: u32,
}

/// Outcome counts from [`armrl_policy_evaluate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmrlOutcome {
    pub episodes: u64,
    pub success: u64,
    pub fail_to_reach: u64,
    pub collision: u64,
    pub mean_return: f64,
}

/// Simulator instance with its own seeded random stream.
pub struct ArmrlEnv {
    config: EnvConfig,
    rewards: RewardParams,
    state: WorldState,
    goal: Goal,
    rng: ChaCha8Rng,
}

/// Trained policy loaded from a checkpoint.
pub struct ArmrlPolicy {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> ArmrlStatus {
    match err {
        Error::DimensionMismatch { .. } => ArmrlStatus::DimensionMismatch,
        Error::Contract(_) => ArmrlStatus::InvalidArgument,
        Error::Divergence(_) => ArmrlStatus::Divergence,
        Error::EpisodeComplete { .. } => ArmrlStatus::EpisodeComplete,
        Error::Config(_) => ArmrlStatus::ConfigError,
        Error::Checkpoint { .. } => ArmrlStatus::CheckpointError,
        Error::Io(_) | Error::Log(_) => ArmrlStatus::IoError,
        Error::NotReady => ArmrlStatus::Internal,
    }
}

struct Fail(ArmrlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ArmrlStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status plus the last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ArmrlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            ArmrlStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            ArmrlStatus::Panic
        }
    }
}

// Enum arguments arrive as plain integers so out-of-range values from C are
// rejected instead of being undefined behaviour.
fn scenario_of(s: u32) -> Result<Scenario, Fail> {
    match s {
        x if x == ArmrlScenario::NoObstacle as u32 => Ok(Scenario::S1),
        x if x == ArmrlScenario::MovingObstacle as u32 => Ok(Scenario::S2),
        other => Err(Fail(
            ArmrlStatus::InvalidArgument,
            format!("unknown scenario {other}"),
        )),
    }
}

fn mode_of(m: u32) -> Result<RewardMode, Fail> {
    match m {
        x if x == ArmrlRewardMode::Sparse as u32 => Ok(RewardMode::Sparse),
        x if x == ArmrlRewardMode::Dense as u32 => Ok(RewardMode::Dense),
        other => Err(Fail(
            ArmrlStatus::InvalidArgument,
            format!("unknown reward mode {other}"),
        )),
    }
}

/// # Safety
/// `ptr` must be null or valid for reads of `N` doubles.
unsafe fn read_array<const N: usize>(ptr: *const f64, what: &str) -> Result<[f64; N], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and, per the caller contract, valid for N reads.
    let s = unsafe { std::slice::from_raw_parts(ptr, N) };
    Ok(s.try_into().expect("length N"))
}

/// # Safety
/// `ptr` must be null or valid for writes of `src.len()` doubles.
unsafe fn write_array(ptr: *mut f64, src: &[f64]) {
    if !ptr.is_null() {
        // SAFETY: non-null and, per the caller contract, valid for src.len() writes.
        unsafe { std::ptr::copy_nonoverlapping(src.as_ptr(), ptr, src.len()) };
    }
}

/// # Safety
/// Output pointers must each be null or valid for their documented length.
unsafe fn write_observation(
    env: &ArmrlEnv,
    obs_out: *mut f64,
    achieved_out: *mut f64,
    desired_out: *mut f64,
) {
    let o = armsim::observe(&env.state, &env.goal);
    // SAFETY: forwarded caller contract.
    unsafe {
        write_array(obs_out, &o.obs);
        write_array(achieved_out, &o.achieved_goal);
        write_array(desired_out, &o.desired_goal);
    }
}

/// Copies the most recent error message of this thread into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for writes of `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn armrl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            // SAFETY: buf is valid for len bytes and n < len.
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Evaluates the reward for one transition with the default thresholds and gains.
/// Pass `INFINITY` as `obstacle_distance` when there is no obstacle.
///
/// # Safety
/// `achieved` and `desired` must point to 3 doubles; `out` to one double.
#[no_mangle]
pub unsafe extern "C" fn armrl_reward(
    achieved: *const f64,
    desired: *const f64,
    obstacle_distance: f64,
    mode: u32,
    out: *mut f64,
) -> ArmrlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let a = unsafe { read_array::<3>(achieved, "achieved")? };
        let d = unsafe { read_array::<3>(desired, "desired")? };
        if out.is_null() {
            return Err(null("out"));
        }
        let params = RewardParams {
            mode: mode_of(mode)?,
            ..RewardParams::default()
        };
        let r = rewards::reward(&a, &d, obstacle_distance, &params)?;
        // SAFETY: out is non-null and points to one double.
        unsafe { *out = r };
        Ok(())
    })
}

/// Creates a simulator with the default geometry and a reset episode.
/// `scenario` is an [`ArmrlScenario`] value.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn armrl_env_new(
    scenario: u32,
    seed: u64,
    out: *mut *mut ArmrlEnv,
) -> ArmrlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = EnvConfig::default().with_scenario(scenario_of(scenario)?);
        let mut rng = seeded_stream(seed, 0);
        let (state, goal) = armsim::reset(&config, &mut rng);
        let env = Box::new(ArmrlEnv {
            config,
            rewards: RewardParams::default(),
            state,
            goal,
            rng,
        });
        // SAFETY: out is non-null and writable.
        unsafe { *out = Box::into_raw(env) };
        Ok(())
    })
}

/// Releases a simulator. Null is ignored.
///
/// # Safety
/// `env` must be null or a handle from [`armrl_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn armrl_env_free(env: *mut ArmrlEnv) {
    if !env.is_null() {
        // SAFETY: handle came from Box::into_raw in armrl_env_new.
        drop(unsafe { Box::from_raw(env) });
    }
}

/// Selects sparse or dense rewards ([`ArmrlRewardMode`]) for the `reward` field of step info.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn armrl_env_set_reward_mode(env: *mut ArmrlEnv, mode: u32) -> ArmrlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let env = unsafe { env.as_mut() }.ok_or_else(|| null("env"))?;
        env.rewards.mode = mode_of(mode)?;
        Ok(())
    })
}

/// Starts a new episode and writes the first observation. Any output may be null.
///
/// # Safety
/// `env` must be a live handle; outputs must be null or hold 28, 3 and 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn armrl_env_reset(
    env: *mut ArmrlEnv,
    obs_out: *mut f64,
    achieved_out: *mut f64,
    desired_out: *mut f64,
) -> ArmrlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let env = unsafe { env.as_mut() }.ok_or_else(|| null("env"))?;
        let (state, goal) = armsim::reset(&env.config, &mut env.rng);
        env.state = state;
        env.goal = goal;
        // SAFETY: caller contract.
        unsafe { write_observation(env, obs_out, achieved_out, desired_out) };
        Ok(())
    })
}

/// Writes the current observation without advancing the episode.
///
/// # Safety
/// As for [`armrl_env_reset`].
#[no_mangle]
pub unsafe extern "C" fn armrl_env_observe(
    env: *const ArmrlEnv,
    obs_out: *mut f64,
    achieved_out: *mut f64,
    desired_out: *mut f64,
) -> ArmrlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let env = unsafe { env.as_ref() }.ok_or_else(|| null("env"))?;
        // SAFETY: caller contract.
        unsafe { write_observation(env, obs_out, achieved_out, desired_out) };
        Ok(())
    })
}

/// Advances one step with a 5-component action in [-1, 1].
/// Returns `EpisodeComplete` once the horizon is exhausted.
///
/// # Safety
/// `env` must be a live handle, `action` must hold 5 doubles; outputs as for
/// [`armrl_env_reset`], `info_out` null or valid for one struct.
#[no_mangle]
pub unsafe extern "C" fn armrl_env_step(
    env: *mut ArmrlEnv,
    action: *const f64,
    obs_out: *mut f64,
    achieved_out: *mut f64,
    desired_out: *mut f64,
    info_out: *mut ArmrlStepInfo,
) -> ArmrlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let env = unsafe { env.as_mut() }.ok_or_else(|| null("env"))?;
        let a = unsafe { read_array::<5>(action, "action")? };
        let (next, info) =
            armsim::step(&env.state, &env.goal, &Action(a), &env.config, &env.rewards)?;
        let reward = rewards::reward(
            &next.block_pos,
            &env.goal.target_pos,
            info.obstacle_distance,
            &env.rewards,
        )?;
        env.state = next;
        // SAFETY: caller contract.
        unsafe {
            write_observation(env, obs_out, achieved_out, desired_out);
            if let Some(out) = info_out.as_mut() {
                *out = ArmrlStepInfo {
                    target_distance: info.target_distance,
                    obstacle_distance: info.obstacle_distance,
                    reward,
                    collision: info.collision,
                    is_success: info.is_success,
                    grasped: env.state.grasped,
                    step_index: env.state.step_index as u32,
                };
            }
        }
        Ok(())
    })
}

/// Loads a policy from a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn armrl_policy_load(
    path: *const c_char,
    out: *mut *mut ArmrlPolicy,
) -> ArmrlStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: caller guarantees a NUL-terminated string.
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|e| Fail(ArmrlStatus::InvalidArgument, format!("path: {e}")))?;
        let checkpoint = checkpoint::load(Path::new(path))?;
        // SAFETY: out is non-null and writable.
        unsafe { *out = Box::into_raw(Box::new(ArmrlPolicy { checkpoint })) };
        Ok(())
    })
}

/// Releases a policy. Null is ignored.
///
/// # Safety
/// `policy` must be null or a handle from [`armrl_policy_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn armrl_policy_free(policy: *mut ArmrlPolicy) {
    if !policy.is_null() {
        // SAFETY: handle came from Box::into_raw in armrl_policy_load.
        drop(unsafe { Box::from_raw(policy) });
    }
}

/// Deterministic action for a raw observation and desired goal.
///
/// # Safety
/// `policy` must be a live handle; `obs` 28 doubles, `goal` 3, `action_out` 5.
#[no_mangle]
pub unsafe extern "C" fn armrl_policy_act(
    policy: *const ArmrlPolicy,
    obs: *const f64,
    goal: *const f64,
    action_out: *mut f64,
) -> ArmrlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let policy = unsafe { policy.as_ref() }.ok_or_else(|| null("policy"))?;
        let o = unsafe { read_array::<28>(obs, "obs")? };
        let g = unsafe { read_array::<3>(goal, "goal")? };
        if action_out.is_null() {
            return Err(null("action_out"));
        }
        let ckpt = &policy.checkpoint;
        let input = ckpt.normalizer.input(&o, &g);
        let a = Action::from_slice(&ckpt.agent.act(&input)?)?;
        // SAFETY: action_out is non-null and holds 5 doubles.
        unsafe { write_array(action_out, &a.0) };
        Ok(())
    })
}

/// Runs `episodes` deterministic evaluation episodes and tallies outcomes.
///
/// # Safety
/// `policy` must be a live handle; `out` valid for one struct.
#[no_mangle]
pub unsafe extern "C" fn armrl_policy_evaluate(
    policy: *const ArmrlPolicy,
    scenario: u32,
    mode: u32,
    episodes: u64,
    seed: u64,
    out: *mut ArmrlOutcome,
) -> ArmrlStatus {
    guard(|| {
        // SAFETY: caller contract.
        let policy = unsafe { policy.as_ref() }.ok_or_else(|| null("policy"))?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        let episodes = usize::try_from(episodes)
            .map_err(|_| Fail(ArmrlStatus::InvalidArgument, "episodes too large".into()))?;
        let mut rng = seeded_stream(seed, 3);
        let table = evaluate(
            &policy.checkpoint,
            scenario_of(scenario)?,
            mode_of(mode)?,
            episodes,
            &mut rng,
        )?;
        let c = table.counts;
        *out = ArmrlOutcome {
            episodes: c.total() as u64,
            success: c.success as u64,
            fail_to_reach: c.fail_to_reach as u64,
            collision: c.collision as u64,
            mean_return: c.mean_return(),
        };
        Ok(())
    })
}
