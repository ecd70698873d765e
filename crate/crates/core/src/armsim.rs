//! Kinematic pick-and-place world: end-effector with a two-finger gripper, a
//! cube on a table, a target point and, in the obstacle scenario, a sphere
//! sweeping back and forth along y.
//!
//! World frame origin is the table-surface center, z up, meters. Time is
//! measured in steps; velocities are per-step position deltas.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rewards::{distance_to_target, RewardParams};

pub type Vec3 = [f64; 3];

pub const OBS_DIM: usize = 28;
pub const GOAL_DIM: usize = 3;
pub const ACTION_DIM: usize = 5;

/// Block z once it has fallen off the table.
const BELOW_TABLE_Z: f64 = -0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Random block and target, no obstacle.
    S1,
    /// Random block and target plus a moving obstacle.
    S2,
}

impl Scenario {
    pub fn has_obstacle(self) -> bool {
        matches!(self, Scenario::S2)
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(Scenario::S1),
            "s2" => Ok(Scenario::S2),
            other => Err(Error::Config(format!(
                "unknown scenario {other:?}, expected s1 or s2"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub scenario: Scenario,
    pub horizon: usize,
    pub workspace_min: Vec3,
    pub workspace_max: Vec3,
    pub table_x: [f64; 2],
    pub table_y: [f64; 2],
    pub ee_home: Vec3,
    pub block_half_size: f64,
    /// Half-width of the block (x, y) offset range around the home position.
    pub block_range: f64,
    /// Half-width of the target (x, y) offset range around the home position.
    pub target_range: f64,
    /// Target height above the table surface is uniform in this interval.
    pub target_height: [f64; 2],
    pub obstacle_x: [f64; 2],
    pub obstacle_y: [f64; 2],
    pub obstacle_z: f64,
    pub obstacle_radius: f64,
    /// Obstacle travel along y per step.
    pub obstacle_speed: f64,
    /// End-effector travel per unit action.
    pub max_ee_step: f64,
    /// Finger travel per unit action.
    pub max_finger_step: f64,
    pub finger_max: f64,
    pub grasp_radius: f64,
    /// Opening beyond the block faces, per finger, that frees a held block.
    pub release_clearance: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::S1,
            horizon: 100,
            workspace_min: [-0.3, -0.4, 0.02],
            workspace_max: [0.3, 0.4, 0.5],
            table_x: [-0.25, 0.25],
            table_y: [-0.35, 0.35],
            ee_home: [0.0, 0.0, 0.2],
            block_half_size: 0.02,
            block_range: 0.15,
            target_range: 0.15,
            target_height: [0.0, 0.45],
            obstacle_x: [-0.2, 0.2],
            obstacle_y: [-0.35, 0.35],
            obstacle_z: 0.05,
            obstacle_radius: 0.04,
            obstacle_speed: 0.01,
            max_ee_step: 0.05,
            max_finger_step: 0.005,
            finger_max: 0.05,
            grasp_radius: 0.03,
            release_clearance: 0.012,
        }
    }
}

impl EnvConfig {
    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.scenario = scenario;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("block_half_size", self.block_half_size),
            ("block_range", self.block_range),
            ("target_range", self.target_range),
            ("obstacle_radius", self.obstacle_radius),
            ("obstacle_speed", self.obstacle_speed),
            ("max_ee_step", self.max_ee_step),
            ("max_finger_step", self.max_finger_step),
            ("finger_max", self.finger_max),
            ("grasp_radius", self.grasp_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.release_clearance >= 0.0) {
            return Err(Error::Config(
                "release_clearance must be non-negative".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        for k in 0..3 {
            if !(self.workspace_min[k] < self.workspace_max[k]) {
                return Err(Error::Config(
                    "workspace_min must be below workspace_max".into(),
                ));
            }
        }
        let inside = |p: Vec3| {
            (0..3).all(|k| p[k] >= self.workspace_min[k] && p[k] <= self.workspace_max[k])
        };
        if !inside(self.ee_home) {
            return Err(Error::Config("ee_home lies outside the workspace".into()));
        }
        let h = self.ee_home;
        let xy_ok = |r: f64| {
            h[0] - r >= self.table_x[0]
                && h[0] + r <= self.table_x[1]
                && h[1] - r >= self.table_y[0]
                && h[1] + r <= self.table_y[1]
        };
        if !xy_ok(self.block_range) || !xy_ok(self.target_range) {
            return Err(Error::Config(
                "block/target sampling range leaves the table".into(),
            ));
        }
        if self.target_height[0] < 0.0
            || self.target_height[0] > self.target_height[1]
            || self.target_height[1] > self.workspace_max[2]
        {
            return Err(Error::Config("target_height range is invalid".into()));
        }
        if self.obstacle_x[0] > self.obstacle_x[1] || !(self.obstacle_y[0] < self.obstacle_y[1]) {
            return Err(Error::Config("obstacle ranges are invalid".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goal {
    pub target_pos: Vec3,
}

/// Normalized command in `[-1, 1]^5`: end-effector (x, y, z) then right and left finger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action(pub [f64; ACTION_DIM]);

impl Action {
    pub fn zero() -> Self {
        Action([0.0; ACTION_DIM])
    }

    /// Clips each component into `[-1, 1]`; NaN becomes 0.
    pub fn clipped(raw: [f64; ACTION_DIM]) -> Self {
        Action(raw.map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) }))
    }

    pub fn from_slice(raw: &[f64]) -> Result<Self> {
        let arr: [f64; ACTION_DIM] = raw.try_into().map_err(|_| Error::DimensionMismatch {
            context: "action",
            expected: ACTION_DIM,
            actual: raw.len(),
        })?;
        Ok(Action::clipped(arr))
    }

    pub fn fingers_closing(&self) -> bool {
        self.0[3] < 0.0 && self.0[4] < 0.0
    }

    pub fn fingers_opening(&self) -> bool {
        self.0[3] > 0.0 && self.0[4] > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub ee_pos: Vec3,
    pub ee_vel: Vec3,
    pub block_pos: Vec3,
    /// Block position relative to the gripper.
    pub block_rel: Vec3,
    pub block_angvel: Vec3,
    /// XYZ Euler angles of the block.
    pub block_euler: Vec3,
    pub obstacle_pos: Vec3,
    pub obstacle_vel: Vec3,
    pub finger_right: f64,
    pub finger_left: f64,
    pub finger_vel_right: f64,
    pub finger_vel_left: f64,
    pub grasped: bool,
    /// Set once the block has fallen off the table; it can no longer be picked.
    pub block_dropped: bool,
    pub step_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Block-to-target distance after the step.
    pub target_distance: f64,
    /// End-effector clearance to the obstacle surface; infinite without obstacle.
    pub obstacle_distance: f64,
    pub collision: bool,
    pub is_success: bool,
}

/// Uniform draws consumed by [`reset`], exposed so a reset can be replayed exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetSamples {
    pub block_offset: [f64; 2],
    pub target_offset: [f64; 2],
    pub target_height: f64,
    pub obstacle_x: f64,
}

impl ResetSamples {
    pub fn draw<R: Rng + ?Sized>(config: &EnvConfig, rng: &mut R) -> Self {
        let b = config.block_range;
        let t = config.target_range;
        let block_offset = [rng.random_range(-b..=b), rng.random_range(-b..=b)];
        let target_offset = [rng.random_range(-t..=t), rng.random_range(-t..=t)];
        let target_height = rng.random_range(config.target_height[0]..=config.target_height[1]);
        // drawn in every scenario so S1 and S2 consume the stream identically
        let obstacle_x = rng.random_range(config.obstacle_x[0]..=config.obstacle_x[1]);
        Self {
            block_offset,
            target_offset,
            target_height,
            obstacle_x,
        }
    }
}

pub fn reset<R: Rng + ?Sized>(config: &EnvConfig, rng: &mut R) -> (WorldState, Goal) {
    reset_from_samples(config, &ResetSamples::draw(config, rng))
}

pub fn reset_from_samples(config: &EnvConfig, s: &ResetSamples) -> (WorldState, Goal) {
    let home = config.ee_home;
    let block_pos = [
        home[0] + s.block_offset[0],
        home[1] + s.block_offset[1],
        config.block_half_size,
    ];
    let target_pos = [
        home[0] + s.target_offset[0],
        home[1] + s.target_offset[1],
        s.target_height,
    ];
    let (obstacle_pos, obstacle_vel) = if config.scenario.has_obstacle() {
        (
            [s.obstacle_x, config.obstacle_y[0], config.obstacle_z],
            [0.0, config.obstacle_speed, 0.0],
        )
    } else {
        ([0.0; 3], [0.0; 3])
    };
    let state = WorldState {
        ee_pos: home,
        ee_vel: [0.0; 3],
        block_pos,
        block_rel: sub(block_pos, home),
        block_angvel: [0.0; 3],
        block_euler: [0.0; 3],
        obstacle_pos,
        obstacle_vel,
        finger_right: config.finger_max,
        finger_left: config.finger_max,
        finger_vel_right: 0.0,
        finger_vel_left: 0.0,
        grasped: false,
        block_dropped: false,
        step_index: 0,
    };
    (state, Goal { target_pos })
}

/// Puts the block between the closed fingers at the current end-effector
/// position. Used for training-only starts that skip the pick phase.
pub fn place_in_gripper(state: &mut WorldState, config: &EnvConfig) {
    state.block_pos = state.ee_pos;
    state.block_rel = [0.0; 3];
    state.grasped = true;
    state.finger_right = config.block_half_size;
    state.finger_left = config.block_half_size;
}

/// Distance from the end-effector to the obstacle surface, or infinity in S1.
pub fn obstacle_distance(state: &WorldState, config: &EnvConfig) -> f64 {
    if config.scenario.has_obstacle() {
        (norm(sub(state.ee_pos, state.obstacle_pos)) - config.obstacle_radius).max(0.0)
    } else {
        f64::INFINITY
    }
}

pub fn step(
    state: &WorldState,
    goal: &Goal,
    action: &Action,
    config: &EnvConfig,
    thresholds: &RewardParams,
) -> Result<(WorldState, StepInfo)> {
    if state.step_index >= config.horizon {
        return Err(Error::EpisodeComplete {
            step: state.step_index,
            horizon: config.horizon,
        });
    }
    if let Some(v) = action.0.iter().find(|v| !(v.abs() <= 1.0)) {
        return Err(Error::contract(format!(
            "action component {v} outside [-1, 1]"
        )));
    }
    let a = action.0;
    let mut next = state.clone();

    #[allow(clippy::needless_range_loop)]
    for k in 0..3 {
        next.ee_pos[k] = (state.ee_pos[k] + a[k] * config.max_ee_step)
            .clamp(config.workspace_min[k], config.workspace_max[k]);
        next.ee_vel[k] = next.ee_pos[k] - state.ee_pos[k];
    }
    next.finger_right =
        (state.finger_right + a[3] * config.max_finger_step).clamp(0.0, config.finger_max);
    next.finger_left =
        (state.finger_left + a[4] * config.max_finger_step).clamp(0.0, config.finger_max);

    let contact = config.block_half_size;
    if state.grasped {
        // the held block stops the fingers at its faces
        next.finger_right = next.finger_right.max(contact);
        next.finger_left = next.finger_left.max(contact);
        let free = contact + config.release_clearance;
        if next.finger_right >= free && next.finger_left >= free {
            next.grasped = false;
        }
    } else if !state.block_dropped
        && action.fingers_closing()
        && norm(sub(state.block_pos, next.ee_pos)) <= config.grasp_radius
    {
        next.grasped = true;
        next.finger_right = contact;
        next.finger_left = contact;
    }
    next.finger_vel_right = next.finger_right - state.finger_right;
    next.finger_vel_left = next.finger_left - state.finger_left;

    if next.grasped {
        // held blocks sit centered between the fingers
        next.block_pos = next.ee_pos;
    } else if !next.block_dropped && next.block_pos[2] != config.block_half_size {
        let on_table = (config.table_x[0]..=config.table_x[1]).contains(&next.block_pos[0])
            && (config.table_y[0]..=config.table_y[1]).contains(&next.block_pos[1]);
        if on_table {
            next.block_pos[2] = config.block_half_size;
        } else {
            next.block_pos[2] = BELOW_TABLE_Z;
            next.block_dropped = true;
        }
    }
    next.block_rel = sub(next.block_pos, next.ee_pos);

    if config.scenario.has_obstacle() {
        let (lo, hi) = (config.obstacle_y[0], config.obstacle_y[1]);
        let mut y = state.obstacle_pos[1] + state.obstacle_vel[1];
        let mut vy = state.obstacle_vel[1];
        if y > hi {
            y = 2.0 * hi - y;
            vy = -vy;
        } else if y < lo {
            y = 2.0 * lo - y;
            vy = -vy;
        }
        next.obstacle_pos[1] = y;
        next.obstacle_vel = [0.0, vy, 0.0];
    }

    next.step_index = state.step_index + 1;

    let target_distance = distance_to_target(&next.block_pos, &goal.target_pos);
    let obstacle_distance = obstacle_distance(&next, config);
    let info = StepInfo {
        target_distance,
        obstacle_distance,
        collision: obstacle_distance < thresholds.delta_o,
        is_success: target_distance <= thresholds.delta_d,
    };
    Ok((next, info))
}

/// Observation vector plus achieved and desired goals.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub obs: [f64; OBS_DIM],
    pub achieved_goal: Vec3,
    pub desired_goal: Vec3,
}

pub fn observe(state: &WorldState, goal: &Goal) -> Observation {
    let mut obs = [0.0; OBS_DIM];
    let vectors = [
        state.ee_pos,
        state.block_pos,
        state.block_rel,
        state.obstacle_pos,
        state.obstacle_vel,
        state.block_angvel,
        state.ee_vel,
    ];
    for (i, v) in vectors.iter().enumerate() {
        obs[3 * i..3 * i + 3].copy_from_slice(v);
    }
    obs[21] = state.finger_right;
    obs[22] = state.finger_left;
    obs[23] = state.finger_vel_right;
    obs[24] = state.finger_vel_left;
    obs[25..28].copy_from_slice(&state.block_euler);
    Observation {
        obs,
        achieved_goal: state.block_pos,
        desired_goal: goal.target_pos,
    }
}

/// Proportional pick-and-place controller: align over the block, descend,
/// close the gripper, then carry the block to the target.
pub fn scripted_policy(state: &WorldState, goal: &Goal, config: &EnvConfig) -> Action {
    let gain = 1.0 / config.max_ee_step;
    let mut a = [0.0; ACTION_DIM];
    if state.grasped {
        let d = sub(goal.target_pos, state.block_pos);
        for k in 0..3 {
            a[k] = d[k] * gain;
        }
        a[3] = -1.0;
        a[4] = -1.0;
        return Action::clipped(a);
    }
    let rel = sub(state.block_pos, state.ee_pos);
    let horizontal = rel[0].hypot(rel[1]);
    if norm(rel) <= 0.9 * config.grasp_radius {
        a[3] = -1.0;
        a[4] = -1.0;
    } else if horizontal > 0.01 {
        a[0] = rel[0] * gain;
        a[1] = rel[1] * gain;
        a[3] = 1.0;
        a[4] = 1.0;
    } else {
        a[0] = rel[0] * gain;
        a[1] = rel[1] * gain;
        a[2] = rel[2] * gain;
        a[3] = 1.0;
        a[4] = 1.0;
    }
    Action::clipped(a)
}

/// One of the three disjoint outcome classes an episode ends in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EpisodeOutcome {
    Success,
    FailToReach,
    Collision,
}

impl EpisodeOutcome {
    /// Any collision during the episode dominates; otherwise the final step decides.
    pub fn classify(collided: bool, final_success: bool) -> Self {
        if collided {
            EpisodeOutcome::Collision
        } else if final_success {
            EpisodeOutcome::Success
        } else {
            EpisodeOutcome::FailToReach
        }
    }
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn thresholds() -> RewardParams {
        RewardParams::default()
    }

    fn fresh(config: &EnvConfig, seed: u64) -> (WorldState, Goal) {
        reset(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn default_config_is_valid() {
        EnvConfig::default().validate().unwrap();
        EnvConfig::default()
            .with_scenario(Scenario::S2)
            .validate()
            .unwrap();
    }

    #[test]
    fn block_offset_is_relative_to_home() {
        let config = EnvConfig::default();
        let samples = ResetSamples {
            block_offset: [0.15, 0.15],
            target_offset: [0.0, 0.0],
            target_height: 0.0,
            obstacle_x: 0.0,
        };
        let (state, goal) = reset_from_samples(&config, &samples);
        assert_eq!(state.block_pos[0], config.ee_home[0] + 0.15);
        assert_eq!(state.block_pos[1], config.ee_home[1] + 0.15);
        assert_eq!(state.block_pos[2], config.block_half_size);
        // height sample 0 puts the target on the table plane
        assert_eq!(goal.target_pos[2], 0.0);
    }

    #[test]
    fn reset_is_deterministic_and_in_range() {
        let config = EnvConfig::default().with_scenario(Scenario::S2);
        assert_eq!(fresh(&config, 9), fresh(&config, 9));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (s, g) = reset(&config, &mut rng);
            assert!((s.block_pos[0] - config.ee_home[0]).abs() <= 0.15);
            assert!((g.target_pos[1] - config.ee_home[1]).abs() <= 0.15);
            assert!((0.0..=0.45).contains(&g.target_pos[2]));
            assert_eq!(s.obstacle_pos[1], config.obstacle_y[0]);
            assert!(s.obstacle_vel[1] > 0.0);
            assert!(!s.grasped && s.step_index == 0);
        }
    }

    #[test]
    fn zero_action_keeps_pose() {
        let config = EnvConfig::default();
        let (s, g) = fresh(&config, 2);
        let (n, info) = step(&s, &g, &Action::zero(), &config, &thresholds()).unwrap();
        assert_eq!(n.ee_pos, s.ee_pos);
        assert_eq!(
            (n.finger_left, n.finger_right),
            (s.finger_left, s.finger_right)
        );
        assert_eq!(n.step_index, 1);
        assert_eq!(
            info.target_distance,
            distance_to_target(&s.block_pos, &g.target_pos)
        );
        assert!(info.obstacle_distance.is_infinite() && !info.collision);
    }

    #[test]
    fn unit_x_action_moves_five_centimeters() {
        let config = EnvConfig::default();
        let (s, g) = fresh(&config, 3);
        let (n, _) = step(
            &s,
            &g,
            &Action([1.0, 0.0, 0.0, 0.0, 0.0]),
            &config,
            &thresholds(),
        )
        .unwrap();
        assert_eq!(n.ee_pos[0], s.ee_pos[0] + 0.05);
        assert!((n.ee_vel[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_action_is_rejected() {
        let config = EnvConfig::default();
        let (s, g) = fresh(&config, 3);
        let bad = Action([1.5, 0.0, 0.0, 0.0, 0.0]);
        assert!(step(&s, &g, &bad, &config, &thresholds()).is_err());
    }

    #[test]
    fn horizon_rejects_extra_step() {
        let config = EnvConfig::default();
        let (mut s, g) = fresh(&config, 4);
        for _ in 0..100 {
            s = step(&s, &g, &Action::zero(), &config, &thresholds())
                .unwrap()
                .0;
        }
        assert_eq!(s.step_index, 100);
        assert!(matches!(
            step(&s, &g, &Action::zero(), &config, &thresholds()),
            Err(Error::EpisodeComplete {
                step: 100,
                horizon: 100
            })
        ));
    }

    #[test]
    fn scripted_grasp_lifts_block() {
        let config = EnvConfig::default();
        let (mut s, g) = fresh(&config, 5);
        let goal_above = Goal {
            target_pos: [s.block_pos[0], s.block_pos[1], 0.4],
        };
        let mut lifted = false;
        for _ in 0..40 {
            let a = scripted_policy(&s, &goal_above, &config);
            let (n, _) = step(&s, &goal_above, &a, &config, &thresholds()).unwrap();
            if n.grasped && n.block_pos[2] > 0.1 {
                lifted = true;
                assert_eq!(n.block_pos, n.ee_pos);
                assert!(norm(observe(&n, &g).obs[6..9].try_into().unwrap()) <= config.grasp_radius);
            }
            s = n;
        }
        assert!(lifted, "scripted controller never lifted the block");
    }

    #[test]
    fn scripted_policy_closes_over_block() {
        let config = EnvConfig::default();
        let (mut s, g) = fresh(&config, 6);
        s.ee_pos = [s.block_pos[0], s.block_pos[1], s.block_pos[2] + 0.01];
        let a = scripted_policy(&s, &g, &config);
        assert!(a.0[3] < 0.0 && a.0[4] < 0.0);
    }

    #[test]
    fn goal_at_block_start_succeeds_quickly() {
        let config = EnvConfig::default();
        let (mut s, _) = fresh(&config, 7);
        let g = Goal {
            target_pos: s.block_pos,
        };
        let mut success_at = None;
        for t in 0..10 {
            let a = scripted_policy(&s, &g, &config);
            let (n, info) = step(&s, &g, &a, &config, &thresholds()).unwrap();
            if info.is_success && success_at.is_none() {
                success_at = Some(t);
            }
            s = n;
        }
        assert!(success_at.is_some());
    }

    #[test]
    fn fresh_s1_observation_has_empty_obstacle_slots() {
        let config = EnvConfig::default();
        let (s, g) = fresh(&config, 8);
        let o = observe(&s, &g);
        assert_eq!(o.obs.len(), OBS_DIM);
        assert!(o.obs[9..15].iter().all(|&v| v == 0.0));
        assert_eq!(o.achieved_goal, s.block_pos);
        assert_eq!(o.desired_goal, g.target_pos);
    }

    #[test]
    fn release_off_table_drops_block() {
        let config = EnvConfig::default();
        let (mut s, g) = fresh(&config, 9);
        s.grasped = true;
        s.ee_pos = [0.28, 0.0, 0.3];
        s.block_pos = s.ee_pos;
        s.finger_right = config.block_half_size;
        s.finger_left = config.block_half_size;
        let open = Action([0.0, 0.0, 0.0, 1.0, 1.0]);
        let (n, _) = step(&s, &g, &open, &config, &thresholds()).unwrap();
        assert!(
            n.grasped,
            "one opening step stays inside the release clearance"
        );
        let (n, _) = step(&n, &g, &open, &config, &thresholds()).unwrap();
        let (n, info) = step(&n, &g, &open, &config, &thresholds()).unwrap();
        assert!(!n.grasped && n.block_dropped);
        assert!(n.block_pos[2] < 0.0);
        assert!(!info.is_success);
        // a dropped block cannot be picked up again
        let mut t = n.clone();
        t.ee_pos = t.block_pos;
        let close = Action([0.0, 0.0, 0.0, -1.0, -1.0]);
        assert!(
            !step(&t, &g, &close, &config, &thresholds())
                .unwrap()
                .0
                .grasped
        );
    }

    #[test]
    fn release_over_table_rests_block() {
        let config = EnvConfig::default();
        let (mut s, g) = fresh(&config, 10);
        s.grasped = true;
        s.ee_pos = [0.1, 0.1, 0.3];
        s.block_pos = s.ee_pos;
        s.finger_right = config.block_half_size;
        s.finger_left = config.block_half_size;
        let open = Action([0.0, 0.0, 0.0, 1.0, 1.0]);
        let mut n = s.clone();
        for _ in 0..3 {
            n = step(&n, &g, &open, &config, &thresholds()).unwrap().0;
        }
        assert_eq!(n.block_pos, [0.1, 0.1, config.block_half_size]);
        assert!(!n.block_dropped);
    }

    #[test]
    fn held_block_needs_both_fingers_open() {
        let config = EnvConfig::default();
        let (mut s, g) = fresh(&config, 11);
        place_in_gripper(&mut s, &config);
        let one = Action([0.0, 0.0, 0.0, 1.0, -1.0]);
        let close = Action([0.0, 0.0, 0.0, -1.0, -1.0]);
        for _ in 0..10 {
            s = step(&s, &g, &one, &config, &thresholds()).unwrap().0;
            assert!(s.grasped);
        }
        assert_eq!(s.finger_right, config.finger_max);
        assert_eq!(s.finger_left, config.block_half_size);
        let before = s.finger_right;
        s = step(&s, &g, &close, &config, &thresholds()).unwrap().0;
        assert!((before - s.finger_right - config.max_finger_step).abs() < 1e-12);
        assert_eq!(s.finger_left, config.block_half_size);
        assert!(s.grasped);
    }

    #[test]
    fn outcome_precedence() {
        assert_eq!(
            EpisodeOutcome::classify(true, true),
            EpisodeOutcome::Collision
        );
        assert_eq!(
            EpisodeOutcome::classify(true, false),
            EpisodeOutcome::Collision
        );
        assert_eq!(
            EpisodeOutcome::classify(false, true),
            EpisodeOutcome::Success
        );
        assert_eq!(
            EpisodeOutcome::classify(false, false),
            EpisodeOutcome::FailToReach
        );
    }

    fn action_seq() -> impl Strategy<Value = Vec<[f64; 5]>> {
        prop::collection::vec(prop::array::uniform5(-1.0f64..=1.0), 100)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn invariants_hold_along_random_rollouts(seed in 0u64..1000, actions in action_seq()) {
            let config = EnvConfig::default().with_scenario(Scenario::S2);
            let (mut s, g) = fresh(&config, seed);
            let speed = s.obstacle_vel[1].abs();
            for a in &actions {
                let (n, info) = step(&s, &g, &Action(*a), &config, &thresholds()).unwrap();
                for k in 0..3 {
                    prop_assert!(n.ee_pos[k] >= config.workspace_min[k] && n.ee_pos[k] <= config.workspace_max[k]);
                }
                prop_assert!((0.0..=config.finger_max).contains(&n.finger_left));
                prop_assert!((0.0..=config.finger_max).contains(&n.finger_right));
                prop_assert!(n.obstacle_pos[1] >= config.obstacle_y[0] && n.obstacle_pos[1] <= config.obstacle_y[1]);
                prop_assert!((n.obstacle_vel[1].abs() - speed).abs() < 1e-15);
                if n.grasped {
                    prop_assert_eq!(sub(n.block_pos, n.ee_pos), [0.0; 3]);
                }
                prop_assert_eq!(info.collision, info.obstacle_distance < thresholds().delta_o);
                prop_assert_eq!(observe(&n, &g).obs.len(), OBS_DIM);
                s = n;
            }
            prop_assert_eq!(s.step_index, 100);
        }

        #[test]
        fn identical_inputs_give_identical_trajectories(seed in 0u64..1000, actions in action_seq()) {
            let config = EnvConfig::default().with_scenario(Scenario::S2);
            let run = || {
                let (mut s, g) = fresh(&config, seed);
                let mut trail = Vec::new();
                for a in &actions {
                    s = step(&s, &g, &Action(*a), &config, &thresholds()).unwrap().0;
                    trail.push(observe(&s, &g).obs.map(f64::to_bits));
                }
                trail
            };
            prop_assert_eq!(run(), run());
        }
    }
}
