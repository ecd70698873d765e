//! Sparse and dense rewards over (achieved goal, desired goal, obstacle distance).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Sparse,
    Dense,
}

/// How the dense reward treats the obstacle distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenseObstacleStyle {
    /// `-(c1 R_d + c2 R_o)`: grows more negative the farther the obstacle is.
    PaperLiteral,
    /// `-(c1 R_d + c2 max(0, delta_o - R_o))`: only penalizes intrusion.
    ClearancePenalty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    /// Success threshold on the target distance, meters.
    pub delta_d: f64,
    /// Obstacle clearance, meters.
    pub delta_o: f64,
    pub c1: f64,
    pub c2: f64,
    pub mode: RewardMode,
    pub dense_obstacle_style: DenseObstacleStyle,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            delta_d: 0.05,
            delta_o: 0.10,
            c1: 1.0,
            c2: 0.5,
            mode: RewardMode::Sparse,
            dense_obstacle_style: DenseObstacleStyle::ClearancePenalty,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_d > 0.0) || !(self.delta_o > 0.0) {
            return Err(Error::Config("delta_d and delta_o must be positive".into()));
        }
        if !(self.c1 >= 0.0) || !(self.c2 >= 0.0) {
            return Err(Error::Config("c1 and c2 must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn distance_to_target(achieved_goal: &[f64; 3], desired_goal: &[f64; 3]) -> f64 {
    achieved_goal
        .iter()
        .zip(desired_goal)
        .map(|(a, d)| (a - d) * (a - d))
        .sum::<f64>()
        .sqrt()
}

pub fn is_success(
    achieved_goal: &[f64; 3],
    desired_goal: &[f64; 3],
    params: &RewardParams,
) -> bool {
    distance_to_target(achieved_goal, desired_goal) <= params.delta_d
}

/// Per-step reward. Pass `f64::INFINITY` as `obstacle_distance` when there is
/// no obstacle; every obstacle term then vanishes.
pub fn reward(
    achieved_goal: &[f64; 3],
    desired_goal: &[f64; 3],
    obstacle_distance: f64,
    params: &RewardParams,
) -> Result<f64> {
    if obstacle_distance.is_nan() || obstacle_distance < 0.0 {
        return Err(Error::contract(format!(
            "obstacle distance must be non-negative, got {obstacle_distance}"
        )));
    }
    let target_distance = distance_to_target(achieved_goal, desired_goal);
    let r = match params.mode {
        RewardMode::Sparse => {
            let missed = (target_distance > params.delta_d) as u8 as f64;
            let intruding = (obstacle_distance < params.delta_o) as u8 as f64;
            0.0 - missed - intruding
        }
        RewardMode::Dense => {
            let obstacle_term = if obstacle_distance.is_infinite() {
                0.0
            } else {
                match params.dense_obstacle_style {
                    DenseObstacleStyle::PaperLiteral => obstacle_distance,
                    DenseObstacleStyle::ClearancePenalty => {
                        (params.delta_o - obstacle_distance).max(0.0)
                    }
                }
            };
            -(params.c1 * target_distance + params.c2 * obstacle_term)
        }
    };
    Ok(r)
}
