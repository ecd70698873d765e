//! Deterministic-policy evaluation with the three-way outcome split.

use std::fmt;

use rand_chacha::ChaCha8Rng;

use crate::armsim::{EpisodeOutcome, Scenario};
use crate::error::{Error, Result};
use crate::harness::checkpoint::Checkpoint;
use crate::harness::train::rollout;
use crate::rewards::RewardMode;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OutcomeCounts {
    pub success: usize,
    pub fail_to_reach: usize,
    pub collision: usize,
    pub return_sum: f64,
}

impl OutcomeCounts {
    pub fn record(&mut self, outcome: EpisodeOutcome, episode_return: f64) {
        match outcome {
            EpisodeOutcome::Success => self.success += 1,
            EpisodeOutcome::FailToReach => self.fail_to_reach += 1,
            EpisodeOutcome::Collision => self.collision += 1,
        }
        self.return_sum += episode_return;
    }

    pub fn total(&self) -> usize {
        self.success + self.fail_to_reach + self.collision
    }

    fn rate(&self, n: usize) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            n as f64 / self.total() as f64
        }
    }

    pub fn success_rate(&self) -> f64 {
        self.rate(self.success)
    }

    pub fn fail_rate(&self) -> f64 {
        self.rate(self.fail_to_reach)
    }

    pub fn collision_rate(&self) -> f64 {
        self.rate(self.collision)
    }

    pub fn mean_return(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.return_sum / self.total() as f64
        }
    }
}

/// Evaluation result shaped like a row of the outcome table.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    pub scenario: Scenario,
    pub reward_mode: RewardMode,
    pub counts: OutcomeCounts,
}

impl OutcomeTable {
    pub fn success_pct(&self) -> f64 {
        100.0 * self.counts.success_rate()
    }

    pub fn fail_pct(&self) -> f64 {
        100.0 * self.counts.fail_rate()
    }

    /// `None` when the scenario has no obstacle.
    pub fn collision_pct(&self) -> Option<f64> {
        self.scenario
            .has_obstacle()
            .then(|| 100.0 * self.counts.collision_rate())
    }

    pub fn case_label(&self) -> String {
        let case = match self.scenario {
            Scenario::S1 => 1,
            Scenario::S2 => 2,
        };
        let reward = match self.reward_mode {
            RewardMode::Sparse => "sparse",
            RewardMode::Dense => "dense",
        };
        format!("Case {case} ({reward} reward)")
    }
}

impl fmt::Display for OutcomeTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let collision = match self.collision_pct() {
            Some(p) => format!("{p:.3}"),
            None => "NA".to_string(),
        };
        writeln!(
            f,
            "{:<24} | {:>16} | {:>30} | {:>28}",
            "Cases",
            "Success Rate(%)",
            "Fail to reach the target (%)",
            "Collision with obstacle (%)"
        )?;
        writeln!(
            f,
            "{:<24} | {:>16.3} | {:>30.3} | {:>28}",
            self.case_label(),
            self.success_pct(),
            self.fail_pct(),
            collision
        )?;
        write!(
            f,
            "episodes: {}, mean return: {:.4}",
            self.counts.total(),
            self.counts.mean_return()
        )
    }
}

/// Runs `episodes` deterministic episodes of the checkpointed policy.
///
/// `scenario` and `reward_mode` override the ones the policy was trained with;
/// the reward mode only affects the reported mean return.
pub fn evaluate(
    checkpoint: &Checkpoint,
    scenario: Scenario,
    reward_mode: RewardMode,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<OutcomeTable> {
    if episodes == 0 {
        return Err(Error::contract("evaluation needs at least one episode"));
    }
    let env = checkpoint.config.env.clone().with_scenario(scenario);
    let mut rewards = checkpoint.config.reward;
    rewards.mode = reward_mode;
    let mut counts = OutcomeCounts::default();
    for _ in 0..episodes {
        let res = rollout(
            &checkpoint.agent,
            &checkpoint.normalizer,
            &env,
            &rewards,
            rng,
            None,
            false,
        )?;
        counts.record(res.outcome, res.episode_return);
    }
    Ok(OutcomeTable {
        scenario,
        reward_mode,
        counts,
    })
}
