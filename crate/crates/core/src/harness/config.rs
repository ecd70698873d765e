use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentHyper, TargetUpdate};
use crate::armsim::EnvConfig;
use crate::error::{Error, Result};
use crate::rewards::{RewardMode, RewardParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayStrategy {
    Future,
    None,
}

/// Reduced schedule applied when `desk_scale` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskScale {
    pub epochs: usize,
    pub cycles_per_epoch: usize,
    pub hidden_layers: Vec<usize>,
    /// Learning rates for the compressed schedule.
    pub lr_actor: f64,
    pub lr_critic: f64,
}

impl Default for DeskScale {
    fn default() -> Self {
        Self {
            epochs: 50,
            cycles_per_epoch: 10,
            hidden_layers: vec![64, 64, 64],
            lr_actor: 1e-3,
            lr_critic: 1e-3,
        }
    }
}

/// Every knob of a training run. Serialized verbatim into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub cycles_per_epoch: usize,
    pub rollouts_per_cycle: usize,
    pub batches_per_cycle: usize,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub gamma: f64,
    /// Fraction of the old target network retained per soft update.
    pub polyak: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub action_l2: f64,
    pub random_eps: f64,
    /// OU noise sigma.
    pub noise_eps: f64,
    pub ou_theta: f64,
    /// Probability that a training rollout starts with the block already held.
    pub held_start_prob: f64,
    pub replay_strategy: ReplayStrategy,
    pub replay_k: usize,
    pub obs_clip: f64,
    pub norm_clip: f64,
    pub normalize: bool,
    /// Clip sparse-reward bootstrap targets to `[r_min / (1 - gamma), 0]`.
    pub clip_target: bool,
    pub target_update: TargetUpdate,
    pub test_rollouts: usize,
    pub eval_episodes: usize,
    pub hidden_layers: Vec<usize>,
    pub desk_scale: bool,
    pub desk: DeskScale,
    /// Write real elapsed seconds into the metrics log instead of 0.
    pub record_wall_clock: bool,
    pub env: EnvConfig,
    pub reward: RewardParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 500,
            cycles_per_epoch: 50,
            rollouts_per_cycle: 2,
            batches_per_cycle: 40,
            batch_size: 256,
            buffer_size: 1_000_000,
            gamma: 0.98,
            polyak: 0.96,
            lr_actor: 1e-4,
            lr_critic: 1e-4,
            action_l2: 1.0,
            random_eps: 0.3,
            noise_eps: 0.2,
            ou_theta: 0.15,
            held_start_prob: 0.5,
            replay_strategy: ReplayStrategy::Future,
            replay_k: 4,
            obs_clip: 200.0,
            norm_clip: 5.0,
            normalize: true,
            clip_target: true,
            target_update: TargetUpdate::PerBatch,
            test_rollouts: 10,
            eval_episodes: 1000,
            hidden_layers: vec![256, 256, 256],
            desk_scale: false,
            desk: DeskScale::default(),
            record_wall_clock: false,
            env: EnvConfig::default(),
            reward: RewardParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("RunConfig always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("rollouts_per_cycle", self.rollouts_per_cycle),
            ("batches_per_cycle", self.batches_per_cycle),
            ("batch_size", self.batch_size),
            ("buffer_size", self.buffer_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self
            .hidden_layers
            .iter()
            .chain(&self.desk.hidden_layers)
            .any(|&w| w == 0)
        {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !(self.obs_clip > 0.0 && self.norm_clip > 0.0) {
            return Err(Error::Config("clip ranges must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.held_start_prob) {
            return Err(Error::Config("held_start_prob must lie in [0, 1]".into()));
        }
        if !(self.noise_eps >= 0.0 && self.ou_theta >= 0.0) {
            return Err(Error::Config(
                "noise parameters must be non-negative".into(),
            ));
        }
        self.env.validate()?;
        self.reward.validate()?;
        self.agent_hyper().validate()?;
        if self.buffer_size < self.env.horizon {
            return Err(Error::Config(
                "buffer_size must hold at least one episode".into(),
            ));
        }
        Ok(())
    }

    pub fn epochs_effective(&self) -> usize {
        if self.desk_scale {
            self.desk.epochs
        } else {
            self.epochs
        }
    }

    pub fn cycles_effective(&self) -> usize {
        if self.desk_scale {
            self.desk.cycles_per_epoch
        } else {
            self.cycles_per_epoch
        }
    }

    pub fn hidden_effective(&self) -> &[usize] {
        if self.desk_scale {
            &self.desk.hidden_layers
        } else {
            &self.hidden_layers
        }
    }

    /// `k / (k + 1)` for the future strategy, 0 otherwise.
    pub fn relabel_prob(&self) -> f64 {
        match self.replay_strategy {
            ReplayStrategy::Future => self.replay_k as f64 / (self.replay_k as f64 + 1.0),
            ReplayStrategy::None => 0.0,
        }
    }

    pub fn lrs_effective(&self) -> (f64, f64) {
        if self.desk_scale {
            (self.desk.lr_actor, self.desk.lr_critic)
        } else {
            (self.lr_actor, self.lr_critic)
        }
    }

    pub fn agent_hyper(&self) -> AgentHyper {
        let (lr_actor, lr_critic) = self.lrs_effective();
        // worst per-step sparse reward is -1, or -2 when an obstacle can be hit
        let worst = if self.env.scenario.has_obstacle() {
            2.0
        } else {
            1.0
        };
        let target_clip = (self.clip_target && self.reward.mode == RewardMode::Sparse)
            .then(|| [-worst / (1.0 - self.gamma), 0.0]);
        AgentHyper {
            gamma: self.gamma,
            polyak_retained: self.polyak,
            action_l2: self.action_l2,
            lr_actor,
            lr_critic,
            random_eps: self.random_eps,
            target_clip,
        }
    }
}
