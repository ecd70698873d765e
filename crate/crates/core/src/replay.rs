//! Episode replay buffer with "future" hindsight relabeling, and running
//! mean/std input normalization.

use std::collections::VecDeque;

use rand::Rng;

use crate::armsim::{Vec3, ACTION_DIM, GOAL_DIM, OBS_DIM};
use crate::diffnet::Matrix;
use crate::error::{Error, Result};

/// Width of the network input: observation followed by desired goal.
pub const INPUT_DIM: usize = OBS_DIM + GOAL_DIM;

/// One full episode. State-indexed arrays hold `T + 1` entries, transition-indexed
/// arrays hold `T`. `obstacle_distances[t]` is measured after action `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub obs: Vec<[f64; OBS_DIM]>,
    pub achieved_goals: Vec<Vec3>,
    pub desired_goals: Vec<Vec3>,
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub obstacle_distances: Vec<f64>,
}

impl EpisodeTrace {
    pub fn with_capacity(horizon: usize) -> Self {
        Self {
            obs: Vec::with_capacity(horizon + 1),
            achieved_goals: Vec::with_capacity(horizon + 1),
            desired_goals: Vec::with_capacity(horizon),
            actions: Vec::with_capacity(horizon),
            obstacle_distances: Vec::with_capacity(horizon),
        }
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        let t = self.actions.len();
        if t != horizon {
            return Err(Error::contract(format!(
                "episode has {t} transitions, horizon is {horizon}"
            )));
        }
        if self.obs.len() != t + 1
            || self.achieved_goals.len() != t + 1
            || self.desired_goals.len() != t
            || self.obstacle_distances.len() != t
        {
            return Err(Error::contract("episode arrays have inconsistent lengths"));
        }
        if self
            .obstacle_distances
            .iter()
            .any(|d| d.is_nan() || *d < 0.0)
        {
            return Err(Error::contract(
                "episode holds a negative obstacle distance",
            ));
        }
        Ok(())
    }
}

/// Running per-dimension statistics with raw and standardized clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub count: f64,
    pub sum: Vec<f64>,
    pub sumsq: Vec<f64>,
    pub clip_raw: f64,
    pub clip_normalized: f64,
    /// When false only the raw clip is applied.
    pub enabled: bool,
}

/// Lower bound on the variance estimate.
pub const VARIANCE_FLOOR: f64 = 1e-4;

impl Normalizer {
    pub fn new(dim: usize, clip_raw: f64, clip_normalized: f64, enabled: bool) -> Self {
        Self {
            count: 0.0,
            sum: vec![0.0; dim],
            sumsq: vec![0.0; dim],
            clip_raw,
            clip_normalized,
            enabled,
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn update(&mut self, v: &[f64]) {
        debug_assert_eq!(v.len(), self.dim());
        for (k, x) in v.iter().enumerate() {
            let x = x.clamp(-self.clip_raw, self.clip_raw);
            self.sum[k] += x;
            self.sumsq[k] += x * x;
        }
        self.count += 1.0;
    }

    pub fn mean(&self) -> Vec<f64> {
        if self.count == 0.0 {
            return vec![0.0; self.dim()];
        }
        self.sum.iter().map(|s| s / self.count).collect()
    }

    pub fn std(&self) -> Vec<f64> {
        let floor = VARIANCE_FLOOR.sqrt();
        if self.count == 0.0 {
            return vec![floor; self.dim()];
        }
        self.sum
            .iter()
            .zip(&self.sumsq)
            .map(|(s, q)| {
                let m = s / self.count;
                (q / self.count - m * m).max(VARIANCE_FLOOR).sqrt()
            })
            .collect()
    }

    pub fn normalize_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim());
        if !self.enabled {
            for (o, x) in out.iter_mut().zip(v) {
                *o = x.clamp(-self.clip_raw, self.clip_raw);
            }
            return;
        }
        let floor = VARIANCE_FLOOR.sqrt();
        for (k, (o, x)) in out.iter_mut().zip(v).enumerate() {
            let x = x.clamp(-self.clip_raw, self.clip_raw);
            let (mean, std) = if self.count == 0.0 {
                (0.0, floor)
            } else {
                let m = self.sum[k] / self.count;
                (
                    m,
                    (self.sumsq[k] / self.count - m * m)
                        .max(VARIANCE_FLOOR)
                        .sqrt(),
                )
            };
            *o = ((x - mean) / std).clamp(-self.clip_normalized, self.clip_normalized);
        }
    }

    pub fn normalize(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.normalize_into(v, &mut out);
        out
    }
}

/// Observation and goal normalizers that together build network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputNormalizer {
    pub obs: Normalizer,
    pub goal: Normalizer,
}

impl InputNormalizer {
    pub fn new(clip_raw: f64, clip_normalized: f64, enabled: bool) -> Self {
        Self {
            obs: Normalizer::new(OBS_DIM, clip_raw, clip_normalized, enabled),
            goal: Normalizer::new(GOAL_DIM, clip_raw, clip_normalized, enabled),
        }
    }

    /// Normalized `[obs | goal]` written into `out` (length [`INPUT_DIM`]).
    pub fn input_into(&self, obs: &[f64; OBS_DIM], goal: &Vec3, out: &mut [f64]) {
        self.obs.normalize_into(obs, &mut out[..OBS_DIM]);
        self.goal.normalize_into(goal, &mut out[OBS_DIM..INPUT_DIM]);
    }

    pub fn input(&self, obs: &[f64; OBS_DIM], goal: &Vec3) -> [f64; INPUT_DIM] {
        let mut out = [0.0; INPUT_DIM];
        self.input_into(obs, goal, &mut out);
        out
    }

    /// Folds an episode's observations and goals into the running statistics.
    pub fn update_from_episode(&mut self, trace: &EpisodeTrace) {
        for o in &trace.obs {
            self.obs.update(o);
        }
        for g in trace.desired_goals.iter().chain(&trace.achieved_goals) {
            self.goal.update(g);
        }
    }
}

/// Minibatch of normalized network inputs plus the raw fields each reward was computed from.
#[derive(Debug, Clone)]
pub struct SampledBatch {
    pub inputs: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_inputs: Matrix,
    /// Goal used for the transition, relabeled or original.
    pub goals: Vec<Vec3>,
    pub next_achieved: Vec<Vec3>,
    pub obstacle_distances: Vec<f64>,
    /// `(episode slot, timestep, relabel source timestep)`.
    pub sources: Vec<(usize, usize, Option<usize>)>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn relabeled_count(&self) -> usize {
        self.sources.iter().filter(|s| s.2.is_some()).count()
    }
}

/// FIFO store of whole episodes bounded by a transition capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    horizon: usize,
    episodes: VecDeque<EpisodeTrace>,
    stored_total: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, horizon: usize) -> Result<Self> {
        if horizon == 0 || capacity < horizon {
            return Err(Error::Config(format!(
                "replay capacity {capacity} cannot hold one episode of {horizon} steps"
            )));
        }
        Ok(Self {
            capacity,
            horizon,
            episodes: VecDeque::new(),
            stored_total: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Stored transitions.
    pub fn size(&self) -> usize {
        self.episodes.len() * self.horizon
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    /// Episodes ever stored, including evicted ones.
    pub fn stored_total(&self) -> u64 {
        self.stored_total
    }

    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeTrace> {
        self.episodes.iter()
    }

    pub fn episode(&self, slot: usize) -> Option<&EpisodeTrace> {
        self.episodes.get(slot)
    }

    pub fn store_episode(&mut self, trace: EpisodeTrace) -> Result<()> {
        trace.validate(self.horizon)?;
        self.episodes.push_back(trace);
        self.stored_total += 1;
        while self.size() > self.capacity {
            self.episodes.pop_front();
        }
        Ok(())
    }

    /// Rebuilds a buffer from previously saved contents.
    pub fn restore(
        capacity: usize,
        horizon: usize,
        episodes: Vec<EpisodeTrace>,
        stored_total: u64,
    ) -> Result<Self> {
        let mut buf = Self::new(capacity, horizon)?;
        for e in episodes {
            buf.store_episode(e)?;
        }
        buf.stored_total = stored_total;
        Ok(buf)
    }

    /// Uniform `(episode, timestep)` sampling with "future" goal relabeling.
    ///
    /// With probability `relabel_prob` the desired goal is replaced by the achieved
    /// goal of a uniformly drawn later state of the same episode. Rewards are always
    /// recomputed from `(next achieved goal, goal, stored obstacle distance)`.
    pub fn sample_batch<R, F>(
        &self,
        batch_size: usize,
        relabel_prob: f64,
        rng: &mut R,
        reward_fn: F,
        normalizer: &InputNormalizer,
    ) -> Result<SampledBatch>
    where
        R: Rng + ?Sized,
        F: Fn(&Vec3, &Vec3, f64) -> Result<f64>,
    {
        if self.episodes.is_empty() {
            return Err(Error::NotReady);
        }
        if !(0.0..=1.0).contains(&relabel_prob) {
            return Err(Error::contract(format!(
                "relabel probability {relabel_prob} outside [0, 1]"
            )));
        }
        let horizon = self.horizon;
        let mut inputs = Matrix::zeros(batch_size, INPUT_DIM);
        let mut next_inputs = Matrix::zeros(batch_size, INPUT_DIM);
        let mut actions = Matrix::zeros(batch_size, ACTION_DIM);
        let mut rewards = Vec::with_capacity(batch_size);
        let mut goals = Vec::with_capacity(batch_size);
        let mut next_achieved = Vec::with_capacity(batch_size);
        let mut obstacle_distances = Vec::with_capacity(batch_size);
        let mut sources = Vec::with_capacity(batch_size);

        for i in 0..batch_size {
            let slot = rng.random_range(0..self.episodes.len());
            let t = rng.random_range(0..horizon);
            let ep = &self.episodes[slot];
            let relabel = rng.random::<f64>() < relabel_prob;
            let (goal, future) = if relabel {
                let future = rng.random_range(t + 1..=horizon);
                (ep.achieved_goals[future], Some(future))
            } else {
                (ep.desired_goals[t], None)
            };
            let ag_next = ep.achieved_goals[t + 1];
            let r_o = ep.obstacle_distances[t];
            rewards.push(reward_fn(&ag_next, &goal, r_o)?);
            normalizer.input_into(&ep.obs[t], &goal, inputs.row_mut(i));
            normalizer.input_into(&ep.obs[t + 1], &goal, next_inputs.row_mut(i));
            actions.row_mut(i).copy_from_slice(&ep.actions[t]);
            goals.push(goal);
            next_achieved.push(ag_next);
            obstacle_distances.push(r_o);
            sources.push((slot, t, future));
        }
        Ok(SampledBatch {
            inputs,
            actions,
            rewards,
            next_inputs,
            goals,
            next_achieved,
            obstacle_distances,
            sources,
        })
    }
}
