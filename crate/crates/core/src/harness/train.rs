//! Rollouts and the epoch / cycle / batch training schedule.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{select_action, DdpgAgent, OuNoise, TargetUpdate};
use crate::armsim::{self, Action, EnvConfig, EpisodeOutcome};
use crate::error::Result;
use crate::harness::checkpoint::{self, Checkpoint};
use crate::harness::config::RunConfig;
use crate::harness::evaluate::OutcomeCounts;
use crate::harness::metrics::{self, MetricsRow};
use crate::replay::{EpisodeTrace, InputNormalizer, ReplayBuffer};
use crate::rewards::{reward, RewardParams};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const REPLAY_FILE: &str = "replay.bin";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.toml";

/// RNG stream ids derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_TEST: u64 = 2;

pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub trace: EpisodeTrace,
    pub outcome: EpisodeOutcome,
    pub collided: bool,
    pub final_success: bool,
    pub episode_return: f64,
}

/// Runs one full episode. Exploration noise is applied when `noise` is given,
/// otherwise the deterministic policy acts.
pub fn rollout(
    agent: &DdpgAgent,
    normalizer: &InputNormalizer,
    env: &EnvConfig,
    rewards: &RewardParams,
    rng: &mut ChaCha8Rng,
    mut noise: Option<&mut OuNoise>,
    held_start: bool,
) -> Result<RolloutResult> {
    let (mut state, goal) = armsim::reset(env, rng);
    if held_start {
        armsim::place_in_gripper(&mut state, env);
    }
    if let Some(n) = noise.as_deref_mut() {
        n.reset();
    }
    let mut trace = EpisodeTrace::with_capacity(env.horizon);
    let mut collided = false;
    let mut final_success = false;
    let mut episode_return = 0.0;
    for _ in 0..env.horizon {
        let o = armsim::observe(&state, &goal);
        let input = normalizer.input(&o.obs, &o.desired_goal);
        let action = match noise.as_deref_mut() {
            Some(n) => select_action(agent, &input, n, rng, true)?,
            None => Action::from_slice(&agent.act(&input)?)?,
        };
        let (next, info) = armsim::step(&state, &goal, &action, env, rewards)?;
        trace.obs.push(o.obs);
        trace.achieved_goals.push(o.achieved_goal);
        trace.desired_goals.push(o.desired_goal);
        trace.actions.push(action.0);
        trace.obstacle_distances.push(info.obstacle_distance);
        episode_return += reward(
            &next.block_pos,
            &goal.target_pos,
            info.obstacle_distance,
            rewards,
        )?;
        collided |= info.collision;
        final_success = info.is_success;
        state = next;
    }
    let last = armsim::observe(&state, &goal);
    trace.obs.push(last.obs);
    trace.achieved_goals.push(last.achieved_goal);
    Ok(RolloutResult {
        trace,
        outcome: EpisodeOutcome::classify(collided, final_success),
        collided,
        final_success,
        episode_return,
    })
}

/// Everything a run needs to continue exactly where it stopped.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: RunConfig,
    pub agent: DdpgAgent,
    pub normalizer: InputNormalizer,
    pub buffer: ReplayBuffer,
    pub train_rng: ChaCha8Rng,
    pub test_rng: ChaCha8Rng,
    pub noise: OuNoise,
    /// Completed epochs.
    pub epoch: usize,
    pub batches_run: u64,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let mut init_rng = seeded_stream(config.seed, STREAM_INIT);
        let agent = DdpgAgent::new(
            config.agent_hyper(),
            config.hidden_effective(),
            &mut init_rng,
        )?;
        Ok(Self {
            normalizer: InputNormalizer::new(config.obs_clip, config.norm_clip, config.normalize),
            buffer: ReplayBuffer::new(config.buffer_size, config.env.horizon)?,
            train_rng: seeded_stream(config.seed, STREAM_TRAIN),
            test_rng: seeded_stream(config.seed, STREAM_TEST),
            noise: OuNoise::new(config.ou_theta, config.noise_eps),
            epoch: 0,
            batches_run: 0,
            agent,
            config,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint, buffer: Option<ReplayBuffer>) -> Result<Self> {
        let config = ckpt.config;
        let buffer = match buffer {
            Some(b) => b,
            None => ReplayBuffer::new(config.buffer_size, config.env.horizon)?,
        };
        Ok(Self {
            agent: ckpt.agent,
            normalizer: ckpt.normalizer,
            buffer,
            train_rng: ckpt.train_rng,
            test_rng: ckpt.test_rng,
            noise: ckpt.noise,
            epoch: ckpt.epoch,
            batches_run: ckpt.batches_run,
            config,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            epoch: self.epoch,
            batches_run: self.batches_run,
            agent: self.agent.clone(),
            normalizer: self.normalizer.clone(),
            train_rng: self.train_rng.clone(),
            test_rng: self.test_rng.clone(),
            noise: self.noise.clone(),
        }
    }

    /// Collect exploration rollouts, then run the optimization batches.
    /// Returns (mean actor loss, mean critic loss, mean rollout return).
    pub fn run_cycle(&mut self) -> Result<(f64, f64, f64)> {
        let cfg = &self.config;
        let mut returns = 0.0;
        for _ in 0..cfg.rollouts_per_cycle {
            let held = self.train_rng.random::<f64>() < cfg.held_start_prob;
            let res = rollout(
                &self.agent,
                &self.normalizer,
                &cfg.env,
                &cfg.reward,
                &mut self.train_rng,
                Some(&mut self.noise),
                held,
            )?;
            returns += res.episode_return;
            self.normalizer.update_from_episode(&res.trace);
            self.buffer.store_episode(res.trace)?;
        }
        let reward_params = cfg.reward;
        let reward_fn =
            |a: &armsim::Vec3, g: &armsim::Vec3, r_o: f64| reward(a, g, r_o, &reward_params);
        let (mut actor_loss, mut critic_loss) = (0.0, 0.0);
        for _ in 0..cfg.batches_per_cycle {
            let batch = self.buffer.sample_batch(
                cfg.batch_size,
                cfg.relabel_prob(),
                &mut self.train_rng,
                reward_fn,
                &self.normalizer,
            )?;
            critic_loss += self.agent.critic_update(&batch)?;
            actor_loss += self.agent.actor_update(&batch)?;
            if cfg.target_update == TargetUpdate::PerBatch {
                self.agent.soft_update()?;
            }
            self.batches_run += 1;
        }
        if cfg.target_update == TargetUpdate::PerCycle {
            self.agent.soft_update()?;
        }
        let nb = cfg.batches_per_cycle as f64;
        Ok((
            actor_loss / nb,
            critic_loss / nb,
            returns / cfg.rollouts_per_cycle as f64,
        ))
    }

    /// Deterministic test rollouts on the test stream.
    pub fn test(&mut self, episodes: usize) -> Result<OutcomeCounts> {
        let mut counts = OutcomeCounts::default();
        for _ in 0..episodes {
            let res = rollout(
                &self.agent,
                &self.normalizer,
                &self.config.env,
                &self.config.reward,
                &mut self.test_rng,
                None,
                false,
            )?;
            counts.record(res.outcome, res.episode_return);
        }
        Ok(counts)
    }

    pub fn run_epoch(&mut self) -> Result<MetricsRow> {
        let started = Instant::now();
        let cycles = self.config.cycles_effective();
        let (mut actor, mut critic, mut ret) = (0.0, 0.0, 0.0);
        for _ in 0..cycles {
            let (a, c, r) = self.run_cycle()?;
            actor += a;
            critic += c;
            ret += r;
        }
        let test = self.test(self.config.test_rollouts)?;
        let n = cycles.max(1) as f64;
        let row = MetricsRow {
            epoch: self.epoch,
            cycle: cycles,
            actor_loss: actor / n,
            critic_loss: critic / n,
            train_return: ret / n,
            test_success_rate: test.success_rate(),
            test_collision_rate: test.collision_rate(),
            test_fail_rate: test.fail_rate(),
            wall_clock_s: if self.config.record_wall_clock {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        self.epoch += 1;
        Ok(row)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    pub rows: Vec<MetricsRow>,
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
}

/// Trains into `out_dir`, writing the metrics log and checkpointing after every
/// epoch. With `resume`, continues from the checkpoint already in `out_dir`
/// up to the epoch count of `config`; all other settings come from the checkpoint.
pub fn train(
    config: RunConfig,
    out_dir: &Path,
    resume: bool,
    mut on_epoch: impl FnMut(&MetricsRow),
) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let checkpoint_path = out_dir.join(CHECKPOINT_FILE);
    let replay_path = out_dir.join(REPLAY_FILE);
    let metrics_path = out_dir.join(METRICS_FILE);

    let mut trainer = if resume && checkpoint_path.exists() {
        let ckpt = checkpoint::load(&checkpoint_path)?;
        let buffer = if replay_path.exists() {
            Some(checkpoint::load_replay(&replay_path)?)
        } else {
            None
        };
        let mut trainer = Trainer::from_checkpoint(ckpt, buffer)?;
        // everything but the schedule length comes from the checkpoint
        trainer.config.epochs = config.epochs;
        trainer.config.desk.epochs = config.desk.epochs;
        truncate_log(&metrics_path, trainer.epoch)?;
        trainer
    } else {
        if metrics_path.exists() {
            std::fs::remove_file(&metrics_path)?;
        }
        Trainer::new(config)?
    };
    std::fs::write(out_dir.join(CONFIG_FILE), trainer.config.to_toml_string())?;
    if trainer.epoch == 0 {
        // header-only log plus an untrained checkpoint
        metrics::append_rows(&metrics_path, &[])?;
        checkpoint::save(&checkpoint_path, &trainer.checkpoint())?;
    }

    let mut rows = Vec::new();
    while trainer.epoch < trainer.config.epochs_effective() {
        let row = trainer.run_epoch()?;
        metrics::append_rows(&metrics_path, std::slice::from_ref(&row))?;
        checkpoint::save_replay(&replay_path, &trainer.buffer)?;
        checkpoint::save(&checkpoint_path, &trainer.checkpoint())?;
        on_epoch(&row);
        rows.push(row);
    }
    Ok(TrainOutcome {
        trainer,
        rows,
        checkpoint_path,
        metrics_path,
    })
}

/// Drops log rows at or beyond `epoch`, left behind by an interrupted run.
fn truncate_log(path: &Path, epoch: usize) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let rows = metrics::read_log(path)?;
    let keep: Vec<MetricsRow> = rows.into_iter().filter(|r| r.epoch < epoch).collect();
    std::fs::remove_file(path)?;
    metrics::append_rows(path, &keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::armsim::Scenario;

    fn tiny(seed: u64) -> RunConfig {
        RunConfig {
            seed,
            epochs: 2,
            cycles_per_epoch: 2,
            batches_per_cycle: 3,
            batch_size: 16,
            buffer_size: 10_000,
            test_rollouts: 2,
            hidden_layers: vec![8, 8],
            ..RunConfig::default()
        }
    }

    #[test]
    fn schedule_arithmetic() {
        let cfg = tiny(1);
        let mut t = Trainer::new(cfg.clone()).unwrap();
        for _ in 0..cfg.epochs {
            t.run_epoch().unwrap();
        }
        let cycles = (cfg.epochs * cfg.cycles_per_epoch) as u64;
        assert_eq!(t.buffer.stored_total(), cycles * 2);
        assert_eq!(t.batches_run, cycles * cfg.batches_per_cycle as u64);
    }

    #[test]
    fn rollout_trace_is_well_formed() {
        let cfg = RunConfig {
            env: EnvConfig::default().with_scenario(Scenario::S2),
            ..tiny(2)
        };
        let t = Trainer::new(cfg.clone()).unwrap();
        let mut rng = seeded_stream(2, 9);
        let mut noise = OuNoise::new(0.15, 0.2);
        for held_start in [false, true] {
            let r = rollout(
                &t.agent,
                &t.normalizer,
                &cfg.env,
                &cfg.reward,
                &mut rng,
                Some(&mut noise),
                held_start,
            )
            .unwrap();
            r.trace.validate(cfg.env.horizon).unwrap();
            assert!(r.episode_return <= 0.0 && r.episode_return >= -200.0);
            assert_eq!(
                r.outcome,
                EpisodeOutcome::classify(r.collided, r.final_success)
            );
        }
    }

    #[test]
    fn zero_epochs_write_header_and_untrained_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            epochs: 0,
            ..tiny(3)
        };
        let out = train(cfg, dir.path(), false, |_| {}).unwrap();
        assert!(out.rows.is_empty());
        assert_eq!(
            std::fs::read_to_string(&out.metrics_path).unwrap(),
            format!("{}\n", metrics::HEADER)
        );
        let ckpt = checkpoint::load(&out.checkpoint_path).unwrap();
        assert_eq!(ckpt.epoch, 0);
        assert_eq!(ckpt.agent, out.trainer.agent);
    }
}
