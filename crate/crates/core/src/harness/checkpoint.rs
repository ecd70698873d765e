//! Versioned little-endian binary checkpoints.
//!
//! Checkpoint layout (all integers u64 LE unless noted, floats f64 LE):
//!
//! ```text
//! magic "ARMRLCKP" | version u32 | config TOML (len + UTF-8) | epoch | batches_run
//! network x4 (actor, critic, target actor, target critic):
//!     layer count, then per layer: input width, output width, activation u8,
//!     weights (len + values), biases (len + values)
//! adam x2 (actor, critic): step, beta1, beta2, eps, then per layer
//!     m_weights, v_weights, m_biases, v_biases (each len + values)
//! normalizer x2 (obs, goal): count, clip_raw, clip_normalized, enabled u8,
//!     sum (len + values), sumsq (len + values)
//! rng x2 (train, test): seed [u8; 32], stream, word position u128
//! ou noise: theta, sigma, mu, state (len + values)
//! ```
//!
//! The replay file holds the buffer contents needed for exact resumption:
//!
//! ```text
//! magic "ARMRLRPL" | version u32 | capacity | horizon | stored_total | episode count
//! per episode: obs, achieved_goals, desired_goals, actions, obstacle_distances (each len + values)
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{DdpgAgent, OuNoise};
use crate::armsim::{ACTION_DIM, GOAL_DIM, OBS_DIM};
use crate::diffnet::{Activation, AdamConfig, AdamState, LayerSpec, NetworkParams};
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::replay::{EpisodeTrace, InputNormalizer, Normalizer, ReplayBuffer};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ARMRLCKP";
pub const REPLAY_MAGIC: &[u8; 8] = b"ARMRLRPL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub epoch: usize,
    pub batches_run: u64,
    pub agent: DdpgAgent,
    pub normalizer: InputNormalizer,
    pub train_rng: ChaCha8Rng,
    pub test_rng: ChaCha8Rng,
    pub noise: OuNoise,
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        for x in v {
            self.f64(*x);
        }
    }

    fn bytes(&mut self, v: &[u8]) {
        self.usize(v.len());
        self.buf.extend_from_slice(v);
    }

    fn network(&mut self, p: &NetworkParams) {
        self.usize(p.layers().len());
        for (i, l) in p.layers().iter().enumerate() {
            self.usize(l.input_width);
            self.usize(l.output_width);
            self.u8(l.activation.code());
            self.f64s(p.weights(i));
            self.f64s(p.biases(i));
        }
    }

    fn adam(&mut self, s: &AdamState) {
        self.u64(s.step);
        self.f64(s.config.beta1);
        self.f64(s.config.beta2);
        self.f64(s.config.eps);
        self.usize(s.m_weights.len());
        for i in 0..s.m_weights.len() {
            self.f64s(&s.m_weights[i]);
            self.f64s(&s.v_weights[i]);
            self.f64s(&s.m_biases[i]);
            self.f64s(&s.v_biases[i]);
        }
    }

    fn normalizer(&mut self, n: &Normalizer) {
        self.f64(n.count);
        self.f64(n.clip_raw);
        self.f64(n.clip_normalized);
        self.u8(n.enabled as u8);
        self.f64s(&n.sum);
        self.f64s(&n.sumsq);
    }

    fn rng(&mut self, r: &ChaCha8Rng) {
        self.buf.extend_from_slice(&r.get_seed());
        self.u64(r.get_stream());
        self.buf.extend_from_slice(&r.get_word_pos().to_le_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

type Parse<T> = std::result::Result<T, String>;

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Parse<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| format!("truncated at byte {} (wanted {n} more)", self.pos))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Parse<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Parse<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Parse<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Parse<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn usize(&mut self) -> Parse<usize> {
        usize::try_from(self.u64()?).map_err(|e| e.to_string())
    }

    fn f64(&mut self) -> Parse<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn len(&mut self, elem_size: usize) -> Parse<usize> {
        let n = self.usize()?;
        if n.saturating_mul(elem_size) > self.data.len() - self.pos {
            return Err(format!(
                "truncated: length {n} at byte {} runs past the end of the file",
                self.pos - 8
            ));
        }
        Ok(n)
    }

    fn f64s(&mut self) -> Parse<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn f64s_exact(&mut self, expected: usize, what: &str) -> Parse<Vec<f64>> {
        let v = self.f64s()?;
        if v.len() != expected {
            return Err(format!(
                "{what}: expected {expected} values, found {}",
                v.len()
            ));
        }
        Ok(v)
    }

    fn bytes(&mut self) -> Parse<&'a [u8]> {
        let n = self.len(1)?;
        self.take(n)
    }

    fn network(&mut self) -> Parse<NetworkParams> {
        let count = self.len(17)?;
        let mut layers = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let mut biases = Vec::with_capacity(count);
        for _ in 0..count {
            let input = self.usize()?;
            let output = self.usize()?;
            let code = self.u8()?;
            let activation = Activation::from_code(code)
                .ok_or_else(|| format!("unknown activation code {code}"))?;
            layers.push(LayerSpec::new(input, output, activation));
            weights.push(self.f64s_exact(input.saturating_mul(output), "weights")?);
            biases.push(self.f64s_exact(output, "biases")?);
        }
        NetworkParams::from_parts(layers, weights, biases).map_err(|e| e.to_string())
    }

    fn adam(&mut self, params: &NetworkParams) -> Parse<AdamState> {
        let step = self.u64()?;
        let config = AdamConfig {
            beta1: self.f64()?,
            beta2: self.f64()?,
            eps: self.f64()?,
        };
        let n = self.usize()?;
        if n != params.layers().len() {
            return Err(format!(
                "optimizer has {n} layers, network {}",
                params.layers().len()
            ));
        }
        let mut s = AdamState::new(params, config);
        s.step = step;
        for i in 0..n {
            let (w, b) = (params.weights(i).len(), params.biases(i).len());
            s.m_weights[i] = self.f64s_exact(w, "adam m_weights")?;
            s.v_weights[i] = self.f64s_exact(w, "adam v_weights")?;
            s.m_biases[i] = self.f64s_exact(b, "adam m_biases")?;
            s.v_biases[i] = self.f64s_exact(b, "adam v_biases")?;
        }
        Ok(s)
    }

    fn normalizer(&mut self, dim: usize) -> Parse<Normalizer> {
        let count = self.f64()?;
        let clip_raw = self.f64()?;
        let clip_normalized = self.f64()?;
        let enabled = self.u8()? != 0;
        let mut n = Normalizer::new(dim, clip_raw, clip_normalized, enabled);
        n.count = count;
        n.sum = self.f64s_exact(dim, "normalizer sum")?;
        n.sumsq = self.f64s_exact(dim, "normalizer sumsq")?;
        Ok(n)
    }

    fn rng(&mut self) -> Parse<ChaCha8Rng> {
        let seed: [u8; 32] = self.array()?;
        let stream = self.u64()?;
        let word_pos = u128::from_le_bytes(self.array()?);
        let mut r = ChaCha8Rng::from_seed(seed);
        r.set_stream(stream);
        r.set_word_pos(word_pos);
        Ok(r)
    }

    fn header(&mut self, magic: &[u8; 8]) -> Parse<()> {
        let found = self
            .take(8)
            .map_err(|_| "file too short for a header".to_string())?;
        if found != magic {
            return Err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(found),
                String::from_utf8_lossy(magic)
            ));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(format!(
                "unsupported format version {version}, this build reads version {FORMAT_VERSION}"
            ));
        }
        Ok(())
    }

    fn finish(&self) -> Parse<()> {
        if self.pos != self.data.len() {
            return Err(format!("{} trailing bytes", self.data.len() - self.pos));
        }
        Ok(())
    }
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(FORMAT_VERSION);
    w.bytes(ckpt.config.to_toml_string().as_bytes());
    w.usize(ckpt.epoch);
    w.u64(ckpt.batches_run);
    let a = &ckpt.agent;
    for net in [&a.actor, &a.critic, &a.target_actor, &a.target_critic] {
        w.network(net);
    }
    w.adam(&a.actor_opt);
    w.adam(&a.critic_opt);
    w.normalizer(&ckpt.normalizer.obs);
    w.normalizer(&ckpt.normalizer.goal);
    w.rng(&ckpt.train_rng);
    w.rng(&ckpt.test_rng);
    w.f64(ckpt.noise.theta);
    w.f64(ckpt.noise.sigma);
    w.f64(ckpt.noise.mu);
    w.f64s(&ckpt.noise.state);
    w.buf
}

pub fn decode(data: &[u8]) -> std::result::Result<Checkpoint, String> {
    let mut r = Reader::new(data);
    r.header(CHECKPOINT_MAGIC)?;
    let text = std::str::from_utf8(r.bytes()?).map_err(|e| format!("config is not UTF-8: {e}"))?;
    let config = RunConfig::from_toml_str(text).map_err(|e| e.to_string())?;
    let epoch = r.usize()?;
    let batches_run = r.u64()?;
    let actor = r.network()?;
    let critic = r.network()?;
    let target_actor = r.network()?;
    let target_critic = r.network()?;
    let mut agent =
        DdpgAgent::from_networks(config.agent_hyper(), actor, critic).map_err(|e| e.to_string())?;
    if !target_actor.same_shape(&agent.actor) || !target_critic.same_shape(&agent.critic) {
        return Err("target network shapes differ from online networks".into());
    }
    agent.target_actor = target_actor;
    agent.target_critic = target_critic;
    agent.actor_opt = r.adam(&agent.actor)?;
    agent.critic_opt = r.adam(&agent.critic)?;
    let normalizer = InputNormalizer {
        obs: r.normalizer(OBS_DIM)?,
        goal: r.normalizer(GOAL_DIM)?,
    };
    let train_rng = r.rng()?;
    let test_rng = r.rng()?;
    let theta = r.f64()?;
    let sigma = r.f64()?;
    let mu = r.f64()?;
    let state: [f64; ACTION_DIM] = r
        .f64s_exact(ACTION_DIM, "noise state")?
        .try_into()
        .expect("length checked");
    r.finish()?;
    Ok(Checkpoint {
        config,
        epoch,
        batches_run,
        agent,
        normalizer,
        train_rng,
        test_rng,
        noise: OuNoise {
            state,
            theta,
            sigma,
            mu,
        },
    })
}

/// Writes through a temporary file so a crash never leaves a torn checkpoint.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode(ckpt))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let data = std::fs::read(path).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    decode(&data).map_err(|reason| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn encode_replay(buf: &ReplayBuffer) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(REPLAY_MAGIC);
    w.u32(FORMAT_VERSION);
    w.usize(buf.capacity());
    w.usize(buf.horizon());
    w.u64(buf.stored_total());
    w.usize(buf.episode_count());
    for e in buf.episodes() {
        w.f64s(e.obs.as_flattened());
        w.f64s(e.achieved_goals.as_flattened());
        w.f64s(e.desired_goals.as_flattened());
        w.f64s(e.actions.as_flattened());
        w.f64s(&e.obstacle_distances);
    }
    w.buf
}

fn chunks<const N: usize>(v: Vec<f64>) -> Vec<[f64; N]> {
    v.chunks_exact(N)
        .map(|c| c.try_into().expect("exact chunk"))
        .collect()
}

pub fn decode_replay(data: &[u8]) -> std::result::Result<ReplayBuffer, String> {
    let mut r = Reader::new(data);
    r.header(REPLAY_MAGIC)?;
    let capacity = r.usize()?;
    let horizon = r.usize()?;
    let stored_total = r.u64()?;
    let count = r.len(8)?;
    let mut episodes = Vec::with_capacity(count);
    for _ in 0..count {
        let states = horizon + 1;
        let trace = EpisodeTrace {
            obs: chunks::<OBS_DIM>(r.f64s_exact(states * OBS_DIM, "obs")?),
            achieved_goals: chunks::<GOAL_DIM>(r.f64s_exact(states * GOAL_DIM, "achieved goals")?),
            desired_goals: chunks::<GOAL_DIM>(r.f64s_exact(horizon * GOAL_DIM, "desired goals")?),
            actions: chunks::<ACTION_DIM>(r.f64s_exact(horizon * ACTION_DIM, "actions")?),
            obstacle_distances: r.f64s_exact(horizon, "obstacle distances")?,
        };
        episodes.push(trace);
    }
    r.finish()?;
    ReplayBuffer::restore(capacity, horizon, episodes, stored_total).map_err(|e| e.to_string())
}

pub fn save_replay(path: &Path, buf: &ReplayBuffer) -> Result<()> {
    write_atomic(path, &encode_replay(buf))
}

pub fn load_replay(path: &Path) -> Result<ReplayBuffer> {
    let data = std::fs::read(path)?;
    decode_replay(&data).map_err(|reason| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    })
}
