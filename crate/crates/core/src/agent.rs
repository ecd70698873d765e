//! DDPG actor-critic: exploration, critic and actor updates, soft target updates.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::armsim::{Action, ACTION_DIM};
use crate::diffnet::{
    adam_step, mlp_layers, Activation, AdamConfig, AdamState, GradientBundle, Matrix, NetworkParams,
};
use crate::error::{Error, Result};
use crate::replay::{SampledBatch, INPUT_DIM};

/// When target networks are blended toward the online ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetUpdate {
    PerBatch,
    PerCycle,
}

/// Scalar hyperparameters of the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentHyper {
    pub gamma: f64,
    /// Fraction of the old target kept on each soft update (tau = 1 - polyak).
    pub polyak_retained: f64,
    /// Weight of the mean squared action penalty in the actor loss.
    pub action_l2: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Probability of replacing the policy action with a uniform random one.
    pub random_eps: f64,
    /// Bootstrapped targets are clipped into this interval when set.
    pub target_clip: Option<[f64; 2]>,
}

impl Default for AgentHyper {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            polyak_retained: 0.96,
            action_l2: 1.0,
            lr_actor: 1e-4,
            lr_critic: 1e-4,
            random_eps: 0.3,
            target_clip: None,
        }
    }
}

impl AgentHyper {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma {} outside [0, 1)",
                self.gamma
            )));
        }
        if !(self.polyak_retained > 0.0 && self.polyak_retained < 1.0) {
            return Err(Error::Config(format!(
                "polyak {} outside (0, 1)",
                self.polyak_retained
            )));
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.random_eps) || !(self.action_l2 >= 0.0) {
            return Err(Error::Config("random_eps or action_l2 out of range".into()));
        }
        if let Some([lo, hi]) = self.target_clip {
            if !(lo <= hi) {
                return Err(Error::Config("target clip interval is empty".into()));
            }
        }
        Ok(())
    }
}

/// Something that scores `(input, action)` pairs and reports `dQ/da`.
pub trait ActionValue {
    /// Returns `Q` per row and the gradient of each row's `Q` with respect to its action.
    fn value_and_action_grad(
        &self,
        inputs: &Matrix,
        actions: &Matrix,
    ) -> Result<(Vec<f64>, Matrix)>;
}

impl ActionValue for NetworkParams {
    fn value_and_action_grad(
        &self,
        inputs: &Matrix,
        actions: &Matrix,
    ) -> Result<(Vec<f64>, Matrix)> {
        let joint = inputs.hstack(actions)?;
        let trace = self.forward_trace(&joint)?;
        let q = trace.output().as_slice().to_vec();
        let seed = Matrix::from_vec(q.len(), 1, vec![1.0; q.len()])?;
        let dx = self.input_gradient_batch(&trace, &seed)?;
        Ok((q, dx.columns(inputs.cols(), joint.cols())))
    }
}

/// Actor loss `-mean Q(s, mu(s)) + action_l2 * mean(mu(s)^2)` and its gradient
/// with respect to the actor parameters. The critic is only read.
pub fn actor_loss_and_grad<Q: ActionValue + ?Sized>(
    actor: &NetworkParams,
    critic: &Q,
    inputs: &Matrix,
    action_l2: f64,
) -> Result<(f64, GradientBundle)> {
    let n = inputs.rows();
    if n == 0 {
        return Err(Error::contract("empty batch"));
    }
    let trace = actor.forward_trace(inputs)?;
    let actions = trace.output();
    let dim = actions.cols();
    let (q, dq_da) = critic.value_and_action_grad(inputs, actions)?;
    let nf = n as f64;
    let penalty = actions.as_slice().iter().map(|a| a * a).sum::<f64>() / (nf * dim as f64);
    let loss = -q.iter().sum::<f64>() / nf + action_l2 * penalty;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("actor loss is {loss}")));
    }
    let mut upstream = Matrix::zeros(n, dim);
    let scale = 2.0 * action_l2 / (nf * dim as f64);
    for ((u, g), a) in upstream
        .as_mut_slice()
        .iter_mut()
        .zip(dq_da.as_slice())
        .zip(actions.as_slice())
    {
        *u = -g / nf + scale * a;
    }
    let grads = actor.backward_batch(&trace, &upstream, false)?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgAgent {
    pub actor: NetworkParams,
    pub critic: NetworkParams,
    pub target_actor: NetworkParams,
    pub target_critic: NetworkParams,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub hyper: AgentHyper,
}

impl DdpgAgent {
    /// Fresh agent with `hidden` ReLU layers in both networks; targets start as copies.
    pub fn new<R: Rng + ?Sized>(hyper: AgentHyper, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let actor = NetworkParams::init_uniform(
            mlp_layers(
                INPUT_DIM,
                hidden,
                ACTION_DIM,
                Activation::Relu,
                Activation::Tanh,
            ),
            rng,
        )?;
        let critic = NetworkParams::init_uniform(
            mlp_layers(
                INPUT_DIM + ACTION_DIM,
                hidden,
                1,
                Activation::Relu,
                Activation::Linear,
            ),
            rng,
        )?;
        Self::from_networks(hyper, actor, critic)
    }

    pub fn from_networks(
        hyper: AgentHyper,
        actor: NetworkParams,
        critic: NetworkParams,
    ) -> Result<Self> {
        hyper.validate()?;
        if critic.input_width() != actor.input_width() + actor.output_width()
            || critic.output_width() != 1
        {
            return Err(Error::contract(
                "critic must take [input | action] and return a scalar",
            ));
        }
        Ok(Self {
            actor_opt: AdamState::new(&actor, AdamConfig::default()),
            critic_opt: AdamState::new(&critic, AdamConfig::default()),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            hyper,
        })
    }

    pub fn input_width(&self) -> usize {
        self.actor.input_width()
    }

    /// Deterministic policy output.
    pub fn act(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward(input)
    }

    /// Bootstrapped targets `r + gamma * Q'(s', mu'(s'))`, clipped when configured.
    pub fn critic_targets(&self, batch: &SampledBatch) -> Result<Vec<f64>> {
        let next_actions = self.target_actor.forward_batch(&batch.next_inputs)?;
        let q_next = self
            .target_critic
            .forward_batch(&batch.next_inputs.hstack(&next_actions)?)?;
        Ok(batch
            .rewards
            .iter()
            .zip(q_next.as_slice())
            .map(|(r, q)| {
                let y = r + self.hyper.gamma * q;
                match self.hyper.target_clip {
                    Some([lo, hi]) => y.clamp(lo, hi),
                    None => y,
                }
            })
            .collect())
    }

    /// One Adam step on the critic's mean squared TD error; returns the pre-step loss.
    pub fn critic_update(&mut self, batch: &SampledBatch) -> Result<f64> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::contract("empty batch"));
        }
        let targets = self.critic_targets(batch)?;
        let trace = self
            .critic
            .forward_trace(&batch.inputs.hstack(&batch.actions)?)?;
        let q = trace.output().as_slice();
        let nf = n as f64;
        let loss = q
            .iter()
            .zip(&targets)
            .map(|(q, y)| (y - q) * (y - q))
            .sum::<f64>()
            / nf;
        if !loss.is_finite() {
            let mean_r = batch.rewards.iter().sum::<f64>() / nf;
            let max_q = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return Err(Error::Divergence(format!(
                "critic loss is {loss} (batch {n}, mean reward {mean_r:.4}, max |Q| {max_q:.4e})"
            )));
        }
        let upstream: Vec<f64> = q
            .iter()
            .zip(&targets)
            .map(|(q, y)| 2.0 * (q - y) / nf)
            .collect();
        let grads =
            self.critic
                .backward_batch(&trace, &Matrix::from_vec(n, 1, upstream)?, false)?;
        adam_step(
            &mut self.critic,
            &grads,
            &mut self.critic_opt,
            self.hyper.lr_critic,
        )?;
        Ok(loss)
    }

    /// One Adam step on the actor through the fixed critic; returns the pre-step loss.
    pub fn actor_update(&mut self, batch: &SampledBatch) -> Result<f64> {
        let (loss, grads) = actor_loss_and_grad(
            &self.actor,
            &self.critic,
            &batch.inputs,
            self.hyper.action_l2,
        )?;
        adam_step(
            &mut self.actor,
            &grads,
            &mut self.actor_opt,
            self.hyper.lr_actor,
        )?;
        Ok(loss)
    }

    pub fn soft_update(&mut self) -> Result<()> {
        let rho = self.hyper.polyak_retained;
        self.target_actor.blend_toward(&self.actor, rho)?;
        self.target_critic.blend_toward(&self.critic, rho)
    }
}

/// Mean-reverting exploration noise, one independent process per action component.
#[derive(Debug, Clone, PartialEq)]
pub struct OuNoise {
    pub state: [f64; ACTION_DIM],
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
}

impl OuNoise {
    pub fn new(theta: f64, sigma: f64) -> Self {
        Self {
            state: [0.0; ACTION_DIM],
            theta,
            sigma,
            mu: 0.0,
        }
    }

    pub fn reset(&mut self) {
        self.state = [self.mu; ACTION_DIM];
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> [f64; ACTION_DIM] {
        for x in self.state.iter_mut() {
            let eps: f64 = rng.sample(StandardNormal);
            *x += self.theta * (self.mu - *x) + self.sigma * eps;
        }
        self.state
    }
}

/// Behaviour policy. Exploring: with probability `random_eps` a uniform random
/// action, otherwise the actor output plus OU noise, clipped to the action box.
pub fn select_action<R: Rng + ?Sized>(
    agent: &DdpgAgent,
    input: &[f64],
    noise: &mut OuNoise,
    rng: &mut R,
    explore: bool,
) -> Result<Action> {
    let mu = agent.act(input)?;
    let mut raw: [f64; ACTION_DIM] =
        mu.as_slice()
            .try_into()
            .map_err(|_| Error::DimensionMismatch {
                context: "actor output",
                expected: ACTION_DIM,
                actual: mu.len(),
            })?;
    if !explore {
        return Ok(Action::clipped(raw));
    }
    let n = noise.step(rng);
    if rng.random::<f64>() < agent.hyper.random_eps {
        for v in raw.iter_mut() {
            *v = rng.random_range(-1.0..=1.0);
        }
        return Ok(Action::clipped(raw));
    }
    for (v, e) in raw.iter_mut().zip(n) {
        *v += e;
    }
    Ok(Action::clipped(raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::LayerSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_agent(seed: u64, hidden: &[usize]) -> DdpgAgent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DdpgAgent::new(AgentHyper::default(), hidden, &mut rng).unwrap()
    }

    fn toy_batch(n: usize, rewards: Vec<f64>, seed: u64) -> SampledBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |cols| {
            Matrix::from_vec(
                n,
                cols,
                (0..n * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap()
        };
        SampledBatch {
            inputs: m(INPUT_DIM),
            actions: m(ACTION_DIM),
            next_inputs: m(INPUT_DIM),
            rewards,
            goals: vec![[0.0; 3]; n],
            next_achieved: vec![[0.0; 3]; n],
            obstacle_distances: vec![f64::INFINITY; n],
            sources: vec![(0, 0, None); n],
        }
    }

    fn zero_like(p: &NetworkParams) -> NetworkParams {
        NetworkParams::zeros(p.layers().to_vec()).unwrap()
    }

    #[test]
    fn zero_tail_targets_equal_rewards_and_loss_is_mean_q_squared() {
        let mut agent = toy_agent(1, &[16]);
        agent.target_critic = zero_like(&agent.critic);
        let batch = toy_batch(32, vec![0.0; 32], 2);
        assert!(agent
            .critic_targets(&batch)
            .unwrap()
            .iter()
            .all(|&y| y == 0.0));
        let q = agent
            .critic
            .forward_batch(&batch.inputs.hstack(&batch.actions).unwrap())
            .unwrap();
        let expected = q.as_slice().iter().map(|v| v * v).sum::<f64>() / 32.0;
        let loss = agent.critic_update(&batch).unwrap();
        assert!((loss - expected).abs() < 1e-12);
    }

    /// Target critic that returns `value` everywhere: zero weights, constant output bias.
    fn constant_critic(like: &NetworkParams, value: f64) -> NetworkParams {
        let mut c = zero_like(like);
        let last = c.layers().len() - 1;
        c.biases_mut(last)[0] = value;
        c
    }

    #[test]
    fn bellman_target_value() {
        let mut agent = toy_agent(3, &[8]);
        agent.target_critic = constant_critic(&agent.critic, -10.0);
        let batch = toy_batch(1, vec![-1.0], 4);
        let y = agent.critic_targets(&batch).unwrap()[0];
        assert!((y + 10.8).abs() < 1e-12);
    }

    #[test]
    fn sparse_target_clip() {
        let mut agent = toy_agent(5, &[8]);
        agent.target_critic = constant_critic(&agent.critic, -120.0);
        let batch = toy_batch(1, vec![-1.0], 6);
        let unclipped = agent.critic_targets(&batch).unwrap()[0];
        assert!((unclipped + 118.6).abs() < 1e-12);
        agent.hyper.target_clip = Some([-1.0 / (1.0 - agent.hyper.gamma), 0.0]);
        let clipped = agent.critic_targets(&batch).unwrap()[0];
        assert!((clipped + 50.0).abs() < 1e-12);
    }

    #[test]
    fn targets_ignore_online_critic() {
        let mut agent = toy_agent(7, &[8]);
        let batch = toy_batch(16, vec![-1.0; 16], 8);
        let before = agent.critic_targets(&batch).unwrap();
        agent.critic.for_each_mut(|w| *w += 0.3);
        agent.actor.for_each_mut(|w| *w -= 0.1);
        assert_eq!(agent.critic_targets(&batch).unwrap(), before);
    }

    #[test]
    fn zero_actor_has_no_action_penalty() {
        let mut agent = toy_agent(9, &[8]);
        agent.actor = zero_like(&agent.actor);
        let batch = toy_batch(8, vec![0.0; 8], 10);
        let q = agent
            .critic
            .forward_batch(&batch.inputs.hstack(&Matrix::zeros(8, ACTION_DIM)).unwrap())
            .unwrap();
        let expected = -q.as_slice().iter().sum::<f64>() / 8.0;
        let loss = agent.actor_update(&batch).unwrap();
        assert!((loss - expected).abs() < 1e-12);
    }

    /// `Q(s, a) = -(a - 0.5)^2`, independent of the state.
    struct Bowl;

    impl ActionValue for Bowl {
        fn value_and_action_grad(
            &self,
            _inputs: &Matrix,
            actions: &Matrix,
        ) -> Result<(Vec<f64>, Matrix)> {
            let q = actions
                .as_slice()
                .iter()
                .map(|a| -(a - 0.5) * (a - 0.5))
                .collect();
            let g = actions
                .as_slice()
                .iter()
                .map(|a| -2.0 * (a - 0.5))
                .collect();
            Ok((q, Matrix::from_vec(actions.rows(), 1, g)?))
        }
    }

    #[test]
    fn actor_gradient_points_toward_bowl_optimum() {
        let actor = NetworkParams::from_parts(
            vec![LayerSpec::new(1, 1, Activation::Tanh)],
            vec![vec![0.0]],
            vec![vec![0.0]],
        )
        .unwrap();
        let inputs = Matrix::from_vec(1, 1, vec![0.7]).unwrap();
        let (_, g) = actor_loss_and_grad(&actor, &Bowl, &inputs, 0.0).unwrap();
        // a = tanh(b) = 0 < 0.5, so descending the loss must raise the bias
        assert!(g.biases[0][0] < 0.0);
        let eps = 1e-6;
        let loss_at = |b: f64| {
            let p =
                NetworkParams::from_parts(actor.layers().to_vec(), vec![vec![0.0]], vec![vec![b]])
                    .unwrap();
            actor_loss_and_grad(&p, &Bowl, &inputs, 0.0).unwrap().0
        };
        let fd = (loss_at(eps) - loss_at(-eps)) / (2.0 * eps);
        assert!((fd - g.biases[0][0]).abs() < 1e-8);
    }

    #[test]
    fn select_action_modes() {
        let mut agent = toy_agent(11, &[8]);
        agent.actor = zero_like(&agent.actor);
        let mut noise = OuNoise::new(0.15, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let input = [0.3; INPUT_DIM];
        let a = select_action(&agent, &input, &mut noise, &mut rng, false).unwrap();
        assert_eq!(a, Action::zero());

        let agent = toy_agent(13, &[8]);
        let mut quiet = OuNoise::new(0.15, 0.0);
        let mut greedy = agent.clone();
        greedy.hyper.random_eps = 0.0;
        let det = select_action(&greedy, &input, &mut quiet, &mut rng, false).unwrap();
        let exp = select_action(&greedy, &input, &mut quiet, &mut rng, true).unwrap();
        assert_eq!(det, exp);

        for _ in 0..10_000 {
            let a = select_action(&agent, &input, &mut noise, &mut rng, true).unwrap();
            assert!(a.0.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        assert!(select_action(&agent, &[0.0; 3], &mut noise, &mut rng, true).is_err());
    }

    #[test]
    fn ou_fixed_point_and_single_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut n = OuNoise::new(0.15, 0.0);
        for _ in 0..100 {
            assert_eq!(n.step(&mut rng), [0.0; ACTION_DIM]);
        }
        n.state = [1.0; ACTION_DIM];
        let s = n.step(&mut rng);
        assert!(s.iter().all(|v| (v - 0.85).abs() < 1e-15));
    }

    #[test]
    fn soft_update_blend_and_geometric_convergence() {
        let mut agent = toy_agent(15, &[4]);
        agent.target_actor.for_each_mut(|w| *w = 1.0);
        agent.actor.for_each_mut(|w| *w = 0.0);
        agent.soft_update().unwrap();
        assert!(agent
            .target_actor
            .iter_all()
            .all(|w| (w - 0.96).abs() < 1e-12));

        let mut agent = toy_agent(16, &[4]);
        let before = agent.target_critic.clone();
        agent.soft_update().unwrap();
        assert_eq!(agent.target_critic, before);

        let mut agent = toy_agent(17, &[4]);
        agent.critic.for_each_mut(|w| *w += 1.0);
        let gap = |a: &DdpgAgent| {
            a.critic
                .iter_all()
                .zip(a.target_critic.iter_all())
                .fold(0.0f64, |m, (o, t)| m.max((o - t).abs()))
        };
        let mut prev = gap(&agent);
        for _ in 0..50 {
            agent.soft_update().unwrap();
            let g = gap(&agent);
            assert!((g / prev - 0.96).abs() < 1e-9);
            prev = g;
        }
    }
}
