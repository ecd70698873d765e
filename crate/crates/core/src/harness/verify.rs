//! Self-check oracle suites behind `armrl verify`.
//!
//! Each suite owns its RNG, networks and environments, so they run on separate threads.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::OuNoise;
use crate::armsim::{self, EnvConfig, Scenario, Vec3};
use crate::diffnet::{mlp_layers, Activation, NetworkParams};
use crate::error::Result;
use crate::replay::{EpisodeTrace, InputNormalizer, ReplayBuffer};
use crate::rewards::{reward, RewardParams};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "[{mark}] {:<22} {} ({:.1}s)",
            self.name, self.detail, self.seconds
        )
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> SuiteReport {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    SuiteReport {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs every suite, one thread each.
pub fn run_all() -> Vec<SuiteReport> {
    std::thread::scope(|s| {
        let handles = [
            s.spawn(|| timed("gradient-check", || gradient_check(100, 0))),
            s.spawn(|| timed("her-consistency", || her_consistency(100_000, 0))),
            s.spawn(|| timed("scripted-solvability", || scripted_solvability(500, 0))),
            s.spawn(|| timed("ou-stationary-std", || ou_stationary(1_000_000, 0))),
        ];
        handles
            .into_iter()
            .map(|h| h.join().expect("suite thread panicked"))
            .collect()
    })
}

/// Elementwise relative error with a small floor so exact zeros compare sanely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Random MLP with 1 to 3 hidden layers of width at most 32.
pub fn random_network<R: Rng + ?Sized>(rng: &mut R) -> Result<NetworkParams> {
    let input = rng.random_range(1..=8);
    let output = rng.random_range(1..=4);
    let hidden: Vec<usize> = (0..rng.random_range(1..=3))
        .map(|_| rng.random_range(1..=32))
        .collect();
    let acts = [Activation::Relu, Activation::Tanh, Activation::Linear];
    let hidden_act = acts[rng.random_range(0..2)];
    let out_act = acts[rng.random_range(0..3)];
    NetworkParams::init_uniform(mlp_layers(input, &hidden, output, hidden_act, out_act), rng)
}

/// True when some ReLU pre-activation is within `margin` of its kink.
fn near_relu_kink(net: &NetworkParams, x: &[f64], margin: f64) -> bool {
    let mut a = x.to_vec();
    for (i, l) in net.layers().iter().enumerate() {
        let w = net.weights(i);
        let b = net.biases(i);
        let mut z = vec![0.0; l.output_width];
        for (o, zo) in z.iter_mut().enumerate() {
            *zo = b[o]
                + (0..l.input_width)
                    .map(|k| w[o * l.input_width + k] * a[k])
                    .sum::<f64>();
        }
        if l.activation == Activation::Relu && z.iter().any(|v| v.abs() < margin) {
            return true;
        }
        a = z
            .into_iter()
            .map(|v| match l.activation {
                Activation::Relu => v.max(0.0),
                Activation::Tanh => v.tanh(),
                Activation::Linear => v,
            })
            .collect();
    }
    false
}

/// Compares `backward` against five-point central differences of `u . f(x)`
/// for `count` random networks. Worst relative error must stay below 1e-5.
pub fn gradient_check(count: usize, seed: u64) -> Result<(bool, String)> {
    const H: f64 = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for _ in 0..count {
        // redraw until no ReLU unit sits within reach of its kink under the stencil
        let (mut net, x) = loop {
            let net = random_network(&mut rng)?;
            let x: Vec<f64> = (0..net.input_width())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            if !near_relu_kink(&net, &x, 10.0 * H) {
                break (net, x);
            }
        };
        let u: Vec<f64> = (0..net.output_width())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let analytic = net.backward(&x, &u)?;
        let objective = |n: &NetworkParams, x: &[f64]| -> Result<f64> {
            Ok(n.forward(x)?.iter().zip(&u).map(|(a, b)| a * b).sum())
        };
        let stencil = |f: &mut dyn FnMut(f64) -> Result<f64>| -> Result<f64> {
            Ok((-f(2.0 * H)? + 8.0 * f(H)? - 8.0 * f(-H)? + f(-2.0 * H)?) / (12.0 * H))
        };
        for layer in 0..net.layers().len() {
            for j in 0..net.weights(layer).len() {
                let orig = net.weights(layer)[j];
                let fd = stencil(&mut |d| {
                    net.weights_mut(layer)[j] = orig + d;
                    let v = objective(&net, &x);
                    net.weights_mut(layer)[j] = orig;
                    v
                })?;
                worst = worst.max(relative_error(analytic.weights[layer][j], fd));
                checked += 1;
            }
            for j in 0..net.biases(layer).len() {
                let orig = net.biases(layer)[j];
                let fd = stencil(&mut |d| {
                    net.biases_mut(layer)[j] = orig + d;
                    let v = objective(&net, &x);
                    net.biases_mut(layer)[j] = orig;
                    v
                })?;
                worst = worst.max(relative_error(analytic.biases[layer][j], fd));
                checked += 1;
            }
        }
        let dx = analytic.input.as_deref().unwrap_or(&[]);
        for (j, &g) in dx.iter().enumerate() {
            let mut xp = x.clone();
            let fd = stencil(&mut |d| {
                xp[j] = x[j] + d;
                objective(&net, &xp)
            })?;
            worst = worst.max(relative_error(g, fd));
            checked += 1;
        }
    }
    Ok((
        worst < 1e-5,
        format!("{count} networks, {checked} partials, worst relative error {worst:.2e}"),
    ))
}

/// Fills a buffer with random-action S2 episodes for sampling checks.
pub fn random_episodes(episodes: usize, rng: &mut ChaCha8Rng) -> Result<ReplayBuffer> {
    let env = EnvConfig::default().with_scenario(Scenario::S2);
    let params = RewardParams::default();
    let mut buf = ReplayBuffer::new(episodes * env.horizon, env.horizon)?;
    for _ in 0..episodes {
        let (mut state, goal) = armsim::reset(&env, rng);
        let mut trace = EpisodeTrace::with_capacity(env.horizon);
        for _ in 0..env.horizon {
            let o = armsim::observe(&state, &goal);
            let raw: [f64; 5] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
            let action = armsim::Action::clipped(raw);
            let (next, info) = armsim::step(&state, &goal, &action, &env, &params)?;
            trace.obs.push(o.obs);
            trace.achieved_goals.push(o.achieved_goal);
            trace.desired_goals.push(o.desired_goal);
            trace.actions.push(action.0);
            trace.obstacle_distances.push(info.obstacle_distance);
            state = next;
        }
        let last = armsim::observe(&state, &goal);
        trace.obs.push(last.obs);
        trace.achieved_goals.push(last.achieved_goal);
        buf.store_episode(trace)?;
    }
    Ok(buf)
}

/// Samples `entries` transitions with k = 4 relabeling and checks every reward
/// against the stored trajectory plus the observed relabel fraction.
pub fn her_consistency(entries: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let buf = random_episodes(20, &mut rng)?;
    let params = RewardParams::default();
    let norm = InputNormalizer::new(200.0, 5.0, false);
    let reward_fn = |a: &Vec3, g: &Vec3, r_o: f64| reward(a, g, r_o, &params);
    let (mut mismatches, mut relabeled, mut done) = (0usize, 0usize, 0usize);
    while done < entries {
        let n = (entries - done).min(1000);
        let batch = buf.sample_batch(n, 0.8, &mut rng, reward_fn, &norm)?;
        for i in 0..n {
            let (slot, t, future) = batch.sources[i];
            let ep = buf.episode(slot).expect("sampled slot exists");
            let goal = match future {
                Some(f) if f > t && f <= ep.len() => ep.achieved_goals[f],
                Some(_) => {
                    mismatches += 1;
                    continue;
                }
                None => ep.desired_goals[t],
            };
            let expected = reward(
                &ep.achieved_goals[t + 1],
                &goal,
                ep.obstacle_distances[t],
                &params,
            )?;
            if expected != batch.rewards[i] || goal != batch.goals[i] {
                mismatches += 1;
            }
        }
        relabeled += batch.relabeled_count();
        done += n;
    }
    let frac = relabeled as f64 / entries as f64;
    Ok((
        mismatches == 0 && (0.79..=0.81).contains(&frac),
        format!("{entries} entries, {mismatches} reward mismatches, relabel fraction {frac:.4}"),
    ))
}

/// Scripted controller success on S1; the task must be solvable within the horizon.
pub fn scripted_solvability(episodes: usize, seed: u64) -> Result<(bool, String)> {
    let env = EnvConfig::default();
    let params = RewardParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0usize;
    for _ in 0..episodes {
        let (mut state, goal) = armsim::reset(&env, &mut rng);
        let mut success = false;
        for _ in 0..env.horizon {
            let a = armsim::scripted_policy(&state, &goal, &env);
            let (next, info) = armsim::step(&state, &goal, &a, &env, &params)?;
            success = info.is_success;
            state = next;
        }
        successes += success as usize;
    }
    let rate = successes as f64 / episodes as f64;
    Ok((
        rate >= 0.9,
        format!(
            "{successes}/{episodes} scripted successes ({:.1}%)",
            100.0 * rate
        ),
    ))
}

/// Empirical stationary std of the OU process against `sigma / sqrt(2 theta)`.
pub fn ou_stationary(steps: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = OuNoise::new(0.15, 0.2);
    for _ in 0..1000 {
        noise.step(&mut rng);
    }
    let (mut sum, mut sumsq, mut n) = (0.0, 0.0, 0.0);
    for _ in 0..steps {
        for v in noise.step(&mut rng) {
            sum += v;
            sumsq += v * v;
            n += 1.0;
        }
    }
    let mean = sum / n;
    let std = (sumsq / n - mean * mean).sqrt();
    let expected = 0.2 / (2.0f64 * 0.15).sqrt();
    let rel = (std - expected).abs() / expected;
    Ok((
        rel < 0.05,
        format!("std {std:.4} vs {expected:.4} ({:.2}% off)", 100.0 * rel),
    ))
}
