use std::collections::VecDeque;
use std::time::Instant;

use rand::Rng;

use super::{check_channel, observe, FeatureMap, LearnerConfig, LearnerError, LinearQ, Streams};
use crate::envs::Environment;
use crate::metrics::{MetricRow, RunResult};
use crate::noise::RewardChannel;
use crate::rng;
use crate::scalar::Scalar;

/// Stored transition with precomputed features.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub phi: Vec<usize>,
    pub action: usize,
    pub reward: T,
    pub next_phi: Vec<usize>,
    pub terminal: bool,
}

const DEFAULT_GAMMA: f64 = 0.99;

fn target<T: Scalar>(q: &LinearQ<T>, reward: T, next: &Transition<T>, gamma: T) -> T {
    if next.terminal {
        reward
    } else {
        reward + gamma * q.max_value(&next.next_phi)
    }
}

/// Replay Q-learning with linear features and the three-minibatch peer term.
///
/// After each environment step, minibatches `i`, `j`, `k` are drawn uniformly
/// with replacement from a FIFO replay. With
/// `y_i = r_i + gamma max Q(s_{i+1}, .)` and
/// `y_peer = r_k + gamma max Q(s_{j+1}, .)` (no bootstrap past a terminal
/// `j`), one normalized semi-gradient step descends
/// `(y_i - Q(s_i, a_i))^2 - xi (y_peer - Q(s_j, a_j))^2`, averaged over the
/// batch. The `j`, `k` draws are skipped while `xi(t) = 0`.
pub fn replay_q_peer<T, E, F>(
    env: &mut E,
    features: &F,
    channel: Option<&RewardChannel<T>>,
    config: &LearnerConfig,
) -> Result<(LinearQ<T>, RunResult), LearnerError>
where
    T: Scalar,
    E: Environment<T>,
    F: FeatureMap<E::Obs>,
{
    config.validate()?;
    let levels = env.reward_levels();
    check_channel(channel, levels.len())?;
    let start = Instant::now();
    let gamma_f = config.gamma.unwrap_or(DEFAULT_GAMMA);
    let gamma = T::lit(gamma_f);
    let r_max = levels.iter().map(|r| r.abs().as_f64()).fold(1.0, f64::max);
    let bound = r_max
        * (1.0 + config.peer.xi(0))
        * if gamma_f < 1.0 { 1.0 / (1.0 - gamma_f) } else { config.horizon as f64 }
        * 1e3;

    let mut streams = Streams::new(config.seed);
    let mut q = LinearQ::zeros(features.dim(), env.num_actions());
    let mut replay: VecDeque<Transition<T>> = VecDeque::with_capacity(config.buffer_capacity);
    let mut phi = Vec::new();
    let mut obs = env.reset(&mut streams.env);
    features.active(&obs, &mut phi);
    let (mut clean, mut noisy) = (0.0, 0.0);
    let mut episode = 0u64;
    let mut rows = Vec::new();
    let mut updates: Vec<(usize, T)> = Vec::new();

    for t in 0..config.total_steps {
        let a = config.exploration.select(&q.values(&phi), t, config.total_steps, &mut streams.env);
        let step = env.step(a, &mut streams.env)?;
        let seen = levels[observe(step.reward_level, channel, &mut streams.noise)];
        let mut next_phi = Vec::new();
        features.active(&step.obs, &mut next_phi);
        if replay.len() == config.buffer_capacity {
            replay.pop_front();
        }
        replay.push_back(Transition {
            phi: phi.clone(),
            action: a,
            reward: seen,
            next_phi: next_phi.clone(),
            terminal: step.terminal,
        });

        if replay.len() >= config.batch {
            let n = replay.len();
            let xi = config.peer.xi(t);
            let alpha = T::lit(config.alpha.at(t, 0));
            let inv_b = T::one() / T::lit(config.batch as f64);
            updates.clear();
            for _ in 0..config.batch {
                let i = streams.env.random_range(0..n);
                let tr = &replay[i];
                let err = target(&q, tr.reward, tr, gamma) - q.value(&tr.phi, tr.action);
                updates.push((i, alpha * err * inv_b));
            }
            if xi > 0.0 {
                for _ in 0..config.batch {
                    let j = streams.peer.random_range(0..n);
                    let k = streams.peer.random_range(0..n);
                    let (tj, tk) = (&replay[j], &replay[k]);
                    let err = target(&q, tk.reward, tj, gamma) - q.value(&tj.phi, tj.action);
                    updates.push((j, -T::lit(xi) * alpha * err * inv_b));
                }
            }
            for &(idx, scale) in &updates {
                let tr = &replay[idx];
                q.add_normalized(&tr.phi, tr.action, scale);
            }
            let sup = q.sup_abs().as_f64() * phi.len().max(1) as f64;
            if !sup.is_finite() || sup > bound {
                return Err(LearnerError::Divergence { value: sup, bound });
            }
        }

        clean += levels[step.reward_level].as_f64();
        noisy += seen.as_f64();
        if step.done() {
            episode += 1;
            rows.push(MetricRow {
                step: t + 1,
                episode,
                clean_return: clean,
                noisy_return: noisy,
                eval_error_rate: None,
            });
            clean = 0.0;
            noisy = 0.0;
            obs = env.reset(&mut streams.env);
        } else {
            obs = step.obs;
        }
        features.active(&obs, &mut phi);
    }
    let result = RunResult::new(rows, config.window, start.elapsed().as_secs_f64())
        .with_meta("algo", "replay_q_peer")
        .with_meta("seed", config.seed);
    Ok((q, result))
}

/// Mean clean return of the greedy policy over `episodes` fresh episodes.
pub fn evaluate_greedy<T, E, F>(
    env: &mut E,
    features: &F,
    q: &LinearQ<T>,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<f64, LearnerError>
where
    T: Scalar,
    E: Environment<T>,
    F: FeatureMap<E::Obs>,
{
    let levels = env.reward_levels();
    let mut r = rng::seeded(seed);
    let mut phi = Vec::new();
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut obs = env.reset(&mut r);
        for _ in 0..horizon {
            features.active(&obs, &mut phi);
            let a = crate::mdp::argmax_lowest(&q.values(&phi));
            let step = env.step(a, &mut r)?;
            total += levels[step.reward_level].as_f64();
            let done = step.done();
            obs = step.obs;
            if done {
                break;
            }
        }
    }
    Ok(total / episodes.max(1) as f64)
}
