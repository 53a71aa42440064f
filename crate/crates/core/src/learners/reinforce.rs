use std::time::Instant;

use rand::Rng;

use super::{check_channel, observe, FeatureMap, LearnerConfig, LearnerError, SoftmaxPolicy, Streams};
use crate::envs::Environment;
use crate::metrics::{MetricRow, RunResult};
use crate::noise::RewardChannel;
use crate::rng::PeerRng;
use crate::scalar::Scalar;

/// Pooled steps of one update: features, actions and discounted returns of
/// the corrupted rewards.
#[derive(Debug, Clone, Default)]
pub struct ReinforceBatch<T> {
    pub features: Vec<Vec<usize>>,
    pub actions: Vec<usize>,
    pub returns: Vec<T>,
}

impl<T: Scalar> ReinforceBatch<T> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Appends one episode, converting rewards to returns-to-go.
    pub fn push_episode(&mut self, features: Vec<Vec<usize>>, actions: Vec<usize>, rewards: &[T], gamma: T) {
        let mut q = vec![T::zero(); rewards.len()];
        let mut acc = T::zero();
        for t in (0..rewards.len()).rev() {
            acc = rewards[t] + gamma * acc;
            q[t] = acc;
        }
        self.features.extend(features);
        self.actions.extend(actions);
        self.returns.extend(q);
    }

    /// `sum_i [q_i grad log pi(a_i|s_i) - xi q_k grad log pi(a_j|s_j)]` at the
    /// current parameters, with `j` and `k` drawn independently and uniformly
    /// from the other indices. No draws are made when `xi = 0` or the batch
    /// has a single step.
    pub fn gradient(&self, policy: &SoftmaxPolicy<T>, xi: T, rng: &mut PeerRng) -> Vec<T> {
        let n = self.len();
        let mut grad = vec![T::zero(); policy.theta().len()];
        let mut scratch = Vec::new();
        let other = |i: usize, rng: &mut PeerRng| {
            let r = rng.random_range(0..n - 1);
            if r >= i {
                r + 1
            } else {
                r
            }
        };
        for i in 0..n {
            scratch.clear();
            policy.grad_log_prob(&self.features[i], self.actions[i], &mut scratch);
            for &(idx, g) in &scratch {
                grad[idx] += self.returns[i] * g;
            }
            if xi > T::zero() && n > 1 {
                let j = other(i, rng);
                let k = other(i, rng);
                scratch.clear();
                policy.grad_log_prob(&self.features[j], self.actions[j], &mut scratch);
                for &(idx, g) in &scratch {
                    grad[idx] -= xi * self.returns[k] * g;
                }
            }
        }
        grad
    }
}

/// REINFORCE on corrupted rewards with the peer penalty. Each update pools
/// `batch_episodes` episodes, accumulates the gradient at fixed parameters and
/// takes one step of size `alpha`; gradients longer than `max_grad_norm` are
/// rescaled.
pub fn reinforce_peer<T, E, F>(
    env: &mut E,
    features: &F,
    channel: Option<&RewardChannel<T>>,
    config: &LearnerConfig,
) -> Result<(SoftmaxPolicy<T>, RunResult), LearnerError>
where
    T: Scalar,
    E: Environment<T>,
    F: FeatureMap<E::Obs>,
{
    config.validate()?;
    let levels = env.reward_levels();
    check_channel(channel, levels.len())?;
    let start = Instant::now();
    let gamma = T::lit(config.gamma.unwrap_or(1.0));
    let mut streams = Streams::new(config.seed);
    let mut policy = SoftmaxPolicy::zeros(features.dim(), env.num_actions());
    let mut rows = Vec::new();
    let mut active = Vec::new();
    let mut episode = 0u64;
    let mut steps_total = 0u64;
    let mut update = 0u64;

    while episode < config.episodes {
        let mut batch = ReinforceBatch::default();
        for _ in 0..config.batch_episodes {
            if episode >= config.episodes {
                break;
            }
            let mut obs = env.reset(&mut streams.env);
            let (mut feats, mut acts, mut rewards) = (Vec::new(), Vec::new(), Vec::new());
            let (mut clean, mut noisy) = (0.0, 0.0);
            for _ in 0..config.horizon {
                features.active(&obs, &mut active);
                let a = policy.sample(&active, &mut streams.env);
                let step = env.step(a, &mut streams.env)?;
                let seen = levels[observe(step.reward_level, channel, &mut streams.noise)];
                clean += levels[step.reward_level].as_f64();
                noisy += seen.as_f64();
                feats.push(active.clone());
                acts.push(a);
                rewards.push(seen);
                steps_total += 1;
                let done = step.done();
                obs = step.obs;
                if done {
                    break;
                }
            }
            batch.push_episode(feats, acts, &rewards, gamma);
            episode += 1;
            rows.push(MetricRow {
                step: steps_total,
                episode,
                clean_return: clean,
                noisy_return: noisy,
                eval_error_rate: None,
            });
        }
        let xi = T::lit(config.peer.xi(update));
        let mut grad = batch.gradient(&policy, xi, &mut streams.peer);
        let norm = grad.iter().map(|g| (*g * *g).as_f64()).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(LearnerError::Gradient(norm));
        }
        if norm > config.max_grad_norm {
            let s = T::lit(config.max_grad_norm / norm);
            grad.iter_mut().for_each(|g| *g *= s);
        }
        let alpha = T::lit(config.alpha.at(update, 0));
        for (th, g) in policy.theta_mut().iter_mut().zip(&grad) {
            *th += alpha * *g;
        }
        update += 1;
    }
    let result = RunResult::new(rows, config.window, start.elapsed().as_secs_f64())
        .with_meta("algo", "reinforce_peer")
        .with_meta("seed", config.seed);
    Ok((policy, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::TwoArmedBandit;
    use crate::learners::{AlphaSchedule, Unit};
    use crate::peer::PeerConfig;
    use crate::rng;

    #[test]
    fn zero_xi_gradient_is_plain_reinforce() {
        let pol = SoftmaxPolicy::from_theta(2, 2, vec![0.1f64, -0.4, 0.3, 0.2]);
        let mut b = ReinforceBatch::default();
        b.push_episode(vec![vec![0], vec![1], vec![0]], vec![1, 0, 0], &[1.0, 0.0, 1.0], 0.9);
        let g = b.gradient(&pol, 0.0, &mut rng::seeded(0));
        let mut plain = vec![0.0; 4];
        let mut tmp = Vec::new();
        for i in 0..3 {
            tmp.clear();
            pol.grad_log_prob(&b.features[i], b.actions[i], &mut tmp);
            for &(idx, v) in &tmp {
                plain[idx] += b.returns[i] * v;
            }
        }
        assert_eq!(g, plain);
        assert!((b.returns[0] - (1.0 + 0.81)).abs() < 1e-12);
    }

    #[test]
    fn bandit_prefers_better_arm_under_noise() {
        let ch = RewardChannel::binary_symmetric(0.3).unwrap();
        let cfg = LearnerConfig {
            alpha: AlphaSchedule::Constant { alpha: 0.05 },
            episodes: 4000,
            batch_episodes: 10,
            peer: PeerConfig::constant(1.0),
            seed: 2,
            ..LearnerConfig::default()
        };
        let mut env = TwoArmedBandit::default();
        let (pol, _) = reinforce_peer(&mut env, &Unit, Some(&ch), &cfg).unwrap();
        assert!(pol.probs(&[0])[0] > 0.9);
    }
}
