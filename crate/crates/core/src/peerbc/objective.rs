use std::time::Instant;

use super::{draw_index, BcError, DemoSet};
use crate::learners::SoftmaxPolicy;
use crate::metrics::{MetricRow, RunResult};
use crate::rng::{self, PeerRng};
use crate::scalar::Scalar;

/// Probability floor inside every logarithm.
pub const PROB_FLOOR: f64 = 1e-8;

fn floored_log<T: Scalar>(policy: &SoftmaxPolicy<T>, s: usize, a: usize) -> T {
    let p = policy.probs(&[s])[a];
    p.max(T::lit(PROB_FLOOR)).ln()
}

/// `(1/N) sum_i log pi(a_i|s_i) - xi (1/N) sum_i log pi(a_k(i)|s_j(i))` on
/// tabular features, with fresh independent `(j, k)` drawn with replacement.
pub fn peer_bc_objective<T: Scalar>(
    policy: &SoftmaxPolicy<T>,
    demos: &DemoSet,
    xi: T,
    rng: &mut PeerRng,
) -> Result<T, BcError> {
    let n = demos.len();
    if n == 0 {
        return Err(BcError::Empty);
    }
    let mut own = T::zero();
    let mut peer = T::zero();
    for &(s, a) in &demos.pairs {
        own += floored_log(policy, s, a);
        if xi != T::zero() {
            let (sj, _) = demos.pairs[draw_index(n, rng)];
            let (_, ak) = demos.pairs[draw_index(n, rng)];
            peer += floored_log(policy, sj, ak);
        }
    }
    let inv = T::one() / T::lit(n as f64);
    Ok(own * inv - xi * peer * inv)
}

#[derive(Debug, Clone)]
pub struct BcTrainConfig {
    pub xi: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub window: usize,
}

impl Default for BcTrainConfig {
    fn default() -> Self {
        Self { xi: 0.2, lr: 0.5, epochs: 20, batch: 64, seed: 0, window: 5 }
    }
}

/// Adds `scale * d/dtheta log max(pi(a|s), floor)`; zero below the floor.
fn add_grad<T: Scalar>(
    policy: &SoftmaxPolicy<T>,
    s: usize,
    a: usize,
    scale: T,
    grad: &mut [T],
    tmp: &mut Vec<(usize, T)>,
) {
    if policy.probs(&[s])[a] < T::lit(PROB_FLOOR) {
        return;
    }
    tmp.clear();
    policy.grad_log_prob(&[s], a, tmp);
    for &(i, g) in tmp.iter() {
        grad[i] += scale * g;
    }
}

/// Minibatch gradient ascent on the peer objective over tabular softmax
/// policies. Inside each batch every sample is paired with the label of a
/// shuffled partner from the same batch. Each epoch logs the greedy policy's
/// disagreement with `expert` under the clean `state_dist`.
pub fn train_peer_bc<T: Scalar>(
    demos: &DemoSet,
    config: &BcTrainConfig,
    expert: &[usize],
    state_dist: &[T],
) -> Result<(SoftmaxPolicy<T>, RunResult), BcError> {
    if demos.is_empty() {
        return Err(BcError::Empty);
    }
    if config.batch == 0 || !(config.lr > 0.0) || !(config.xi >= 0.0) {
        return Err(BcError::Argument("batch, lr must be positive and xi nonnegative".into()));
    }
    if expert.len() != demos.num_states || state_dist.len() != demos.num_states {
        return Err(BcError::Argument("expert and state distribution must cover every state".into()));
    }
    let start = Instant::now();
    let mut rng = rng::seeded(config.seed);
    let mut policy = SoftmaxPolicy::zeros(demos.num_states, demos.num_actions);
    let mut order: Vec<usize> = (0..demos.len()).collect();
    let mut grad = vec![T::zero(); policy.theta().len()];
    let mut tmp = Vec::new();
    let xi = T::lit(config.xi);
    let mut rows = Vec::new();
    for epoch in 0..config.epochs {
        rng::shuffle(&mut order, &mut rng);
        for chunk in order.chunks(config.batch) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let mut partners: Vec<usize> = chunk.to_vec();
            if config.xi > 0.0 {
                rng::shuffle(&mut partners, &mut rng);
            }
            let scale = T::lit(config.lr / chunk.len() as f64);
            for (b, &i) in chunk.iter().enumerate() {
                let (s, a) = demos.pairs[i];
                add_grad(&policy, s, a, scale, &mut grad, &mut tmp);
                if config.xi > 0.0 {
                    let (_, ak) = demos.pairs[partners[b]];
                    add_grad(&policy, s, ak, -xi * scale, &mut grad, &mut tmp);
                }
            }
            for (th, &g) in policy.theta_mut().iter_mut().zip(&grad) {
                *th += g;
            }
            if policy.theta().iter().any(|t| !t.is_finite()) {
                return Err(BcError::NonFinite);
            }
        }
        let error: f64 =
            (0..demos.num_states).filter(|&s| policy.greedy(&[s]) != expert[s]).map(|s| state_dist[s].as_f64()).sum();
        let train_agree =
            demos.pairs.iter().filter(|&&(s, a)| policy.greedy(&[s]) == a).count() as f64 / demos.len() as f64;
        rows.push(MetricRow {
            step: ((epoch + 1) * demos.len()) as u64,
            episode: (epoch + 1) as u64,
            clean_return: 1.0 - error,
            noisy_return: train_agree,
            eval_error_rate: Some(error),
        });
    }
    let result = RunResult::new(rows, config.window, start.elapsed().as_secs_f64())
        .with_meta("algo", "peer_bc")
        .with_meta("seed", config.seed);
    Ok((policy, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_policy_objective_is_minus_log_two() {
        let pol = SoftmaxPolicy::<f64>::zeros(3, 2);
        let d = DemoSet::new(3, 2, vec![(0, 1), (2, 0)]).unwrap();
        let v = peer_bc_objective(&pol, &d, 0.0, &mut rng::seeded(0)).unwrap();
        assert!((v + 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn clean_separable_demos_are_learned() {
        let expert = [1, 0, 1, 1];
        let pairs: Vec<_> = (0..200).map(|i| (i % 4, expert[i % 4])).collect();
        let d = DemoSet::new(4, 2, pairs).unwrap();
        let cfg = BcTrainConfig { xi: 0.0, epochs: 5, ..BcTrainConfig::default() };
        let (_, res) = train_peer_bc(&d, &cfg, &expert, &[0.25; 4]).unwrap();
        assert_eq!(res.rows.last().unwrap().eval_error_rate, Some(0.0));
    }
}
