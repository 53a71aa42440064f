use std::time::Instant;

use super::{check_channel, observe, LearnerConfig, LearnerError, Streams};
use crate::envs::{EnvStep, Environment, MdpEnv};
use crate::mdp::{PolicyTable, QTable, TabularMdp};
use crate::metrics::{MetricRow, RunResult};
use crate::noise::RewardChannel;
use crate::peer::{peer_reward, PeerBuffer};
use crate::rng;
use crate::scalar::Scalar;

/// Online Q-learning on corrupted rewards with the peer penalty.
///
/// Per step: act, observe the corrupted reward, draw a peer sample from the
/// buffer (skipped while `xi(t) = 0`; an empty buffer contributes 0), then
/// insert the observation and apply
/// `Q(s,a) <- (1 - alpha) Q(s,a) + alpha (r_peer + gamma max Q(s', .))`.
/// Terminal successors do not bootstrap; time-limit truncation does.
pub fn q_learning_peer<T: Scalar>(
    mdp: &TabularMdp<T>,
    channel: Option<&RewardChannel<T>>,
    config: &LearnerConfig,
) -> Result<(QTable<T>, RunResult), LearnerError> {
    config.validate()?;
    check_channel(channel, mdp.num_levels())?;
    let start = Instant::now();
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    let gamma = config.gamma.map_or(mdp.gamma(), T::lit);
    let levels = mdp.reward_levels().to_vec();
    let bound = {
        let r = mdp.r_max().as_f64().max(1.0) * (1.0 + config.peer.xi(0));
        let g = gamma.as_f64();
        let scale = if g < 1.0 { 1.0 / (1.0 - g) } else { config.horizon as f64 };
        r * scale * 1e3
    };

    let mut streams = Streams::new(config.seed);
    let mut buffer: PeerBuffer<T> = PeerBuffer::for_policy(config.peer.sampler, ns * na, config.peer.capacity);
    let mut q = QTable::zeros(ns, na);
    let mut visits = vec![0u64; ns * na];
    let mut env = MdpEnv::new(mdp, Some(config.horizon));
    let mut s = Environment::<T>::reset(&mut env, &mut streams.env);
    let (mut clean_ret, mut noisy_ret) = (0.0, 0.0);
    let mut episode = 0u64;
    let mut rows = Vec::new();

    for t in 0..config.total_steps {
        let a = config.exploration.select(q.row(s), t, config.total_steps, &mut streams.env);
        let EnvStep { obs: next, reward_level, terminal, truncated } = env.step(a, &mut streams.env)?;
        let observed = levels[observe(reward_level, channel, &mut streams.noise)];
        let xi = config.peer.xi(t);
        let r = if xi > 0.0 {
            let peer = buffer.draw(&mut streams.peer).unwrap_or(T::zero());
            peer_reward(observed, peer, T::lit(xi))
        } else {
            observed
        };
        buffer.insert(s * na + a, observed, &mut streams.peer);

        let cell = s * na + a;
        let alpha = T::lit(config.alpha.at(t, visits[cell]));
        visits[cell] += 1;
        let bootstrap = if terminal { T::zero() } else { gamma * q.max_value(next) };
        let old = q.get(s, a);
        let new = (T::one() - alpha) * old + alpha * (r + bootstrap);
        if !new.is_finite() || new.abs().as_f64() > bound {
            return Err(LearnerError::Divergence { value: new.as_f64(), bound });
        }
        q.set(s, a, new);

        clean_ret += levels[reward_level].as_f64();
        noisy_ret += observed.as_f64();
        if terminal || truncated {
            episode += 1;
            rows.push(MetricRow {
                step: t + 1,
                episode,
                clean_return: clean_ret,
                noisy_return: noisy_ret,
                eval_error_rate: None,
            });
            clean_ret = 0.0;
            noisy_ret = 0.0;
            s = Environment::<T>::reset(&mut env, &mut streams.env);
        } else {
            s = next;
        }
    }
    let result = RunResult::new(rows, config.window, start.elapsed().as_secs_f64())
        .with_meta("algo", "q_learning_peer")
        .with_meta("seed", config.seed);
    Ok((q, result))
}

/// Mean undiscounted clean return of `policy` over `episodes` rollouts.
pub fn evaluate_greedy_tabular<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &PolicyTable<T>,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<f64, LearnerError> {
    let mut r = rng::seeded(seed);
    let mut total = 0.0;
    for _ in 0..episodes {
        total += crate::mdp::rollout(mdp, policy, horizon, &mut r, None)?.clean_total().as_f64();
    }
    Ok(total / episodes.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_gridworld_chain, ChainSpec};
    use crate::learners::AlphaSchedule;
    use crate::peer::PeerConfig;

    /// Plain Q-learning written against the same three streams.
    fn reference(mdp: &TabularMdp<f64>, cfg: &LearnerConfig) -> QTable<f64> {
        let mut st = Streams::new(cfg.seed);
        let na = mdp.num_actions();
        let mut q = QTable::zeros(mdp.num_states(), na);
        let mut visits = vec![0u64; mdp.num_states() * na];
        let mut env = MdpEnv::new(mdp, Some(cfg.horizon));
        let mut s = Environment::<f64>::reset(&mut env, &mut st.env);
        for t in 0..cfg.total_steps {
            let a = cfg.exploration.select(q.row(s), t, cfg.total_steps, &mut st.env);
            let step = env.step(a, &mut st.env).unwrap();
            let _ = rng::uniform(&mut st.noise);
            let r = mdp.reward_levels()[step.reward_level];
            let alpha = cfg.alpha.at(t, visits[s * na + a]);
            visits[s * na + a] += 1;
            let boot = if step.terminal { 0.0 } else { mdp.gamma() * q.max_value(step.obs) };
            q.set(s, a, (1.0 - alpha) * q.get(s, a) + alpha * (r + boot));
            s = if step.done() { Environment::<f64>::reset(&mut env, &mut st.env) } else { step.obs };
        }
        q
    }

    #[test]
    fn zero_xi_identity_channel_reduces_to_plain_q_learning() {
        let mdp = make_gridworld_chain(&ChainSpec::right_goal(5, 0.1, 0.9)).unwrap();
        let cfg = LearnerConfig {
            total_steps: 3000,
            horizon: 40,
            seed: 12,
            peer: PeerConfig::off(),
            alpha: AlphaSchedule::VisitPower { p: 0.8 },
            ..LearnerConfig::default()
        };
        let id = RewardChannel::identity(2);
        let (q1, r1) = q_learning_peer(&mdp, Some(&id), &cfg).unwrap();
        let (q2, _) = q_learning_peer(&mdp, None, &cfg).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(q1, reference(&mdp, &cfg));
        assert!(r1.rows.iter().all(|r| r.clean_return == r.noisy_return));
    }

    #[test]
    fn noiseless_chain_learns_optimal_policy() {
        let mdp = make_gridworld_chain(&ChainSpec::right_goal(5, 0.1, 0.9)).unwrap();
        let star = crate::mdp::exact_value_iteration(&mdp, 1e-10).unwrap().policy;
        let mut hits = 0;
        for seed in 0..20 {
            let cfg = LearnerConfig { total_steps: 50_000, seed, ..LearnerConfig::default() };
            let (q, _) = q_learning_peer(&mdp, None, &cfg).unwrap();
            hits += usize::from(q.greedy() == star);
        }
        assert!(hits >= 19, "{hits}/20");
    }
}
