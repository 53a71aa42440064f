use super::{MdpError, PolicyTable, QTable, TabularMdp, ValueTable};
use crate::scalar::Scalar;

/// Sweep cap for every iterative solver.
pub const MAX_SWEEPS: usize = 1_000_000;

/// Optimal values, action values and greedy policy.
#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub values: ValueTable<T>,
    pub q: QTable<T>,
    pub policy: PolicyTable<T>,
    pub sweeps: usize,
    /// Bellman optimality residual of `q`, sup norm.
    pub residual: T,
}

/// Value iteration on the MDP's expected rewards.
pub fn exact_value_iteration<T: Scalar>(mdp: &TabularMdp<T>, tolerance: T) -> Result<Solution<T>, MdpError> {
    value_iteration_with_rewards(mdp, &mdp.expected_rewards(), tolerance)
}

fn backup<T: Scalar>(mdp: &TabularMdp<T>, rewards: &[T], q: &QTable<T>, out: &mut QTable<T>) -> T {
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    let v: Vec<T> = (0..ns).map(|s| if mdp.is_terminal(s) { T::zero() } else { q.max_value(s) }).collect();
    let mut residual = T::zero();
    for s in 0..ns {
        for a in 0..na {
            let new = if mdp.is_terminal(s) {
                T::zero()
            } else {
                let ev: T = mdp.transition_row(s, a).iter().zip(&v).map(|(&p, &x)| p * x).sum();
                rewards[s * na + a] + mdp.gamma() * ev
            };
            residual = residual.max((new - q.get(s, a)).abs());
            out.set(s, a, new);
        }
    }
    residual
}

/// Value iteration with an arbitrary mean reward per `(s, a)` (`s * |A| + a`).
///
/// Iterates `Q <- T Q` until the sup-norm change is at most `tolerance`, then
/// reports the residual of the returned table.
pub fn value_iteration_with_rewards<T: Scalar>(
    mdp: &TabularMdp<T>,
    rewards: &[T],
    tolerance: T,
) -> Result<Solution<T>, MdpError> {
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    if rewards.len() != ns * na {
        return Err(MdpError::Dimension("reward table must have |S||A| entries".into()));
    }
    if !(tolerance > T::zero()) {
        return Err(MdpError::Parameter("tolerance must be positive".into()));
    }
    let mut q = QTable::zeros(ns, na);
    let mut next = QTable::zeros(ns, na);
    let mut residual = T::infinity();
    for sweep in 1..=MAX_SWEEPS {
        residual = backup(mdp, rewards, &q, &mut next);
        std::mem::swap(&mut q, &mut next);
        if residual <= tolerance {
            let final_residual = backup(mdp, rewards, &q, &mut next);
            let values =
                ValueTable((0..ns).map(|s| if mdp.is_terminal(s) { T::zero() } else { q.max_value(s) }).collect());
            let policy = q.greedy();
            return Ok(Solution { values, q, policy, sweeps: sweep, residual: final_residual });
        }
    }
    Err(MdpError::NonConvergence { sweeps: MAX_SWEEPS, residual: residual.as_f64() })
}

/// Iterative policy evaluation of a deterministic or stochastic policy.
pub fn evaluate_policy<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &PolicyTable<T>,
    tolerance: T,
) -> Result<ValueTable<T>, MdpError> {
    let ns = mdp.num_states();
    let na = mdp.num_actions();
    policy.validate(ns, na)?;
    let r = mdp.expected_rewards();
    let mut v = vec![T::zero(); ns];
    let mut residual = T::infinity();
    for _ in 0..MAX_SWEEPS {
        let mut next = vec![T::zero(); ns];
        residual = T::zero();
        for s in 0..ns {
            if mdp.is_terminal(s) {
                continue;
            }
            let mut acc = T::zero();
            for a in 0..na {
                let pa = policy.prob(s, a);
                if pa == T::zero() {
                    continue;
                }
                let ev: T = mdp.transition_row(s, a).iter().zip(&v).map(|(&p, &x)| p * x).sum();
                acc += pa * (r[s * na + a] + mdp.gamma() * ev);
            }
            residual = residual.max((acc - v[s]).abs());
            next[s] = acc;
        }
        v = next;
        if residual <= tolerance {
            return Ok(ValueTable(v));
        }
    }
    Err(MdpError::NonConvergence { sweeps: MAX_SWEEPS, residual: residual.as_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpSpec;

    #[test]
    fn geometric_series_single_state() {
        let mdp = TabularMdp::new(MdpSpec {
            num_states: 1,
            num_actions: 1,
            transition: vec![vec![vec![1.0]]],
            reward_levels: vec![1.0],
            reward_dist: vec![vec![vec![1.0]]],
            gamma: 0.5,
            initial_dist: vec![1.0],
            terminal_states: vec![],
        })
        .unwrap();
        let sol = exact_value_iteration(&mdp, 1e-12).unwrap();
        assert!((sol.values.0[0] - 2.0f64).abs() < 1e-11);
        assert!(sol.residual <= 1e-12);
    }

    #[test]
    fn geometric_series_f32() {
        let mdp = TabularMdp::<f32>::new(MdpSpec {
            num_states: 1,
            num_actions: 1,
            transition: vec![vec![vec![1.0]]],
            reward_levels: vec![1.0],
            reward_dist: vec![vec![vec![1.0]]],
            gamma: 0.5,
            initial_dist: vec![1.0],
            terminal_states: vec![],
        })
        .unwrap();
        let sol = exact_value_iteration(&mdp, 1e-6).unwrap();
        assert!((sol.values.0[0] - 2.0f32).abs() < 1e-5);
    }

    #[test]
    fn non_convergence_reports_residual() {
        // gamma = 1 on a proper MDP converges; use an absurd tolerance instead.
        let mdp = TabularMdp::new(MdpSpec {
            num_states: 1,
            num_actions: 1,
            transition: vec![vec![vec![1.0]]],
            reward_levels: vec![1.0],
            reward_dist: vec![vec![vec![1.0]]],
            gamma: 0.999_999_9,
            initial_dist: vec![1.0],
            terminal_states: vec![],
        })
        .unwrap();
        match exact_value_iteration(&mdp, 1e-300) {
            Err(MdpError::NonConvergence { residual, .. }) => assert!(residual >= 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
