use crate::mdp::{MdpError, MdpSpec, TabularMdp};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStart {
    Left,
    Uniform,
}

/// Left/right corridor. Action 0 moves left, action 1 moves right; with
/// probability `slip` the opposite move happens. Walls keep the agent in place.
///
/// The reward is binary with levels `{0, 1}`: the high level is drawn with the
/// probability of landing in a goal cell.
#[derive(Debug, Clone)]
pub struct ChainSpec<T> {
    pub length: usize,
    pub slip: T,
    pub goal_cells: Vec<usize>,
    /// Goal cells absorb the episode when set; otherwise the chain is continuing.
    pub terminal_goal: bool,
    pub gamma: T,
    pub start: ChainStart,
}

impl<T: Scalar> ChainSpec<T> {
    /// Goal at the right end, continuing, start on the left.
    pub fn right_goal(length: usize, slip: T, gamma: T) -> Self {
        Self {
            length,
            slip,
            goal_cells: vec![length.saturating_sub(1)],
            terminal_goal: false,
            gamma,
            start: ChainStart::Left,
        }
    }
}

pub fn make_gridworld_chain<T: Scalar>(spec: &ChainSpec<T>) -> Result<TabularMdp<T>, MdpError> {
    let n = spec.length;
    if n < 2 {
        return Err(MdpError::Parameter(format!("chain length must be at least 2, got {n}")));
    }
    if !(spec.slip >= T::zero() && spec.slip <= T::lit(0.5)) {
        return Err(MdpError::Parameter(format!("slip must lie in [0, 0.5], got {}", spec.slip)));
    }
    if let Some(&g) = spec.goal_cells.iter().find(|&&g| g >= n) {
        return Err(MdpError::StateOutOfRange(g));
    }
    let is_goal = |s: usize| spec.goal_cells.contains(&s);
    let mut transition = vec![vec![vec![T::zero(); n]; 2]; n];
    let mut reward_dist = vec![vec![vec![T::zero(); 2]; 2]; n];
    for s in 0..n {
        let left = s.saturating_sub(1);
        let right = (s + 1).min(n - 1);
        for a in 0..2 {
            let row = &mut transition[s][a];
            if spec.terminal_goal && is_goal(s) {
                row[s] = T::one();
                reward_dist[s][a] = vec![T::one(), T::zero()];
                continue;
            }
            let (intended, other) = if a == 0 { (left, right) } else { (right, left) };
            row[intended] += T::one() - spec.slip;
            row[other] += spec.slip;
            let p_goal: T = (0..n).filter(|&s2| is_goal(s2)).map(|s2| row[s2]).sum();
            reward_dist[s][a] = vec![T::one() - p_goal, p_goal];
        }
    }
    let initial_dist = match spec.start {
        ChainStart::Left => {
            let mut d = vec![T::zero(); n];
            d[0] = T::one();
            d
        }
        ChainStart::Uniform => vec![T::one() / T::lit(n as f64); n],
    };
    TabularMdp::new(MdpSpec {
        num_states: n,
        num_actions: 2,
        transition,
        reward_levels: vec![T::zero(), T::one()],
        reward_dist,
        gamma: spec.gamma,
        initial_dist,
        terminal_states: if spec.terminal_goal { spec.goal_cells.clone() } else { vec![] },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::exact_value_iteration;

    #[test]
    fn length_two_without_slip_is_deterministic() {
        let mdp = make_gridworld_chain(&ChainSpec::right_goal(2, 0.0, 0.9)).unwrap();
        assert_eq!(mdp.transition_row(0, 1), &[0.0, 1.0]);
        assert_eq!(mdp.transition_row(1, 0), &[1.0, 0.0]);
    }

    #[test]
    fn right_goal_optimal_policy_goes_right() {
        let mdp = make_gridworld_chain(&ChainSpec::right_goal(5, 0.1, 0.9)).unwrap();
        let sol = exact_value_iteration(&mdp, 1e-12).unwrap();
        assert_eq!(sol.policy.deterministic_actions().unwrap(), &[1, 1, 1, 1, 1]);
    }

    #[test]
    fn half_slip_makes_actions_equivalent() {
        let mdp = make_gridworld_chain(&ChainSpec::<f64>::right_goal(4, 0.5, 0.9)).unwrap();
        for s in 0..4 {
            assert_eq!(mdp.transition_row(s, 0), mdp.transition_row(s, 1));
        }
        let sol = exact_value_iteration(&mdp, 1e-12).unwrap();
        for s in 0..4 {
            assert!((sol.q.get(s, 0) - sol.q.get(s, 1)).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_gridworld_chain(&ChainSpec::right_goal(1, 0.0, 0.9)).is_err());
        assert!(make_gridworld_chain(&ChainSpec::right_goal(3, 0.6, 0.9)).is_err());
    }
}
