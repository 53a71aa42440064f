//! Finite MDPs, exact dynamic-programming oracles and sampling.
//!
//! Rewards are stored as indices into an ordered table of reward levels with
//! a per-(state, action) distribution over levels, so discrete corruption
//! channels can act on them directly. Terminal states are absorbing with zero
//! reward; their value is fixed at zero.

mod sample;
mod solve;

pub use sample::{rollout, GenerativeModel, Step, Trajectory};
pub use solve::{evaluate_policy, exact_value_iteration, value_iteration_with_rewards, Solution, MAX_SWEEPS};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{what} row {index} sums to {sum}, expected 1")]
    NotStochastic { what: &'static str, index: usize, sum: f64 },
    #[error("negative probability in {0}")]
    Negative(&'static str),
    #[error("discount {0} outside (0, 1]")]
    InvalidGamma(f64),
    #[error("gamma = 1 requires every policy to reach a terminal state; state {0} can avoid termination")]
    ImproperEpisodic(usize),
    #[error("value iteration did not converge after {sweeps} sweeps (residual {residual})")]
    NonConvergence { sweeps: usize, residual: f64 },
    #[error("state {0} out of range")]
    StateOutOfRange(usize),
    #[error("action {0} out of range")]
    ActionOutOfRange(usize),
    #[error("state {0} is terminal; the episode is over")]
    TerminalQueried(usize),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Plain-data description used to build a [`TabularMdp`].
#[derive(Debug, Clone)]
pub struct MdpSpec<T> {
    pub num_states: usize,
    pub num_actions: usize,
    /// `transition[s][a][s']`.
    pub transition: Vec<Vec<Vec<T>>>,
    /// Ordered reward values `R_1 .. R_|R|`.
    pub reward_levels: Vec<T>,
    /// `reward_dist[s][a][level]`.
    pub reward_dist: Vec<Vec<Vec<T>>>,
    pub gamma: T,
    pub initial_dist: Vec<T>,
    pub terminal_states: Vec<usize>,
}

/// Finite MDP `<S, A, R, P, gamma>` with initial distribution and terminals.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<T> {
    num_states: usize,
    num_actions: usize,
    transition: Vec<T>,
    reward_levels: Vec<T>,
    reward_dist: Vec<T>,
    gamma: T,
    initial_dist: Vec<T>,
    terminal: Vec<bool>,
    r_max: T,
}

fn check_row<T: Scalar>(row: &[T], what: &'static str, index: usize) -> Result<(), MdpError> {
    let mut sum = T::zero();
    for &p in row {
        if p < T::zero() || !p.is_finite() {
            return Err(MdpError::Negative(what));
        }
        sum += p;
    }
    if (sum - T::one()).abs() > T::stochastic_tol() {
        return Err(MdpError::NotStochastic { what, index, sum: sum.as_f64() });
    }
    Ok(())
}

impl<T: Scalar> TabularMdp<T> {
    pub fn new(spec: MdpSpec<T>) -> Result<Self, MdpError> {
        let MdpSpec {
            num_states: ns,
            num_actions: na,
            transition,
            reward_levels,
            reward_dist,
            gamma,
            initial_dist,
            terminal_states,
        } = spec;
        if ns == 0 || na == 0 || reward_levels.is_empty() {
            return Err(MdpError::Dimension("need at least one state, action and reward level".into()));
        }
        let nl = reward_levels.len();
        if transition.len() != ns || reward_dist.len() != ns || initial_dist.len() != ns {
            return Err(MdpError::Dimension("per-state tables must have |S| rows".into()));
        }
        if !(gamma > T::zero() && gamma <= T::one()) {
            return Err(MdpError::InvalidGamma(gamma.as_f64()));
        }
        let mut flat_p = Vec::with_capacity(ns * na * ns);
        let mut flat_r = Vec::with_capacity(ns * na * nl);
        for s in 0..ns {
            if transition[s].len() != na || reward_dist[s].len() != na {
                return Err(MdpError::Dimension(format!("state {s} must have |A| = {na} action rows")));
            }
            for a in 0..na {
                let p = &transition[s][a];
                let r = &reward_dist[s][a];
                if p.len() != ns || r.len() != nl {
                    return Err(MdpError::Dimension(format!("row ({s}, {a}) has wrong length")));
                }
                check_row(p, "transition", s * na + a)?;
                check_row(r, "reward distribution", s * na + a)?;
                flat_p.extend_from_slice(p);
                flat_r.extend_from_slice(r);
            }
        }
        check_row(&initial_dist, "initial distribution", 0)?;
        let mut terminal = vec![false; ns];
        for &t in &terminal_states {
            if t >= ns {
                return Err(MdpError::StateOutOfRange(t));
            }
            terminal[t] = true;
        }
        let r_max = reward_levels.iter().fold(T::zero(), |m, &r| m.max(r.abs()));
        let mdp = Self {
            num_states: ns,
            num_actions: na,
            transition: flat_p,
            reward_levels,
            reward_dist: flat_r,
            gamma,
            initial_dist,
            terminal,
            r_max,
        };
        if gamma == T::one() {
            mdp.check_proper()?;
        }
        Ok(mdp)
    }

    /// Every policy must terminate with probability one when `gamma = 1`.
    ///
    /// A state is safe once every action puts positive mass on already-safe
    /// states; all states must eventually become safe.
    fn check_proper(&self) -> Result<(), MdpError> {
        let mut safe = self.terminal.clone();
        loop {
            let mut changed = false;
            for s in 0..self.num_states {
                if safe[s] {
                    continue;
                }
                let all_actions_progress = (0..self.num_actions)
                    .all(|a| self.transition_row(s, a).iter().enumerate().any(|(s2, &p)| p > T::zero() && safe[s2]));
                if all_actions_progress {
                    safe[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        match safe.iter().position(|&ok| !ok) {
            Some(s) => Err(MdpError::ImproperEpisodic(s)),
            None => Ok(()),
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_levels(&self) -> usize {
        self.reward_levels.len()
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn r_max(&self) -> T {
        self.r_max
    }

    pub fn reward_levels(&self) -> &[T] {
        &self.reward_levels
    }

    pub fn initial_dist(&self) -> &[T] {
        &self.initial_dist
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_states(&self) -> Vec<usize> {
        (0..self.num_states).filter(|&s| self.terminal[s]).collect()
    }

    /// `P[s][a][.]`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[T] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    /// Distribution over reward levels for `(s, a)`.
    pub fn reward_row(&self, s: usize, a: usize) -> &[T] {
        let nl = self.reward_levels.len();
        let start = (s * self.num_actions + a) * nl;
        &self.reward_dist[start..start + nl]
    }

    pub fn expected_reward(&self, s: usize, a: usize) -> T {
        self.reward_row(s, a).iter().zip(&self.reward_levels).map(|(&p, &r)| p * r).sum()
    }

    /// `E[r(s, a)]` for every pair, laid out `s * |A| + a`.
    pub fn expected_rewards(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_states * self.num_actions);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                out.push(self.expected_reward(s, a));
            }
        }
        out
    }

    /// Non-terminal `(state, action)` cells in row-major order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        (0..self.num_states)
            .filter(|&s| !self.terminal[s])
            .flat_map(|s| (0..self.num_actions).map(move |a| (s, a)))
            .collect()
    }

    /// Same MDP with every reward level mapped through `f`.
    pub fn map_reward_levels(&self, f: impl Fn(T) -> T) -> Self {
        let mut out = self.clone();
        out.reward_levels = self.reward_levels.iter().map(|&r| f(r)).collect();
        out.r_max = out.reward_levels.iter().fold(T::zero(), |m, &r| m.max(r.abs()));
        out
    }

    pub fn check_state(&self, s: usize) -> Result<(), MdpError> {
        if s < self.num_states {
            Ok(())
        } else {
            Err(MdpError::StateOutOfRange(s))
        }
    }

    pub fn check_action(&self, a: usize) -> Result<(), MdpError> {
        if a < self.num_actions {
            Ok(())
        } else {
            Err(MdpError::ActionOutOfRange(a))
        }
    }
}

/// Value per state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable<T>(pub Vec<T>);

impl<T: Scalar> ValueTable<T> {
    pub fn sup_distance(&self, other: &Self) -> T {
        self.0.iter().zip(&other.0).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

/// Action value per `(state, action)`, laid out `s * |A| + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    num_actions: usize,
    values: Vec<T>,
}

impl<T: Scalar> QTable<T> {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self { num_actions, values: vec![T::zero(); num_states * num_actions] }
    }

    pub fn from_values(num_actions: usize, values: Vec<T>) -> Self {
        assert!(num_actions > 0 && values.len().is_multiple_of(num_actions));
        Self { num_actions, values }
    }

    pub fn num_states(&self) -> usize {
        self.values.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> T {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: T) {
        self.values[s * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[T] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn max_value(&self, s: usize) -> T {
        self.row(s).iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        argmax_lowest(self.row(s))
    }

    /// Deterministic greedy policy, ties to the lowest action index.
    pub fn greedy(&self) -> PolicyTable<T> {
        PolicyTable::Deterministic((0..self.num_states()).map(|s| self.greedy_action(s)).collect())
    }

    pub fn sup_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }
}

/// Index of the maximum, ties broken by the lowest index.
pub fn argmax_lowest<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Deterministic (action per state) or stochastic (distribution per state) policy.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyTable<T> {
    Deterministic(Vec<usize>),
    Stochastic(Vec<Vec<T>>),
}

impl<T: Scalar> PolicyTable<T> {
    pub fn num_states(&self) -> usize {
        match self {
            PolicyTable::Deterministic(v) => v.len(),
            PolicyTable::Stochastic(v) => v.len(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, PolicyTable::Deterministic(_))
    }

    pub fn deterministic_actions(&self) -> Option<&[usize]> {
        match self {
            PolicyTable::Deterministic(v) => Some(v),
            PolicyTable::Stochastic(_) => None,
        }
    }

    /// Probability of `a` in `s`.
    pub fn prob(&self, s: usize, a: usize) -> T {
        match self {
            PolicyTable::Deterministic(v) => {
                if v[s] == a {
                    T::one()
                } else {
                    T::zero()
                }
            }
            PolicyTable::Stochastic(rows) => rows[s][a],
        }
    }

    pub fn validate(&self, num_states: usize, num_actions: usize) -> Result<(), MdpError> {
        if self.num_states() != num_states {
            return Err(MdpError::Dimension("policy has wrong number of states".into()));
        }
        match self {
            PolicyTable::Deterministic(v) => {
                if let Some(&a) = v.iter().find(|&&a| a >= num_actions) {
                    return Err(MdpError::ActionOutOfRange(a));
                }
            }
            PolicyTable::Stochastic(rows) => {
                for (s, row) in rows.iter().enumerate() {
                    if row.len() != num_actions {
                        return Err(MdpError::Dimension(format!("policy row {s} has wrong length")));
                    }
                    check_row(row, "policy", s)?;
                }
            }
        }
        Ok(())
    }
}
