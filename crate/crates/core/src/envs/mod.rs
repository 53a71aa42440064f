//! Environments for the desk-scale experiments.
//!
//! Episodic environments report rewards as indices into
//! [`Environment::reward_levels`], so discrete reward channels can corrupt
//! them before a learner sees them.

mod bandit;
mod cartpole;
mod chain;
mod reward_process;

pub use bandit::TwoArmedBandit;
pub use cartpole::{CartPoleEnv, CartPoleState, Discretizer, TileCoder, CARTPOLE_MAX_STEPS};
pub use chain::{make_gridworld_chain, ChainSpec, ChainStart};
pub use reward_process::{sample_state_reward, RewardLaw, TableA1Row, TwoStateRewardProcess};

use thiserror::Error;

use crate::mdp::{MdpError, TabularMdp};
use crate::rng::{self, PeerRng};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called after the episode ended; call reset first")]
    StepAfterDone,
    #[error("action {0} out of range")]
    Action(usize),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep<O> {
    pub obs: O,
    pub reward_level: usize,
    /// Episode ended in an absorbing state (no bootstrap).
    pub terminal: bool,
    /// Episode cut by a time limit (bootstrap still valid).
    pub truncated: bool,
}

impl<O> EnvStep<O> {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Environment<T: Scalar> {
    type Obs: Clone;

    fn num_actions(&self) -> usize;
    fn reward_levels(&self) -> Vec<T>;
    fn reset(&mut self, rng: &mut PeerRng) -> Self::Obs;
    fn step(&mut self, action: usize, rng: &mut PeerRng) -> Result<EnvStep<Self::Obs>, EnvError>;
}

/// Episodic wrapper around a [`TabularMdp`] with an optional step cap.
pub struct MdpEnv<'a, T> {
    mdp: &'a TabularMdp<T>,
    state: usize,
    steps: usize,
    max_steps: Option<usize>,
    done: bool,
}

impl<'a, T: Scalar> MdpEnv<'a, T> {
    pub fn new(mdp: &'a TabularMdp<T>, max_steps: Option<usize>) -> Self {
        Self { mdp, state: 0, steps: 0, max_steps, done: true }
    }

    pub fn mdp(&self) -> &TabularMdp<T> {
        self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }
}

impl<T: Scalar> Environment<T> for MdpEnv<'_, T> {
    type Obs = usize;

    fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    fn reward_levels(&self) -> Vec<T> {
        self.mdp.reward_levels().to_vec()
    }

    fn reset(&mut self, rng: &mut PeerRng) -> usize {
        self.state = rng::categorical(self.mdp.initial_dist(), rng);
        self.steps = 0;
        self.done = self.mdp.is_terminal(self.state);
        self.state
    }

    /// Consumes two uniforms: reward level, then next state.
    fn step(&mut self, action: usize, rng: &mut PeerRng) -> Result<EnvStep<usize>, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        if action >= self.mdp.num_actions() {
            return Err(EnvError::Action(action));
        }
        let s = self.state;
        let level = rng::categorical(self.mdp.reward_row(s, action), rng);
        let next = rng::categorical(self.mdp.transition_row(s, action), rng);
        self.state = next;
        self.steps += 1;
        let terminal = self.mdp.is_terminal(next);
        let truncated = !terminal && self.max_steps.is_some_and(|m| self.steps >= m);
        self.done = terminal || truncated;
        Ok(EnvStep { obs: next, reward_level: level, terminal, truncated })
    }
}
