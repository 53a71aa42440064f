//! Learning algorithms under corrupted rewards: tabular Q-learning, phased
//! value iteration, REINFORCE and replay Q-learning with linear features, each
//! with an optional peer penalty.
//!
//! Every learner splits its randomness into three streams derived from the
//! run seed: environment and policy draws, reward corruption, and peer
//! sampling. Turning the peer term off or swapping in an identity channel
//! therefore leaves the environment trajectory untouched.

mod features;
mod phased;
mod qlearning;
mod reinforce;
mod replay;

pub use features::{CartPoleTiles, FeatureMap, LinearQ, OneHot, SoftmaxPolicy, Unit};
pub use phased::{affine_parts, debiased_error, phased_value_iteration, PhasedResult};
pub use qlearning::{evaluate_greedy_tabular, q_learning_peer};
pub use reinforce::{reinforce_peer, ReinforceBatch};
pub use replay::{evaluate_greedy, replay_q_peer, Transition};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::EnvError;
use crate::mdp::MdpError;
use crate::noise::{NoiseError, RewardChannel};
use crate::peer::PeerConfig;
use crate::rng::{self, splitmix64, PeerRng};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("value estimate {value} exceeded the divergence bound {bound}")]
    Divergence { value: f64, bound: f64 },
    #[error("gradient norm {0} is not finite")]
    Gradient(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaSchedule {
    Constant {
        alpha: f64,
    },
    /// `1 / (1 + n(s, a))^p` with `n` the prior visits of the updated cell.
    VisitPower {
        p: f64,
    },
    /// `1 / (1 + t)^p` with `t` the global update count.
    StepPower {
        p: f64,
    },
}

impl AlphaSchedule {
    /// Step sizes satisfy the Robbins-Monro conditions.
    pub fn is_robbins_monro(&self) -> bool {
        match *self {
            AlphaSchedule::Constant { .. } => false,
            AlphaSchedule::VisitPower { p } | AlphaSchedule::StepPower { p } => p > 0.5 && p <= 1.0,
        }
    }

    pub fn at(&self, t: u64, visits: u64) -> f64 {
        match *self {
            AlphaSchedule::Constant { alpha } => alpha,
            AlphaSchedule::VisitPower { p } => (1.0 + visits as f64).powf(-p),
            AlphaSchedule::StepPower { p } => (1.0 + t as f64).powf(-p),
        }
    }

    fn validate(&self) -> Result<(), LearnerError> {
        let ok = match *self {
            AlphaSchedule::Constant { alpha } => alpha > 0.0 && alpha <= 1.0,
            AlphaSchedule::VisitPower { p } | AlphaSchedule::StepPower { p } => p > 0.0 && p <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(LearnerError::Config(format!("invalid learning-rate schedule {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exploration {
    /// Linear from `start` to `end` over the first `fraction` of the step budget.
    EpsilonGreedy {
        start: f64,
        end: f64,
        fraction: f64,
    },
    Boltzmann {
        temperature: f64,
    },
}

impl Default for Exploration {
    fn default() -> Self {
        Exploration::EpsilonGreedy { start: 1.0, end: 0.05, fraction: 0.5 }
    }
}

impl Exploration {
    pub fn epsilon(&self, t: u64, total: u64) -> f64 {
        match *self {
            Exploration::EpsilonGreedy { start, end, fraction } => {
                let span = (fraction * total as f64).max(1.0);
                let frac = (t as f64 / span).min(1.0);
                start + (end - start) * frac
            }
            Exploration::Boltzmann { .. } => 0.0,
        }
    }

    /// ε-greedy consumes one uniform, plus an action draw when exploring;
    /// Boltzmann consumes one uniform.
    pub fn select<T: Scalar>(&self, q_row: &[T], t: u64, total: u64, rng: &mut PeerRng) -> usize {
        match *self {
            Exploration::EpsilonGreedy { .. } => {
                let u = rng::uniform(rng);
                if u < self.epsilon(t, total) {
                    rng.random_range(0..q_row.len())
                } else {
                    crate::mdp::argmax_lowest(q_row)
                }
            }
            Exploration::Boltzmann { temperature } => {
                let m = q_row.iter().map(|q| q.as_f64()).fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = q_row.iter().map(|q| ((q.as_f64() - m) / temperature).exp()).collect();
                let z: f64 = w.iter().sum();
                let p: Vec<f64> = w.iter().map(|x| x / z).collect();
                rng::categorical(&p, rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub alpha: AlphaSchedule,
    pub exploration: Exploration,
    /// Environment step budget (episodic learners) or update budget.
    pub total_steps: u64,
    /// Episode budget for policy-gradient learners.
    pub episodes: u64,
    /// Overrides the environment's discount when set.
    pub gamma: Option<f64>,
    pub seed: u64,
    pub peer: PeerConfig,
    /// Policy step size for co-training.
    pub beta: f64,
    /// Episode step cap for continuing MDPs.
    pub horizon: usize,
    /// Episodes per policy-gradient update.
    pub batch_episodes: usize,
    /// Minibatch size for replay updates.
    pub batch: usize,
    pub buffer_capacity: usize,
    /// Window for the final-return summary.
    pub window: usize,
    /// Gradient norms above this are rescaled to it.
    pub max_grad_norm: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: AlphaSchedule::VisitPower { p: 0.8 },
            exploration: Exploration::default(),
            total_steps: 10_000,
            episodes: 1_000,
            gamma: None,
            seed: 0,
            peer: PeerConfig::off(),
            beta: 0.1,
            horizon: 100,
            batch_episodes: 1,
            batch: 32,
            buffer_capacity: 10_000,
            window: crate::metrics::DEFAULT_WINDOW,
            max_grad_norm: 1e3,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        self.alpha.validate()?;
        self.peer.schedule.validate().map_err(LearnerError::Config)?;
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(LearnerError::Config(format!("discount {g} outside (0, 1]")));
            }
        }
        if self.horizon == 0 || self.batch == 0 || self.batch_episodes == 0 || self.buffer_capacity == 0 {
            return Err(LearnerError::Config("horizon, batch sizes and capacity must be positive".into()));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(LearnerError::Config("max_grad_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Independent random streams of one run.
pub(crate) struct Streams {
    pub env: PeerRng,
    pub noise: PeerRng,
    pub peer: PeerRng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self {
            env: rng::seeded(seed),
            noise: rng::seeded(splitmix64(seed ^ 0x6E6F_6973_6500_0001)),
            peer: rng::seeded(splitmix64(seed ^ 0x7065_6572_0000_0002)),
        }
    }
}

/// Corrupts a level when a channel is present; always consumes one uniform.
pub(crate) fn observe<T: Scalar>(level: usize, channel: Option<&RewardChannel<T>>, rng: &mut PeerRng) -> usize {
    let u = rng::uniform(rng);
    channel.map_or(level, |c| c.corrupt_with_uniform(level, u))
}

pub(crate) fn check_channel<T: Scalar>(channel: Option<&RewardChannel<T>>, levels: usize) -> Result<(), LearnerError> {
    match channel {
        Some(c) if c.size() != levels => {
            Err(LearnerError::Config(format!("channel has {} levels, environment has {levels}", c.size())))
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_schedule_endpoints() {
        let e = Exploration::default();
        assert_eq!(e.epsilon(0, 100), 1.0);
        assert!((e.epsilon(50, 100) - 0.05).abs() < 1e-15);
        assert!((e.epsilon(99, 100) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn robbins_monro_flag() {
        assert!(AlphaSchedule::VisitPower { p: 0.8 }.is_robbins_monro());
        assert!(!AlphaSchedule::VisitPower { p: 0.5 }.is_robbins_monro());
        assert!(!AlphaSchedule::Constant { alpha: 0.1 }.is_robbins_monro());
    }
}
