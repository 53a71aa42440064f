use super::{EnvError, EnvStep, Environment};
use crate::rng::{self, PeerRng};
use crate::scalar::Scalar;

/// One-state, one-step episodes with Bernoulli arms over reward levels `{0, 1}`.
#[derive(Debug, Clone)]
pub struct TwoArmedBandit {
    means: [f64; 2],
    done: bool,
}

impl Default for TwoArmedBandit {
    fn default() -> Self {
        Self::new([0.8, 0.2]).expect("default means are valid")
    }
}

impl TwoArmedBandit {
    pub fn new(means: [f64; 2]) -> Result<Self, EnvError> {
        if means.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(EnvError::Parameter("arm means must lie in [0, 1]".into()));
        }
        Ok(Self { means, done: true })
    }

    pub fn means(&self) -> [f64; 2] {
        self.means
    }

    pub fn best_arm(&self) -> usize {
        if self.means[1] > self.means[0] {
            1
        } else {
            0
        }
    }
}

impl<T: Scalar> Environment<T> for TwoArmedBandit {
    type Obs = usize;

    fn num_actions(&self) -> usize {
        2
    }

    fn reward_levels(&self) -> Vec<T> {
        vec![T::zero(), T::one()]
    }

    fn reset(&mut self, _rng: &mut PeerRng) -> usize {
        self.done = false;
        0
    }

    fn step(&mut self, action: usize, rng: &mut PeerRng) -> Result<EnvStep<usize>, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        if action > 1 {
            return Err(EnvError::Action(action));
        }
        self.done = true;
        let level = usize::from(rng::uniform(rng) < self.means[action]);
        Ok(EnvStep { obs: 0, reward_level: level, terminal: true, truncated: false })
    }
}
