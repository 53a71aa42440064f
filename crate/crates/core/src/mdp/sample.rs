use super::{MdpError, PolicyTable, TabularMdp};
use crate::noise::RewardChannel;
use crate::rng::{self, PeerRng};
use crate::scalar::Scalar;

/// Sampler `(s, a) -> (reward level, s')` that counts its calls.
///
/// Each call consumes two uniforms: the reward level first, then the next state.
pub struct GenerativeModel<'a, T> {
    mdp: &'a TabularMdp<T>,
    rng: PeerRng,
    calls: u64,
}

impl<'a, T: Scalar> GenerativeModel<'a, T> {
    pub fn new(mdp: &'a TabularMdp<T>, seed: u64) -> Self {
        Self { mdp, rng: rng::seeded(seed), calls: 0 }
    }

    pub fn mdp(&self) -> &TabularMdp<T> {
        self.mdp
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn rng_mut(&mut self) -> &mut PeerRng {
        &mut self.rng
    }

    pub fn sample_step(&mut self, s: usize, a: usize) -> Result<(usize, usize), MdpError> {
        self.mdp.check_state(s)?;
        self.mdp.check_action(a)?;
        if self.mdp.is_terminal(s) {
            return Err(MdpError::TerminalQueried(s));
        }
        self.calls += 1;
        let level = rng::categorical(self.mdp.reward_row(s, a), &mut self.rng);
        let next = rng::categorical(self.mdp.transition_row(s, a), &mut self.rng);
        Ok((level, next))
    }
}

/// One transition; `observed_*` fields carry the corrupted reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<T> {
    pub state: usize,
    pub action: usize,
    pub level: usize,
    pub observed_level: usize,
    pub reward: T,
    pub observed_reward: T,
    pub next_state: usize,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub steps: Vec<Step<T>>,
    pub gamma: T,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn clean_return(&self) -> T {
        discounted(self.steps.iter().map(|s| s.reward), self.gamma)
    }

    pub fn observed_return(&self) -> T {
        discounted(self.steps.iter().map(|s| s.observed_reward), self.gamma)
    }

    /// Undiscounted clean reward sum.
    pub fn clean_total(&self) -> T {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

fn discounted<T: Scalar>(rewards: impl Iterator<Item = T>, gamma: T) -> T {
    let mut g = T::one();
    let mut total = T::zero();
    for r in rewards {
        total += g * r;
        g *= gamma;
    }
    total
}

/// Runs `policy` for at most `horizon` steps from a draw of the initial distribution.
///
/// Per step the stream consumes: policy draw (stochastic policies only),
/// reward level, next state, then one corruption uniform whether or not a
/// channel is supplied, so an identity channel reproduces the clean run.
pub fn rollout<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &PolicyTable<T>,
    horizon: usize,
    rng: &mut PeerRng,
    channel: Option<&RewardChannel<T>>,
) -> Result<Trajectory<T>, MdpError> {
    policy.validate(mdp.num_states(), mdp.num_actions())?;
    if let Some(c) = channel {
        if c.size() != mdp.num_levels() {
            return Err(MdpError::Dimension("channel size must equal the number of reward levels".into()));
        }
    }
    let levels = mdp.reward_levels();
    let mut s = rng::categorical(mdp.initial_dist(), rng);
    let mut steps = Vec::new();
    while steps.len() < horizon && !mdp.is_terminal(s) {
        let a = match policy {
            PolicyTable::Deterministic(v) => v[s],
            PolicyTable::Stochastic(rows) => rng::categorical(&rows[s], rng),
        };
        let level = rng::categorical(mdp.reward_row(s, a), rng);
        let next = rng::categorical(mdp.transition_row(s, a), rng);
        let u = rng::uniform(rng);
        let observed_level = channel.map_or(level, |c| c.corrupt_with_uniform(level, u));
        steps.push(Step {
            state: s,
            action: a,
            level,
            observed_level,
            reward: levels[level],
            observed_reward: levels[observed_level],
            next_state: next,
            done: mdp.is_terminal(next),
        });
        s = next;
    }
    Ok(Trajectory { steps, gamma: mdp.gamma() })
}
