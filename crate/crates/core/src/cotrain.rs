//! Two-agent co-training on masked views of one latent chain.
//!
//! Each agent sees a subset of the latent state's coordinates. Every round
//! both agents roll episodes in their own view, each agent's steps are
//! relabeled by the partner's greedy action at the mapped observation, and
//! both policies take one ascent step on
//! `RL + BC(partner labels) - xi * BC(shuffled (j, k) pairs)`.

use std::time::Instant;

use rand::Rng;
use thiserror::Error;

use crate::envs::{make_gridworld_chain, ChainSpec, EnvError, EnvStep, Environment, MdpEnv};
use crate::learners::{FeatureMap, SoftmaxPolicy};
use crate::mdp::{MdpError, TabularMdp};
use crate::metrics::{MetricRow, RunResult};
use crate::peerbc::PROB_FLOOR;
use crate::rng::{self, derive_seed, PeerRng};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum CotrainError {
    #[error("view configuration: {0}")]
    Config(String),
    #[error("observation {view} is not the view of latent state {latent}")]
    Mapping { latent: usize, view: usize },
    #[error("non-finite gradient norm {0}")]
    Gradient(f64),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    A,
    B,
}

impl View {
    fn index(self) -> u64 {
        match self {
            View::A => 0,
            View::B => 1,
        }
    }
}

/// Latent coordinates hidden from one view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewMask {
    pub view: View,
    pub hidden: Vec<usize>,
}

/// Tabular MDP whose states are mixed-radix tuples, most significant
/// coordinate first.
#[derive(Debug, Clone)]
pub struct MaskedChain<T> {
    mdp: TabularMdp<T>,
    radices: Vec<usize>,
}

impl<T: Scalar> MaskedChain<T> {
    pub fn new(mdp: TabularMdp<T>, radices: Vec<usize>) -> Result<Self, CotrainError> {
        if radices.contains(&0) || radices.iter().product::<usize>() != mdp.num_states() {
            return Err(CotrainError::Config("radices must multiply to the number of states".into()));
        }
        Ok(Self { mdp, radices })
    }

    /// Six-cell right-goal chain (continuing, start at the left end) with
    /// position `p` encoded as `(p / 3, p % 3)`.
    pub fn six_cell(slip: T, gamma: T) -> Result<Self, CotrainError> {
        let mdp = make_gridworld_chain(&ChainSpec::right_goal(6, slip, gamma))?;
        Self::new(mdp, vec![2, 3])
    }

    pub fn mdp(&self) -> &TabularMdp<T> {
        &self.mdp
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    fn check(&self, mask: &ViewMask) -> Result<(), CotrainError> {
        let mut seen = vec![false; self.radices.len()];
        for &c in &mask.hidden {
            if c >= seen.len() || seen[c] {
                return Err(CotrainError::Config(format!("bad hidden coordinate {c}")));
            }
            seen[c] = true;
        }
        Ok(())
    }

    pub fn view_size(&self, mask: &ViewMask) -> usize {
        (0..self.radices.len()).filter(|c| !mask.hidden.contains(c)).map(|c| self.radices[c]).product()
    }

    /// Mixed-radix index of the visible coordinates of `latent`.
    pub fn view_index(&self, latent: usize, mask: &ViewMask) -> usize {
        let mut rest = latent;
        let mut coords = vec![0; self.radices.len()];
        for c in (0..self.radices.len()).rev() {
            coords[c] = rest % self.radices[c];
            rest /= self.radices[c];
        }
        (0..self.radices.len()).filter(|c| !mask.hidden.contains(c)).fold(0, |acc, c| acc * self.radices[c] + coords[c])
    }
}

/// View observation carrying the latent index it was rendered from; only
/// [`ViewMapping`] reads the tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaggedObs {
    latent: usize,
    view: usize,
}

impl TaggedObs {
    pub fn view(&self) -> usize {
        self.view
    }
}

/// `f_{from -> to}` through the simulator's latent state.
#[derive(Debug, Clone)]
pub struct ViewMapping<'a, T> {
    chain: &'a MaskedChain<T>,
    from: ViewMask,
    to: ViewMask,
}

impl<'a, T: Scalar> ViewMapping<'a, T> {
    pub fn new(chain: &'a MaskedChain<T>, from: ViewMask, to: ViewMask) -> Result<Self, CotrainError> {
        chain.check(&from)?;
        chain.check(&to)?;
        Ok(Self { chain, from, to })
    }

    pub fn map(&self, obs: &TaggedObs) -> Result<TaggedObs, CotrainError> {
        if obs.latent >= self.chain.mdp.num_states() || self.chain.view_index(obs.latent, &self.from) != obs.view {
            return Err(CotrainError::Mapping { latent: obs.latent, view: obs.view });
        }
        Ok(TaggedObs { latent: obs.latent, view: self.chain.view_index(obs.latent, &self.to) })
    }

    pub fn inverse(&self) -> ViewMapping<'a, T> {
        ViewMapping { chain: self.chain, from: self.to.clone(), to: self.from.clone() }
    }
}

/// The latent chain seen through one mask.
pub struct ViewEnv<'a, T> {
    inner: MdpEnv<'a, T>,
    chain: &'a MaskedChain<T>,
    mask: ViewMask,
}

impl<'a, T: Scalar> ViewEnv<'a, T> {
    pub fn new(chain: &'a MaskedChain<T>, mask: ViewMask, horizon: usize) -> Result<Self, CotrainError> {
        chain.check(&mask)?;
        Ok(Self { inner: MdpEnv::new(&chain.mdp, Some(horizon)), chain, mask })
    }

    fn tag(&self, latent: usize) -> TaggedObs {
        TaggedObs { latent, view: self.chain.view_index(latent, &self.mask) }
    }
}

impl<T: Scalar> Environment<T> for ViewEnv<'_, T> {
    type Obs = TaggedObs;

    fn num_actions(&self) -> usize {
        self.chain.mdp.num_actions()
    }

    fn reward_levels(&self) -> Vec<T> {
        self.chain.mdp.reward_levels().to_vec()
    }

    fn reset(&mut self, rng: &mut PeerRng) -> TaggedObs {
        let s = self.inner.reset(rng);
        self.tag(s)
    }

    fn step(&mut self, action: usize, rng: &mut PeerRng) -> Result<EnvStep<TaggedObs>, EnvError> {
        let st = self.inner.step(action, rng)?;
        Ok(EnvStep {
            obs: self.tag(st.obs),
            reward_level: st.reward_level,
            terminal: st.terminal,
            truncated: st.truncated,
        })
    }
}

/// One-hot over the view index.
#[derive(Debug, Clone, Copy)]
pub struct ViewOneHot(pub usize);

impl FeatureMap<TaggedObs> for ViewOneHot {
    fn dim(&self) -> usize {
        self.0
    }

    fn active(&self, obs: &TaggedObs, out: &mut Vec<usize>) {
        out.clear();
        out.push(obs.view);
    }
}

/// Steps rolled by one agent in one round.
#[derive(Debug, Clone, Default)]
pub struct CtBatch<T> {
    pub obs: Vec<TaggedObs>,
    pub actions: Vec<usize>,
    /// Discounted returns-to-go of the clean rewards.
    pub returns: Vec<T>,
    /// Partner labels; empty until relabeled.
    pub labels: Vec<usize>,
    pub episode_returns: Vec<f64>,
}

/// Per-step means of the three objective terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtTerms<T> {
    pub rl: T,
    pub bc: T,
    pub peer: T,
}

impl<T: Scalar> CtTerms<T> {
    pub fn total(&self, xi: T) -> T {
        self.rl + self.bc - xi * self.peer
    }
}

fn floored_log<T: Scalar>(policy: &SoftmaxPolicy<T>, view: usize, a: usize) -> T {
    policy.probs(&[view])[a].max(T::lit(PROB_FLOOR)).ln()
}

impl<T: Scalar> CtBatch<T> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Surrogate values `(1/N) sum q_i log pi(a_i|s_i)`, `(1/N) sum log pi(l_i|s_i)`
    /// and `(1/N) sum log pi(l_k|s_j)` with fresh `(j, k)` drawn per step.
    pub fn objective(&self, policy: &SoftmaxPolicy<T>, xi: T, rng: &mut PeerRng) -> CtTerms<T> {
        let n = self.len();
        let inv = T::one() / T::lit(n.max(1) as f64);
        let mut terms = CtTerms { rl: T::zero(), bc: T::zero(), peer: T::zero() };
        for i in 0..n {
            let v = self.obs[i].view;
            terms.rl += self.returns[i] * floored_log(policy, v, self.actions[i]);
            if !self.labels.is_empty() {
                terms.bc += floored_log(policy, v, self.labels[i]);
                if xi != T::zero() {
                    let j = rng.random_range(0..n);
                    let k = rng.random_range(0..n);
                    terms.peer += floored_log(policy, self.obs[j].view, self.labels[k]);
                }
            }
        }
        CtTerms { rl: terms.rl * inv, bc: terms.bc * inv, peer: terms.peer * inv }
    }

    /// Gradient of [`CtBatch::objective`]; the BC and peer terms are dropped
    /// when the batch carries no labels, and no draws are made when `xi = 0`.
    pub fn gradient(&self, policy: &SoftmaxPolicy<T>, xi: T, rng: &mut PeerRng) -> Vec<T> {
        let n = self.len();
        let mut grad = vec![T::zero(); policy.theta().len()];
        let mut tmp = Vec::new();
        let mut add = |view: usize, a: usize, scale: T, grad: &mut [T]| {
            tmp.clear();
            policy.grad_log_prob(&[view], a, &mut tmp);
            for &(idx, g) in &tmp {
                grad[idx] += scale * g;
            }
        };
        let inv = T::one() / T::lit(n.max(1) as f64);
        for i in 0..n {
            let v = self.obs[i].view;
            add(v, self.actions[i], self.returns[i] * inv, &mut grad);
            if !self.labels.is_empty() {
                add(v, self.labels[i], inv, &mut grad);
                if xi != T::zero() {
                    let j = rng.random_range(0..n);
                    let k = rng.random_range(0..n);
                    add(self.obs[j].view, self.labels[k], -xi * inv, &mut grad);
                }
            }
        }
        grad
    }

    /// Share of fresh `(j, k)` pairs on which `policy`'s greedy action at
    /// `s_j` equals the label `l_k`.
    pub fn shuffled_agreement(&self, policy: &SoftmaxPolicy<T>, rng: &mut PeerRng) -> f64 {
        let n = self.len();
        if n == 0 || self.labels.is_empty() {
            return 0.0;
        }
        let hits = (0..n)
            .filter(|_| {
                let j = rng.random_range(0..n);
                let k = rng.random_range(0..n);
                policy.greedy(&[self.obs[j].view]) == self.labels[k]
            })
            .count();
        hits as f64 / n as f64
    }
}

/// Rolls `episodes` episodes of `policy` in `env`, sampling actions from the
/// env stream.
pub fn roll<T: Scalar>(
    env: &mut ViewEnv<'_, T>,
    policy: &SoftmaxPolicy<T>,
    episodes: usize,
    horizon: usize,
    gamma: T,
    rng: &mut PeerRng,
) -> Result<CtBatch<T>, CotrainError> {
    let levels = env.reward_levels();
    let mut batch = CtBatch::default();
    for _ in 0..episodes {
        let mut obs = env.reset(rng);
        let mut rewards = Vec::new();
        for _ in 0..horizon {
            let a = policy.sample(&[obs.view], rng);
            let step = env.step(a, rng)?;
            batch.obs.push(obs);
            batch.actions.push(a);
            rewards.push(levels[step.reward_level]);
            let done = step.done();
            obs = step.obs;
            if done {
                break;
            }
        }
        let mut acc = T::zero();
        let mut to_go = vec![T::zero(); rewards.len()];
        for t in (0..rewards.len()).rev() {
            acc = rewards[t] + gamma * acc;
            to_go[t] = acc;
        }
        batch.returns.extend(to_go);
        batch.episode_returns.push(rewards.iter().map(|r| r.as_f64()).sum());
    }
    Ok(batch)
}

/// How the partner turns its policy into one hard label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// Argmax, lowest action on ties.
    Greedy,
    /// One action drawn from the partner's distribution.
    #[default]
    Sampled,
}

/// Replaces the labels of `batch` with the partner's action at the mapped
/// observation. `Sampled` consumes one uniform per step from `rng`.
pub fn relabel<T: Scalar>(
    batch: &mut CtBatch<T>,
    partner: &SoftmaxPolicy<T>,
    mapping: &ViewMapping<'_, T>,
    rule: LabelRule,
    rng: &mut PeerRng,
) -> Result<(), CotrainError> {
    let mut labels = Vec::with_capacity(batch.len());
    for o in &batch.obs {
        let m = mapping.map(o)?;
        labels.push(match rule {
            LabelRule::Greedy => partner.greedy(&[m.view]),
            LabelRule::Sampled => partner.sample(&[m.view], rng),
        });
    }
    batch.labels = labels;
    Ok(())
}

pub fn roll_and_relabel<T: Scalar>(
    env: &mut ViewEnv<'_, T>,
    policy: &SoftmaxPolicy<T>,
    partner: &SoftmaxPolicy<T>,
    mapping: &ViewMapping<'_, T>,
    rule: LabelRule,
    episodes: usize,
    horizon: usize,
    gamma: T,
    rng: &mut PeerRng,
    label_rng: &mut PeerRng,
) -> Result<CtBatch<T>, CotrainError> {
    let mut batch = roll(env, policy, episodes, horizon, gamma, rng)?;
    relabel(&mut batch, partner, mapping, rule, label_rng)?;
    Ok(batch)
}

#[derive(Debug, Clone)]
pub struct CotrainConfig {
    pub mask_a: Vec<usize>,
    pub mask_b: Vec<usize>,
    pub xi: f64,
    pub labels: LabelRule,
    pub rounds: usize,
    pub episodes_per_round: usize,
    pub horizon: usize,
    pub lr: f64,
    pub gamma: f64,
    pub max_grad_norm: f64,
    /// Rounds before the peer term switches on.
    pub peer_delay: usize,
    pub seed: u64,
    /// Final-window length in episodes.
    pub window: usize,
}

impl Default for CotrainConfig {
    fn default() -> Self {
        Self {
            mask_a: vec![0],
            mask_b: vec![1],
            xi: 0.5,
            labels: LabelRule::default(),
            rounds: 100,
            episodes_per_round: 4,
            horizon: 20,
            lr: 0.2,
            gamma: 0.95,
            max_grad_norm: 5.0,
            peer_delay: 0,
            seed: 0,
            window: 40,
        }
    }
}

impl CotrainConfig {
    pub fn masks(&self) -> (ViewMask, ViewMask) {
        (
            ViewMask { view: View::A, hidden: self.mask_a.clone() },
            ViewMask { view: View::B, hidden: self.mask_b.clone() },
        )
    }

    fn validate(&self) -> Result<(), CotrainError> {
        let ok = self.xi >= 0.0
            && self.xi.is_finite()
            && self.rounds > 0
            && self.episodes_per_round > 0
            && self.horizon > 0
            && self.lr > 0.0
            && (0.0..=1.0).contains(&self.gamma)
            && self.max_grad_norm > 0.0;
        if ok {
            Ok(())
        } else {
            Err(CotrainError::Config("invalid co-training hyperparameters".into()))
        }
    }
}

/// Per-agent outputs of one co-training or single-view run.
#[derive(Debug, Clone)]
pub struct AgentOutcome<T> {
    pub policy: SoftmaxPolicy<T>,
    pub run: RunResult,
    /// Post-clip gradient norm of every round.
    pub grad_norms: Vec<f64>,
    /// Shuffled-pair agreement with partner labels per round; empty for
    /// single-view runs.
    pub shuffled_agreement: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CotrainResult<T> {
    pub a: AgentOutcome<T>,
    pub b: AgentOutcome<T>,
}

struct Agent<'a, T> {
    env: ViewEnv<'a, T>,
    policy: SoftmaxPolicy<T>,
    env_rng: PeerRng,
    peer_rng: PeerRng,
    stat_rng: PeerRng,
    label_rng: PeerRng,
    rows: Vec<MetricRow>,
    steps: u64,
    grad_norms: Vec<f64>,
    agreement: Vec<f64>,
}

impl<'a, T: Scalar> Agent<'a, T> {
    /// Streams depend only on the seed and the view, so a co-training agent
    /// and its single-view baseline see the same randomness.
    fn new(chain: &'a MaskedChain<T>, mask: ViewMask, config: &CotrainConfig) -> Result<Self, CotrainError> {
        let v = mask.view.index();
        let dim = chain.view_size(&mask);
        Ok(Self {
            env: ViewEnv::new(chain, mask, config.horizon)?,
            policy: SoftmaxPolicy::zeros(dim, chain.mdp.num_actions()),
            env_rng: rng::seeded(derive_seed(config.seed, v, 0)),
            peer_rng: rng::seeded(derive_seed(config.seed, v, 1)),
            stat_rng: rng::seeded(derive_seed(config.seed, v, 2)),
            label_rng: rng::seeded(derive_seed(config.seed, v, 3)),
            rows: Vec::new(),
            steps: 0,
            grad_norms: Vec::new(),
            agreement: Vec::new(),
        })
    }

    fn roll(&mut self, config: &CotrainConfig) -> Result<CtBatch<T>, CotrainError> {
        let batch = roll(
            &mut self.env,
            &self.policy,
            config.episodes_per_round,
            config.horizon,
            T::lit(config.gamma),
            &mut self.env_rng,
        )?;
        self.steps += batch.len() as u64;
        for &r in &batch.episode_returns {
            let episode = self.rows.len() as u64 + 1;
            self.rows.push(MetricRow {
                step: self.steps,
                episode,
                clean_return: r,
                noisy_return: r,
                eval_error_rate: None,
            });
        }
        Ok(batch)
    }

    fn step(&mut self, batch: &CtBatch<T>, xi: f64, config: &CotrainConfig) -> Result<(), CotrainError> {
        if !batch.labels.is_empty() {
            self.agreement.push(batch.shuffled_agreement(&self.policy, &mut self.stat_rng));
        }
        let mut grad = batch.gradient(&self.policy, T::lit(xi), &mut self.peer_rng);
        let norm = grad.iter().map(|g| (*g * *g).as_f64()).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(CotrainError::Gradient(norm));
        }
        if norm > config.max_grad_norm {
            let s = T::lit(config.max_grad_norm / norm);
            grad.iter_mut().for_each(|g| *g *= s);
        }
        self.grad_norms.push(norm.min(config.max_grad_norm));
        let lr = T::lit(config.lr);
        for (th, g) in self.policy.theta_mut().iter_mut().zip(&grad) {
            *th += lr * *g;
        }
        Ok(())
    }

    fn finish(self, config: &CotrainConfig, algo: &str, wall: f64) -> AgentOutcome<T> {
        let view = if self.env.mask.view == View::A { "A" } else { "B" };
        AgentOutcome {
            policy: self.policy,
            run: RunResult::new(self.rows, config.window, wall)
                .with_meta("algo", algo)
                .with_meta("view", view)
                .with_meta("seed", config.seed),
            grad_norms: self.grad_norms,
            shuffled_agreement: self.agreement,
        }
    }
}

/// Co-training rounds: both agents roll with their current policies, both
/// batches are relabeled by the current partners, then both policies step.
pub fn cotrain_run<T: Scalar>(
    chain: &MaskedChain<T>,
    config: &CotrainConfig,
) -> Result<CotrainResult<T>, CotrainError> {
    config.validate()?;
    let start = Instant::now();
    let (mask_a, mask_b) = config.masks();
    let a_to_b = ViewMapping::new(chain, mask_a.clone(), mask_b.clone())?;
    let b_to_a = a_to_b.inverse();
    let mut a = Agent::new(chain, mask_a, config)?;
    let mut b = Agent::new(chain, mask_b, config)?;
    for round in 0..config.rounds {
        let mut batch_a = a.roll(config)?;
        let mut batch_b = b.roll(config)?;
        relabel(&mut batch_a, &b.policy, &a_to_b, config.labels, &mut a.label_rng)?;
        relabel(&mut batch_b, &a.policy, &b_to_a, config.labels, &mut b.label_rng)?;
        let xi = if round >= config.peer_delay { config.xi } else { 0.0 };
        a.step(&batch_a, xi, config)?;
        b.step(&batch_b, xi, config)?;
    }
    let wall = start.elapsed().as_secs_f64();
    Ok(CotrainResult { a: a.finish(config, "peer_ct", wall), b: b.finish(config, "peer_ct", wall) })
}

/// Policy gradient on one view alone, with the same streams and step rule as
/// the matching co-training agent.
pub fn single_view_baseline<T: Scalar>(
    chain: &MaskedChain<T>,
    config: &CotrainConfig,
    view: View,
) -> Result<AgentOutcome<T>, CotrainError> {
    config.validate()?;
    let start = Instant::now();
    let (mask_a, mask_b) = config.masks();
    let mask = if view == View::A { mask_a } else { mask_b };
    let mut agent = Agent::new(chain, mask, config)?;
    for _ in 0..config.rounds {
        let batch = agent.roll(config)?;
        agent.step(&batch, 0.0, config)?;
    }
    Ok(agent.finish(config, "single_view", start.elapsed().as_secs_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> MaskedChain<f64> {
        MaskedChain::six_cell(0.1, 0.95).unwrap()
    }

    #[test]
    fn views_and_round_trip() {
        let c = chain();
        let (ma, mb) = CotrainConfig::default().masks();
        assert_eq!(c.view_size(&ma), 3);
        assert_eq!(c.view_size(&mb), 2);
        let m = ViewMapping::new(&c, ma.clone(), mb.clone()).unwrap();
        for p in 0..6 {
            let o = TaggedObs { latent: p, view: c.view_index(p, &ma) };
            assert_eq!(o.view, p % 3);
            let ob = m.map(&o).unwrap();
            assert_eq!(ob.view, p / 3);
            assert_eq!(m.inverse().map(&ob).unwrap(), o);
        }
        assert!(m.map(&TaggedObs { latent: 4, view: 0 }).is_err());
    }

    #[test]
    fn bad_mask_is_rejected() {
        let c = chain();
        let bad = ViewMask { view: View::A, hidden: vec![2] };
        assert!(ViewMapping::new(&c, bad, CotrainConfig::default().masks().1).is_err());
    }

    #[test]
    fn relabel_matches_partner_recomputation() {
        let c = chain();
        let (ma, mb) = CotrainConfig::default().masks();
        let mut env = ViewEnv::new(&c, ma.clone(), 15).unwrap();
        let pol = SoftmaxPolicy::from_theta(3, 2, vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.2]);
        let partner = SoftmaxPolicy::from_theta(2, 2, vec![0.7, -0.1, -0.3, 0.6]);
        let m = ViewMapping::new(&c, ma, mb).unwrap();
        let batch = roll_and_relabel(
            &mut env,
            &pol,
            &partner,
            &m,
            LabelRule::Greedy,
            3,
            15,
            0.95,
            &mut rng::seeded(4),
            &mut rng::seeded(5),
        )
        .unwrap();
        for (o, &l) in batch.obs.iter().zip(&batch.labels) {
            assert_eq!(l, partner.greedy(&[o.latent / 3]));
        }
        let mut label_rng = rng::seeded(6);
        let batch = roll_and_relabel(
            &mut env,
            &pol,
            &partner,
            &m,
            LabelRule::Sampled,
            3,
            15,
            0.95,
            &mut rng::seeded(4),
            &mut label_rng,
        )
        .unwrap();
        let mut replay = rng::seeded(6);
        for (o, &l) in batch.obs.iter().zip(&batch.labels) {
            assert_eq!(l, partner.sample(&[o.latent / 3], &mut replay));
        }
    }
}
