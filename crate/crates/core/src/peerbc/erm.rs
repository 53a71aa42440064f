use rayon::prelude::*;

use super::{draw_index, generate_weak_demos, BcError, DemoSet};
use crate::mdp::PolicyTable;
use crate::noise::ActionChannel;
use crate::rng::{self, derive_seed, PeerRng};
use crate::stats;

/// Enumeration cap for exhaustive policy search.
const MAX_POLICIES: f64 = 1e7;

/// All `|A|^|S|` deterministic policies. Policy `index` takes action
/// `(index / |A|^s) mod |A|` in state `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyClassEnum {
    num_states: usize,
    num_actions: usize,
    size: u64,
}

impl PolicyClassEnum {
    pub fn new(num_states: usize, num_actions: usize) -> Result<Self, BcError> {
        if num_states == 0 || num_actions == 0 {
            return Err(BcError::Argument("empty policy class".into()));
        }
        let size = (num_actions as f64).powi(num_states as i32);
        if size > MAX_POLICIES {
            return Err(BcError::ClassTooLarge(size));
        }
        Ok(Self { num_states, num_actions, size: size as u64 })
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn decode(&self, mut index: u64) -> Vec<usize> {
        let na = self.num_actions as u64;
        (0..self.num_states)
            .map(|_| {
                let a = (index % na) as usize;
                index /= na;
                a
            })
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.size).map(|i| self.decode(i))
    }
}

/// Frozen `(j_i, k_i)` index pairs shared by every candidate policy.
#[derive(Debug, Clone, PartialEq)]
pub struct CaPairing {
    pub pairs: Vec<(usize, usize)>,
}

impl CaPairing {
    pub fn draw(n: usize, rng: &mut PeerRng) -> Self {
        Self { pairs: (0..n).map(|_| (draw_index(n, rng), draw_index(n, rng))).collect() }
    }
}

/// `(1/N) sum_i 1[pi(s_i) != a_i] - xi (1/N) sum_i 1[pi(s_j_i) != a_k_i]`, evaluated directly.
pub fn empirical_peer_risk(policy: &[usize], demos: &DemoSet, pairing: &CaPairing, xi: f64) -> f64 {
    let n = demos.len() as f64;
    let own = demos.pairs.iter().filter(|&&(s, a)| policy[s] != a).count() as f64;
    let peer = pairing.pairs.iter().filter(|&&(j, k)| policy[demos.pairs[j].0] != demos.pairs[k].1).count() as f64;
    (own - xi * peer) / n
}

/// Exhaustive minimizer of the empirical peer 0-1 risk; the lowest enumeration
/// index wins ties.
pub fn erm_01_peer(
    demos: &DemoSet,
    xi: f64,
    class: &PolicyClassEnum,
    pairing: &CaPairing,
) -> Result<(PolicyTable<f64>, f64), BcError> {
    if demos.is_empty() {
        return Err(BcError::Empty);
    }
    if pairing.pairs.len() != demos.len() {
        return Err(BcError::Argument("pairing must have one pair per demonstration".into()));
    }
    if class.num_states != demos.num_states || class.num_actions != demos.num_actions {
        return Err(BcError::Argument("policy class does not match the demonstrations".into()));
    }
    let (ns, na) = (class.num_states, class.num_actions);
    // mismatch counts per (state, action)
    let mut own = vec![0u64; ns * na];
    let mut peer = vec![0u64; ns * na];
    for &(s, label) in &demos.pairs {
        for a in 0..na {
            own[s * na + a] += u64::from(a != label);
        }
    }
    for &(j, k) in &pairing.pairs {
        let s = demos.pairs[j].0;
        let label = demos.pairs[k].1;
        for a in 0..na {
            peer[s * na + a] += u64::from(a != label);
        }
    }
    let mut actions = vec![0usize; ns];
    let mut best = (f64::INFINITY, 0u64);
    for index in 0..class.size {
        let (o, p) = actions
            .iter()
            .enumerate()
            .fold((0u64, 0u64), |(o, p), (s, &a)| (o + own[s * na + a], p + peer[s * na + a]));
        let risk = o as f64 - xi * p as f64;
        if risk < best.0 {
            best = (risk, index);
        }
        for a in actions.iter_mut() {
            *a += 1;
            if *a < na {
                break;
            }
            *a = 0;
        }
    }
    Ok((PolicyTable::Deterministic(class.decode(best.1)), best.0 / demos.len() as f64))
}

/// Most frequent label per state; unobserved states and ties take the lowest action.
pub fn majority_vote_policy(demos: &DemoSet) -> Vec<usize> {
    let na = demos.num_actions;
    let mut counts = vec![0usize; demos.num_states * na];
    for &(s, a) in &demos.pairs {
        counts[s * na + a] += 1;
    }
    (0..demos.num_states).map(|s| crate::mdp::argmax_lowest(&counts[s * na..(s + 1) * na])).collect()
}

#[derive(Debug, Clone)]
pub struct Theorem1Config {
    pub state_dist: Vec<f64>,
    pub expert: Vec<usize>,
    pub e_minus: f64,
    pub e_plus: f64,
    pub xi: f64,
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Quantile of the error distribution used for the envelope.
    pub quantile: f64,
}

impl Theorem1Config {
    /// Eight states with geometric visit probabilities (ratio 0.3) and binary
    /// actions; every state past the first two takes action 1, so a state that
    /// never appears in the demonstrations is misclassified.
    pub fn skewed_eight_state(e: f64, xi: f64, trials: usize, seed: u64) -> Self {
        let raw: Vec<f64> = (0..8).map(|s| 0.3f64.powi(s)).collect();
        let z: f64 = raw.iter().sum();
        Self {
            state_dist: raw.iter().map(|x| x / z).collect(),
            expert: vec![0, 1, 1, 1, 1, 1, 1, 1],
            e_minus: e,
            e_plus: e,
            xi,
            sample_sizes: [2.0, 2.5, 3.0, 3.5, 4.0].iter().map(|p| 10f64.powf(*p).round() as usize).collect(),
            trials,
            seed,
            quantile: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Row {
    pub n: usize,
    pub median: f64,
    pub envelope: f64,
    pub mean: f64,
    /// `(1 + xi) / (1 - e- - e+) * sqrt(2 ln(2 / delta) / N)` at `delta = 1 - quantile`.
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct Theorem1Report {
    pub rows: Vec<Theorem1Row>,
    /// Least-squares slope of `ln envelope` on `ln N`.
    pub envelope_slope: f64,
}

/// Error of the exhaustive peer ERM against the clean expert, weighted by the
/// clean state distribution, over a grid of demonstration counts.
pub fn theorem1_scaling_experiment(config: &Theorem1Config) -> Result<Theorem1Report, BcError> {
    let ns = config.state_dist.len();
    if config.expert.len() != ns || config.trials == 0 {
        return Err(BcError::Argument("expert must cover every state and trials must be positive".into()));
    }
    let eta = 1.0 - config.e_minus - config.e_plus;
    if eta <= 0.0 {
        return Err(BcError::Argument("need e- + e+ < 1".into()));
    }
    let channel = ActionChannel::binary(config.e_minus, config.e_plus)?;
    let class = PolicyClassEnum::new(ns, 2)?;
    let expert = PolicyTable::Deterministic(config.expert.clone());
    let delta = 1.0 - config.quantile;
    let mut rows = Vec::new();
    for (gi, &n) in config.sample_sizes.iter().enumerate() {
        let errors: Vec<f64> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let seed = derive_seed(config.seed, gi as u64, trial as u64);
                let demos = generate_weak_demos(&expert, &channel, &config.state_dist, n, true, seed)?;
                let mut rng = rng::seeded(seed ^ 0xA5A5_A5A5);
                let pairing = CaPairing::draw(n, &mut rng);
                let (pol, _) = erm_01_peer(&demos, config.xi, &class, &pairing)?;
                let acts = pol.deterministic_actions().expect("erm returns deterministic policies");
                Ok((0..ns).filter(|&s| acts[s] != config.expert[s]).map(|s| config.state_dist[s]).sum())
            })
            .collect::<Result<_, BcError>>()?;
        rows.push(Theorem1Row {
            n,
            median: stats::median(&errors),
            envelope: stats::quantile(&errors, config.quantile),
            mean: stats::mean(&errors),
            bound: (1.0 + config.xi) / eta * (2.0 * (2.0 / delta).ln() / n as f64).sqrt(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.envelope.ln()).collect();
    let envelope_slope = stats::least_squares(&xs, &ys).0;
    Ok(Theorem1Report { rows, envelope_slope })
}
