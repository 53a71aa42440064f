//! Behavioral cloning from corrupted demonstrations with a correlated-agreement
//! penalty, plus exhaustive 0-1 risk minimization over small policy classes.

mod erm;
mod objective;

pub use erm::{
    empirical_peer_risk, erm_01_peer, majority_vote_policy, theorem1_scaling_experiment, CaPairing, PolicyClassEnum,
    Theorem1Config, Theorem1Report, Theorem1Row,
};
pub use objective::{peer_bc_objective, train_peer_bc, BcTrainConfig, PROB_FLOOR};

use std::fmt::Write as _;

use thiserror::Error;

use crate::mdp::PolicyTable;
use crate::noise::{ActionChannel, NoiseError};
use crate::rng::{self, PeerRng};
use crate::scalar::{Field, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum BcError {
    #[error("theorem mode requires a deterministic expert")]
    StochasticExpert,
    #[error("policy class has {0} members, above the enumeration limit")]
    ClassTooLarge(f64),
    #[error("demonstration set is empty")]
    Empty,
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("weights became non-finite")]
    NonFinite,
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub expert_id: String,
    /// Action confusion matrix rows.
    pub channel: Vec<Vec<f64>>,
    pub state_dist: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

/// `(state, demonstrated action)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub num_states: usize,
    pub num_actions: usize,
    pub pairs: Vec<(usize, usize)>,
    pub provenance: Option<Provenance>,
}

impl DemoSet {
    pub fn new(num_states: usize, num_actions: usize, pairs: Vec<(usize, usize)>) -> Result<Self, BcError> {
        if let Some(&(s, a)) = pairs.iter().find(|&&(s, a)| s >= num_states || a >= num_actions) {
            return Err(BcError::Argument(format!("pair ({s}, {a}) out of range")));
        }
        Ok(Self { num_states, num_actions, pairs, provenance: None })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Line format: `state<TAB>action`, preceded by `# key: value` header lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# num_states: {}", self.num_states);
        let _ = writeln!(out, "# num_actions: {}", self.num_actions);
        if let Some(p) = &self.provenance {
            let _ = writeln!(out, "# expert: {}", p.expert_id);
            let rows: Vec<String> =
                p.channel.iter().map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")).collect();
            let _ = writeln!(out, "# channel: {}", rows.join(" | "));
            let dist: Vec<String> = p.state_dist.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "# state_dist: {}", dist.join(" "));
            let _ = writeln!(out, "# n: {}", p.n);
            let _ = writeln!(out, "# seed: {}", p.seed);
        }
        for &(s, a) in &self.pairs {
            let _ = writeln!(out, "{s}\t{a}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, BcError> {
        let mut num_states = None;
        let mut num_actions = None;
        let mut expert = None;
        let mut channel = None;
        let mut state_dist = None;
        let mut n = None;
        let mut seed = None;
        let mut pairs = Vec::new();
        let err = |line: usize, msg: &str| BcError::Parse { line, msg: msg.to_string() };
        let floats = |s: &str, line: usize| -> Result<Vec<f64>, BcError> {
            s.split_whitespace().map(|x| x.parse::<f64>().map_err(|_| err(line, "bad number"))).collect()
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() {
                continue;
            }
            if let Some(h) = l.strip_prefix('#') {
                let (k, v) = h.split_once(':').ok_or_else(|| err(line, "header needs key: value"))?;
                let v = v.trim();
                match k.trim() {
                    "num_states" => num_states = Some(v.parse().map_err(|_| err(line, "bad num_states"))?),
                    "num_actions" => num_actions = Some(v.parse().map_err(|_| err(line, "bad num_actions"))?),
                    "expert" => expert = Some(v.to_string()),
                    "channel" => channel = Some(v.split('|').map(|r| floats(r, line)).collect::<Result<Vec<_>, _>>()?),
                    "state_dist" => state_dist = Some(floats(v, line)?),
                    "n" => n = Some(v.parse().map_err(|_| err(line, "bad n"))?),
                    "seed" => seed = Some(v.parse().map_err(|_| err(line, "bad seed"))?),
                    _ => {}
                }
                continue;
            }
            let (s, a) = l.split_once('\t').ok_or_else(|| err(line, "expected state<TAB>action"))?;
            let s = s.trim().parse().map_err(|_| err(line, "bad state"))?;
            let a = a.trim().parse().map_err(|_| err(line, "bad action"))?;
            pairs.push((s, a));
        }
        let ns = num_states.ok_or_else(|| err(0, "missing num_states header"))?;
        let na = num_actions.ok_or_else(|| err(0, "missing num_actions header"))?;
        let mut d = DemoSet::new(ns, na, pairs)?;
        if let (Some(expert_id), Some(channel), Some(state_dist), Some(n), Some(seed)) =
            (expert, channel, state_dist, n, seed)
        {
            d.provenance = Some(Provenance { expert_id, channel, state_dist, n, seed });
        }
        Ok(d)
    }
}

/// States i.i.d. from `state_dist`, actions from the expert passed through the
/// action channel. A stochastic expert is refused in theorem mode.
pub fn generate_weak_demos<T: Scalar>(
    expert: &PolicyTable<T>,
    channel: &ActionChannel<T>,
    state_dist: &[T],
    n: usize,
    theorem_mode: bool,
    seed: u64,
) -> Result<DemoSet, BcError> {
    if theorem_mode && !expert.is_deterministic() {
        return Err(BcError::StochasticExpert);
    }
    let ns = state_dist.len();
    if expert.num_states() != ns {
        return Err(BcError::Argument("expert and state distribution disagree on |S|".into()));
    }
    let na = channel.size();
    expert.validate(ns, na).map_err(|e| BcError::Argument(e.to_string()))?;
    let mut rng = rng::seeded(seed);
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let s = rng::categorical(state_dist, &mut rng);
        let a = match expert {
            PolicyTable::Deterministic(v) => v[s],
            PolicyTable::Stochastic(rows) => rng::categorical(&rows[s], &mut rng),
        };
        pairs.push((s, channel.corrupt(a, &mut rng)));
    }
    let mut d = DemoSet::new(ns, na, pairs)?;
    d.provenance = Some(Provenance {
        expert_id: match expert {
            PolicyTable::Deterministic(v) => format!("deterministic{v:?}"),
            PolicyTable::Stochastic(_) => "stochastic".into(),
        },
        channel: (0..na).map(|j| channel.row(j).iter().map(|x| x.as_f64()).collect()).collect(),
        state_dist: state_dist.iter().map(|x| x.as_f64()).collect(),
        n,
        seed,
    });
    Ok(d)
}

/// Exact expected correlated-agreement score
/// `(1/N) sum_i 1[pred_i = label_i] - P(pred_j = label_k)` with `j, k`
/// independent and uniform, by exhaustive enumeration of all index pairs.
/// `pred_i` is the policy's action on sample `i`'s state.
pub fn ca_expected_agreement<F: Field>(predictions: &[usize], labels: &[usize]) -> F {
    assert_eq!(predictions.len(), labels.len());
    let count = |it: &mut dyn Iterator<Item = bool>| {
        it.fold((F::zero(), F::zero()), |(hit, tot), b| (if b { hit + F::one() } else { hit }, tot + F::one()))
    };
    let (own, n) = count(&mut predictions.iter().zip(labels).map(|(p, l)| p == l));
    let (peer, pairs) = count(&mut predictions.iter().flat_map(|p| labels.iter().map(move |l| p == l)));
    if n.is_zero() {
        return F::zero();
    }
    own / n - peer / pairs
}

/// Sum of squared label frequencies, the expected peer agreement of a
/// label-memorizing policy.
pub fn label_collision<F: Field>(labels: &[usize], num_actions: usize) -> F {
    let mut n = F::zero();
    let mut counts = vec![F::zero(); num_actions];
    for &l in labels {
        counts[l] = counts[l].clone() + F::one();
        n = n + F::one();
    }
    counts.into_iter().fold(F::zero(), |acc, c| acc + (c.clone() / n.clone()) * (c / n.clone()))
}

pub(crate) fn draw_index(n: usize, rng: &mut PeerRng) -> usize {
    use rand::Rng;
    rng.random_range(0..n)
}
