//! Corruption channels.
//!
//! A channel is a row-stochastic confusion matrix `C` with
//! `C[j][k] = P(observed k | true j)`. Reward channels act on reward *levels*
//! (index 0 is the low level `r-`, index 1 the high level `r+` in the binary
//! case); action channels act on action indices with the same convention
//! (`A-` = action 0, `A+` = action 1).
//!
//! Binary flip rates follow the usual naming: `e+ = P(observe low | true high)`
//! and `e- = P(observe high | true low)`.

use std::ops::Deref;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, PeerRng};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("confusion matrix must be square and non-empty (got {rows} rows, row {bad_row} has {len} entries)")]
    Shape { rows: usize, bad_row: usize, len: usize },
    #[error("row {row} of confusion matrix sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("negative entry {value} at ({row}, {col})")]
    Negative { row: usize, col: usize, value: f64 },
    #[error("flip probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("noise too strong for the unbiasedness guarantee: 1 - sum of flip rates = {0} <= 0")]
    TheoremMode(f64),
    #[error("channel has {channel} levels but the reward distribution has {dist}")]
    Dimension { channel: usize, dist: usize },
    #[error("operation needs a binary channel")]
    NotBinary,
}

/// Structural family of a channel, kept so flip rates can be read back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChannelKind<T> {
    Identity,
    Binary {
        e_minus: T,
        e_plus: T,
    },
    /// Every level is misreported to level `k` with probability `e[k]`.
    MultiOutcome {
        e: Vec<T>,
    },
    Custom,
}

/// Row-stochastic confusion matrix plus its structural family.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseChannel<T> {
    n: usize,
    entries: Vec<T>,
    kind: ChannelKind<T>,
}

impl<T: Scalar> NoiseChannel<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self, NoiseError> {
        Self::build(rows, ChannelKind::Custom)
    }

    fn build(rows: Vec<Vec<T>>, kind: ChannelKind<T>) -> Result<Self, NoiseError> {
        let n = rows.len();
        if n == 0 {
            return Err(NoiseError::Shape { rows: 0, bad_row: 0, len: 0 });
        }
        let mut entries = Vec::with_capacity(n * n);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(NoiseError::Shape { rows: n, bad_row: j, len: row.len() });
            }
            let mut sum = T::zero();
            for (k, &v) in row.iter().enumerate() {
                if v < T::zero() || !v.is_finite() {
                    return Err(NoiseError::Negative { row: j, col: k, value: v.as_f64() });
                }
                sum += v;
            }
            if (sum - T::one()).abs() > T::stochastic_tol() {
                return Err(NoiseError::RowSum { row: j, sum: sum.as_f64() });
            }
            entries.extend_from_slice(row);
        }
        Ok(Self { n, entries, kind })
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n).map(|j| (0..n).map(|k| if j == k { T::one() } else { T::zero() }).collect()).collect();
        Self::build(rows, ChannelKind::Identity).expect("identity is stochastic")
    }

    /// Binary channel with `P(high | low) = e_minus` and `P(low | high) = e_plus`.
    pub fn binary(e_minus: T, e_plus: T) -> Result<Self, NoiseError> {
        for e in [e_minus, e_plus] {
            if !(T::zero()..=T::one()).contains(&e) {
                return Err(NoiseError::Probability(e.as_f64()));
            }
        }
        let rows = vec![vec![T::one() - e_minus, e_minus], vec![e_plus, T::one() - e_plus]];
        Self::build(rows, ChannelKind::Binary { e_minus, e_plus })
    }

    pub fn binary_symmetric(e: T) -> Result<Self, NoiseError> {
        Self::binary(e, e)
    }

    /// `C[j][k] = e[k]` off the diagonal, `1 - sum_{i != j} e[i]` on it.
    pub fn multi_outcome(e: &[T]) -> Result<Self, NoiseError> {
        let n = e.len();
        if n == 0 {
            return Err(NoiseError::Shape { rows: 0, bad_row: 0, len: 0 });
        }
        for &x in e {
            if !(T::zero()..=T::one()).contains(&x) {
                return Err(NoiseError::Probability(x.as_f64()));
            }
        }
        let rows = (0..n)
            .map(|j| {
                let off: T = e.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, &x)| x).sum();
                (0..n).map(|k| if k == j { T::one() - off } else { e[k] }).collect()
            })
            .collect();
        Self::build(rows, ChannelKind::MultiOutcome { e: e.to_vec() })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &ChannelKind<T> {
        &self.kind
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.entries[j * self.n..(j + 1) * self.n]
    }

    pub fn get(&self, j: usize, k: usize) -> T {
        self.entries[j * self.n + k]
    }

    pub fn is_identity(&self) -> bool {
        (0..self.n).all(|j| (0..self.n).all(|k| self.get(j, k) == if j == k { T::one() } else { T::zero() }))
    }

    /// `(e_minus, e_plus)` read from a 2x2 matrix of any family.
    pub fn binary_rates(&self) -> Result<(T, T), NoiseError> {
        if self.n != 2 {
            return Err(NoiseError::NotBinary);
        }
        Ok((self.get(0, 1), self.get(1, 0)))
    }

    /// Slope of the observed-reward expectation as a function of the clean one.
    ///
    /// `1 - e- - e+` for binary channels, `1 - sum e` for multi-outcome
    /// channels, 1 for the identity. `None` for custom matrices of size > 2,
    /// where the expectation need not be affine.
    pub fn slope(&self) -> Option<T> {
        match &self.kind {
            ChannelKind::Identity => Some(T::one()),
            ChannelKind::MultiOutcome { e } => Some(T::one() - e.iter().copied().sum()),
            ChannelKind::Binary { e_minus, e_plus } => Some(T::one() - *e_minus - *e_plus),
            ChannelKind::Custom if self.n == 2 => Some(T::one() - self.get(0, 1) - self.get(1, 0)),
            ChannelKind::Custom => None,
        }
    }

    /// Opt-in check of the assumption the unbiasedness results rely on.
    pub fn validate_theorem_mode(&self) -> Result<(), NoiseError> {
        match self.slope() {
            Some(s) if s > T::zero() => Ok(()),
            Some(s) => Err(NoiseError::TheoremMode(s.as_f64())),
            None => Err(NoiseError::NotBinary),
        }
    }

    /// Draws an observed index from row `true_index`; consumes one uniform.
    pub fn corrupt(&self, true_index: usize, rng: &mut PeerRng) -> usize {
        rng::categorical(self.row(true_index), rng)
    }

    /// Same as [`corrupt`](Self::corrupt) with an externally supplied uniform.
    pub fn corrupt_with_uniform(&self, true_index: usize, u: f64) -> usize {
        rng::categorical_from_uniform(self.row(true_index), u)
    }
}

/// Reward-level channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardChannel<T>(NoiseChannel<T>);

/// Action channel. The matrix carries no state argument, so the noise is
/// state-independent by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChannel<T>(NoiseChannel<T>);

macro_rules! channel_newtype {
    ($name:ident) => {
        impl<T: Scalar> $name<T> {
            pub fn new(inner: NoiseChannel<T>) -> Self {
                Self(inner)
            }

            pub fn identity(n: usize) -> Self {
                Self(NoiseChannel::identity(n))
            }

            pub fn binary(e_minus: T, e_plus: T) -> Result<Self, NoiseError> {
                NoiseChannel::binary(e_minus, e_plus).map(Self)
            }

            pub fn binary_symmetric(e: T) -> Result<Self, NoiseError> {
                NoiseChannel::binary_symmetric(e).map(Self)
            }

            pub fn multi_outcome(e: &[T]) -> Result<Self, NoiseError> {
                NoiseChannel::multi_outcome(e).map(Self)
            }

            pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self, NoiseError> {
                NoiseChannel::from_rows(rows).map(Self)
            }

            pub fn inner(&self) -> &NoiseChannel<T> {
                &self.0
            }
        }

        impl<T> Deref for $name<T> {
            type Target = NoiseChannel<T>;
            fn deref(&self) -> &NoiseChannel<T> {
                &self.0
            }
        }
    };
}

channel_newtype!(RewardChannel);
channel_newtype!(ActionChannel);

pub fn corrupt_reward<T: Scalar>(level: usize, channel: &RewardChannel<T>, rng: &mut PeerRng) -> usize {
    channel.corrupt(level, rng)
}

pub fn corrupt_action<T: Scalar>(action: usize, channel: &ActionChannel<T>, rng: &mut PeerRng) -> usize {
    channel.corrupt(action, rng)
}

/// Exact `E[observed reward] = sum_j p_j sum_k C[j][k] R_k`.
pub fn expected_observed_reward<T: Scalar>(
    channel: &RewardChannel<T>,
    reward_dist: &[T],
    reward_levels: &[T],
) -> Result<T, NoiseError> {
    if reward_dist.len() != channel.size() || reward_levels.len() != channel.size() {
        return Err(NoiseError::Dimension { channel: channel.size(), dist: reward_dist.len() });
    }
    let mut total = T::zero();
    for (j, &pj) in reward_dist.iter().enumerate() {
        let row_value: T = channel.row(j).iter().zip(reward_levels).map(|(&c, &r)| c * r).sum();
        total += pj * row_value;
    }
    Ok(total)
}

/// Additive noise family for continuous reward laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseFamily {
    None,
    Gaussian { shift: f64, sd: f64 },
    Laplace { shift: f64, scale: f64 },
}

/// Additive continuous noise with an optional clip applied after the noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousNoise {
    pub family: NoiseFamily,
    pub clip: Option<(f64, f64)>,
}

impl ContinuousNoise {
    pub const NONE: ContinuousNoise = ContinuousNoise { family: NoiseFamily::None, clip: None };

    pub fn gaussian(sd: f64) -> Self {
        Self { family: NoiseFamily::Gaussian { shift: 0.0, sd }, clip: None }
    }

    pub fn laplace(scale: f64) -> Self {
        Self { family: NoiseFamily::Laplace { shift: 0.0, scale }, clip: None }
    }

    pub fn clipped(mut self, lo: f64, hi: f64) -> Self {
        self.clip = Some((lo, hi));
        self
    }

    pub fn apply(&self, value: f64, rng: &mut PeerRng) -> f64 {
        let noisy = match self.family {
            NoiseFamily::None => value,
            NoiseFamily::Gaussian { shift, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                value + shift + sd * z
            }
            NoiseFamily::Laplace { shift, scale } => value + shift + sample_laplace(scale, rng),
        };
        match self.clip {
            Some((lo, hi)) => noisy.clamp(lo, hi),
            None => noisy,
        }
    }
}

/// Zero-centred Laplace draw by inversion.
pub fn sample_laplace(scale: f64, rng: &mut PeerRng) -> f64 {
    let u = rng::uniform(rng) - 0.5;
    // u in [-0.5, 0.5); 1 - 2|u| in (0, 1]
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}
