use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::noise::ContinuousNoise;
use crate::rng::{self, PeerRng};

/// Reward law of one state of the two-state process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RewardLaw {
    /// `r ~ Bernoulli(p_one)` over `{0, 1}`, then flipped with probability `flip`.
    Bernoulli {
        p_one: f64,
        flip: f64,
    },
    /// `noise` applied to the constant `mean`.
    Continuous {
        mean: f64,
        noise: ContinuousNoise,
    },
    /// Continuous draw snapped onto the grid `0.00, 0.01, .., 1.00` by
    /// right-open binning. Values below 0 wrap to the last grid point, as a
    /// zero bin index does under negative indexing.
    Discretized {
        mean: f64,
        noise: ContinuousNoise,
    },
    Poisson {
        lambda: f64,
    },
}

const GRID_POINTS: usize = 101;

fn grid() -> [f64; GRID_POINTS] {
    let mut g = [0.0; GRID_POINTS];
    for (k, v) in g.iter_mut().enumerate() {
        *v = k as f64 * 0.01;
    }
    g
}

/// Snaps `r` to the 0.01 grid: index `i` with `grid[i-1] <= r < grid[i]` selects `grid[i-1]`.
fn digitize(r: f64) -> f64 {
    let g = grid();
    let i = g.partition_point(|&b| b <= r);
    if i == 0 {
        g[GRID_POINTS - 1]
    } else {
        g[i - 1]
    }
}

impl RewardLaw {
    pub fn sample(&self, rng: &mut PeerRng) -> Result<f64, EnvError> {
        Ok(match *self {
            RewardLaw::Bernoulli { p_one, flip } => {
                let r = if rng::uniform(rng) < p_one { 1.0 } else { 0.0 };
                if rng::uniform(rng) < flip {
                    1.0 - r
                } else {
                    r
                }
            }
            RewardLaw::Continuous { mean, noise } => noise.apply(mean, rng),
            RewardLaw::Discretized { mean, noise } => digitize(noise.apply(mean, rng)),
            RewardLaw::Poisson { lambda } => {
                let d = Poisson::new(lambda).map_err(|e| EnvError::Parameter(format!("poisson rate: {e}")))?;
                d.sample(rng)
            }
        })
    }

    fn validate(&self) -> Result<(), EnvError> {
        let ok = match *self {
            RewardLaw::Bernoulli { p_one, flip } => (0.0..=1.0).contains(&p_one) && (0.0..=1.0).contains(&flip),
            RewardLaw::Continuous { mean, .. } | RewardLaw::Discretized { mean, .. } => mean.is_finite(),
            RewardLaw::Poisson { lambda } => lambda > 0.0 && lambda.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(EnvError::Parameter(format!("invalid reward law {self:?}")))
        }
    }
}

/// Named noise families of the tie-breaking suite. State 0 is always the
/// state with the larger expected reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableA1Row {
    ClippedGaussian,
    ClippedLaplace,
    DiscretizedGaussian,
    StochasticDiscrete,
    Poisson,
    DeterministicDiscrete,
    ContinuousGaussian,
    ContinuousLaplace,
}

impl TableA1Row {
    pub const ALL: [TableA1Row; 8] = [
        TableA1Row::ClippedGaussian,
        TableA1Row::ClippedLaplace,
        TableA1Row::DiscretizedGaussian,
        TableA1Row::StochasticDiscrete,
        TableA1Row::Poisson,
        TableA1Row::DeterministicDiscrete,
        TableA1Row::ContinuousGaussian,
        TableA1Row::ContinuousLaplace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableA1Row::ClippedGaussian => "clipped_gaussian",
            TableA1Row::ClippedLaplace => "clipped_laplace",
            TableA1Row::DiscretizedGaussian => "discretized_gaussian",
            TableA1Row::StochasticDiscrete => "stochastic_discrete",
            TableA1Row::Poisson => "poisson",
            TableA1Row::DeterministicDiscrete => "deterministic_discrete",
            TableA1Row::ContinuousGaussian => "continuous_gaussian",
            TableA1Row::ContinuousLaplace => "continuous_laplace",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == name)
    }

    pub fn process(self) -> TwoStateRewardProcess {
        let clip_g = ContinuousNoise::gaussian(1.0).clipped(0.0, 1.0);
        let clip_l = ContinuousNoise::laplace(1.0).clipped(0.0, 1.0);
        let g = ContinuousNoise::gaussian(1.0);
        let l = ContinuousNoise::laplace(1.0);
        let laws = match self {
            TableA1Row::ClippedGaussian => {
                [RewardLaw::Continuous { mean: 0.6, noise: clip_g }, RewardLaw::Continuous { mean: 0.4, noise: clip_g }]
            }
            TableA1Row::ClippedLaplace => {
                [RewardLaw::Continuous { mean: 0.6, noise: clip_l }, RewardLaw::Continuous { mean: 0.4, noise: clip_l }]
            }
            TableA1Row::DiscretizedGaussian => {
                [RewardLaw::Discretized { mean: 0.6, noise: g }, RewardLaw::Discretized { mean: 0.4, noise: g }]
            }
            TableA1Row::StochasticDiscrete => {
                [RewardLaw::Bernoulli { p_one: 0.6, flip: 0.4 }, RewardLaw::Bernoulli { p_one: 0.4, flip: 0.4 }]
            }
            TableA1Row::Poisson => [RewardLaw::Poisson { lambda: 0.6 }, RewardLaw::Poisson { lambda: 0.4 }],
            TableA1Row::DeterministicDiscrete => {
                [RewardLaw::Bernoulli { p_one: 1.0, flip: 0.4 }, RewardLaw::Bernoulli { p_one: 0.0, flip: 0.4 }]
            }
            TableA1Row::ContinuousGaussian => {
                [RewardLaw::Continuous { mean: 0.6, noise: clip_g }, RewardLaw::Continuous { mean: 0.4, noise: g }]
            }
            TableA1Row::ContinuousLaplace => {
                [RewardLaw::Continuous { mean: 0.6, noise: l }, RewardLaw::Continuous { mean: 0.4, noise: clip_l }]
            }
        };
        TwoStateRewardProcess { laws }
    }
}

/// Two states without actions, each emitting i.i.d. rewards from its own law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStateRewardProcess {
    pub laws: [RewardLaw; 2],
}

impl TwoStateRewardProcess {
    pub fn new(laws: [RewardLaw; 2]) -> Result<Self, EnvError> {
        laws[0].validate()?;
        laws[1].validate()?;
        Ok(Self { laws })
    }

    /// Bernoulli states with a shared symmetric flip rate.
    pub fn bernoulli(p_better: f64, p_worse: f64, flip: f64) -> Result<Self, EnvError> {
        Self::new([RewardLaw::Bernoulli { p_one: p_better, flip }, RewardLaw::Bernoulli { p_one: p_worse, flip }])
    }
}

/// `n` i.i.d. draws from `state`'s law.
pub fn sample_state_reward(
    process: &TwoStateRewardProcess,
    state: usize,
    n: usize,
    rng: &mut PeerRng,
) -> Result<Vec<f64>, EnvError> {
    if state > 1 {
        return Err(EnvError::Parameter(format!("state {state} out of range for a two-state process")));
    }
    if n == 0 {
        return Err(EnvError::Parameter("need at least one sample".into()));
    }
    (0..n).map(|_| process.laws[state].sample(rng)).collect()
}
