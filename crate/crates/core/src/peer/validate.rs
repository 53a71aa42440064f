//! Monte Carlo validators for the affine structure of expected peer rewards,
//! plus exact policy-level checks.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::mdp::{value_iteration_with_rewards, MdpError, MdpSpec, PolicyTable, TabularMdp};
use crate::noise::{NoiseError, RewardChannel};
use crate::rng::{self, derive_seed, PeerRng};
use crate::scalar::Scalar;
use crate::stats::{self, Welford};

#[derive(Debug, Error, PartialEq)]
pub enum ValidatorError {
    #[error("validator needs exactly two reward levels, got {0}")]
    NotBinary(usize),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("invalid argument: {0}")]
    Argument(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellEstimate {
    pub state: usize,
    pub action: usize,
    pub clean_mean: f64,
    pub estimate: f64,
    pub standard_error: f64,
    pub target: f64,
}

impl CellEstimate {
    pub fn z_score(&self) -> f64 {
        if self.standard_error > 0.0 {
            (self.estimate - self.target) / self.standard_error
        } else if self.estimate == self.target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lemma1Report {
    pub cells: Vec<CellEstimate>,
    pub eta: f64,
    pub xi: f64,
    pub p_peer: f64,
    /// Exact `E[peer reward] - eta * E[r]`, identical for every cell.
    pub affine_constant: f64,
    pub slope_est: f64,
    pub slope_se: f64,
    pub const_est: f64,
    pub max_abs_z: f64,
    /// Every cell within 4 standard errors of its target.
    pub pass: bool,
    /// The unbiasedness statement is certified only for `xi = 1`.
    pub certifies_lemma: bool,
}

/// Affine fit `y = slope * x + c` with the slope's standard error propagated
/// from independent per-point errors.
fn weighted_slope(xs: &[f64], ys: &[f64], ses: &[f64]) -> (f64, f64, f64) {
    let (slope, intercept) = stats::least_squares(xs, ys);
    let mx = stats::mean(xs);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let var: f64 =
        if sxx > 0.0 { xs.iter().zip(ses).map(|(x, se)| ((x - mx) / sxx).powi(2) * se * se).sum() } else { f64::NAN };
    (slope, var.sqrt(), intercept)
}

/// Estimates `E[r_obs(s, a) - xi * r_obs']` per non-terminal cell, where
/// `r_obs'` is the corrupted reward of a cell drawn uniformly over the table.
///
/// The target per cell is `eta * E[r] + b - xi * (eta * m_peer + b)` with
/// `b = e- * r+ + e+ * r-` and `m_peer = (1 - p_peer) r- + p_peer r+`; at
/// `xi = 1` this is `eta * E[r] - eta * m_peer`.
pub fn lemma1_validator<T: Scalar>(
    mdp: &TabularMdp<T>,
    channel: &RewardChannel<T>,
    xi: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Lemma1Report, ValidatorError> {
    if mdp.num_levels() != 2 {
        return Err(ValidatorError::NotBinary(mdp.num_levels()));
    }
    channel.validate_theorem_mode()?;
    let (e_minus, e_plus) = channel.binary_rates()?;
    let (e_minus, e_plus) = (e_minus.as_f64(), e_plus.as_f64());
    if n_samples < 2 {
        return Err(ValidatorError::Argument("need at least two samples per cell".into()));
    }
    let cells = mdp.cells();
    if cells.is_empty() {
        return Err(ValidatorError::Argument("MDP has no non-terminal cells".into()));
    }
    let levels: Vec<f64> = mdp.reward_levels().iter().map(|r| r.as_f64()).collect();
    let (r_lo, r_hi) = (levels[0], levels[1]);
    let eta = 1.0 - e_minus - e_plus;
    let p_peer = cells.iter().map(|&(s, a)| mdp.reward_row(s, a)[1].as_f64()).sum::<f64>() / cells.len() as f64;
    let m_peer = (1.0 - p_peer) * r_lo + p_peer * r_hi;
    let b = e_minus * r_hi + e_plus * r_lo;
    let affine_constant = b - xi * (eta * m_peer + b);

    let estimates: Vec<CellEstimate> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(s, a))| {
            let mut rng = rng::seeded(derive_seed(seed, 0, idx as u64));
            let mut acc = Welford::default();
            for _ in 0..n_samples {
                let own = channel.corrupt(rng::categorical(mdp.reward_row(s, a), &mut rng), &mut rng);
                let (ps, pa) = cells[rng.random_range(0..cells.len())];
                let peer = channel.corrupt(rng::categorical(mdp.reward_row(ps, pa), &mut rng), &mut rng);
                acc.push(levels[own] - xi * levels[peer]);
            }
            let clean_mean = mdp.expected_reward(s, a).as_f64();
            CellEstimate {
                state: s,
                action: a,
                clean_mean,
                estimate: acc.mean(),
                standard_error: acc.standard_error(),
                target: eta * clean_mean + affine_constant,
            }
        })
        .collect();

    let xs: Vec<f64> = estimates.iter().map(|c| c.clean_mean).collect();
    let ys: Vec<f64> = estimates.iter().map(|c| c.estimate).collect();
    let ses: Vec<f64> = estimates.iter().map(|c| c.standard_error).collect();
    let (slope_est, slope_se, const_est) = weighted_slope(&xs, &ys, &ses);
    let max_abs_z = estimates.iter().map(|c| c.z_score().abs()).fold(0.0, f64::max);
    Ok(Lemma1Report {
        cells: estimates,
        eta,
        xi,
        p_peer,
        affine_constant,
        slope_est,
        slope_se,
        const_est,
        max_abs_z,
        pass: max_abs_z <= 4.0,
        certifies_lemma: xi == 1.0,
    })
}

#[derive(Debug, Clone)]
pub struct MultiOutcomeReport {
    pub slope: f64,
    /// `sum_k e_k R_k - xi * E[peer]`.
    pub constant: f64,
    pub estimates: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub targets: Vec<f64>,
    pub slope_est: f64,
    pub slope_se: f64,
    pub max_abs_z: f64,
    pub pass: bool,
}

/// Multi-outcome analogue: each entry of `cell_dists` is a clean distribution
/// over `levels`; peers come from a uniformly chosen cell.
pub fn multi_outcome_validator<T: Scalar>(
    levels: &[T],
    e: &[T],
    cell_dists: &[Vec<T>],
    xi: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MultiOutcomeReport, ValidatorError> {
    let channel = RewardChannel::multi_outcome(e)?;
    channel.validate_theorem_mode()?;
    if levels.len() != e.len() {
        return Err(ValidatorError::Argument("one flip rate per level required".into()));
    }
    if cell_dists.is_empty() || n_samples < 2 {
        return Err(ValidatorError::Argument("need cells and at least two samples".into()));
    }
    for d in cell_dists {
        if d.len() != levels.len() {
            return Err(ValidatorError::Argument("cell distribution has wrong length".into()));
        }
    }
    let lv: Vec<f64> = levels.iter().map(|x| x.as_f64()).collect();
    let slope = 1.0 - e.iter().map(|x| x.as_f64()).sum::<f64>();
    let offset: f64 = e.iter().zip(&lv).map(|(ek, rk)| ek.as_f64() * rk).sum();
    let clean: Vec<f64> = cell_dists.iter().map(|d| d.iter().zip(&lv).map(|(p, r)| p.as_f64() * r).sum()).collect();
    let peer_mean = clean.iter().map(|m| slope * m + offset).sum::<f64>() / clean.len() as f64;
    let constant = offset - xi * peer_mean;
    let targets: Vec<f64> = clean.iter().map(|m| slope * m + constant).collect();

    let results: Vec<(f64, f64)> = cell_dists
        .par_iter()
        .enumerate()
        .map(|(idx, dist)| {
            let mut rng = rng::seeded(derive_seed(seed, 1, idx as u64));
            let mut acc = Welford::default();
            for _ in 0..n_samples {
                let own = channel.corrupt(rng::categorical(dist, &mut rng), &mut rng);
                let pc = rng.random_range(0..cell_dists.len());
                let peer = channel.corrupt(rng::categorical(&cell_dists[pc], &mut rng), &mut rng);
                acc.push(lv[own] - xi * lv[peer]);
            }
            (acc.mean(), acc.standard_error())
        })
        .collect();
    let estimates: Vec<f64> = results.iter().map(|r| r.0).collect();
    let standard_errors: Vec<f64> = results.iter().map(|r| r.1).collect();
    let max_abs_z = estimates
        .iter()
        .zip(&standard_errors)
        .zip(&targets)
        .map(|((&y, &se), &t)| {
            if se > 0.0 {
                ((y - t) / se).abs()
            } else if (y - t).abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    let (slope_est, slope_se, _) = weighted_slope(&clean, &estimates, &standard_errors);
    Ok(MultiOutcomeReport {
        slope,
        constant,
        estimates,
        standard_errors,
        targets,
        slope_est,
        slope_se,
        max_abs_z,
        pass: max_abs_z <= 4.0,
    })
}

/// Exact expected peer reward per `(s, a)` (`s * |A| + a`) under a binary
/// channel and table-mode peer sampling.
pub fn peer_expected_rewards<T: Scalar>(
    mdp: &TabularMdp<T>,
    channel: &RewardChannel<T>,
    xi: T,
) -> Result<Vec<T>, ValidatorError> {
    if channel.size() != mdp.num_levels() {
        return Err(ValidatorError::Argument("channel size must match reward levels".into()));
    }
    let levels = mdp.reward_levels();
    let na = mdp.num_actions();
    let mut observed = vec![T::zero(); mdp.num_states() * na];
    for (s, a) in mdp.cells() {
        observed[s * na + a] = crate::noise::expected_observed_reward(channel, mdp.reward_row(s, a), levels)?;
    }
    let cells = mdp.cells();
    let peer: T = cells.iter().map(|&(s, a)| observed[s * na + a]).sum::<T>() / T::lit(cells.len() as f64);
    Ok(observed.into_iter().map(|r| r - xi * peer).collect())
}

/// Greedy optimal policies of the clean MDP and of the MDP whose reward is the
/// exact expected peer reward; equal when the argmax is preserved.
pub fn argmax_preserved<T: Scalar>(
    mdp: &TabularMdp<T>,
    channel: &RewardChannel<T>,
    xi: T,
    tolerance: T,
) -> Result<(PolicyTable<T>, PolicyTable<T>), ValidatorError> {
    let clean = value_iteration_with_rewards(mdp, &mdp.expected_rewards(), tolerance)?;
    let peer = value_iteration_with_rewards(mdp, &peer_expected_rewards(mdp, channel, xi)?, tolerance)?;
    Ok((clean.policy, peer.policy))
}

/// Continuing MDP with `2..=max_states` states, `2..=max_actions` actions,
/// three random reward levels and random dense rows.
pub fn random_mdp(rng: &mut PeerRng, max_states: usize, max_actions: usize) -> TabularMdp<f64> {
    let ns = rng.random_range(2..=max_states.max(2));
    let na = rng.random_range(2..=max_actions.max(2));
    let nl = 3;
    let row = |rng: &mut PeerRng, n: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / total).collect()
    };
    let transition = (0..ns).map(|_| (0..na).map(|_| row(rng, ns)).collect()).collect();
    let reward_dist = (0..ns).map(|_| (0..na).map(|_| row(rng, nl)).collect()).collect();
    let mut reward_levels: Vec<f64> = (0..nl).map(|_| rng.random_range(-1.0..1.0)).collect();
    reward_levels.sort_by(f64::total_cmp);
    let gamma = rng.random_range(0.5..0.95);
    let initial_dist = row(rng, ns);
    TabularMdp::new(MdpSpec {
        num_states: ns,
        num_actions: na,
        transition,
        reward_levels,
        reward_dist,
        gamma,
        initial_dist,
        terminal_states: vec![],
    })
    .expect("random rows are stochastic")
}

#[derive(Debug, Clone)]
pub struct AffineReport {
    pub cases: usize,
    /// `(mdp index, a, b)` of every case whose greedy policy changed.
    pub mismatches: Vec<(usize, f64, f64)>,
}

/// Compares greedy optimal policies under `r -> a r + b` for random MDPs.
pub fn affine_invariance_check(
    num_mdps: usize,
    scales: &[f64],
    shifts: &[f64],
    seed: u64,
) -> Result<AffineReport, ValidatorError> {
    if let Some(&a) = scales.iter().find(|&&a| !(a > 0.0)) {
        return Err(ValidatorError::Argument(format!("scale {a} must be positive")));
    }
    let mut rng = rng::seeded(seed);
    let mut cases = 0;
    let mut mismatches = Vec::new();
    for m in 0..num_mdps {
        let mdp = random_mdp(&mut rng, 6, 4);
        let base = value_iteration_with_rewards(&mdp, &mdp.expected_rewards(), 1e-12)?.policy;
        for &a in scales {
            for &b in shifts {
                let shifted = mdp.map_reward_levels(|r| a * r + b);
                let pol = value_iteration_with_rewards(&shifted, &shifted.expected_rewards(), 1e-12)?.policy;
                cases += 1;
                if pol != base {
                    mismatches.push((m, a, b));
                }
            }
        }
    }
    Ok(AffineReport { cases, mismatches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_gridworld_chain, ChainSpec};

    #[test]
    fn noiseless_lemma_target_is_centered_reward() {
        let mdp = make_gridworld_chain(&ChainSpec::right_goal(3, 0.1, 0.9)).unwrap();
        let ch = RewardChannel::identity(2);
        let rep = lemma1_validator(&mdp, &ch, 1.0, 2000, 5).unwrap();
        for c in &rep.cells {
            let p_peer = rep.p_peer;
            assert!((c.target - (c.clean_mean - p_peer)).abs() < 1e-12);
        }
    }

    #[test]
    fn lemma_refuses_degenerate_channel() {
        let mdp = make_gridworld_chain(&ChainSpec::right_goal(3, 0.1, 0.9)).unwrap();
        let ch = RewardChannel::binary(0.5, 0.6).unwrap();
        assert!(matches!(lemma1_validator(&mdp, &ch, 1.0, 100, 1), Err(ValidatorError::Noise(_))));
    }

    #[test]
    fn multi_outcome_refuses_strong_noise() {
        let r = multi_outcome_validator(&[0.0, 1.0], &[0.6, 0.5], &[vec![0.5, 0.5]], 1.0, 100, 1);
        assert!(r.is_err());
    }

    #[test]
    fn exact_peer_rewards_keep_argmax() {
        let mut rng = rng::seeded(11);
        for _ in 0..20 {
            let m = random_mdp(&mut rng, 5, 3);
            let mdp = TabularMdp::new(MdpSpec {
                num_states: m.num_states(),
                num_actions: m.num_actions(),
                transition: (0..m.num_states())
                    .map(|s| (0..m.num_actions()).map(|a| m.transition_row(s, a).to_vec()).collect())
                    .collect(),
                reward_levels: vec![0.0, 1.0],
                reward_dist: (0..m.num_states())
                    .map(|s| {
                        (0..m.num_actions())
                            .map(|a| {
                                let p = m.reward_row(s, a)[0];
                                vec![1.0 - p, p]
                            })
                            .collect()
                    })
                    .collect(),
                gamma: m.gamma(),
                initial_dist: m.initial_dist().to_vec(),
                terminal_states: vec![],
            })
            .unwrap();
            let ch = RewardChannel::binary(0.3, 0.2).unwrap();
            let (clean, peer) = argmax_preserved(&mdp, &ch, 1.0, 1e-12).unwrap();
            assert_eq!(clean, peer);
        }
    }
}
