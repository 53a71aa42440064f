//! Independent oracles for the solvers, samplers and dynamics.

use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use peerlab_core::envs::CartPoleEnv;
use peerlab_core::mdp::{evaluate_policy, exact_value_iteration, GenerativeModel, PolicyTable, TabularMdp};
use peerlab_core::noise::RewardChannel;
use peerlab_core::peer::random_mdp;
use peerlab_core::rng::{seeded, uniform};

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
fn solve_linear(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / m[row][row];
    }
    x
}

/// `V = (I - gamma P_pi)^-1 r_pi` for a continuing MDP.
fn linear_policy_value(mdp: &TabularMdp<f64>, policy: &[usize]) -> Vec<f64> {
    let n = mdp.num_states();
    let g = mdp.gamma();
    let mut m = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        m[s][s] += 1.0;
        for (t, p) in mdp.transition_row(s, policy[s]).iter().enumerate() {
            m[s][t] -= g * p;
        }
        b[s] = mdp.expected_reward(s, policy[s]);
    }
    solve_linear(m, b)
}

#[test]
fn policy_evaluation_matches_linear_system() {
    let mut rng = seeded(11);
    for _ in 0..30 {
        let mdp = random_mdp(&mut rng, 7, 4);
        let policy: Vec<usize> =
            (0..mdp.num_states()).map(|_| (uniform(&mut rng) * mdp.num_actions() as f64) as usize).collect();
        let v = evaluate_policy(&mdp, &PolicyTable::Deterministic(policy.clone()), 1e-13).unwrap();
        let oracle = linear_policy_value(&mdp, &policy);
        for (a, b) in v.0.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn optimal_policy_value_dominates_every_deterministic_policy() {
    let mut rng = seeded(12);
    for _ in 0..10 {
        let mdp = random_mdp(&mut rng, 4, 3);
        let star = exact_value_iteration(&mdp, 1e-13).unwrap();
        let opt = linear_policy_value(&mdp, star.policy.deterministic_actions().unwrap());
        for (a, b) in star.values.0.iter().zip(&opt) {
            assert!((a - b).abs() < 1e-8);
        }
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        for code in 0..na.pow(ns as u32) {
            let policy: Vec<usize> = (0..ns).map(|s| code / na.pow(s as u32) % na).collect();
            let v = linear_policy_value(&mdp, &policy);
            assert!(v.iter().zip(&opt).all(|(x, y)| *x <= y + 1e-8));
        }
    }
}

fn chi_square_ok(counts: &[u64], probs: &[f64]) -> bool {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let df = probs.iter().filter(|&&p| p > 0.0).count() - 1;
    stat < ChiSquared::new(df as f64).unwrap().inverse_cdf(0.999)
}

#[test]
fn generative_model_matches_rows_in_distribution() {
    let mut rng = seeded(13);
    let mdp = random_mdp(&mut rng, 6, 3);
    let mut g = GenerativeModel::new(&mdp, 5);
    for (s, a) in [(0, 0), (1, 1), (mdp.num_states() - 1, mdp.num_actions() - 1)] {
        let mut next = vec![0u64; mdp.num_states()];
        let mut levels = vec![0u64; mdp.num_levels()];
        for _ in 0..20_000 {
            let (l, t) = g.sample_step(s, a).unwrap();
            next[t] += 1;
            levels[l] += 1;
        }
        assert!(chi_square_ok(&next, mdp.transition_row(s, a)));
        assert!(chi_square_ok(&levels, mdp.reward_row(s, a)));
    }
}

#[test]
fn binary_channel_flip_counts_are_binomial() {
    let ch = RewardChannel::binary(0.2, 0.35).unwrap();
    let mut rng = seeded(14);
    let n = 50_000u64;
    for (level, p_flip) in [(0usize, 0.2), (1, 0.35)] {
        let flips = (0..n).filter(|_| ch.corrupt(level, &mut rng) != level).count() as u64;
        let bin = Binomial::new(p_flip, n).unwrap();
        let lower = bin.cdf(flips);
        let upper = 1.0 - if flips == 0 { 0.0 } else { bin.cdf(flips - 1) };
        assert!(lower.min(upper) > 5e-4, "level {level}: {flips} flips");
    }
}

/// Cart-pole equations of motion in their textbook form.
fn textbook_step(s: [f64; 4], force: f64) -> [f64; 4] {
    let (g, mc, mp, l, dt) = (9.8, 1.0, 0.1, 0.5, 0.02);
    let m = mc + mp;
    let [x, xd, th, thd] = s;
    let thdd = (g * th.sin() + th.cos() * ((-force - mp * l * thd * thd * th.sin()) / m))
        / (l * (4.0 / 3.0 - mp * th.cos().powi(2) / m));
    let xdd = (force + mp * l * (thd * thd * th.sin() - thdd * th.cos())) / m;
    [x + dt * xd, xd + dt * xdd, th + dt * thd, thd + dt * thdd]
}

#[test]
fn cartpole_integration_matches_textbook_dynamics() {
    let mut rng = seeded(15);
    for _ in 0..1000 {
        let s = [0.0; 4].map(|_: f64| 0.4 * uniform(&mut rng) - 0.2);
        let force = if uniform(&mut rng) < 0.5 { -10.0 } else { 10.0 };
        let got = CartPoleEnv::integrate(s, force);
        let want = textbook_step(s, force);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn cartpole_reports_failure_past_the_bounds() {
    assert!(CartPoleEnv::failed(&[2.5, 0.0, 0.0, 0.0]));
    assert!(CartPoleEnv::failed(&[0.0, 0.0, -0.21, 0.0]));
    assert!(!CartPoleEnv::failed(&[2.3, 0.0, 0.2, 0.0]));
}
