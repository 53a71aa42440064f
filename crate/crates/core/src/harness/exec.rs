use std::collections::BTreeMap;
use std::time::Instant;

use super::{HarnessError, Kind, Params, Series};
use crate::cotrain::{cotrain_run, single_view_baseline, CotrainConfig, LabelRule, MaskedChain, View};
use crate::envs::{
    make_gridworld_chain, CartPoleEnv, ChainSpec, Discretizer, Environment, MdpEnv, TableA1Row, TileCoder,
    TwoArmedBandit, TwoStateRewardProcess, CARTPOLE_MAX_STEPS,
};
use crate::learners::{
    evaluate_greedy, evaluate_greedy_tabular, q_learning_peer, reinforce_peer, replay_q_peer, AlphaSchedule,
    CartPoleTiles, Exploration, FeatureMap, LearnerConfig, OneHot, Unit,
};
use crate::mdp::PolicyTable;
use crate::metrics::{MetricRow, RunResult};
use crate::noise::{ActionChannel, RewardChannel};
use crate::peer::{
    affine_invariance_check, lemma1_validator, multi_outcome_validator, PeerConfig, SamplerPolicy, XiSchedule,
};
use crate::peerbc::{
    erm_01_peer, generate_weak_demos, majority_vote_policy, theorem1_scaling_experiment, train_peer_bc, BcTrainConfig,
    CaPairing, PolicyClassEnum, Theorem1Config,
};
use crate::rng::{self, derive_seed};
use crate::tiebreak::{tiebreak_experiment, TieBreakConfig};

type Metrics = BTreeMap<String, f64>;
type Outcome = Result<(Vec<Series>, Metrics), HarnessError>;

fn fail(e: impl ToString) -> HarnessError {
    HarnessError::Run(e.to_string())
}

fn bad(key: &str, msg: impl ToString) -> HarnessError {
    HarnessError::Value { key: key.to_string(), msg: msg.to_string() }
}

/// Executes one run; `run_id` labels the emitted series.
pub fn execute(params: &Params, seed: u64, run_id: &str) -> Outcome {
    match params.kind()? {
        Kind::Rl => rl(params, seed, run_id),
        Kind::Bc => bc(params, seed, run_id),
        Kind::Cotrain => cotrain(params, seed, run_id),
        Kind::Tiebreak => tiebreak(params, seed, run_id),
        Kind::Validators => validators(params, seed, run_id),
    }
}

fn single(run_id: &str, rows: Vec<MetricRow>) -> Vec<Series> {
    vec![Series { run_id: run_id.to_string(), rows }]
}

fn learner_config(p: &Params, seed: u64) -> Result<LearnerConfig, HarnessError> {
    let xi = p.f64("peer.xi")?;
    let schedule = match p.str("peer.schedule")? {
        "constant" => XiSchedule::constant(xi),
        "linear" => {
            XiSchedule::LinearDecay { start: xi, end: p.f64("peer.xi_end")?, horizon: p.u64("peer.decay_steps")? }
        }
        other => return Err(bad("peer.schedule", format!("unknown schedule `{other}`"))),
    };
    let sampler = match p.str("peer.sampler")? {
        "buffer" => SamplerPolicy::UniformOverBuffer,
        "table" => SamplerPolicy::UniformOverStateActionTable,
        other => return Err(bad("peer.sampler", format!("unknown sampler `{other}`"))),
    };
    let alpha = match p.str("learner.alpha_schedule")? {
        "constant" => AlphaSchedule::Constant { alpha: p.f64("learner.alpha")? },
        "visit_power" => AlphaSchedule::VisitPower { p: p.f64("learner.alpha_power")? },
        "step_power" => AlphaSchedule::StepPower { p: p.f64("learner.alpha_power")? },
        other => return Err(bad("learner.alpha_schedule", format!("unknown schedule `{other}`"))),
    };
    let exploration = match p.str("learner.exploration")? {
        "epsilon_greedy" => Exploration::EpsilonGreedy {
            start: p.f64("learner.epsilon_start")?,
            end: p.f64("learner.epsilon_end")?,
            fraction: p.f64("learner.epsilon_fraction")?,
        },
        "boltzmann" => Exploration::Boltzmann { temperature: p.f64("learner.temperature")? },
        other => return Err(bad("learner.exploration", format!("unknown exploration `{other}`"))),
    };
    Ok(LearnerConfig {
        alpha,
        exploration,
        total_steps: p.u64("learner.total_steps")?,
        episodes: p.u64("learner.episodes")?,
        gamma: p.opt_f64("learner.gamma")?,
        seed,
        peer: PeerConfig { schedule, sampler, capacity: PeerConfig::DEFAULT_CAPACITY },
        horizon: p.usize("env.horizon")?,
        batch_episodes: p.usize("learner.batch_episodes")?,
        batch: p.usize("learner.batch")?,
        buffer_capacity: p.usize("learner.buffer_capacity")?,
        window: p.usize("window")?,
        max_grad_norm: p.f64("learner.max_grad_norm")?,
        ..LearnerConfig::default()
    })
}

fn run_metrics(run: &RunResult) -> Metrics {
    let mut m = Metrics::new();
    m.insert("r_avg".into(), run.summary.r_avg);
    m.insert("n_epi".into(), run.summary.n_epi as f64);
    m.insert("wall_time".into(), run.summary.wall_time);
    m
}

fn replay_on<E, F>(
    env: &mut E,
    features: &F,
    ch: Option<&RewardChannel<f64>>,
    cfg: &LearnerConfig,
    eval: (usize, usize, u64),
) -> Result<(RunResult, Option<f64>), HarnessError>
where
    E: Environment<f64>,
    F: FeatureMap<E::Obs>,
{
    let (q, run) = replay_q_peer(env, features, ch, cfg).map_err(fail)?;
    let score =
        if eval.0 > 0 { Some(evaluate_greedy(env, features, &q, eval.0, eval.1, eval.2).map_err(fail)?) } else { None };
    Ok((run, score))
}

fn reinforce_on<E, F>(
    env: &mut E,
    features: &F,
    ch: Option<&RewardChannel<f64>>,
    cfg: &LearnerConfig,
) -> Result<(RunResult, Option<f64>), HarnessError>
where
    E: Environment<f64>,
    F: FeatureMap<E::Obs>,
{
    let (_, run) = reinforce_peer(env, features, ch, cfg).map_err(fail)?;
    Ok((run, None))
}

fn rl(p: &Params, seed: u64, run_id: &str) -> Outcome {
    let cfg = learner_config(p, seed)?;
    let (em, ep) = (p.f64("noise.e_minus")?, p.f64("noise.e_plus")?);
    let channel = if em == 0.0 && ep == 0.0 { None } else { Some(RewardChannel::binary(em, ep).map_err(fail)?) };
    let ch = channel.as_ref();
    let eval_episodes = p.usize("eval.episodes")?;
    let eval_seed = derive_seed(seed, 1, 0);
    let horizon = cfg.horizon;
    let chain = || -> Result<_, HarnessError> {
        let spec = ChainSpec::right_goal(p.usize("env.length")?, p.f64("env.slip")?, p.f64("env.gamma")?);
        make_gridworld_chain(&spec).map_err(fail)
    };
    let tiles = || -> Result<CartPoleTiles, HarnessError> {
        Ok(CartPoleTiles(TileCoder::new(Discretizer::cartpole_default(), p.usize("learner.tilings")?).map_err(fail)?))
    };
    let env_kind = p.str("env.kind")?;
    let (run, eval) = match (p.str("rl.algo")?, env_kind) {
        ("q_learning", "chain") => {
            let mdp = chain()?;
            let (q, run) = q_learning_peer(&mdp, ch, &cfg).map_err(fail)?;
            let score = if eval_episodes > 0 {
                Some(evaluate_greedy_tabular(&mdp, &q.greedy(), eval_episodes, horizon, eval_seed).map_err(fail)?)
            } else {
                None
            };
            (run, score)
        }
        ("replay_q", "chain") => {
            let mdp = chain()?;
            let mut env = MdpEnv::new(&mdp, Some(horizon));
            replay_on(&mut env, &OneHot(mdp.num_states()), ch, &cfg, (eval_episodes, horizon, eval_seed))?
        }
        ("replay_q", "cartpole") => {
            let mut env = CartPoleEnv::new();
            replay_on(&mut env, &tiles()?, ch, &cfg, (eval_episodes, CARTPOLE_MAX_STEPS, eval_seed))?
        }
        ("reinforce", "chain") => {
            let mdp = chain()?;
            let mut env = MdpEnv::new(&mdp, Some(horizon));
            reinforce_on(&mut env, &OneHot(mdp.num_states()), ch, &cfg)?
        }
        ("reinforce", "cartpole") => reinforce_on(&mut CartPoleEnv::new(), &tiles()?, ch, &cfg)?,
        ("reinforce", "bandit") => {
            let m = p.f64_list("env.arm_means")?;
            if m.len() != 2 {
                return Err(bad("env.arm_means", "need exactly two arms"));
            }
            reinforce_on(&mut TwoArmedBandit::new([m[0], m[1]]).map_err(fail)?, &Unit, ch, &cfg)?
        }
        (algo, env) => return Err(bad("rl.algo", format!("`{algo}` does not support env `{env}`"))),
    };
    let mut metrics = run_metrics(&run);
    if let Some(e) = eval {
        metrics.insert("eval_return".into(), e);
    }
    Ok((single(run_id, run.rows), metrics))
}

/// Geometric state distribution with expert action 0 in state 0 and 1 elsewhere.
fn skewed_task(num_states: usize, ratio: f64) -> (Vec<f64>, Vec<usize>) {
    let raw: Vec<f64> = (0..num_states).map(|s| ratio.powi(s as i32)).collect();
    let z: f64 = raw.iter().sum();
    let expert = (0..num_states).map(|s| usize::from(s > 0)).collect();
    (raw.iter().map(|x| x / z).collect(), expert)
}

fn weighted_error(policy: &[usize], expert: &[usize], dist: &[f64]) -> f64 {
    (0..dist.len()).filter(|&s| policy[s] != expert[s]).map(|s| dist[s]).sum()
}

fn bc(p: &Params, seed: u64, run_id: &str) -> Outcome {
    let start = Instant::now();
    let ns = p.usize("bc.num_states")?;
    let ratio = p.f64("bc.state_ratio")?;
    if ns == 0 || !(ratio > 0.0) {
        return Err(bad("bc.num_states", "need at least one state and a positive ratio"));
    }
    let (dist, expert) = skewed_task(ns, ratio);
    let channel = ActionChannel::binary(p.f64("bc.e_minus")?, p.f64("bc.e_plus")?).map_err(fail)?;
    let n = p.usize("bc.n")?;
    let xi = p.f64("bc.xi")?;
    let demos = generate_weak_demos(&PolicyTable::Deterministic(expert.clone()), &channel, &dist, n, true, seed)
        .map_err(fail)?;
    let mut metrics = Metrics::new();
    metrics.insert("majority_error".into(), weighted_error(&majority_vote_policy(&demos), &expert, &dist));
    let rows = match p.str("bc.method")? {
        "erm" => {
            let class = PolicyClassEnum::new(ns, 2).map_err(fail)?;
            let pairing = CaPairing::draw(n, &mut rng::seeded(derive_seed(seed, 1, 0)));
            let (policy, risk) = erm_01_peer(&demos, xi, &class, &pairing).map_err(fail)?;
            let acts = policy.deterministic_actions().ok_or_else(|| fail("erm returned a stochastic policy"))?;
            let error = weighted_error(acts, &expert, &dist);
            metrics.insert("error".into(), error);
            metrics.insert("peer_risk".into(), risk);
            vec![MetricRow {
                step: n as u64,
                episode: 1,
                clean_return: 1.0 - error,
                noisy_return: risk,
                eval_error_rate: Some(error),
            }]
        }
        "sgd" => {
            let cfg = BcTrainConfig {
                xi,
                lr: p.f64("bc.lr")?,
                epochs: p.usize("bc.epochs")?,
                batch: p.usize("bc.batch")?,
                seed,
                window: p.usize("window")?,
            };
            let (_, run) = train_peer_bc(&demos, &cfg, &expert, &dist).map_err(fail)?;
            let error = run.rows.last().and_then(|r| r.eval_error_rate).unwrap_or(f64::NAN);
            metrics.insert("error".into(), error);
            metrics.insert("r_avg".into(), run.summary.r_avg);
            run.rows
        }
        other => return Err(bad("bc.method", format!("unknown method `{other}`"))),
    };
    metrics.insert("wall_time".into(), start.elapsed().as_secs_f64());
    Ok((single(run_id, rows), metrics))
}

fn cotrain(p: &Params, seed: u64, run_id: &str) -> Outcome {
    let chain = MaskedChain::six_cell(p.f64("cotrain.slip")?, p.f64("cotrain.gamma")?).map_err(fail)?;
    let labels = match p.str("cotrain.labels")? {
        "sampled" => LabelRule::Sampled,
        "greedy" => LabelRule::Greedy,
        other => return Err(bad("cotrain.labels", format!("unknown label rule `{other}`"))),
    };
    let cfg = CotrainConfig {
        mask_a: p.usize_list("cotrain.mask_a")?,
        mask_b: p.usize_list("cotrain.mask_b")?,
        xi: p.f64("cotrain.xi")?,
        labels,
        rounds: p.usize("cotrain.rounds")?,
        episodes_per_round: p.usize("cotrain.episodes_per_round")?,
        horizon: p.usize("cotrain.horizon")?,
        lr: p.f64("cotrain.lr")?,
        gamma: p.f64("cotrain.gamma")?,
        max_grad_norm: p.f64("cotrain.max_grad_norm")?,
        peer_delay: p.usize("cotrain.peer_delay")?,
        seed,
        window: p.usize("window")?,
    };
    let res = cotrain_run(&chain, &cfg).map_err(fail)?;
    let mut metrics = Metrics::new();
    metrics.insert("r_avg_a".into(), res.a.run.summary.r_avg);
    metrics.insert("r_avg_b".into(), res.b.run.summary.r_avg);
    let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
    metrics.insert("shuffled_agreement_a".into(), last(&res.a.shuffled_agreement));
    metrics.insert("shuffled_agreement_b".into(), last(&res.b.shuffled_agreement));
    metrics.insert("wall_time".into(), res.a.run.summary.wall_time);
    if p.bool("cotrain.baseline")? {
        for (view, key) in [(View::A, "baseline_r_avg_a"), (View::B, "baseline_r_avg_b")] {
            let base = single_view_baseline(&chain, &cfg, view).map_err(fail)?;
            metrics.insert(key.into(), base.run.summary.r_avg);
        }
    }
    let series = vec![
        Series { run_id: format!("{run_id}/a"), rows: res.a.run.rows },
        Series { run_id: format!("{run_id}/b"), rows: res.b.run.rows },
    ];
    Ok((series, metrics))
}

fn tiebreak(p: &Params, seed: u64, run_id: &str) -> Outcome {
    let start = Instant::now();
    let row = p.str("tiebreak.row")?;
    let process = if row == "bernoulli" {
        TwoStateRewardProcess::bernoulli(
            p.f64("tiebreak.p_better")?,
            p.f64("tiebreak.p_worse")?,
            p.f64("tiebreak.flip")?,
        )
        .map_err(fail)?
    } else {
        TableA1Row::from_name(row).ok_or_else(|| bad("tiebreak.row", format!("unknown row `{row}`")))?.process()
    };
    let cfg = TieBreakConfig {
        process,
        num_samples: p.usize("tiebreak.num_samples")?,
        xi: p.f64("tiebreak.xi")?,
        trials: p.usize("tiebreak.trials")?,
        seed,
    };
    let res = tiebreak_experiment(&cfg).map_err(fail)?;
    let b = [res.baseline.correct, res.baseline.tie, res.baseline.incorrect];
    let q = [res.peer.correct, res.peer.tie, res.peer.incorrect];
    let names = ["correct", "tie", "incorrect"];
    let mut metrics = Metrics::new();
    for k in 0..3 {
        metrics.insert(format!("baseline_{}", names[k]), b[k]);
        metrics.insert(format!("peer_{}", names[k]), q[k]);
        metrics.insert(format!("delta_{}", names[k]), 100.0 * (q[k] - b[k]));
    }
    metrics.insert("wall_time".into(), start.elapsed().as_secs_f64());
    // step k: outcome k; clean = peer rate, noisy = baseline rate
    let rows = (0..3)
        .map(|k| MetricRow {
            step: k as u64,
            episode: 0,
            clean_return: q[k],
            noisy_return: b[k],
            eval_error_rate: None,
        })
        .collect();
    Ok((single(run_id, rows), metrics))
}

fn validators(p: &Params, seed: u64, run_id: &str) -> Outcome {
    let start = Instant::now();
    let xi = p.f64("validator.xi")?;
    let (em, ep) = (p.f64("validator.e_minus")?, p.f64("validator.e_plus")?);
    let samples = p.usize("validator.samples")?;
    let mut metrics = Metrics::new();
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let rows = match p.str("validator.name")? {
        "lemma1" => {
            let mdp =
                make_gridworld_chain(&ChainSpec::right_goal(p.usize("validator.length")?, 0.1, 0.9)).map_err(fail)?;
            let ch = RewardChannel::binary(em, ep).map_err(fail)?;
            let r = lemma1_validator(&mdp, &ch, xi, samples, seed).map_err(fail)?;
            metrics.insert("max_abs_z".into(), r.max_abs_z);
            metrics.insert("eta".into(), r.eta);
            metrics.insert("slope_est".into(), r.slope_est);
            metrics.insert("slope_se".into(), r.slope_se);
            metrics.insert("affine_constant".into(), r.affine_constant);
            metrics.insert("const_est".into(), r.const_est);
            metrics.insert("pass".into(), flag(r.pass));
            vec![MetricRow {
                step: samples as u64,
                episode: 0,
                clean_return: r.max_abs_z,
                noisy_return: 4.0,
                eval_error_rate: Some(1.0 - flag(r.pass)),
            }]
        }
        "multi" => {
            let levels = [0.0, 0.5, 1.0];
            let e = [em, 0.5 * (em + ep), ep];
            let mut r = rng::seeded(derive_seed(seed, 2, 0));
            let dists: Vec<Vec<f64>> = (0..6)
                .map(|_| {
                    let w: Vec<f64> = (0..3).map(|_| rng::uniform(&mut r) + 0.05).collect();
                    let z: f64 = w.iter().sum();
                    w.iter().map(|x| x / z).collect()
                })
                .collect();
            let rep = multi_outcome_validator(&levels, &e, &dists, xi, samples, seed).map_err(fail)?;
            metrics.insert("max_abs_z".into(), rep.max_abs_z);
            metrics.insert("slope".into(), rep.slope);
            metrics.insert("slope_est".into(), rep.slope_est);
            metrics.insert("pass".into(), flag(rep.pass));
            vec![MetricRow {
                step: samples as u64,
                episode: 0,
                clean_return: rep.max_abs_z,
                noisy_return: 4.0,
                eval_error_rate: Some(1.0 - flag(rep.pass)),
            }]
        }
        "affine" => {
            let rep =
                affine_invariance_check(p.usize("validator.num_mdps")?, &[0.5, 2.0, 3.0], &[-1.0, 0.0, 4.0], seed)
                    .map_err(fail)?;
            metrics.insert("cases".into(), rep.cases as f64);
            metrics.insert("mismatches".into(), rep.mismatches.len() as f64);
            metrics.insert("pass".into(), flag(rep.mismatches.is_empty()));
            vec![MetricRow {
                step: rep.cases as u64,
                episode: 0,
                clean_return: rep.mismatches.len() as f64,
                noisy_return: 0.0,
                eval_error_rate: Some(rep.mismatches.len() as f64 / rep.cases.max(1) as f64),
            }]
        }
        "theorem1" => {
            let mut cfg = Theorem1Config::skewed_eight_state(em, xi, p.usize("validator.trials")?, seed);
            cfg.e_plus = ep;
            let rep = theorem1_scaling_experiment(&cfg).map_err(fail)?;
            metrics.insert("envelope_slope".into(), rep.envelope_slope);
            if let Some(last) = rep.rows.last() {
                metrics.insert("median_at_max_n".into(), last.median);
            }
            // step N: clean = median error, noisy = quantile envelope, eval = mean error
            rep.rows
                .iter()
                .map(|r| MetricRow {
                    step: r.n as u64,
                    episode: 0,
                    clean_return: r.median,
                    noisy_return: r.envelope,
                    eval_error_rate: Some(r.mean),
                })
                .collect()
        }
        other => return Err(bad("validator.name", format!("unknown validator `{other}`"))),
    };
    metrics.insert("wall_time".into(), start.elapsed().as_secs_f64());
    Ok((single(run_id, rows), metrics))
}
