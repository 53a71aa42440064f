use serde_json::{json, Value};

use super::Kind;

/// One recognised dotted key and its default.
#[derive(Debug, Clone)]
pub struct Param {
    pub key: &'static str,
    pub default: Value,
    /// Kinds the key applies to; empty means every kind.
    pub kinds: &'static [Kind],
    pub doc: &'static str,
}

const RL: &[Kind] = &[Kind::Rl];
const BC: &[Kind] = &[Kind::Bc];
const CT: &[Kind] = &[Kind::Cotrain];
const TB: &[Kind] = &[Kind::Tiebreak];
const VA: &[Kind] = &[Kind::Validators];
const ALL: &[Kind] = &[];

fn p(key: &'static str, default: Value, kinds: &'static [Kind], doc: &'static str) -> Param {
    Param { key, default, kinds, doc }
}

/// Every key a config file may set. Keys that apply to every kind are not
/// emitted as CSV columns.
pub fn registry() -> Vec<Param> {
    vec![
        p("experiment", json!("experiment"), ALL, "name written to the experiment column"),
        p("kind", json!("rl"), ALL, "rl | bc | cotrain | tiebreak | validators"),
        p("master_seed", json!(0), ALL, "root of all run seeds"),
        p("seeds", json!(1), ALL, "seeds per sweep cell"),
        p("window", json!(5), ALL, "final-window length for r_avg"),
        // rl
        p("rl.algo", json!("q_learning"), RL, "q_learning | replay_q | reinforce"),
        p("env.kind", json!("chain"), RL, "chain | cartpole | bandit"),
        p("env.length", json!(5), RL, "chain cells"),
        p("env.slip", json!(0.1), RL, "chain slip probability"),
        p("env.gamma", json!(0.9), RL, "chain discount"),
        p("env.horizon", json!(100), RL, "episode step cap"),
        p("env.arm_means", json!([0.8, 0.2]), RL, "bandit success probabilities"),
        p("noise.e_minus", json!(0.0), RL, "P(low level observed as high)"),
        p("noise.e_plus", json!(0.0), RL, "P(high level observed as low)"),
        p("peer.xi", json!(0.2), RL, "peer coefficient (start value when decaying)"),
        p("peer.schedule", json!("constant"), RL, "constant | linear"),
        p("peer.xi_end", json!(0.0), RL, "final xi of the linear schedule"),
        p("peer.decay_steps", json!(10000), RL, "steps of the linear schedule"),
        p("peer.sampler", json!("buffer"), RL, "buffer | table"),
        p("learner.alpha_schedule", json!("visit_power"), RL, "constant | visit_power | step_power"),
        p("learner.alpha", json!(0.1), RL, "constant step size"),
        p("learner.alpha_power", json!(0.8), RL, "exponent of the power schedules"),
        p("learner.exploration", json!("epsilon_greedy"), RL, "epsilon_greedy | boltzmann"),
        p("learner.epsilon_start", json!(1.0), RL, ""),
        p("learner.epsilon_end", json!(0.05), RL, ""),
        p("learner.epsilon_fraction", json!(0.5), RL, "share of the budget spent decaying epsilon"),
        p("learner.temperature", json!(1.0), RL, "Boltzmann temperature"),
        p("learner.total_steps", json!(10000), RL, "environment step budget"),
        p("learner.episodes", json!(1000), RL, "episode budget for reinforce"),
        p("learner.batch", json!(32), RL, "replay minibatch"),
        p("learner.batch_episodes", json!(1), RL, "episodes per reinforce update"),
        p("learner.buffer_capacity", json!(10000), RL, "replay capacity"),
        p("learner.gamma", Value::Null, RL, "discount override"),
        p("learner.tilings", json!(1), RL, "cartpole tilings"),
        p("learner.max_grad_norm", json!(1000.0), RL, "gradient norm cap"),
        p("eval.episodes", json!(0), RL, "greedy evaluation episodes after training"),
        // bc
        p("bc.method", json!("erm"), BC, "erm | sgd"),
        p("bc.num_states", json!(8), BC, "states of the skewed task"),
        p("bc.state_ratio", json!(0.3), BC, "geometric ratio of the state distribution"),
        p("bc.n", json!(1000), BC, "demonstrations"),
        p("bc.e_minus", json!(0.2), BC, "P(action 0 recorded as 1)"),
        p("bc.e_plus", json!(0.2), BC, "P(action 1 recorded as 0)"),
        p("bc.xi", json!(0.2), BC, ""),
        p("bc.lr", json!(0.5), BC, "sgd step size"),
        p("bc.epochs", json!(20), BC, ""),
        p("bc.batch", json!(64), BC, ""),
        // cotrain
        p("cotrain.mask_a", json!([0]), CT, "latent coordinates hidden from view A"),
        p("cotrain.mask_b", json!([1]), CT, "latent coordinates hidden from view B"),
        p("cotrain.xi", json!(0.5), CT, ""),
        p("cotrain.rounds", json!(100), CT, ""),
        p("cotrain.episodes_per_round", json!(4), CT, ""),
        p("cotrain.horizon", json!(20), CT, ""),
        p("cotrain.lr", json!(0.2), CT, ""),
        p("cotrain.gamma", json!(0.95), CT, ""),
        p("cotrain.slip", json!(0.1), CT, ""),
        p("cotrain.labels", json!("sampled"), CT, "sampled | greedy"),
        p("cotrain.peer_delay", json!(0), CT, "rounds before the peer term starts"),
        p("cotrain.max_grad_norm", json!(5.0), CT, ""),
        p("cotrain.baseline", json!(false), CT, "also run both single-view baselines"),
        // tiebreak
        p("tiebreak.row", json!("stochastic_discrete"), TB, "named row or `bernoulli`"),
        p("tiebreak.p_better", json!(0.6), TB, "bernoulli: P(r = 1) in the better state"),
        p("tiebreak.p_worse", json!(0.4), TB, "bernoulli: P(r = 1) in the worse state"),
        p("tiebreak.flip", json!(0.45), TB, "bernoulli: flip probability"),
        p("tiebreak.num_samples", json!(2), TB, ""),
        p("tiebreak.xi", json!(0.1), TB, ""),
        p("tiebreak.trials", json!(10000), TB, ""),
        // validators
        p("validator.name", json!("lemma1"), VA, "lemma1 | multi | affine | theorem1"),
        p("validator.samples", json!(100000), VA, "samples per cell"),
        p("validator.xi", json!(1.0), VA, ""),
        p("validator.e_minus", json!(0.2), VA, ""),
        p("validator.e_plus", json!(0.2), VA, ""),
        p("validator.length", json!(5), VA, "chain cells"),
        p("validator.num_mdps", json!(50), VA, "affine: random MDPs"),
        p("validator.trials", json!(100), VA, "theorem1: trials per sample size"),
    ]
}
