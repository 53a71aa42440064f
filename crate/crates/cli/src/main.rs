use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use peerlab_core::envs::{make_gridworld_chain, ChainSpec, TableA1Row};
use peerlab_core::harness::{self, ExperimentConfig};
use peerlab_core::noise::RewardChannel;
use peerlab_core::peer::{affine_invariance_check, lemma1_validator, multi_outcome_validator};
use peerlab_core::peerbc::{theorem1_scaling_experiment, Theorem1Config};
use peerlab_core::tiebreak::{self, TieBreakConfig};

#[derive(Parser)]
#[command(name = "peerlab", version, about = "Peer-penalty learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file (with its sweep table) and write results.csv and summary.json.
    Run(RunArgs),
    /// Like `run`, with sweep axes given on the command line.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Sweep axis `key=v1,v2,...`; repeatable.
        #[arg(long = "axis", value_name = "KEY=VALUES")]
        axes: Vec<String>,
    },
    /// Tie-breaking tables.
    Tiebreak(TiebreakArgs),
    /// Monte Carlo and exact validators.
    Validate {
        #[arg(value_enum)]
        which: Validator,
        #[command(flatten)]
        args: ValidateArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override `key=value`; values are parsed as JSON when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct TiebreakArgs {
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Run a single named row instead of the whole table.
    #[arg(long)]
    row: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    xi: Option<f64>,
    /// Bernoulli 0.6/0.4 states, flip 0.45, 1000 samples, xi 0.1.
    #[arg(long)]
    bernoulli: bool,
    /// Two-sample clipped-Gaussian comparison (parameters inferred).
    #[arg(long)]
    two_sample: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Validator {
    Lemma1,
    Multi,
    Affine,
    Theorem1,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 1.0)]
    xi: f64,
    #[arg(long, default_value_t = 0.2)]
    e_minus: f64,
    #[arg(long, default_value_t = 0.2)]
    e_plus: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trials per sample size (theorem1) or number of MDPs (affine).
    #[arg(long, default_value_t = 100)]
    trials: usize,
}

fn parse_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

fn split_pair(s: &str) -> Result<(&str, &str)> {
    s.split_once('=').with_context(|| format!("expected KEY=VALUE, got `{s}`"))
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_path(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    for s in &args.sets {
        let (k, v) = split_pair(s)?;
        cfg.set(k, parse_value(v))?;
    }
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig, args: &RunArgs) -> Result<ExitCode> {
    let outputs = harness::run(cfg, args.workers)?;
    harness::write_outputs(&args.out, cfg, &outputs)?;
    let failed = outputs.iter().filter(|o| o.error.is_some()).count();
    println!("{} runs, {} failed; wrote {}", outputs.len(), failed, args.out.display());
    for o in outputs.iter().filter(|o| o.error.is_some()) {
        eprintln!("run {} (seed {}): {}", o.run_id(cfg.num_seeds()?), o.seed, o.error.as_deref().unwrap_or(""));
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn print_rates(label: &str, r: &tiebreak::Rates) {
    println!("{label:<10}{:>9.1}%{:>9.1}%{:>9.1}%", 100.0 * r.correct, 100.0 * r.tie, 100.0 * r.incorrect);
}

fn run_tiebreak(a: &TiebreakArgs) -> Result<()> {
    if a.two_sample {
        let rep = tiebreak::two_sample_report(a.trials, a.seed)?;
        println!("two-sample clipped Gaussian, parameters inferred (n = 2, xi = 0.1)");
        println!("{:<10}{:>10}{:>10}{:>10}", "", "correct", "tie", "incorrect");
        print_rates("baseline", &rep.result.baseline);
        print_rates("peer", &rep.result.peer);
        print_rates("ref base", &rep.reference_baseline);
        print_rates("ref peer", &rep.reference_peer);
        return Ok(());
    }
    if a.bernoulli || a.row.is_some() {
        let mut cfg = if a.bernoulli {
            TieBreakConfig::bernoulli_flip(a.trials, a.seed)
        } else {
            let name = a.row.as_deref().unwrap_or_default();
            let row = TableA1Row::from_name(name).with_context(|| format!("unknown row `{name}`"))?;
            TieBreakConfig::table_row(row, a.trials, a.seed)
        };
        cfg.num_samples = a.samples.unwrap_or(cfg.num_samples);
        cfg.xi = a.xi.unwrap_or(cfg.xi);
        let res = tiebreak::tiebreak_experiment(&cfg)?;
        println!("num_samples = {}, xi = {}, trials = {}", cfg.num_samples, cfg.xi, cfg.trials);
        println!("{:<10}{:>10}{:>10}{:>10}", "", "correct", "tie", "incorrect");
        print_rates("baseline", &res.baseline);
        print_rates("peer", &res.peer);
        return Ok(());
    }
    let entries = tiebreak::table_a1_report(a.trials, a.seed)?;
    println!("deltas are peer minus baseline in points; num_samples = 2, xi = 0.1 for every row");
    print!("{}", tiebreak::format_table(&entries));
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path)?;
        for e in &entries {
            w.serialize(e)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn run_validate(which: Validator, a: &ValidateArgs) -> Result<bool> {
    match which {
        Validator::Lemma1 => {
            let mdp = make_gridworld_chain(&ChainSpec::right_goal(5, 0.1, 0.9))?;
            let ch = RewardChannel::binary(a.e_minus, a.e_plus)?;
            let r = lemma1_validator(&mdp, &ch, a.xi, a.samples, a.seed)?;
            println!("{:>6}{:>6}{:>12}{:>12}{:>10}{:>8}", "state", "act", "estimate", "target", "se", "z");
            for c in &r.cells {
                println!(
                    "{:>6}{:>6}{:>12.5}{:>12.5}{:>10.5}{:>8.2}",
                    c.state,
                    c.action,
                    c.estimate,
                    c.target,
                    c.standard_error,
                    c.z_score()
                );
            }
            println!(
                "eta = {:.4}, slope = {:.4} +- {:.4}, constant = {:.5}",
                r.eta, r.slope_est, r.slope_se, r.affine_constant
            );
            println!("max |z| = {:.3} ({})", r.max_abs_z, if r.pass { "pass" } else { "fail" });
            Ok(r.pass)
        }
        Validator::Multi => {
            let levels = [0.0, 0.5, 1.0];
            let e = [a.e_minus, 0.5 * (a.e_minus + a.e_plus), a.e_plus];
            let dists = vec![vec![0.7, 0.2, 0.1], vec![0.2, 0.6, 0.2], vec![0.1, 0.3, 0.6], vec![0.34, 0.33, 0.33]];
            let r = multi_outcome_validator(&levels, &e, &dists, a.xi, a.samples, a.seed)?;
            for ((est, se), t) in r.estimates.iter().zip(&r.standard_errors).zip(&r.targets) {
                println!("{est:>12.5}{t:>12.5}{se:>10.5}");
            }
            println!("slope = {:.4} (exact {:.4}), max |z| = {:.3}", r.slope_est, r.slope, r.max_abs_z);
            Ok(r.pass)
        }
        Validator::Affine => {
            let r = affine_invariance_check(a.trials, &[0.5, 2.0, 3.0], &[-1.0, 0.0, 4.0], a.seed)?;
            println!("{} cases, {} greedy-policy changes", r.cases, r.mismatches.len());
            Ok(r.mismatches.is_empty())
        }
        Validator::Theorem1 => {
            let mut cfg = Theorem1Config::skewed_eight_state(a.e_minus, a.xi, a.trials, a.seed);
            cfg.e_plus = a.e_plus;
            let r = theorem1_scaling_experiment(&cfg)?;
            println!("{:>8}{:>12}{:>12}{:>12}{:>12}", "N", "median", "q90", "mean", "bound");
            for row in &r.rows {
                println!("{:>8}{:>12.5}{:>12.5}{:>12.5}{:>12.5}", row.n, row.median, row.envelope, row.mean, row.bound);
            }
            println!("envelope log-log slope = {:.3}", r.envelope_slope);
            Ok(r.envelope_slope.is_finite())
        }
    }
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            if args.config.is_none() && args.sets.is_empty() {
                bail!("`run` needs --config or at least one --set");
            }
            let cfg = load(&args)?;
            execute(&cfg, &args)
        }
        Command::Sweep { run, axes } => {
            let mut cfg = load(&run)?;
            for s in &axes {
                let (k, v) = split_pair(s)?;
                cfg.add_axis(k, v.split(',').map(parse_value).collect())?;
            }
            execute(&cfg, &run)
        }
        Command::Tiebreak(args) => {
            run_tiebreak(&args)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { which, args } => {
            let ok = run_validate(which, &args)?;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
