use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};

use peerlab_core::harness::{self, ExperimentConfig, HarnessError, Params, RunOutput, CSV_TAIL};
use peerlab_core::rng::{derive_seed, splitmix64};

fn shipped(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::from_path(&path).unwrap()
}

#[test]
fn splitmix_matches_reference_stream() {
    // First outputs of the reference generator seeded with 0.
    assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
}

#[test]
fn run_seeds_follow_the_derivation() {
    let mut cfg = shipped("chain_noise_sweep.toml");
    cfg.set("master_seed", json!(42)).unwrap();
    cfg.set("learner.total_steps", json!(200)).unwrap();
    cfg.set("eval.episodes", json!(0)).unwrap();
    let out = harness::run(&cfg, Some(2)).unwrap();
    assert_eq!(out.len(), 40);
    for o in &out {
        assert_eq!(o.seed, derive_seed(42, o.sweep_index as u64, o.seed_index as u64));
        assert!(o.error.is_none());
    }
    let ids: Vec<usize> = out.iter().map(|o| o.run_id(10)).collect();
    assert_eq!(ids, (0..40).collect::<Vec<_>>());
    let e: Vec<f64> = out.iter().step_by(10).map(|o| o.params.f64("noise.e_minus").unwrap()).collect();
    assert_eq!(e, vec![0.1, 0.2, 0.3, 0.4]);
}

#[test]
fn toml_and_json_configs_are_equivalent() {
    let t = ExperimentConfig::from_toml(
        "kind = \"tiebreak\"\nseeds = 2\n[tiebreak]\nxi = 0.2\n[sweep]\n\"tiebreak.num_samples\" = [2, 4]\n",
    )
    .unwrap();
    let j = ExperimentConfig::from_json(
        r#"{"kind": "tiebreak", "seeds": 2, "tiebreak": {"xi": 0.2}, "sweep": {"tiebreak.num_samples": [2, 4]}}"#,
    )
    .unwrap();
    assert_eq!(t, j);
    assert_eq!(t.cells().unwrap().len(), 2);
}

#[test]
fn bad_configs_are_rejected_before_running() {
    assert!(matches!(ExperimentConfig::from_toml("learner.nope = 1"), Err(HarnessError::UnknownKey(_))));
    assert!(matches!(ExperimentConfig::from_toml("[peer]\nxi = \"high\""), Err(HarnessError::Type { .. })));
    let mut cfg = ExperimentConfig::default();
    assert!(cfg.add_axis("seeds", vec![json!(1), json!(2)]).is_err());
    cfg.add_axis("learner.batch", (1..=101).map(|i| json!(i)).collect()).unwrap();
    cfg.add_axis("peer.xi", (0..100).map(|i| json!(i as f64 / 100.0)).collect()).unwrap();
    assert!(matches!(cfg.cells(), Err(HarnessError::SweepTooLarge(10_100))));
}

fn fake_output(sweep_index: usize, seed_index: usize, r: Option<f64>) -> RunOutput {
    let mut params = BTreeMap::new();
    params.insert("kind".to_string(), json!("rl"));
    RunOutput {
        sweep_index,
        seed_index,
        seed: seed_index as u64,
        params: Params(params),
        series: Vec::new(),
        metrics: r.map(|x| BTreeMap::from([("r_avg".to_string(), x)])).unwrap_or_default(),
        error: if r.is_none() { Some("boom".into()) } else { None },
    }
}

#[test]
fn summary_uses_sample_std_over_successful_runs() {
    let outs = vec![fake_output(0, 0, Some(1.0)), fake_output(0, 1, Some(3.0)), fake_output(0, 2, None)];
    let cells = harness::summarize(&outs);
    assert_eq!(cells.len(), 1);
    let m = cells[0].metrics["r_avg"];
    assert_eq!((m.mean, m.std, m.n), (2.0, 2f64.sqrt(), 2));
    assert_eq!((cells[0].runs, cells[0].failed), (3, 1));
}

#[test]
fn csv_header_and_outputs_on_disk() {
    let mut cfg =
        ExperimentConfig::from_toml("experiment = \"hdr\"\nkind = \"tiebreak\"\n[tiebreak]\ntrials = 50\n").unwrap();
    cfg.set("seeds", json!(2)).unwrap();
    let out = harness::run(&cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    harness::write_outputs(dir.path(), &cfg, &out).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    let cols = "tiebreak.flip,tiebreak.num_samples,tiebreak.p_better,tiebreak.p_worse,tiebreak.row,tiebreak.trials,tiebreak.xi";
    assert_eq!(header, format!("experiment,run_id,seed,{cols},{}", CSV_TAIL.join(",")));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(!csv.contains("wall"));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], json!(2));
    assert_eq!(summary["cells"][0]["metrics"]["delta_correct"]["n"], json!(2));
}
