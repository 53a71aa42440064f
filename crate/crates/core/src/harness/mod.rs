//! Config-driven experiment runner.
//!
//! A config is a flat map of dotted keys (TOML tables or JSON objects are
//! flattened) plus an optional `sweep` table mapping keys to value lists.
//! Every sweep cell is run once per seed; run seeds are
//! `derive_seed(master_seed, sweep_index, seed_index)`. Results are ordered by
//! `(sweep_index, seed_index)` regardless of worker scheduling.

mod exec;
mod output;
mod registry;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::metrics::MetricRow;
use crate::rng::derive_seed;

pub use exec::execute;
pub use output::{summarize, write_outputs, write_results_csv, write_summary_json, MeanStd, SummaryCell, CSV_TAIL};
pub use registry::{registry, Param};

/// Largest allowed `cells x seeds`.
pub const MAX_RUNS: usize = 10_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}` expects {expected}")]
    Type { key: String, expected: String },
    #[error("config key `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("sweep has {0} runs, more than the cap of {MAX_RUNS}")]
    SweepTooLarge(usize),
    #[error("run failed: {0}")]
    Run(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Rl,
    Bc,
    Cotrain,
    Tiebreak,
    Validators,
}

impl Kind {
    pub fn parse(s: &str) -> Option<Kind> {
        Some(match s {
            "rl" => Kind::Rl,
            "bc" => Kind::Bc,
            "cotrain" => Kind::Cotrain,
            "tiebreak" => Kind::Tiebreak,
            "validators" => Kind::Validators,
            _ => return None,
        })
    }
}

/// Fully resolved key/value map of one sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params(pub BTreeMap<String, Value>);

impl Params {
    fn get(&self, key: &str) -> Result<&Value, HarnessError> {
        self.0.get(key).ok_or_else(|| HarnessError::UnknownKey(key.to_string()))
    }

    fn type_err(key: &str, expected: &str) -> HarnessError {
        HarnessError::Type { key: key.to_string(), expected: expected.to_string() }
    }

    pub fn f64(&self, key: &str) -> Result<f64, HarnessError> {
        self.get(key)?.as_f64().ok_or_else(|| Self::type_err(key, "a number"))
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, HarnessError> {
        match self.get(key)? {
            Value::Null => Ok(None),
            v => v.as_f64().map(Some).ok_or_else(|| Self::type_err(key, "a number or null")),
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64, HarnessError> {
        self.get(key)?.as_u64().ok_or_else(|| Self::type_err(key, "a nonnegative integer"))
    }

    pub fn usize(&self, key: &str) -> Result<usize, HarnessError> {
        Ok(self.u64(key)? as usize)
    }

    pub fn str(&self, key: &str) -> Result<&str, HarnessError> {
        self.get(key)?.as_str().ok_or_else(|| Self::type_err(key, "a string"))
    }

    pub fn bool(&self, key: &str) -> Result<bool, HarnessError> {
        self.get(key)?.as_bool().ok_or_else(|| Self::type_err(key, "a boolean"))
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, HarnessError> {
        let arr = self.get(key)?.as_array().ok_or_else(|| Self::type_err(key, "an array"))?;
        arr.iter().map(|v| v.as_f64().ok_or_else(|| Self::type_err(key, "an array of numbers"))).collect()
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, HarnessError> {
        let arr = self.get(key)?.as_array().ok_or_else(|| Self::type_err(key, "an array"))?;
        arr.iter()
            .map(|v| v.as_u64().map(|x| x as usize).ok_or_else(|| Self::type_err(key, "an array of integers")))
            .collect()
    }

    pub fn kind(&self) -> Result<Kind, HarnessError> {
        let s = self.str("kind")?;
        Kind::parse(s).ok_or_else(|| HarnessError::Value { key: "kind".into(), msg: format!("unknown kind `{s}`") })
    }

    /// Keys specific to `kind`, in sorted order; these become CSV columns.
    pub fn columns(&self, kind: Kind) -> Vec<(&str, &Value)> {
        let reg = registry();
        self.0
            .iter()
            .filter(|(k, _)| reg.iter().any(|p| p.key == k.as_str() && p.kinds.contains(&kind)))
            .map(|(k, v)| (k.as_str(), v))
            .collect()
    }
}

const UNSWEEPABLE: [&str; 4] = ["experiment", "kind", "master_seed", "seeds"];

/// Parsed config: explicit settings plus sweep axes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub settings: BTreeMap<String, Value>,
    pub sweep: BTreeMap<String, Vec<Value>>,
}

fn flatten(prefix: &str, value: &Value, out: &mut BTreeMap<String, Value>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), value.clone());
        }
    }
}

fn type_ok(default: &Value, v: &Value) -> bool {
    match default {
        Value::Null => v.is_null() || v.is_number(),
        Value::Number(n) if n.is_u64() => v.is_u64(),
        Value::Number(_) => v.is_number(),
        Value::String(_) => v.is_string(),
        Value::Bool(_) => v.is_boolean(),
        Value::Array(_) => v.is_array(),
        Value::Object(_) => false,
    }
}

fn expected_name(default: &Value) -> &'static str {
    match default {
        Value::Null => "a number or null",
        Value::Number(n) if n.is_u64() => "a nonnegative integer",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Bool(_) => "a boolean",
        _ => "an array",
    }
}

fn check_value(key: &str, v: &Value) -> Result<(), HarnessError> {
    let reg = registry();
    let p = reg.iter().find(|p| p.key == key).ok_or_else(|| HarnessError::UnknownKey(key.to_string()))?;
    if type_ok(&p.default, v) {
        Ok(())
    } else {
        Err(HarnessError::Type { key: key.to_string(), expected: expected_name(&p.default).to_string() })
    }
}

impl ExperimentConfig {
    pub fn from_value(root: &Value) -> Result<Self, HarnessError> {
        let obj = root.as_object().ok_or_else(|| HarnessError::Parse("config root must be a table".into()))?;
        let mut settings = BTreeMap::new();
        let mut sweep_flat = BTreeMap::new();
        for (k, v) in obj {
            if k == "sweep" {
                flatten("", v, &mut sweep_flat);
            } else {
                flatten(k, v, &mut settings);
            }
        }
        let mut cfg = Self::default();
        for (k, v) in settings {
            cfg.set(&k, v)?;
        }
        for (k, v) in sweep_flat {
            let values = v.as_array().cloned().ok_or_else(|| HarnessError::Type {
                key: format!("sweep.{k}"),
                expected: "an array of values".into(),
            })?;
            cfg.add_axis(&k, values)?;
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let v: Value = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        Self::from_value(&v)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let v: Value = serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        Self::from_value(&v)
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn set(&mut self, key: &str, value: Value) -> Result<(), HarnessError> {
        check_value(key, &value)?;
        self.settings.insert(key.to_string(), value);
        Ok(())
    }

    pub fn add_axis(&mut self, key: &str, values: Vec<Value>) -> Result<(), HarnessError> {
        if UNSWEEPABLE.contains(&key) {
            return Err(HarnessError::Value { key: key.to_string(), msg: "cannot be swept".into() });
        }
        if values.is_empty() {
            return Err(HarnessError::Value { key: key.to_string(), msg: "sweep axis is empty".into() });
        }
        for v in &values {
            check_value(key, v)?;
        }
        self.sweep.insert(key.to_string(), values);
        Ok(())
    }

    fn base(&self) -> Params {
        let mut map: BTreeMap<String, Value> = registry().into_iter().map(|p| (p.key.to_string(), p.default)).collect();
        map.extend(self.settings.clone());
        Params(map)
    }

    pub fn kind(&self) -> Result<Kind, HarnessError> {
        self.base().kind()
    }

    pub fn experiment(&self) -> String {
        self.base().str("experiment").unwrap_or("experiment").to_string()
    }

    pub fn master_seed(&self) -> Result<u64, HarnessError> {
        self.base().u64("master_seed")
    }

    pub fn num_seeds(&self) -> Result<usize, HarnessError> {
        let n = self.base().usize("seeds")?;
        if n == 0 {
            return Err(HarnessError::Value { key: "seeds".into(), msg: "need at least one seed".into() });
        }
        Ok(n)
    }

    /// Cartesian product of the sweep axes in key order, last key fastest.
    pub fn cells(&self) -> Result<Vec<Params>, HarnessError> {
        let axes: Vec<(&String, &Vec<Value>)> = self.sweep.iter().collect();
        let count = axes.iter().try_fold(1usize, |acc, (_, v)| acc.checked_mul(v.len()));
        let seeds = self.num_seeds()?;
        match count.and_then(|c| c.checked_mul(seeds)) {
            Some(n) if n <= MAX_RUNS => {}
            Some(n) => return Err(HarnessError::SweepTooLarge(n)),
            None => return Err(HarnessError::SweepTooLarge(usize::MAX)),
        }
        let base = self.base();
        let mut cells = vec![base];
        for (key, values) in axes {
            cells = cells
                .into_iter()
                .flat_map(|cell| {
                    values.iter().map(move |v| {
                        let mut c = cell.clone();
                        c.0.insert(key.clone(), v.clone());
                        c
                    })
                })
                .collect();
        }
        Ok(cells)
    }
}

/// One labelled time series of a run; co-training runs emit one per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub run_id: String,
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub sweep_index: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub params: Params,
    pub series: Vec<Series>,
    /// Scalar results; `wall_time` is the only nondeterministic entry.
    pub metrics: BTreeMap<String, f64>,
    pub error: Option<String>,
}

impl RunOutput {
    pub fn run_id(&self, num_seeds: usize) -> usize {
        self.sweep_index * num_seeds + self.seed_index
    }
}

/// Runs every `(cell, seed)` pair on a pool of `workers` threads (all cores
/// when `None`). Failed runs carry their error and no rows.
pub fn run(config: &ExperimentConfig, workers: Option<usize>) -> Result<Vec<RunOutput>, HarnessError> {
    let cells = config.cells()?;
    let seeds = config.num_seeds()?;
    let master = config.master_seed()?;
    cells[0].kind()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..seeds).map(move |s| (c, s))).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder.build().map_err(|e| HarnessError::Run(e.to_string()))?;
    let outputs = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, s)| {
                let seed = derive_seed(master, c as u64, s as u64);
                let params = cells[c].clone();
                let run_id = (c * seeds + s).to_string();
                match execute(&params, seed, &run_id) {
                    Ok((series, metrics)) => {
                        RunOutput { sweep_index: c, seed_index: s, seed, params, series, metrics, error: None }
                    }
                    Err(e) => RunOutput {
                        sweep_index: c,
                        seed_index: s,
                        seed,
                        params,
                        series: Vec::new(),
                        metrics: BTreeMap::new(),
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_tables_flatten_to_dotted_keys() {
        let cfg = ExperimentConfig::from_toml(
            "kind = \"rl\"\nseeds = 2\n[noise]\ne_minus = 0.2\n[sweep]\n\"peer.xi\" = [0.0, 0.2]\n",
        )
        .unwrap();
        assert_eq!(cfg.settings["noise.e_minus"], serde_json::json!(0.2));
        assert_eq!(cfg.cells().unwrap().len(), 2);
    }

    #[test]
    fn unknown_and_mistyped_keys_are_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("bogus = 1"), Err(HarnessError::UnknownKey(_))));
        assert!(matches!(ExperimentConfig::from_toml("seeds = 1.5"), Err(HarnessError::Type { .. })));
        assert!(ExperimentConfig::from_toml("[sweep]\nseeds = [1, 2]").is_err());
    }

    #[test]
    fn sweep_cap() {
        let mut cfg = ExperimentConfig::default();
        cfg.add_axis("env.length", (2..202).map(|x| serde_json::json!(x)).collect()).unwrap();
        cfg.add_axis("env.slip", (0..51).map(|x| serde_json::json!(x as f64 * 0.01)).collect()).unwrap();
        assert!(matches!(cfg.cells(), Err(HarnessError::SweepTooLarge(10_200))));
    }

    #[test]
    fn last_axis_varies_fastest() {
        let cfg =
            ExperimentConfig::from_json(r#"{"sweep": {"env": {"length": [3, 4]}, "env.slip": [0.0, 0.1]}}"#).unwrap();
        let cells = cfg.cells().unwrap();
        let pairs: Vec<(u64, f64)> =
            cells.iter().map(|c| (c.u64("env.length").unwrap(), c.f64("env.slip").unwrap())).collect();
        assert_eq!(pairs, vec![(3, 0.0), (3, 0.1), (4, 0.0), (4, 0.1)]);
    }
}
