use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use super::{ExperimentConfig, HarnessError, RunOutput};
use crate::stats;

/// Fixed trailing CSV columns.
pub const CSV_TAIL: [&str; 5] = ["step", "episode", "clean_return", "noisy_return", "eval_error_rate"];

fn cell_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// `experiment,run_id,seed,<kind-specific keys>,step,episode,clean_return,noisy_return,eval_error_rate`.
/// Wall time is never written here, so reruns are byte-identical.
pub fn write_results_csv<W: Write>(
    writer: W,
    config: &ExperimentConfig,
    outputs: &[RunOutput],
) -> Result<(), HarnessError> {
    let kind = config.kind()?;
    let experiment = config.experiment();
    let columns: Vec<String> = match outputs.first() {
        Some(o) => o.params.columns(kind).into_iter().map(|(k, _)| k.to_string()).collect(),
        None => config.cells()?[0].columns(kind).into_iter().map(|(k, _)| k.to_string()).collect(),
    };
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = ["experiment", "run_id", "seed"]
        .into_iter()
        .chain(columns.iter().map(String::as_str))
        .chain(CSV_TAIL)
        .collect();
    w.write_record(&header)?;
    for o in outputs {
        let cols: Vec<String> = o.params.columns(kind).into_iter().map(|(_, v)| cell_text(v)).collect();
        for series in &o.series {
            for r in &series.rows {
                let mut rec = vec![experiment.clone(), series.run_id.clone(), o.seed.to_string()];
                rec.extend(cols.iter().cloned());
                rec.push(r.step.to_string());
                rec.push(r.episode.to_string());
                rec.push(r.clean_return.to_string());
                rec.push(r.noisy_return.to_string());
                rec.push(r.eval_error_rate.map(|x| x.to_string()).unwrap_or_default());
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (`n - 1`); zero for one value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        Self { mean: stats::mean(xs), std: stats::sample_std(xs), n: xs.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryCell {
    pub sweep_index: usize,
    pub params: BTreeMap<String, Value>,
    pub runs: usize,
    pub failed: usize,
    pub metrics: BTreeMap<String, MeanStd>,
}

/// Mean and sample std of every scalar metric per sweep cell, over the
/// successful runs of that cell.
pub fn summarize(outputs: &[RunOutput]) -> Vec<SummaryCell> {
    let mut cells: BTreeMap<usize, Vec<&RunOutput>> = BTreeMap::new();
    for o in outputs {
        cells.entry(o.sweep_index).or_default().push(o);
    }
    cells
        .into_iter()
        .map(|(idx, runs)| {
            let params = match runs[0].params.kind() {
                Ok(kind) => runs[0].params.columns(kind).into_iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
                Err(_) => BTreeMap::new(),
            };
            let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for o in runs.iter().filter(|o| o.error.is_none()) {
                for (k, v) in &o.metrics {
                    values.entry(k.clone()).or_default().push(*v);
                }
            }
            SummaryCell {
                sweep_index: idx,
                params,
                runs: runs.len(),
                failed: runs.iter().filter(|o| o.error.is_some()).count(),
                metrics: values.into_iter().map(|(k, xs)| (k, MeanStd::of(&xs))).collect(),
            }
        })
        .collect()
}

pub fn write_summary_json<W: Write>(
    writer: W,
    config: &ExperimentConfig,
    outputs: &[RunOutput],
) -> Result<(), HarnessError> {
    let seeds = config.num_seeds()?;
    let failures: Vec<Value> = outputs
        .iter()
        .filter_map(|o| o.error.as_ref().map(|e| json!({"run_id": o.run_id(seeds), "seed": o.seed, "error": e})))
        .collect();
    let doc = json!({
        "experiment": config.experiment(),
        "kind": config.kind()?,
        "master_seed": config.master_seed()?,
        "seeds": seeds,
        "runs": outputs.len(),
        "failed": failures.len(),
        "cells": summarize(outputs),
        "failures": failures,
    });
    serde_json::to_writer_pretty(writer, &doc)?;
    Ok(())
}

/// Writes `results.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, outputs: &[RunOutput]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_results_csv(std::fs::File::create(dir.join("results.csv"))?, config, outputs)?;
    let mut f = std::fs::File::create(dir.join("summary.json"))?;
    write_summary_json(&mut f, config, outputs)?;
    f.write_all(b"\n")?;
    Ok(())
}
