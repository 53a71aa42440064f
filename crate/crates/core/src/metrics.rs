use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One time-series row; episodic learners emit one per finished episode,
/// imitation learners one per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub episode: u64,
    pub clean_return: f64,
    pub noisy_return: f64,
    pub eval_error_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Mean clean return over the final `window` rows.
    pub r_avg: f64,
    /// Episodes completed within the step budget.
    pub n_epi: u64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub metadata: BTreeMap<String, String>,
    pub rows: Vec<MetricRow>,
    pub summary: Summary,
}

pub const DEFAULT_WINDOW: usize = 5;

impl RunResult {
    pub fn new(rows: Vec<MetricRow>, window: usize, wall_time: f64) -> Self {
        let summary = summarize_rows(&rows, window, wall_time);
        Self { metadata: BTreeMap::new(), rows, summary }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    /// Recomputes the summary from the rows, keeping the recorded wall time.
    pub fn recompute(&self, window: usize) -> Summary {
        summarize_rows(&self.rows, window, self.summary.wall_time)
    }
}

pub fn summarize_rows(rows: &[MetricRow], window: usize, wall_time: f64) -> Summary {
    let window = window.max(1);
    let tail = &rows[rows.len().saturating_sub(window)..];
    let r_avg =
        if tail.is_empty() { f64::NAN } else { tail.iter().map(|r| r.clean_return).sum::<f64>() / tail.len() as f64 };
    let n_epi = rows.iter().map(|r| r.episode).max().unwrap_or(0);
    Summary { r_avg, n_epi, wall_time }
}
