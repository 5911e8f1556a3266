//! Experiment orchestration: multi-seed training runs, periodic
//! evaluation, aggregation across seeds and plot-data output.

pub mod compare;
pub mod protocol;
pub mod run;
pub mod scripted;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::agent::PolicySnapshot;
use crate::env::Environment;
use crate::neural::NeuralError;

pub use compare::{compare, CellKey, CellSummary, ComparisonReport};
pub use protocol::{
    evaluate_with, play_episode, run_protocol, EpisodeRow, EvalMetrics, EvalRow, ProtocolConfig,
    TrainOutcome,
};
pub use run::{cell_dir, load_config, run_training, seed_dir, RunConfig, SeedManifest, SeedRun};
pub use scripted::scripted_action;

/// Smoothing window for training curves.
pub const SMOOTHING_WINDOW: usize = 200;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing runs: {}", .0.join(", "))]
    MissingRun(Vec<String>),
    #[error(transparent)]
    Shape(#[from] NeuralError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        HarnessError::Parse {
            path: path.into(),
            detail: detail.to_string(),
        }
    }
}

/// Trailing moving average; the first `window − 1` points average over the
/// shorter prefix available.
pub fn smooth(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be positive");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Greedy evaluation of a stored policy over `n` seeded episodes.
pub fn evaluate_policy<E: Environment + ?Sized>(
    policy: &PolicySnapshot,
    env: &mut E,
    n: usize,
    seed: u64,
    max_steps: usize,
) -> Result<EvalMetrics, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Config("evaluation needs at least one episode".into()));
    }
    let net = &policy.network;
    if net.input_len() != env.observation_len()
        || policy.actions != env.action_count()
        || net.output_len() < policy.actions
    {
        return Err(NeuralError::Shape {
            expected: format!("{} inputs, {} actions", env.observation_len(), env.action_count()),
            found: format!("{} inputs, {} actions", net.input_len(), policy.actions),
        }
        .into());
    }
    Ok(evaluate_with(
        env,
        n,
        seed,
        protocol::FINAL_EVAL_STREAM,
        max_steps,
        |obs| policy.greedy_action(obs),
    ))
}

/// Population mean and standard deviation; `(0, 0)` for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
