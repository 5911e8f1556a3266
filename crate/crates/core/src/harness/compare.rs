//! Aggregation of completed runs into plot data and a summary.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::protocol::{EpisodeRow, EvalRow};
use super::run::{cell_dir, read_csv, read_json, write_csv, FinalEval, SeedManifest};
use super::{mean_std, smooth, HarnessError};
use crate::agent::Algorithm;
use crate::env::RewardVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub algo: Algorithm,
    pub reward: RewardVariant,
}

impl CellKey {
    pub fn all() -> Vec<CellKey> {
        let mut v = Vec::new();
        for algo in [Algorithm::Dqn, Algorithm::Ppo] {
            for reward in RewardVariant::ALL {
                v.push(CellKey { algo, reward });
            }
        }
        v
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.algo, self.reward)
    }
}

/// Aggregates over the seeds of one cell. Headline figures come from the
/// post-training evaluation of each seed's best checkpoint; `final_*`
/// figures use the last policy instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub algo: Algorithm,
    pub reward: RewardVariant,
    pub seeds: Vec<u64>,
    pub success_mean: f64,
    pub success_std: f64,
    pub correct_mean: f64,
    pub correct_std: f64,
    /// Mean successful-episode length; seeds without successes excluded.
    pub len_mean: Option<f64>,
    pub len_std: Option<f64>,
    pub final_success_mean: f64,
    pub final_success_std: f64,
    pub final_correct_mean: f64,
    pub final_correct_std: f64,
    /// Standard deviations are zero by construction.
    pub single_seed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub smoothing_window: usize,
    pub cells: Vec<CellSummary>,
}

impl ComparisonReport {
    pub fn cell(&self, algo: Algorithm, reward: RewardVariant) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.algo == algo && c.reward == reward)
    }
}

struct SeedData {
    seed: u64,
    episodes: Vec<EpisodeRow>,
    evals: Vec<EvalRow>,
    final_eval: FinalEval,
}

fn load_cell(root: &Path, key: CellKey, seeds: Option<&[u64]>, missing: &mut Vec<String>) -> Result<Vec<SeedData>, HarnessError> {
    let dir = cell_dir(root, key.algo, key.reward);
    let mut found: Vec<u64> = Vec::new();
    if let Ok(entries) = fs::read_dir(&dir) {
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(seed) = name.strip_prefix("seed-").and_then(|s| s.parse().ok()) {
                if entry.path().join("manifest.json").is_file() {
                    found.push(seed);
                }
            }
        }
    }
    found.sort_unstable();
    let wanted: Vec<u64> = match seeds {
        Some(s) => s.to_vec(),
        None => found.clone(),
    };
    if wanted.is_empty() {
        missing.push(key.label());
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for seed in wanted {
        if !found.contains(&seed) {
            missing.push(format!("{}/seed-{seed}", key.label()));
            continue;
        }
        let d = dir.join(format!("seed-{seed}"));
        let _: SeedManifest = read_json(&d.join("manifest.json"))?;
        out.push(SeedData {
            seed,
            episodes: read_csv(&d.join("episodes.csv"))?,
            evals: read_csv(&d.join("eval.csv"))?,
            final_eval: read_json(&d.join("final_eval.json"))?,
        });
    }
    Ok(out)
}

fn summarize(key: CellKey, data: &[SeedData]) -> CellSummary {
    let pick = |f: &dyn Fn(&SeedData) -> f64| mean_std(&data.iter().map(f).collect::<Vec<_>>());
    let (success_mean, success_std) = pick(&|s| s.final_eval.best_policy.success_pct);
    let (correct_mean, correct_std) = pick(&|s| s.final_eval.best_policy.correct_pct);
    let (final_success_mean, final_success_std) = pick(&|s| s.final_eval.final_policy.success_pct);
    let (final_correct_mean, final_correct_std) = pick(&|s| s.final_eval.final_policy.correct_pct);
    let lens: Vec<f64> = data.iter().filter_map(|s| s.final_eval.best_policy.len_mean).collect();
    let (lm, ls) = mean_std(&lens);
    CellSummary {
        cell: key.label(),
        algo: key.algo,
        reward: key.reward,
        seeds: data.iter().map(|s| s.seed).collect(),
        success_mean,
        success_std,
        correct_mean,
        correct_std,
        len_mean: (!lens.is_empty()).then_some(lm),
        len_std: (!lens.is_empty()).then_some(ls),
        final_success_mean,
        final_success_std,
        final_correct_mean,
        final_correct_std,
        single_seed: data.len() == 1,
    }
}

#[derive(Serialize)]
struct CurveRow {
    cell: String,
    episode: usize,
    success_mean: f64,
    success_std: f64,
    reward_mean: f64,
    reward_std: f64,
}

#[derive(Serialize)]
struct EvalCurveRow {
    cell: String,
    episode: usize,
    eval_success_mean: f64,
    eval_success_std: f64,
    eval_correct_mean: f64,
    eval_correct_std: f64,
}

#[derive(Serialize)]
struct BarRow {
    cell: String,
    metric: &'static str,
    mean: f64,
    std: f64,
    n_seeds: usize,
}

#[derive(Serialize)]
struct LengthRow {
    cell: String,
    seed: u64,
    episode: usize,
    length: u64,
}

/// Smoothed per-seed series, then mean ± std across seeds at every index
/// all seeds share.
fn curve(data: &[SeedData], window: usize, f: fn(&EpisodeRow) -> f64) -> Vec<(f64, f64)> {
    let series: Vec<Vec<f64>> = data
        .iter()
        .map(|s| smooth(&s.episodes.iter().map(f).collect::<Vec<_>>(), window))
        .collect();
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| mean_std(&series.iter().map(|s| s[i]).collect::<Vec<_>>()))
        .collect()
}

/// Aggregates `cells` under `root` and writes `curves.csv`,
/// `eval_curves.csv`, `bars.csv`, `lengths.csv` and `summary.json` into
/// `out`. With `seeds` given, every cell must have exactly those seeds.
pub fn compare(
    root: &Path,
    cells: &[CellKey],
    seeds: Option<&[u64]>,
    window: usize,
    out: &Path,
) -> Result<ComparisonReport, HarnessError> {
    let mut missing = Vec::new();
    let mut loaded = Vec::new();
    for &key in cells {
        let data = load_cell(root, key, seeds, &mut missing)?;
        loaded.push((key, data));
    }
    if !missing.is_empty() {
        return Err(HarnessError::MissingRun(missing));
    }

    let mut curves = Vec::new();
    let mut eval_curves = Vec::new();
    let mut bars = Vec::new();
    let mut lengths = Vec::new();
    let mut summaries = Vec::new();
    for (key, data) in &loaded {
        let label = key.label();
        let success = curve(data, window, |r| f64::from(u8::from(r.success)));
        let reward = curve(data, window, |r| r.reward);
        for (i, ((sm, ss), (rm, rs))) in success.into_iter().zip(reward).enumerate() {
            curves.push(CurveRow {
                cell: label.clone(),
                episode: data[0].episodes[i].episode,
                success_mean: sm,
                success_std: ss,
                reward_mean: rm,
                reward_std: rs,
            });
        }
        let n_evals = data.iter().map(|s| s.evals.len()).min().unwrap_or(0);
        for i in 0..n_evals {
            let (sm, ss) = mean_std(&data.iter().map(|s| s.evals[i].eval_success).collect::<Vec<_>>());
            let (cm, cs) = mean_std(&data.iter().map(|s| s.evals[i].eval_correct_pct).collect::<Vec<_>>());
            eval_curves.push(EvalCurveRow {
                cell: label.clone(),
                episode: data[0].evals[i].episode,
                eval_success_mean: sm,
                eval_success_std: ss,
                eval_correct_mean: cm,
                eval_correct_std: cs,
            });
        }
        let summary = summarize(*key, data);
        for (metric, mean, std) in [
            ("success_pct", summary.success_mean, summary.success_std),
            ("correct_pct", summary.correct_mean, summary.correct_std),
        ] {
            bars.push(BarRow {
                cell: label.clone(),
                metric,
                mean,
                std,
                n_seeds: data.len(),
            });
        }
        for s in data {
            let m = &s.final_eval.best_policy;
            for (i, (&len, &ok)) in m.lengths.iter().zip(&m.successes).enumerate() {
                if ok {
                    lengths.push(LengthRow {
                        cell: label.clone(),
                        seed: s.seed,
                        episode: i + 1,
                        length: len,
                    });
                }
            }
        }
        summaries.push(summary);
    }

    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    write_csv(&out.join("curves.csv"), &curves)?;
    write_csv(&out.join("eval_curves.csv"), &eval_curves)?;
    write_csv(&out.join("bars.csv"), &bars)?;
    write_csv(&out.join("lengths.csv"), &lengths)?;
    let report = ComparisonReport {
        smoothing_window: window,
        cells: summaries,
    };
    let path = out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&report).expect("serializes"))
        .map_err(|e| HarnessError::io(&path, e))?;
    Ok(report)
}
