//! The train/evaluate loop shared by both learners.

use serde::{Deserialize, Serialize};

use crate::agent::{derive_seed, Learner, PolicySnapshot};
use crate::env::Environment;

/// Seed streams derived from a run seed.
pub const TRAIN_STREAM: u64 = 0;
pub const EVAL_STREAM: u64 = 1;
pub const FINAL_EVAL_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub episodes: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Training episodes between evaluation pauses.
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl ProtocolConfig {
    pub fn new(episodes: usize, seed: u64) -> Self {
        ProtocolConfig {
            episodes,
            max_steps: crate::env::MAX_STEPS,
            seed,
            eval_interval: 100,
            eval_episodes: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    pub reward: f64,
    pub length: u64,
    pub success: bool,
    pub correct: usize,
    pub missort: usize,
    pub collision: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// Training episodes completed before this evaluation.
    pub episode: usize,
    /// Percent of evaluation episodes that reached the goal.
    pub eval_success: f64,
    pub eval_correct_pct: f64,
    /// Mean length over successful episodes; absent without successes.
    pub eval_len_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub success_pct: f64,
    pub correct_pct: f64,
    pub len_mean: Option<f64>,
    /// Length of every evaluated episode.
    pub lengths: Vec<u64>,
    pub successes: Vec<bool>,
}

/// Plays one training episode, feeding every transition back to the learner.
pub fn play_episode<E, L>(env: &mut E, seed: u64, max_steps: usize, learner: &mut L) -> EpisodeRow
where
    E: Environment + ?Sized,
    L: Learner + ?Sized,
{
    let mut obs = env.reset(seed);
    let mut row = EpisodeRow {
        episode: 0,
        reward: 0.0,
        length: 0,
        success: false,
        correct: 0,
        missort: 0,
        collision: false,
    };
    for _ in 0..max_steps {
        let action = learner.act(&obs);
        let step = env.step(action);
        learner.observe(&obs, action, &step);
        row.reward += step.reward;
        row.length = step.status.tick;
        row.success = step.status.success;
        row.correct = step.status.correct;
        row.missort = step.status.missorted;
        row.collision = step.status.collision;
        if step.terminated || step.truncated {
            break;
        }
        obs = step.observation;
    }
    row
}

/// Runs `n` deterministic episodes with seeds `derive_seed(seed, stream, i)`.
pub fn evaluate_with<E, F>(env: &mut E, n: usize, seed: u64, stream: u64, max_steps: usize, mut act: F) -> EvalMetrics
where
    E: Environment + ?Sized,
    F: FnMut(&[f64]) -> usize,
{
    let mut lengths = Vec::with_capacity(n);
    let mut successes = Vec::with_capacity(n);
    let mut correct_pct = 0.0;
    for i in 0..n {
        let mut target = 1;
        let mut obs = env.reset(derive_seed(seed, stream, i as u64));
        let mut length = 0;
        let mut success = false;
        let mut correct = 0;
        for _ in 0..max_steps {
            let step = env.step(act(&obs));
            length = step.status.tick;
            success = step.status.success;
            correct = step.status.correct;
            target = step.status.target.max(1);
            if step.terminated || step.truncated {
                break;
            }
            obs = step.observation;
        }
        correct_pct += 100.0 * correct as f64 / target as f64;
        lengths.push(length);
        successes.push(success);
    }
    let wins: Vec<u64> = lengths
        .iter()
        .zip(&successes)
        .filter(|(_, &s)| s)
        .map(|(&l, _)| l)
        .collect();
    let nf = n.max(1) as f64;
    EvalMetrics {
        episodes: n,
        success_pct: 100.0 * wins.len() as f64 / nf,
        correct_pct: correct_pct / nf,
        len_mean: if wins.is_empty() {
            None
        } else {
            Some(wins.iter().sum::<u64>() as f64 / wins.len() as f64)
        },
        lengths,
        successes,
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub episodes: Vec<EpisodeRow>,
    pub evals: Vec<EvalRow>,
    pub final_snapshot: PolicySnapshot,
    /// Highest-scoring evaluation so far and the policy that produced it.
    pub best: Option<(EvalRow, PolicySnapshot)>,
}

impl TrainOutcome {
    pub fn best_snapshot(&self) -> &PolicySnapshot {
        self.best.as_ref().map_or(&self.final_snapshot, |(_, s)| s)
    }
}

fn better(candidate: &EvalRow, incumbent: &EvalRow) -> bool {
    (candidate.eval_success, candidate.eval_correct_pct)
        > (incumbent.eval_success, incumbent.eval_correct_pct)
}

/// Trains for `protocol.episodes` episodes, pausing every `eval_interval`
/// episodes for `eval_episodes` greedy episodes on `eval_env`.
pub fn run_protocol<E, L>(train_env: &mut E, eval_env: &mut E, learner: &mut L, protocol: &ProtocolConfig) -> TrainOutcome
where
    E: Environment + ?Sized,
    L: Learner,
{
    let mut episodes = Vec::with_capacity(protocol.episodes);
    let mut evals = Vec::new();
    let mut best: Option<(EvalRow, PolicySnapshot)> = None;
    for ep in 0..protocol.episodes {
        let seed = derive_seed(protocol.seed, TRAIN_STREAM, ep as u64);
        let mut row = play_episode(train_env, seed, protocol.max_steps, learner);
        row.episode = ep + 1;
        episodes.push(row);
        if protocol.eval_interval > 0 && (ep + 1) % protocol.eval_interval == 0 {
            let m = evaluate_with(
                eval_env,
                protocol.eval_episodes,
                protocol.seed,
                EVAL_STREAM,
                protocol.max_steps,
                |obs| learner.greedy_action(obs),
            );
            let eval = EvalRow {
                episode: ep + 1,
                eval_success: m.success_pct,
                eval_correct_pct: m.correct_pct,
                eval_len_mean: m.len_mean,
            };
            if best.as_ref().is_none_or(|(b, _)| better(&eval, b)) {
                best = Some((eval.clone(), learner.snapshot()));
            }
            evals.push(eval);
        }
    }
    TrainOutcome {
        episodes,
        evals,
        final_snapshot: learner.snapshot(),
        best,
    }
}
