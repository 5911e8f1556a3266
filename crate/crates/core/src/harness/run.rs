//! Multi-seed training runs and their on-disk layout:
//!
//! ```text
//! <out>/<algo>-<reward>/seed-<k>/
//!     episodes.csv  eval.csv  final.json  best.json  final_eval.json  manifest.json
//! ```
//!
//! `manifest.json` is written last; a seed directory with a manifest whose
//! config hash matches is complete and is skipped on rerun.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::protocol::{EpisodeRow, EvalMetrics, EvalRow, ProtocolConfig, TrainOutcome};
use super::{evaluate_policy, HarnessError};
use crate::agent::{Algorithm, PolicySnapshot};
use crate::dqn::{dqn_train, DqnConfig};
use crate::env::{Environment, RewardVariant, SortingEnv};
use crate::factory::{build_factory, FactoryConfig, FactoryTopology};
use crate::ppo::{ppo_train, PpoConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub algo: Algorithm,
    #[serde(alias = "reward-variant")]
    pub reward: RewardVariant,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub max_steps: usize,
    pub n_products: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Episodes of the post-training evaluation of the final and best
    /// policies.
    pub final_eval_episodes: usize,
    pub factory: FactoryConfig,
    pub dqn: DqnConfig,
    pub ppo: PpoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algo: Algorithm::Ppo,
            reward: RewardVariant::R1,
            seeds: vec![1, 2, 3, 4, 5],
            episodes: 20_000,
            max_steps: crate::env::MAX_STEPS,
            n_products: 3,
            eval_interval: 100,
            eval_episodes: 5,
            final_eval_episodes: 100,
            factory: FactoryConfig::default(),
            dqn: DqnConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<FactoryTopology, HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("no seeds given".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.episodes == 0 || self.max_steps == 0 {
            return bad("episodes and max-steps must be positive".into());
        }
        if self.eval_episodes == 0 || self.final_eval_episodes == 0 {
            return bad("evaluation episode counts must be positive".into());
        }
        let d = &self.dqn;
        if !(0.0..1.0).contains(&d.gamma) {
            return bad(format!("dqn gamma {} must lie in [0, 1)", d.gamma));
        }
        if d.batch_size == 0 || d.buffer_capacity == 0 || d.sync_interval == 0 {
            return bad("dqn batch-size, buffer-capacity and sync-interval must be positive".into());
        }
        if !(0.0..=1.0).contains(&d.eps_end) || !(d.eps_end..=1.0).contains(&d.eps_start) {
            return bad("dqn needs 0 <= eps-end <= eps-start <= 1".into());
        }
        self.ppo.check().map_err(HarnessError::Config)?;
        let topo = build_factory(&self.factory).map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.n_products == 0 || self.n_products > topo.max_products {
            return bad(format!(
                "n-products {} outside [1, {}]",
                self.n_products, topo.max_products
            ));
        }
        Ok(topo)
    }

    /// The configuration as it applies to one seed.
    pub fn for_seed(&self, seed: u64) -> RunConfig {
        RunConfig {
            seeds: vec![seed],
            ..self.clone()
        }
    }

    /// SHA-256 of the canonical JSON of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    pub fn protocol(&self, seed: u64) -> ProtocolConfig {
        ProtocolConfig {
            episodes: self.episodes,
            max_steps: self.max_steps,
            seed,
            eval_interval: self.eval_interval,
            eval_episodes: self.eval_episodes,
        }
    }
}

/// Reads a JSON config file.
pub fn load_config(path: &Path) -> Result<RunConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

pub fn cell_dir(out: &Path, algo: Algorithm, reward: RewardVariant) -> PathBuf {
    out.join(format!("{algo}-{reward}"))
}

pub fn seed_dir(out: &Path, algo: Algorithm, reward: RewardVariant, seed: u64) -> PathBuf {
    cell_dir(out, algo, reward).join(format!("seed-{seed}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedManifest {
    pub algo: Algorithm,
    pub reward: RewardVariant,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
    pub episodes: usize,
    pub duration_secs: f64,
    pub best_episode: Option<usize>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEval {
    pub final_policy: EvalMetrics,
    pub best_policy: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub dir: PathBuf,
    /// Completed earlier and left untouched.
    pub resumed: bool,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::parse(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| HarnessError::parse(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Writes the header even when there are no rows.
fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), HarnessError> {
    if rows.is_empty() {
        return write(path, format!("{}\n", header.join(",")));
    }
    write_csv(path, rows)
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::parse(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| HarnessError::parse(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::parse(path, e))
}

pub const EPISODE_HEADER: [&str; 7] = ["episode", "reward", "length", "success", "correct", "missort", "collision"];
pub const EVAL_HEADER: [&str; 4] = ["episode", "eval_success", "eval_correct_pct", "eval_len_mean"];

/// A complete seed directory's manifest, if present and matching `hash`.
pub fn completed(dir: &Path, hash: &str) -> Option<SeedManifest> {
    let m: SeedManifest = read_json(&dir.join("manifest.json")).ok()?;
    (m.config_hash == hash).then_some(m)
}

fn train_seed(config: &RunConfig, topo: Arc<FactoryTopology>, seed: u64) -> TrainOutcome {
    let make = || {
        SortingEnv::new(topo.clone(), config.reward)
            .with_products(config.n_products)
            .expect("product count validated")
    };
    let (mut train_env, mut eval_env) = (make(), make());
    let protocol = config.protocol(seed);
    match config.algo {
        Algorithm::Dqn => dqn_train(&mut train_env, &mut eval_env, &protocol, &config.dqn),
        Algorithm::Ppo => ppo_train(&mut train_env, &mut eval_env, &protocol, &config.ppo),
    }
}

fn final_evaluation<E: Environment>(
    env: &mut E,
    outcome: &TrainOutcome,
    config: &RunConfig,
    seed: u64,
) -> Result<FinalEval, HarnessError> {
    let eval = |env: &mut E, snap: &PolicySnapshot| {
        evaluate_policy(snap, env, config.final_eval_episodes, seed, config.max_steps)
    };
    Ok(FinalEval {
        final_policy: eval(env, &outcome.final_snapshot)?,
        best_policy: eval(env, outcome.best_snapshot())?,
    })
}

/// Trains one seed and writes its directory.
pub fn run_seed(config: &RunConfig, topo: Arc<FactoryTopology>, out: &Path, seed: u64) -> Result<SeedRun, HarnessError> {
    let seed_config = config.for_seed(seed);
    let hash = seed_config.hash();
    let dir = seed_dir(out, config.algo, config.reward, seed);
    if completed(&dir, &hash).is_some() {
        return Ok(SeedRun { seed, dir, resumed: true });
    }
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let _ = fs::remove_file(dir.join("manifest.json"));

    let start = Instant::now();
    let outcome = train_seed(config, topo.clone(), seed);
    let mut env = SortingEnv::new(topo, config.reward)
        .with_products(config.n_products)
        .expect("product count validated");
    let final_eval = final_evaluation(&mut env, &outcome, config, seed)?;
    let duration_secs = start.elapsed().as_secs_f64();

    write_csv_with_header::<EpisodeRow>(&dir.join("episodes.csv"), &EPISODE_HEADER, &outcome.episodes)?;
    write_csv_with_header::<EvalRow>(&dir.join("eval.csv"), &EVAL_HEADER, &outcome.evals)?;
    write(&dir.join("final.json"), outcome.final_snapshot.to_json())?;
    write(&dir.join("best.json"), outcome.best_snapshot().to_json())?;
    write(
        &dir.join("final_eval.json"),
        serde_json::to_string_pretty(&final_eval).expect("serializes"),
    )?;
    let manifest = SeedManifest {
        algo: config.algo,
        reward: config.reward,
        seed,
        config_hash: hash,
        version: env!("CARGO_PKG_VERSION").to_string(),
        episodes: config.episodes,
        duration_secs,
        best_episode: outcome.best.as_ref().map(|(e, _)| e.episode),
        config: seed_config,
    };
    write(
        &dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("serializes"),
    )?;
    Ok(SeedRun { seed, dir, resumed: false })
}

/// Trains every configured seed, `parallel` at a time. Seeds whose
/// directories are already complete are skipped.
pub fn run_training(config: &RunConfig, out: &Path, parallel: usize) -> Result<Vec<SeedRun>, HarnessError> {
    let topo = Arc::new(config.validate()?);
    let workers = parallel.clamp(1, config.seeds.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SeedRun, HarnessError>>>> =
        Mutex::new((0..config.seeds.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = config.seeds.get(i) else { break };
                let r = run_seed(config, topo.clone(), out, seed);
                results.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_keys() {
        let c: RunConfig = serde_json::from_str(
            r#"{"algo": "dqn", "reward-variant": "r2", "episodes": 50,
                "dqn": {"batch-size": 32, "eps-span": 100}}"#,
        )
        .unwrap();
        assert_eq!(c.algo, Algorithm::Dqn);
        assert_eq!(c.reward, RewardVariant::R2);
        assert_eq!(c.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(c.dqn.batch_size, 32);
        assert_eq!(c.dqn.eps_span, Some(100));
        assert_eq!(c.ppo.horizon, 2048);
        assert!(serde_json::from_str::<RunConfig>(r#"{"episodez": 3}"#).is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        assert!(RunConfig::default().validate().is_ok());
        for bad in [
            RunConfig { seeds: vec![], ..Default::default() },
            RunConfig { seeds: vec![1, 1], ..Default::default() },
            RunConfig { n_products: 4, ..Default::default() },
            RunConfig { eval_episodes: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(HarnessError::Config(_))));
        }
    }

    #[test]
    fn hash_depends_on_seed() {
        let c = RunConfig::default();
        assert_ne!(c.for_seed(1).hash(), c.for_seed(2).hash());
        assert_eq!(c.for_seed(1).hash(), c.for_seed(1).hash());
    }
}
