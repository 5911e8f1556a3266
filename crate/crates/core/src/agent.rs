//! What the training protocol needs from a learning algorithm.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::EnvStep;
use crate::neural::{Checkpoint, NeuralError, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dqn,
    Ppo,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Ppo => "ppo",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dqn" => Ok(Algorithm::Dqn),
            "ppo" => Ok(Algorithm::Ppo),
            other => Err(format!("unknown algorithm `{other}` (expected dqn or ppo)")),
        }
    }
}

pub trait Learner {
    /// Behavior action during training (exploratory).
    fn act(&mut self, obs: &[f64]) -> usize;
    /// Deterministic action used for evaluation.
    fn greedy_action(&self, obs: &[f64]) -> usize;
    /// Feeds back the outcome of taking `action` in `obs`; may trigger updates.
    fn observe(&mut self, obs: &[f64], action: usize, step: &EnvStep);
    fn snapshot(&self) -> PolicySnapshot;
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Frozen greedy policy: argmax over the first `actions` network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    pub algorithm: Algorithm,
    pub actions: usize,
    pub network: Network,
    pub value_network: Option<Network>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    algorithm: Algorithm,
    actions: usize,
    network: Checkpoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value_network: Option<Checkpoint>,
}

impl PolicySnapshot {
    pub fn greedy_action(&self, obs: &[f64]) -> usize {
        let out = self.network.predict(obs).expect("observation fits the network");
        argmax(&out[..self.actions])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SnapshotFile {
            algorithm: self.algorithm,
            actions: self.actions,
            network: self.network.to_checkpoint(),
            value_network: self.value_network.as_ref().map(Network::to_checkpoint),
        })
        .expect("snapshot serializes")
    }

    /// Parses a snapshot and checks it fits an environment with the given
    /// observation length and action count.
    pub fn from_json(
        text: &str,
        observation_len: usize,
        actions: usize,
    ) -> Result<Self, NeuralError> {
        let file: SnapshotFile =
            serde_json::from_str(text).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let network = Network::from_checkpoint(&file.network)?;
        if network.input_len() != observation_len
            || file.actions != actions
            || network.output_len() < actions
        {
            return Err(NeuralError::Shape {
                expected: format!("{observation_len} inputs, {actions} actions"),
                found: format!(
                    "{} inputs, {} actions over {} outputs",
                    network.input_len(),
                    file.actions,
                    network.output_len()
                ),
            });
        }
        let value_network = file
            .value_network
            .as_ref()
            .map(Network::from_checkpoint)
            .transpose()?;
        Ok(PolicySnapshot {
            algorithm: file.algorithm,
            actions: file.actions,
            network,
            value_network,
        })
    }
}

/// SplitMix64 finalizer over a (base, stream, index) triple; used to derive
/// independent per-episode seeds from one run seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
