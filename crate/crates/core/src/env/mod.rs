//! Markov decision process wrappers: the factory line and a toy chain used
//! to check the learners against exact solutions.

mod chain;
mod encoding;
mod reward;
mod sorting;

use thiserror::Error;

use crate::petri::PetriError;

pub use chain::ChainEnv;
pub use encoding::{block_width, encode_state, encoding_order, Observation, OBSERVATION_LEN};
pub use reward::{RewardTable, RewardVariant, LEGAL_REWARDS};
pub use sorting::{read_trace, write_trace, SortingEnv, StepInfo, StepResult, MAX_STEPS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("episode is over; call reset first")]
    EpisodeOver,
    #[error("action {0} is outside the action space")]
    ActionOutOfRange(usize),
    #[error("product count {found} outside [1, {max}]")]
    ProductCount { found: usize, max: usize },
    #[error("cannot encode place {place}: {detail}")]
    Encoding { place: String, detail: String },
    #[error(transparent)]
    Engine(#[from] PetriError),
}

/// Bookkeeping carried by every step, used for episode metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpisodeStatus {
    pub success: bool,
    pub correct: usize,
    pub missorted: usize,
    pub collision: bool,
    pub tick: u64,
    /// Products the episode has to deliver.
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub status: EpisodeStatus,
}

/// Episodic environment with a discrete action space and real-valued
/// observations, as seen by the learners.
pub trait Environment {
    fn observation_len(&self) -> usize;
    fn action_count(&self) -> usize;
    /// Starts a new episode whose randomness is fully determined by `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Panics if no episode is active.
    fn step(&mut self, action: usize) -> EnvStep;
}
