use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvStep, Environment, EpisodeStatus};

/// Deterministic corridor of `len` states with one-hot observations.
///
/// Action 0 moves left, action 1 moves right. Moving left from state 0
/// leaves the corridor with `exit_reward`; moving right from the last state
/// leaves it with reward 1. Every other move is free. Episodes start in a
/// uniformly drawn state so all state-action pairs get visited.
#[derive(Debug, Clone)]
pub struct ChainEnv {
    len: usize,
    exit_reward: f64,
    max_steps: usize,
    state: usize,
    steps: usize,
}

impl ChainEnv {
    pub const LEFT: usize = 0;
    pub const RIGHT: usize = 1;

    pub fn new(len: usize, exit_reward: f64, max_steps: usize) -> Self {
        assert!(len >= 2, "chain needs at least two states");
        ChainEnv {
            len,
            exit_reward,
            max_steps,
            state: 0,
            steps: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn exit_reward(&self) -> f64 {
        self.exit_reward
    }

    pub fn one_hot(&self, state: usize) -> Vec<f64> {
        (0..self.len).map(|i| f64::from(u8::from(i == state))).collect()
    }

    /// Successor, reward and termination of a move, without side effects.
    pub fn transition(&self, state: usize, action: usize) -> (usize, f64, bool) {
        match action {
            Self::LEFT if state == 0 => (state, self.exit_reward, true),
            Self::LEFT => (state - 1, 0.0, false),
            _ if state + 1 == self.len => (state, 1.0, true),
            _ => (state + 1, 0.0, false),
        }
    }
}

impl Environment for ChainEnv {
    fn observation_len(&self) -> usize {
        self.len
    }

    fn action_count(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = rng.gen_range(0..self.len);
        self.steps = 0;
        self.one_hot(self.state)
    }

    fn step(&mut self, action: usize) -> EnvStep {
        let (next, reward, terminated) = self.transition(self.state, action);
        self.state = next;
        self.steps += 1;
        let truncated = !terminated && self.steps >= self.max_steps;
        EnvStep {
            observation: self.one_hot(next),
            reward,
            terminated,
            truncated,
            status: EpisodeStatus {
                success: terminated && reward == 1.0,
                correct: usize::from(terminated && reward == 1.0),
                missorted: 0,
                collision: false,
                tick: self.steps as u64,
                target: 1,
            },
        }
    }
}
