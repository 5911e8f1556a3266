//! Production-line sorting task modeled as a timed colored Petri net,
//! exposed as a reinforcement-learning environment, with from-scratch DQN
//! and PPO learners and a multi-seed experiment harness.

pub mod petri;
pub mod factory;
pub mod env;
pub mod neural;
pub mod agent;
pub mod dqn;
pub mod ppo;
pub mod harness;
