//! Deep Q-learning with uniform experience replay, a periodically synced
//! target network and linearly annealed ε-greedy exploration.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{argmax, Algorithm, Learner, PolicySnapshot};
use crate::env::{EnvStep, Environment};
use crate::harness::protocol::{run_protocol, ProtocolConfig, TrainOutcome};
use crate::neural::{Adam, Network};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DqnError {
    #[error("replay buffer holds {have} transitions, {need} needed before updating")]
    BufferTooSmall { have: usize, need: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Terminal transition; truncated transitions are not terminal.
    pub done: bool,
}

/// Fixed-capacity FIFO of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Experience>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.items.get(i)
    }

    /// `n` items drawn uniformly with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Experience> {
        (0..n)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect()
    }
}

/// Linear decay from `start` to `end` over `span` steps, then flat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub span: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if step >= self.span {
            return self.end;
        }
        self.start + (self.end - self.start) * (step as f64 / self.span as f64)
    }
}

/// ε-greedy choice. With `eps = 0` the result depends only on the network
/// and the observation.
pub fn select_action<R: Rng + ?Sized>(qnet: &Network, obs: &[f64], eps: f64, rng: &mut R) -> usize {
    let explore = rng.gen::<f64>() < eps;
    if explore {
        rng.gen_range(0..qnet.output_len())
    } else {
        argmax(&qnet.predict(obs).expect("observation fits the network"))
    }
}

/// Bellman targets `r` for terminal transitions, `r + γ max_a Q_target(s', a)`
/// otherwise.
pub fn td_targets(batch: &[&Experience], target: &Network, gamma: f64) -> Vec<f64> {
    let next = stack(batch.iter().map(|e| e.next_state.as_slice()), target.input_len());
    let q_next = target.predict_batch(next.view()).expect("batch fits the network");
    batch
        .iter()
        .zip(q_next.rows())
        .map(|(e, row)| {
            if e.done {
                e.reward
            } else {
                e.reward + gamma * row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect()
}

/// Huber loss with unit threshold.
pub fn huber(d: f64) -> f64 {
    if d.abs() <= 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

pub fn huber_grad(d: f64) -> f64 {
    d.clamp(-1.0, 1.0)
}

/// Mean Huber loss of `Q(s_i, a_i)` against `targets` and its gradient with
/// respect to the Q-network outputs.
pub fn q_loss(q: ndarray::ArrayView2<f64>, actions: &[usize], targets: &[f64]) -> (f64, Array2<f64>) {
    let n = actions.len() as f64;
    let mut grad = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    for (i, (&a, &y)) in actions.iter().zip(targets).enumerate() {
        let d = q[[i, a]] - y;
        loss += huber(d);
        grad[[i, a]] = huber_grad(d) / n;
    }
    (loss / n, grad)
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.flat_map(|r| r.iter().copied()).collect();
    let n = flat.len() / width;
    Array2::from_shape_vec((n, width), flat).expect("rows share a width")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DqnConfig {
    pub gamma: f64,
    pub lr: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    /// Updates between target-network syncs.
    pub sync_interval: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Annealing length in environment steps; `None` means half of
    /// `episodes × max_steps`.
    pub eps_span: Option<u64>,
    pub hidden: Vec<usize>,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            gamma: 0.99,
            lr: 1e-4,
            buffer_capacity: 100_000,
            batch_size: 64,
            warmup: 1_000,
            sync_interval: 1_000,
            eps_start: 1.0,
            eps_end: 0.1,
            eps_span: None,
            hidden: vec![200, 100],
        }
    }
}

impl DqnConfig {
    pub fn schedule(&self, episodes: usize, max_steps: usize) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.eps_start,
            end: self.eps_end,
            span: self
                .eps_span
                .unwrap_or((episodes as u64 * max_steps as u64) / 2),
        }
    }
}

pub struct DqnAgent {
    config: DqnConfig,
    online: Network,
    target: Network,
    optimizer: Adam,
    buffer: ReplayBuffer,
    schedule: EpsilonSchedule,
    rng: ChaCha8Rng,
    env_steps: u64,
    updates: u64,
    last_loss: Option<f64>,
}

impl DqnAgent {
    pub fn new(
        config: DqnConfig,
        observation_len: usize,
        actions: usize,
        schedule: EpsilonSchedule,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![observation_len];
        sizes.extend(&config.hidden);
        sizes.push(actions);
        let online = Network::new(&sizes, &mut rng);
        DqnAgent {
            target: online.clone(),
            optimizer: Adam::new(&online, config.lr),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            online,
            schedule,
            rng,
            env_steps: 0,
            updates: 0,
            last_loss: None,
            config,
        }
    }

    pub fn online(&self) -> &Network {
        &self.online
    }

    pub fn target(&self) -> &Network {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn buffer_mut(&mut self) -> &mut ReplayBuffer {
        &mut self.buffer
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.value(self.env_steps)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    fn ready_threshold(&self) -> usize {
        self.config.warmup.max(self.config.batch_size)
    }

    /// One minibatch gradient step; syncs the target every
    /// `sync_interval` updates. Returns the minibatch loss.
    pub fn update(&mut self) -> Result<f64, DqnError> {
        let need = self.ready_threshold();
        if self.buffer.len() < need {
            return Err(DqnError::BufferTooSmall {
                have: self.buffer.len(),
                need,
            });
        }
        let batch = self.buffer.sample(self.config.batch_size, &mut self.rng);
        let targets = td_targets(&batch, &self.target, self.config.gamma);
        let states = stack(batch.iter().map(|e| e.state.as_slice()), self.online.input_len());
        let actions: Vec<usize> = batch.iter().map(|e| e.action).collect();
        let q = self.online.forward(states.view()).expect("batch fits the network");
        let (loss, grad) = q_loss(q.view(), &actions, &targets);
        let grads = self.online.backward(grad.view()).expect("forward just ran");
        self.optimizer
            .step(&mut self.online, &grads)
            .expect("gradients match the network");
        self.updates += 1;
        if self.updates.is_multiple_of(self.config.sync_interval) {
            self.target = self.online.clone();
        }
        self.last_loss = Some(loss);
        Ok(loss)
    }
}

impl Learner for DqnAgent {
    fn act(&mut self, obs: &[f64]) -> usize {
        let eps = self.epsilon();
        select_action(&self.online, obs, eps, &mut self.rng)
    }

    fn greedy_action(&self, obs: &[f64]) -> usize {
        argmax(&self.online.predict(obs).expect("observation fits the network"))
    }

    fn observe(&mut self, obs: &[f64], action: usize, step: &EnvStep) {
        self.buffer.push(Experience {
            state: obs.to_vec(),
            action,
            reward: step.reward,
            next_state: step.observation.clone(),
            done: step.terminated,
        });
        self.env_steps += 1;
        if self.buffer.len() >= self.ready_threshold() {
            self.update().expect("buffer is warm");
        }
    }

    fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            algorithm: Algorithm::Dqn,
            actions: self.online.output_len(),
            network: self.online.clone(),
            value_network: None,
        }
    }
}

/// Trains a DQN agent under the periodic-evaluation protocol.
pub fn dqn_train<E: Environment>(
    train_env: &mut E,
    eval_env: &mut E,
    protocol: &ProtocolConfig,
    config: &DqnConfig,
) -> TrainOutcome {
    let schedule = config.schedule(protocol.episodes, protocol.max_steps);
    let mut agent = DqnAgent::new(
        config.clone(),
        train_env.observation_len(),
        train_env.action_count(),
        schedule,
        protocol.seed,
    );
    run_protocol(train_env, eval_env, &mut agent, protocol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Dense;
    use ndarray::{array, Array1};

    fn exp(reward: f64, next: Vec<f64>, done: bool) -> Experience {
        Experience {
            state: vec![0.0, 0.0],
            action: 0,
            reward,
            next_state: next,
            done,
        }
    }

    /// Linear Q-network `Q(s, ·) = s · W`, so targets are easy to hand-compute.
    fn linear(weights: Array2<f64>) -> Network {
        let outs = weights.ncols();
        Network::from_layers(vec![Dense {
            weights,
            bias: Array1::zeros(outs),
        }])
        .unwrap()
    }

    #[test]
    fn epsilon_schedule_points() {
        let s = EpsilonSchedule {
            start: 1.0,
            end: 0.1,
            span: 1000,
        };
        assert_eq!(s.value(0), 1.0);
        assert_eq!(s.value(1000), 0.1);
        assert_eq!(s.value(5000), 0.1);
        assert!((s.value(500) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn buffer_drops_oldest() {
        let mut b = ReplayBuffer::new(3);
        for r in 0..5 {
            b.push(exp(r as f64, vec![0.0, 0.0], false));
        }
        assert_eq!(b.len(), 3);
        let rewards: Vec<f64> = (0..3).map(|i| b.get(i).unwrap().reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn greedy_selection_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut w = Array2::zeros((1, 12));
        w[[0, 3]] = 5.0;
        assert_eq!(select_action(&linear(w), &[1.0], 0.0, &mut rng), 3);
        let flat = linear(Array2::zeros((1, 12)));
        assert_eq!(select_action(&flat, &[1.0], 0.0, &mut rng), 0);
    }

    #[test]
    fn uniform_exploration_histogram() {
        // Chi-square goodness of fit, 11 degrees of freedom; 31.26 is the
        // 0.999 quantile.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let net = linear(Array2::zeros((1, 12)));
        let n = 100_000;
        let mut counts = [0usize; 12];
        for _ in 0..n {
            counts[select_action(&net, &[1.0], 1.0, &mut rng)] += 1;
        }
        let expected = n as f64 / 12.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 31.26, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn td_targets_cases() {
        // Q_target(s', ·) = s'·W with W = [[1, 2], [0, 0]] → max = 2 s'_0.
        let target = linear(array![[1.0, 2.0], [0.0, 0.0]]);
        let terminal = exp(1.0, vec![1.0, 0.0], true);
        let boot = exp(0.0, vec![1.0, 0.0], false);
        let mixed = exp(-0.5, vec![-1.0, 0.0], false);
        let ys = td_targets(&[&terminal, &boot, &mixed], &target, 0.99);
        assert_eq!(ys[0], 1.0);
        assert!((ys[1] - 1.98).abs() < 1e-15);
        // Scalar-loop oracle for the third item: max(-1, -2) = -1.
        let oracle = -0.5 + 0.99 * f64::max(-1.0, -2.0);
        assert_eq!(ys[2], oracle);
    }

    #[test]
    fn single_sample_loss_is_hand_huber() {
        let q = array![[0.2, 3.5]];
        let (loss, grad) = q_loss(q.view(), &[1], &[1.0]);
        assert_eq!(loss, 2.5 - 0.5);
        assert_eq!(grad, array![[0.0, 1.0]]);
        let (loss, grad) = q_loss(q.view(), &[0], &[0.5]);
        assert!((loss - 0.5 * 0.09).abs() < 1e-15);
        assert!((grad[[0, 0]] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn update_requires_warmup() {
        let config = DqnConfig {
            warmup: 10,
            batch_size: 4,
            hidden: vec![4],
            ..DqnConfig::default()
        };
        let sched = config.schedule(10, 10);
        let mut agent = DqnAgent::new(config, 2, 2, sched, 1);
        agent.buffer_mut().push(exp(0.0, vec![0.0, 0.0], true));
        assert_eq!(
            agent.update(),
            Err(DqnError::BufferTooSmall { have: 1, need: 10 })
        );
    }

    #[test]
    fn perfect_predictions_leave_parameters() {
        // Zero network predicts Q = 0 and every stored transition is
        // terminal with zero reward, so the loss and gradient vanish.
        let config = DqnConfig {
            warmup: 4,
            batch_size: 4,
            hidden: vec![3],
            ..DqnConfig::default()
        };
        let sched = config.schedule(10, 10);
        let mut agent = DqnAgent::new(config, 2, 2, sched, 1);
        agent.online = Network::zeros(&[2, 3, 2]);
        agent.target = agent.online.clone();
        agent.optimizer = Adam::new(&agent.online, 1e-3);
        for _ in 0..4 {
            agent.buffer_mut().push(exp(0.0, vec![1.0, 1.0], true));
        }
        let before = agent.online.params_flat();
        assert_eq!(agent.update().unwrap(), 0.0);
        assert_eq!(agent.online.params_flat(), before);
    }

    #[test]
    fn target_syncs_on_interval() {
        let config = DqnConfig {
            warmup: 4,
            batch_size: 4,
            sync_interval: 3,
            hidden: vec![5],
            lr: 1e-2,
            ..DqnConfig::default()
        };
        let sched = config.schedule(10, 10);
        let mut agent = DqnAgent::new(config, 2, 2, sched, 7);
        for r in 0..8 {
            agent.buffer_mut().push(exp(r as f64, vec![1.0, 0.5], r % 2 == 0));
        }
        let initial = agent.target.clone();
        agent.update().unwrap();
        agent.update().unwrap();
        assert_eq!(agent.target, initial);
        assert_ne!(agent.online, initial);
        agent.update().unwrap();
        assert_eq!(agent.target, agent.online);
    }
}
