//! Proximal policy optimization with the clipped surrogate objective,
//! a learned state-value baseline and GAE advantages.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{argmax, Algorithm, Learner, PolicySnapshot};
use crate::env::{EnvStep, Environment};
use crate::harness::protocol::{run_protocol, ProtocolConfig, TrainOutcome};
use crate::neural::{Adam, Network};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PpoError {
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

fn same_len(what: &'static str, expected: usize, found: usize) -> Result<(), PpoError> {
    if expected == found {
        Ok(())
    } else {
        Err(PpoError::Shape {
            what,
            expected,
            found,
        })
    }
}

pub fn ratio(logp_new: f64, logp_old: f64) -> f64 {
    (logp_new - logp_old).exp()
}

/// `min(r·Â, clip(r, 1−ε, 1+ε)·Â)` for a single sample.
pub fn clipped_term(r: f64, adv: f64, eps: f64) -> f64 {
    (r * adv).min(r.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Derivative of [`clipped_term`] with respect to `r`; zero wherever the
/// clipped branch is the active minimum.
pub fn clipped_term_slope(r: f64, adv: f64, eps: f64) -> f64 {
    if r * adv <= r.clamp(1.0 - eps, 1.0 + eps) * adv {
        adv
    } else {
        0.0
    }
}

/// Mean clipped surrogate over a batch.
pub fn clipped_objective(ratios: &[f64], advantages: &[f64], eps: f64) -> Result<f64, PpoError> {
    same_len("advantages", ratios.len(), advantages.len())?;
    if ratios.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| clipped_term(r, a, eps))
        .sum();
    Ok(sum / ratios.len() as f64)
}

/// Generalized advantage estimation.
///
/// `next_values[t]` is the value estimate of the state reached after step
/// `t`. It is ignored at terminal steps. A truncated step bootstraps from it
/// but the recursion does not carry advantages across the episode boundary.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    truncateds: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let n = rewards.len();
    same_len("values", n, values.len())?;
    same_len("next_values", n, next_values.len())?;
    same_len("dones", n, dones.len())?;
    same_len("truncateds", n, truncateds.len())?;
    let mut adv = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_values[t] * live - values[t];
        if dones[t] || truncateds[t] {
            carry = 0.0;
        }
        carry = delta + gamma * lambda * carry;
        adv[t] = carry;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Zero mean, unit variance (population). Near-constant input maps to zeros.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    if adv.is_empty() {
        return Vec::new();
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    if var < 1e-8 {
        return vec![0.0; adv.len()];
    }
    let sd = var.sqrt();
    adv.iter().map(|a| (a - mean) / sd).collect()
}

/// Row-wise softmax over the first `k` columns.
pub fn softmax_rows(logits: ArrayView2<f64>, k: usize) -> Array2<f64> {
    let mut out = Array2::zeros((logits.nrows(), k));
    for (row, mut dst) in logits.rows().into_iter().zip(out.rows_mut()) {
        let m = row.iter().take(k).copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for j in 0..k {
            let e = (row[j] - m).exp();
            dst[j] = e;
            z += e;
        }
        dst /= z;
    }
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let view = ArrayView2::from_shape((1, logits.len()), logits).expect("row shape");
    softmax_rows(view, logits.len()).into_raw_vec_and_offset().0
}

fn log_softmax_at(row: &[f64], a: usize) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    row[a] - lse
}

/// Inputs of the policy part of the loss for one minibatch.
#[derive(Debug, Clone, Copy)]
pub struct PolicyBatch<'a> {
    pub actions: &'a [usize],
    pub old_logp: &'a [f64],
    pub advantages: &'a [f64],
    pub clip_eps: f64,
    pub entropy_coef: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyTerms {
    /// Negated mean clipped objective.
    pub policy_loss: f64,
    pub entropy: f64,
    /// Samples whose ratio left the clip interval.
    pub clipped: usize,
}

/// Policy loss `−mean clipped objective − c_e·mean entropy` over the first
/// `k` logit columns, and its gradient with respect to all columns (columns
/// past `k` get zero).
pub fn policy_loss(logits: ArrayView2<f64>, k: usize, batch: &PolicyBatch) -> (f64, Array2<f64>, PolicyTerms) {
    let n = batch.actions.len();
    let nf = n as f64;
    let probs = softmax_rows(logits, k);
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut terms = PolicyTerms::default();
    let mut objective = 0.0;
    for i in 0..n {
        let a = batch.actions[i];
        let p = probs.row(i);
        let logp = p[a].ln();
        let r = ratio(logp, batch.old_logp[i]);
        let adv = batch.advantages[i];
        objective += clipped_term(r, adv, batch.clip_eps);
        if (r - 1.0).abs() > batch.clip_eps {
            terms.clipped += 1;
        }
        let h: f64 = -p.iter().map(|&q| if q > 0.0 { q * q.ln() } else { 0.0 }).sum::<f64>();
        terms.entropy += h;
        let slope = clipped_term_slope(r, adv, batch.clip_eps);
        for j in 0..k {
            let onehot = if j == a { 1.0 } else { 0.0 };
            let d_obj = slope * r * (onehot - p[j]);
            let log_pj = if p[j] > 0.0 { p[j].ln() } else { 0.0 };
            let d_ent = -p[j] * (log_pj + h);
            grad[[i, j]] = (-d_obj - batch.entropy_coef * d_ent) / nf;
        }
    }
    terms.policy_loss = -objective / nf;
    terms.entropy /= nf;
    let loss = terms.policy_loss - batch.entropy_coef * terms.entropy;
    (loss, grad, terms)
}

/// `c_v · mean (V − R)²` read from column `col`, and its gradient.
pub fn value_loss(outputs: ArrayView2<f64>, col: usize, returns: &[f64], value_coef: f64) -> (f64, Array2<f64>) {
    let n = returns.len() as f64;
    let mut grad = Array2::zeros(outputs.raw_dim());
    let mut mse = 0.0;
    for (i, &ret) in returns.iter().enumerate() {
        let d = outputs[[i, col]] - ret;
        mse += d * d;
        grad[[i, col]] = value_coef * 2.0 * d / n;
    }
    (value_coef * mse / n, grad)
}

/// Full loss of a shared-trunk network whose last output is the value.
pub fn composite_loss(
    outputs: ArrayView2<f64>,
    batch: &PolicyBatch,
    returns: &[f64],
    value_coef: f64,
) -> (f64, Array2<f64>) {
    let k = outputs.ncols() - 1;
    let (pl, pg, _) = policy_loss(outputs, k, batch);
    let (vl, vg) = value_loss(outputs, k, returns, value_coef);
    (pl + vl, pg + vg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub horizon: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    pub shared_trunk: bool,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            epochs: 4,
            minibatch: 64,
            horizon: 2048,
            value_coef: 0.5,
            entropy_coef: 0.01,
            lr: 3e-4,
            shared_trunk: false,
            hidden: vec![200, 100],
        }
    }
}

impl PpoConfig {
    pub fn check(&self) -> Result<(), String> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(format!("clip-eps {} must lie in (0, 1)", self.clip_eps));
        }
        for (name, v) in [("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} must lie in [0, 1]"));
            }
        }
        if self.epochs == 0 || self.minibatch == 0 || self.horizon == 0 {
            return Err("epochs, minibatch and horizon must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub logps: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// Value of the successor state; meaningful only where the next row
    /// does not continue the same episode.
    pub next_values: Vec<f64>,
    pub dones: Vec<bool>,
    pub truncateds: Vec<bool>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn clear(&mut self) {
        *self = RolloutBuffer::default();
    }

    /// Fills in successor values for rows that continue an episode.
    fn link_values(&mut self) {
        for t in 0..self.len().saturating_sub(1) {
            if !self.dones[t] && !self.truncateds[t] {
                self.next_values[t] = self.values[t + 1];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Policy and value function, either as two networks or one network with
/// an extra value output.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyNetworkPair {
    Separate { policy: Network, value: Network },
    Shared(Network),
}

impl PolicyNetworkPair {
    pub fn new<R: Rng + ?Sized>(
        observation_len: usize,
        actions: usize,
        hidden: &[usize],
        shared: bool,
        rng: &mut R,
    ) -> Self {
        let sizes = |out: usize| {
            let mut s = vec![observation_len];
            s.extend(hidden);
            s.push(out);
            s
        };
        if shared {
            let mut net = Network::new(&sizes(actions + 1), rng);
            net.scale_output_layer(0.01);
            PolicyNetworkPair::Shared(net)
        } else {
            let mut policy = Network::new(&sizes(actions), rng);
            policy.scale_output_layer(0.01);
            let value = Network::new(&sizes(1), rng);
            PolicyNetworkPair::Separate { policy, value }
        }
    }

    pub fn actions(&self) -> usize {
        match self {
            PolicyNetworkPair::Separate { policy, .. } => policy.output_len(),
            PolicyNetworkPair::Shared(net) => net.output_len() - 1,
        }
    }

    pub fn logits(&self, obs: &[f64]) -> Vec<f64> {
        let k = self.actions();
        let mut out = self.policy_net().predict(obs).expect("observation fits the network");
        out.truncate(k);
        out
    }

    pub fn probabilities(&self, obs: &[f64]) -> Vec<f64> {
        softmax(&self.logits(obs))
    }

    /// Logits and value of one observation.
    pub fn evaluate(&self, obs: &[f64]) -> (Vec<f64>, f64) {
        match self {
            PolicyNetworkPair::Separate { policy, value } => (
                policy.predict(obs).expect("observation fits the network"),
                value.predict(obs).expect("observation fits the network")[0],
            ),
            PolicyNetworkPair::Shared(net) => {
                let mut out = net.predict(obs).expect("observation fits the network");
                let v = out.pop().expect("value output");
                (out, v)
            }
        }
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        match self {
            PolicyNetworkPair::Separate { value, .. } => {
                value.predict(obs).expect("observation fits the network")[0]
            }
            PolicyNetworkPair::Shared(net) => {
                *net.predict(obs).expect("observation fits the network").last().unwrap()
            }
        }
    }

    pub fn policy_net(&self) -> &Network {
        match self {
            PolicyNetworkPair::Separate { policy, .. } => policy,
            PolicyNetworkPair::Shared(net) => net,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            PolicyNetworkPair::Separate { policy, value } => policy.is_finite() && value.is_finite(),
            PolicyNetworkPair::Shared(net) => net.is_finite(),
        }
    }
}

/// Adam state matching a [`PolicyNetworkPair`].
#[derive(Debug, Clone)]
pub struct PpoOptimizer {
    policy: Adam,
    value: Option<Adam>,
}

impl PpoOptimizer {
    pub fn new(pair: &PolicyNetworkPair, lr: f64) -> Self {
        match pair {
            PolicyNetworkPair::Separate { policy, value } => PpoOptimizer {
                policy: Adam::new(policy, lr),
                value: Some(Adam::new(value, lr)),
            },
            PolicyNetworkPair::Shared(net) => PpoOptimizer {
                policy: Adam::new(net, lr),
                value: None,
            },
        }
    }
}

/// Several epochs of shuffled minibatch descent on the PPO loss over one
/// rollout. `advantages` are raw (normalization happens here).
pub fn ppo_update<R: Rng + ?Sized>(
    pair: &mut PolicyNetworkPair,
    opt: &mut PpoOptimizer,
    buffer: &RolloutBuffer,
    advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateMetrics, PpoError> {
    let n = buffer.len();
    same_len("advantages", n, advantages.len())?;
    same_len("returns", n, returns.len())?;
    let adv = normalize_advantages(advantages);
    let width = buffer.states.first().map_or(0, Vec::len);
    let mut order: Vec<usize> = (0..n).collect();
    let mut metrics = UpdateMetrics::default();
    let mut batches = 0usize;
    let mut clipped = 0usize;
    let mut seen = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch) {
            let flat: Vec<f64> = chunk.iter().flat_map(|&i| buffer.states[i].iter().copied()).collect();
            let x = Array2::from_shape_vec((chunk.len(), width), flat).expect("uniform rows");
            let actions: Vec<usize> = chunk.iter().map(|&i| buffer.actions[i]).collect();
            let old_logp: Vec<f64> = chunk.iter().map(|&i| buffer.logps[i]).collect();
            let mb_adv: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
            let mb_ret: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();
            let batch = PolicyBatch {
                actions: &actions,
                old_logp: &old_logp,
                advantages: &mb_adv,
                clip_eps: config.clip_eps,
                entropy_coef: config.entropy_coef,
            };
            let (terms, vloss) = match pair {
                PolicyNetworkPair::Separate { policy, value } => {
                    let logits = policy.forward(x.view()).expect("batch fits the network");
                    let (_, pg, terms) = policy_loss(logits.view(), logits.ncols(), &batch);
                    let g = policy.backward(pg.view()).expect("forward just ran");
                    opt.policy.step(policy, &g).expect("gradients match");
                    let v = value.forward(x.view()).expect("batch fits the network");
                    let (vloss, vg) = value_loss(v.view(), 0, &mb_ret, config.value_coef);
                    let g = value.backward(vg.view()).expect("forward just ran");
                    opt.value
                        .as_mut()
                        .expect("separate networks have two optimizers")
                        .step(value, &g)
                        .expect("gradients match");
                    (terms, vloss)
                }
                PolicyNetworkPair::Shared(net) => {
                    let out = net.forward(x.view()).expect("batch fits the network");
                    let k = out.ncols() - 1;
                    let (_, pg, terms) = policy_loss(out.view(), k, &batch);
                    let (vloss, vg) = value_loss(out.view(), k, &mb_ret, config.value_coef);
                    let g = net.backward((pg + vg).view()).expect("forward just ran");
                    opt.policy.step(net, &g).expect("gradients match");
                    (terms, vloss)
                }
            };
            metrics.policy_loss += terms.policy_loss;
            metrics.entropy += terms.entropy;
            metrics.value_loss += vloss / config.value_coef.max(f64::MIN_POSITIVE);
            clipped += terms.clipped;
            seen += chunk.len();
            batches += 1;
        }
    }
    if batches > 0 {
        let b = batches as f64;
        metrics.policy_loss /= b;
        metrics.value_loss /= b;
        metrics.entropy /= b;
        metrics.clip_fraction = clipped as f64 / seen as f64;
    }
    Ok(metrics)
}

/// Draws an index from a categorical distribution.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub struct PpoAgent {
    config: PpoConfig,
    pair: PolicyNetworkPair,
    optimizer: PpoOptimizer,
    buffer: RolloutBuffer,
    rng: ChaCha8Rng,
    pending: Option<(f64, f64)>,
    history: Vec<UpdateMetrics>,
}

impl PpoAgent {
    pub fn new(config: PpoConfig, observation_len: usize, actions: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = PolicyNetworkPair::new(
            observation_len,
            actions,
            &config.hidden,
            config.shared_trunk,
            &mut rng,
        );
        PpoAgent {
            optimizer: PpoOptimizer::new(&pair, config.lr),
            pair,
            buffer: RolloutBuffer::default(),
            rng,
            pending: None,
            history: Vec::new(),
            config,
        }
    }

    pub fn pair(&self) -> &PolicyNetworkPair {
        &self.pair
    }

    pub fn buffer(&self) -> &RolloutBuffer {
        &self.buffer
    }

    /// Metrics of every update so far.
    pub fn history(&self) -> &[UpdateMetrics] {
        &self.history
    }

    fn update(&mut self) {
        self.buffer.link_values();
        let b = &self.buffer;
        let (adv, ret) = gae(
            &b.rewards,
            &b.values,
            &b.next_values,
            &b.dones,
            &b.truncateds,
            self.config.gamma,
            self.config.lambda,
        )
        .expect("rollout columns are aligned");
        let m = ppo_update(
            &mut self.pair,
            &mut self.optimizer,
            &self.buffer,
            &adv,
            &ret,
            &self.config,
            &mut self.rng,
        )
        .expect("rollout columns are aligned");
        self.history.push(m);
        self.buffer.clear();
    }
}

impl Learner for PpoAgent {
    fn act(&mut self, obs: &[f64]) -> usize {
        let (logits, value) = self.pair.evaluate(obs);
        let probs = softmax(&logits);
        let a = sample_categorical(&probs, &mut self.rng);
        self.pending = Some((log_softmax_at(&logits, a), value));
        a
    }

    fn greedy_action(&self, obs: &[f64]) -> usize {
        argmax(&self.pair.logits(obs))
    }

    fn observe(&mut self, obs: &[f64], action: usize, step: &EnvStep) {
        let (logp, value) = match self.pending.take() {
            Some(p) => p,
            None => {
                let (logits, v) = self.pair.evaluate(obs);
                (log_softmax_at(&logits, action), v)
            }
        };
        let b = &mut self.buffer;
        b.states.push(obs.to_vec());
        b.actions.push(action);
        b.logps.push(logp);
        b.rewards.push(step.reward);
        b.values.push(value);
        b.dones.push(step.terminated);
        b.truncateds.push(step.truncated);
        let full = b.len() >= self.config.horizon;
        // Successor values are needed where the rollout row cannot look at
        // the next row: episode truncation and the end of the horizon.
        let bootstrap = !step.terminated && (step.truncated || full);
        let nv = if bootstrap { self.pair.value(&step.observation) } else { 0.0 };
        self.buffer.next_values.push(nv);
        if full {
            self.update();
        }
    }

    fn snapshot(&self) -> PolicySnapshot {
        let (network, value_network) = match &self.pair {
            PolicyNetworkPair::Separate { policy, value } => (policy.clone(), Some(value.clone())),
            PolicyNetworkPair::Shared(net) => (net.clone(), None),
        };
        PolicySnapshot {
            algorithm: Algorithm::Ppo,
            actions: self.pair.actions(),
            network,
            value_network,
        }
    }
}

/// Trains a PPO agent under the periodic-evaluation protocol.
pub fn ppo_train<E: Environment>(
    train_env: &mut E,
    eval_env: &mut E,
    protocol: &ProtocolConfig,
    config: &PpoConfig,
) -> TrainOutcome {
    let mut agent = PpoAgent::new(
        config.clone(),
        train_env.observation_len(),
        train_env.action_count(),
        protocol.seed,
    );
    run_protocol(train_env, eval_env, &mut agent, protocol)
}
