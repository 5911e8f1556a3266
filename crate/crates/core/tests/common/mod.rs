//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sortline::env::ChainEnv;
use sortline::petri::{Marking, PetriNet, Place, PlaceClass, TokenValue, Transition};

/// Random timed net with at most 6 visible places and 4 transitions, plus
/// its initial marking (at most 3 tokens per place, within capacity).
pub fn random_net(seed: u64) -> (PetriNet, Marking) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = rng.gen_range(1..=6);
    let nt = rng.gen_range(1..=4);
    let mut places: Vec<Place> = (0..np)
        .map(|i| {
            let class = match rng.gen_range(0..3) {
                0 => PlaceClass::Storage,
                1 => PlaceClass::Regular,
                _ => PlaceClass::Resource,
            };
            Place::new(format!("p{i}"), class)
        })
        .collect();
    for t in 0..nt {
        places.push(Place::new(format!("h{t}"), PlaceClass::Hidden));
    }
    let total = np + nt;
    let mut pre = vec![vec![0u32; nt]; total];
    let mut post = vec![vec![0u32; nt]; total];
    for p in 0..np {
        for t in 0..nt {
            if rng.gen_bool(0.4) {
                pre[p][t] = rng.gen_range(1..=2);
            }
            if rng.gen_bool(0.4) {
                post[p][t] = rng.gen_range(1..=2);
            }
        }
    }
    let transitions = (0..nt)
        .map(|t| Transition {
            name: format!("t{t}"),
            effect: Default::default(),
            hidden_place: np + t,
        })
        .collect();
    let durations = (0..nt).map(|_| rng.gen_range(0..=4)).collect();
    let net = PetriNet {
        places,
        transitions,
        pre,
        post,
        durations,
    };
    let mut m = Marking::empty(&net);
    for p in 0..np {
        let cap = net.places[p].capacity.unwrap_or(3).min(3) as usize;
        let token = if net.places[p].class == PlaceClass::Resource {
            TokenValue::ResourceUnit
        } else {
            TokenValue::Carriage
        };
        for _ in 0..rng.gen_range(0..=cap) {
            m.push(p, token);
        }
    }
    (net, m)
}

/// Count-level model of a timed net: `M − Pre·e_t` at firing,
/// `+ Post·e_t` when the countdown runs out, collision when a delivery
/// would exceed a capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct CountOracle {
    pub counts: Vec<i64>,
    pub countdown: Vec<Option<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleOutcome {
    Ok,
    NotEnabled,
    Collision,
}

impl CountOracle {
    pub fn new(net: &PetriNet, m: &Marking) -> Self {
        let visible = net.place_count() - net.transition_count();
        CountOracle {
            counts: (0..visible).map(|p| m.count(p) as i64).collect(),
            countdown: vec![None; net.transition_count()],
        }
    }

    fn column(m: &[Vec<u32>], t: usize, n: usize) -> Vec<i64> {
        (0..n).map(|p| m[p][t] as i64).collect()
    }

    pub fn enabled(&self, net: &PetriNet, t: usize) -> bool {
        let pre = Self::column(&net.pre, t, self.counts.len());
        self.countdown[t].is_none() && self.counts.iter().zip(&pre).all(|(c, w)| c >= w)
    }

    fn deliver(&mut self, net: &PetriNet, t: usize) -> OracleOutcome {
        let post = Self::column(&net.post, t, self.counts.len());
        for (p, w) in post.iter().enumerate() {
            if let Some(cap) = net.places[p].capacity {
                if *w > 0 && self.counts[p] + w > cap as i64 {
                    return OracleOutcome::Collision;
                }
            }
        }
        for (c, w) in self.counts.iter_mut().zip(&post) {
            *c += w;
        }
        OracleOutcome::Ok
    }

    pub fn fire(&mut self, net: &PetriNet, t: usize) -> OracleOutcome {
        if !self.enabled(net, t) {
            return OracleOutcome::NotEnabled;
        }
        let pre = Self::column(&net.pre, t, self.counts.len());
        for (c, w) in self.counts.iter_mut().zip(&pre) {
            *c -= w;
        }
        match net.durations[t] {
            0 => self.deliver(net, t),
            d => {
                self.countdown[t] = Some(d);
                OracleOutcome::Ok
            }
        }
    }

    pub fn tick(&mut self, net: &PetriNet) -> OracleOutcome {
        for t in 0..self.countdown.len() {
            match self.countdown[t] {
                Some(1) => {
                    self.countdown[t] = None;
                    if self.deliver(net, t) == OracleOutcome::Collision {
                        return OracleOutcome::Collision;
                    }
                }
                Some(r) => self.countdown[t] = Some(r - 1),
                None => {}
            }
        }
        OracleOutcome::Ok
    }
}

/// Drives the engine and the oracle through the same random operation
/// sequence; returns a description of the first disagreement.
pub fn check_against_oracle(net: &PetriNet, initial: &Marking, ops_seed: u64, ops: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(ops_seed);
    let mut m = initial.clone();
    let mut oracle = CountOracle::new(net, initial);
    let visible = oracle.counts.len();
    for step in 0..ops {
        let fire = rng.gen_bool(0.6);
        let (engine, expected) = if fire {
            let t = rng.gen_range(0..net.transition_count());
            let engine_enabled = m.is_enabled(net, t);
            if engine_enabled != oracle.enabled(net, t) {
                return Err(format!("step {step}: enabledness of t{t} differs"));
            }
            (m.fire(net, t).map(|_| ()), oracle.fire(net, t))
        } else {
            (m.advance(net).map(|_| ()), oracle.tick(net))
        };
        match (engine, expected) {
            (Ok(()), OracleOutcome::Ok) => {}
            (Err(sortline::petri::PetriError::NotEnabled(_)), OracleOutcome::NotEnabled) => {}
            (Err(sortline::petri::PetriError::Collision { .. }), OracleOutcome::Collision) => return Ok(step),
            (e, o) => return Err(format!("step {step}: engine {e:?}, oracle {o:?}")),
        }
        let counts: Vec<i64> = (0..visible).map(|p| m.count(p) as i64).collect();
        if counts != oracle.counts {
            return Err(format!("step {step}: counts {counts:?} vs oracle {:?}", oracle.counts));
        }
        for t in 0..net.transition_count() {
            if m.countdown(net, t) != oracle.countdown[t] {
                return Err(format!("step {step}: countdown of t{t} differs"));
            }
        }
    }
    Ok(ops)
}

/// Q* of a chain by value iteration to 1e-10.
pub fn chain_q_star(env: &ChainEnv, gamma: f64) -> Vec<[f64; 2]> {
    let mut q = vec![[0.0f64; 2]; env.len()];
    loop {
        let mut delta: f64 = 0.0;
        for s in 0..env.len() {
            for a in 0..2 {
                let (next, r, done) = env.transition(s, a);
                let v = if done { r } else { r + gamma * q[next][0].max(q[next][1]) };
                delta = delta.max((v - q[s][a]).abs());
                q[s][a] = v;
            }
        }
        if delta < 1e-10 {
            return q;
        }
    }
}

pub fn chain_optimal_policy(q: &[[f64; 2]]) -> Vec<usize> {
    q.iter().map(|qa| usize::from(qa[1] > qa[0])).collect()
}

/// One-pass (Welford) mean and population standard deviation.
pub fn welford(values: &[f64]) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for &x in values {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    if n == 0.0 {
        (0.0, 0.0)
    } else {
        (mean, (m2 / n).sqrt())
    }
}
