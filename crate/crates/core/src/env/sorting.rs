use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoding::{encode_state, Observation, OBSERVATION_LEN};
use super::reward::RewardVariant;
use super::{EnvError, EnvStep, Environment, EpisodeStatus};
use crate::factory::{
    classify_step, EventKind, FactoryTopology, FireStatus, ProductSpec, Tally, TickStatus,
    ACTION_COUNT, DEFAULT_MAX_PRODUCTS, NON_ACTION,
};
use crate::petri::{Color, Marking, PetriError};

/// Episode step limit.
pub const MAX_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub action: usize,
    pub event: EventKind,
    pub correct: usize,
    pub missorted: usize,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
struct Episode {
    marking: Marking,
    colors: Vec<Color>,
    tally: Tally,
    steps: usize,
    over: bool,
    collided: bool,
}

/// The sorting line as an episodic MDP. One agent step fires at most one
/// transition and then advances the net by exactly one tick.
#[derive(Debug, Clone)]
pub struct SortingEnv {
    topology: Arc<FactoryTopology>,
    reward: RewardVariant,
    n_products: usize,
    max_steps: usize,
    episode: Option<Episode>,
}

impl SortingEnv {
    pub fn new(topology: Arc<FactoryTopology>, reward: RewardVariant) -> Self {
        let n_products = DEFAULT_MAX_PRODUCTS.min(topology.max_products);
        SortingEnv {
            topology,
            reward,
            n_products,
            max_steps: MAX_STEPS,
            episode: None,
        }
    }

    pub fn with_products(mut self, n_products: usize) -> Result<Self, EnvError> {
        if n_products == 0 || n_products > self.topology.max_products {
            return Err(EnvError::ProductCount {
                found: n_products,
                max: self.topology.max_products,
            });
        }
        self.n_products = n_products;
        Ok(self)
    }

    pub fn topology(&self) -> &FactoryTopology {
        &self.topology
    }

    pub fn reward_variant(&self) -> RewardVariant {
        self.reward
    }

    pub fn n_products(&self) -> usize {
        self.n_products
    }

    pub fn marking(&self) -> Option<&Marking> {
        self.episode.as_ref().map(|e| &e.marking)
    }

    /// Colors of the current episode's products, in loading order.
    pub fn colors(&self) -> Option<&[Color]> {
        self.episode.as_ref().map(|e| e.colors.as_slice())
    }

    pub fn tally(&self) -> Option<Tally> {
        self.episode.as_ref().map(|e| e.tally)
    }

    /// Draws colors i.i.d. uniform from a generator seeded with `seed`.
    pub fn sample_colors(seed: u64, n_products: usize) -> Vec<Color> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_products)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    Color::Blue
                } else {
                    Color::Green
                }
            })
            .collect()
    }

    /// Starts an episode. Explicit `colors` override the seeded draw and
    /// fix the product count.
    pub fn reset(
        &mut self,
        seed: u64,
        n_products: usize,
        colors: Option<&[Color]>,
    ) -> Result<Observation, EnvError> {
        let colors = match colors {
            Some(c) => c.to_vec(),
            None => {
                if n_products == 0 || n_products > self.topology.max_products {
                    return Err(EnvError::ProductCount {
                        found: n_products,
                        max: self.topology.max_products,
                    });
                }
                Self::sample_colors(seed, n_products)
            }
        };
        let spec = ProductSpec::new(colors, self.topology.max_products).map_err(|_| {
            EnvError::ProductCount {
                found: n_products,
                max: self.topology.max_products,
            }
        })?;
        let marking = self.topology.inject_products(&spec);
        let obs = encode_state(&self.topology, &marking)?;
        self.episode = Some(Episode {
            marking,
            colors: spec.colors().to_vec(),
            tally: Tally::default(),
            steps: 0,
            over: false,
            collided: false,
        });
        Ok(obs)
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if action >= ACTION_COUNT {
            return Err(EnvError::ActionOutOfRange(action));
        }
        let net = &self.topology.net;
        let episode = match self.episode.as_mut() {
            Some(e) if !e.over => e,
            _ => return Err(EnvError::EpisodeOver),
        };
        let m = &mut episode.marking;

        let fire = if action == NON_ACTION {
            FireStatus::NonAction
        } else if !m.is_enabled(net, action) {
            FireStatus::Invalid
        } else {
            match m.fire(net, action) {
                Ok(f) if net.duration(action) == 0 => FireStatus::Fired(f),
                Ok(f) => FireStatus::Started(f),
                Err(PetriError::Collision { .. }) => FireStatus::Collided,
                Err(e) => return Err(e.into()),
            }
        };
        let tick = if matches!(fire, FireStatus::Collided) {
            TickStatus::Skipped
        } else {
            match m.advance(net) {
                Ok(done) => TickStatus::Completed(done),
                Err(PetriError::Collision { .. }) => TickStatus::Collided,
                Err(e) => return Err(e.into()),
            }
        };

        let (event, tally) = classify_step(episode.colors.len(), episode.tally, &fire, &tick);
        episode.tally = tally;
        episode.steps += 1;
        let terminated = matches!(event, EventKind::Collision | EventKind::GoalReached);
        let truncated = !terminated && episode.steps >= self.max_steps;
        episode.over = terminated || truncated;
        episode.collided = event == EventKind::Collision;

        Ok(StepResult {
            observation: encode_state(&self.topology, &episode.marking)?,
            reward: self.reward.reward(event),
            terminated,
            truncated,
            info: StepInfo {
                action,
                event,
                correct: tally.correct,
                missorted: tally.missorted,
                tick: episode.marking.tick(),
            },
        })
    }
}

impl Environment for SortingEnv {
    fn observation_len(&self) -> usize {
        OBSERVATION_LEN
    }

    fn action_count(&self) -> usize {
        ACTION_COUNT
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        SortingEnv::reset(self, seed, self.n_products, None)
            .expect("configured product count is valid")
            .features()
    }

    fn step(&mut self, action: usize) -> EnvStep {
        let result = SortingEnv::step(self, action).expect("step on an active episode");
        let episode = self.episode.as_ref().expect("episode exists");
        EnvStep {
            observation: result.observation.features(),
            reward: result.reward,
            terminated: result.terminated,
            truncated: result.truncated,
            status: EpisodeStatus {
                success: result.info.event == EventKind::GoalReached,
                correct: result.info.correct,
                missorted: result.info.missorted,
                collision: episode.collided,
                tick: result.info.tick,
                target: episode.colors.len(),
            },
        }
    }
}

/// Writes one JSON object per step.
pub fn write_trace<W: Write>(mut out: W, steps: &[StepResult]) -> std::io::Result<()> {
    for step in steps {
        serde_json::to_writer(&mut out, step)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(text: &str) -> Result<Vec<StepResult>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
