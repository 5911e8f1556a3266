use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::factory::EventKind;

/// The two reward designs. They differ only in the per-step value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardVariant {
    R1,
    R2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardTable {
    pub collision: f64,
    pub missort: f64,
    pub invalid: f64,
    pub step: f64,
    pub goal: f64,
}

impl RewardVariant {
    pub const ALL: [RewardVariant; 2] = [RewardVariant::R1, RewardVariant::R2];

    pub fn table(self) -> RewardTable {
        RewardTable {
            collision: -1.0,
            missort: -0.5,
            invalid: -0.01,
            step: match self {
                RewardVariant::R1 => 0.0,
                RewardVariant::R2 => -0.001,
            },
            goal: 1.0,
        }
    }

    pub fn reward(self, event: EventKind) -> f64 {
        let table = self.table();
        match event {
            EventKind::Collision => table.collision,
            EventKind::Missort => table.missort,
            EventKind::Invalid => table.invalid,
            EventKind::GoalReached => table.goal,
            EventKind::TransitionFired
            | EventKind::NonAction
            | EventKind::CorrectDelivery
            | EventKind::None => table.step,
        }
    }
}

/// Every value a single step can be rewarded with, across both variants.
pub const LEGAL_REWARDS: [f64; 6] = [-1.0, -0.5, -0.01, -0.001, 0.0, 1.0];

impl fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardVariant::R1 => "r1",
            RewardVariant::R2 => "r2",
        })
    }
}

impl FromStr for RewardVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "r1" => Ok(RewardVariant::R1),
            "r2" => Ok(RewardVariant::R2),
            other => Err(format!("unknown reward variant `{other}` (expected r1 or r2)")),
        }
    }
}
