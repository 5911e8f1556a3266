//! Colored Petri-net engine with deterministic timed transitions.
//!
//! Every transition owns a hidden place. Firing a transition with a non-zero
//! duration removes its inputs at once and parks a countdown token in the
//! hidden place; its outputs appear when the countdown runs out. A busy
//! transition cannot fire again until then.

mod marking;
mod net;
mod validate;

use thiserror::Error;

pub use marking::{enabled_transitions, fire, tick, Firing, Marking};
pub use net::{
    Color, PetriNet, Place, PlaceClass, TokenEffect, TokenValue, Transition, MAX_DURATION,
};
pub use validate::{validate_net, validate_net_with_budget, Diagnostic, REACHABILITY_BUDGET};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PetriError {
    #[error("transition {0} is not enabled")]
    NotEnabled(usize),
    #[error("transition {0} does not exist")]
    UnknownTransition(usize),
    #[error("collision at place {place} while completing transition {transition}")]
    Collision { place: usize, transition: usize },
    #[error("token {token:?} is not admissible at place {place}")]
    Inadmissible { place: usize, token: TokenValue },
    #[error("malformed net document: {0}")]
    Format(String),
}
