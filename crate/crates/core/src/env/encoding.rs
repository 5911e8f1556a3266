use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::factory::FactoryTopology;
use crate::petri::{Color, Marking, PlaceClass, TokenValue};

/// Length of the encoded state: 2·2 + 4·1 + 5·6 + 2·4 + 11·5.
pub const OBSERVATION_LEN: usize = 101;

/// Encoded factory state fed to the learners.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation(pub Vec<u32>);

impl Observation {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn features(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }
}

/// Number of components a place of `class` occupies in the observation.
pub fn block_width(class: PlaceClass) -> usize {
    match class {
        PlaceClass::Resource => 2,
        PlaceClass::Storage => 1,
        PlaceClass::Regular => 6,
        PlaceClass::RegularShort => 4,
        PlaceClass::Hidden => 5,
    }
}

/// Slot of a carriage-slot token inside its one-hot block. Slot 0 is empty.
fn slot_value(token: &TokenValue) -> Option<usize> {
    match token {
        TokenValue::Carriage => Some(1),
        TokenValue::Product {
            color: Color::Blue,
            riveted: false,
        } => Some(2),
        TokenValue::Product {
            color: Color::Green,
            riveted: false,
        } => Some(3),
        TokenValue::Product {
            color: Color::Blue,
            riveted: true,
        } => Some(4),
        TokenValue::Product {
            color: Color::Green,
            riveted: true,
        } => Some(5),
        _ => None,
    }
}

/// Places in encoding order: resource, storage, regular, regular-short,
/// hidden, each in declaration order.
pub fn encoding_order(topology: &FactoryTopology) -> Vec<usize> {
    let classes = [
        PlaceClass::Resource,
        PlaceClass::Storage,
        PlaceClass::Regular,
        PlaceClass::RegularShort,
        PlaceClass::Hidden,
    ];
    classes
        .iter()
        .flat_map(|&class| {
            topology
                .net
                .places
                .iter()
                .enumerate()
                .filter(move |(_, p)| p.class == class)
                .map(|(i, _)| i)
        })
        .collect()
}

pub fn encode_state(topology: &FactoryTopology, m: &Marking) -> Result<Observation, EnvError> {
    let mut out = Vec::with_capacity(OBSERVATION_LEN);
    for p in encoding_order(topology) {
        let place = &topology.net.places[p];
        let tokens = m.tokens(p);
        if let Some(bad) = tokens.iter().find(|t| !place.admits(t)) {
            return Err(EnvError::Encoding {
                place: place.name.clone(),
                detail: format!("inadmissible token {bad:?}"),
            });
        }
        if place.class != PlaceClass::Storage && tokens.len() > 1 {
            return Err(EnvError::Encoding {
                place: place.name.clone(),
                detail: format!("{} tokens in a single slot", tokens.len()),
            });
        }
        let width = block_width(place.class);
        let hot = match place.class {
            PlaceClass::Storage => {
                out.push(tokens.len() as u32);
                continue;
            }
            PlaceClass::Resource => usize::from(tokens.is_empty()),
            PlaceClass::Hidden => match tokens.front() {
                None => 0,
                Some(TokenValue::Countdown(r)) => *r as usize,
                Some(_) => unreachable!("admissibility checked"),
            },
            PlaceClass::Regular | PlaceClass::RegularShort => match tokens.front() {
                None => 0,
                Some(tok) => slot_value(tok).expect("admissibility checked"),
            },
        };
        debug_assert!(hot < width);
        out.extend((0..width).map(|i| u32::from(i == hot)));
    }
    Ok(Observation(out))
}
