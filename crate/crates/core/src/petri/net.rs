use serde::{Deserialize, Serialize};

use super::PetriError;

/// Longest delay a timed transition may carry. Hidden places are one-hot
/// encoded as {idle, 1, 2, 3, 4}, so nothing above 4 is representable.
pub const MAX_DURATION: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Blue,
    Green,
}

impl Color {
    pub const ALL: [Color; 2] = [Color::Blue, Color::Green];
}

/// Value carried by a single token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenValue {
    /// An empty transport carriage.
    Carriage,
    /// Lower or upper part of a product, not yet joined.
    RawPart(Color),
    /// Assembled product sitting on its carriage.
    Product { color: Color, riveted: bool },
    /// Availability marker of a shared resource.
    ResourceUnit,
    /// Remaining ticks of a busy timed transition.
    Countdown(u8),
}

impl TokenValue {
    pub fn is_product(&self) -> bool {
        matches!(self, TokenValue::Product { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceClass {
    Resource,
    Storage,
    Regular,
    RegularShort,
    Hidden,
}

impl PlaceClass {
    /// Whether a token of this value may rest in a place of this class.
    pub fn admits(self, token: &TokenValue) -> bool {
        match self {
            PlaceClass::Resource => matches!(token, TokenValue::ResourceUnit),
            PlaceClass::Storage => matches!(
                token,
                TokenValue::Carriage | TokenValue::RawPart(_) | TokenValue::Product { .. }
            ),
            PlaceClass::Regular => {
                matches!(token, TokenValue::Carriage | TokenValue::Product { .. })
            }
            PlaceClass::RegularShort => matches!(
                token,
                TokenValue::Carriage | TokenValue::Product { riveted: false, .. }
            ),
            PlaceClass::Hidden => {
                matches!(token, TokenValue::Countdown(r) if *r <= MAX_DURATION)
            }
        }
    }

    /// Capacity implied by the class; `None` means unbounded.
    pub fn default_capacity(self) -> Option<u32> {
        match self {
            PlaceClass::Storage => None,
            _ => Some(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Place {
    pub name: String,
    pub class: PlaceClass,
    /// `None` is unbounded.
    pub capacity: Option<u32>,
}

impl Place {
    pub fn new(name: impl Into<String>, class: PlaceClass) -> Self {
        Place {
            name: name.into(),
            class,
            capacity: class.default_capacity(),
        }
    }

    pub fn admits(&self, token: &TokenValue) -> bool {
        self.class.admits(token)
    }
}

/// How consumed tokens are turned into produced ones.
///
/// Tokens taken from non-resource input places are "carried" in input order.
/// Every unit of output to a resource place yields a fresh [`TokenValue::ResourceUnit`];
/// every unit of output to any other place takes the next carried token, or a
/// [`TokenValue::Carriage`] once the carried tokens run out. Carried tokens that
/// find no output leave the net.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenEffect {
    #[default]
    Transfer,
    /// Join carriage, lower part and upper part into one unriveted product
    /// colored like the lower part.
    Assemble,
    /// Mark every carried product as riveted.
    Rivet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub name: String,
    #[serde(default)]
    pub effect: TokenEffect,
    /// Index of the hidden place holding this transition's countdown.
    pub hidden_place: usize,
}

/// Immutable net structure `(P, T, Pre, Post)` plus per-transition delays.
///
/// `pre[p][t]` and `post[p][t]` are arc weights, dense `|P| × |T|`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PetriNet {
    pub places: Vec<Place>,
    pub transitions: Vec<Transition>,
    pub pre: Vec<Vec<u32>>,
    pub post: Vec<Vec<u32>>,
    pub durations: Vec<u8>,
}

impl PetriNet {
    pub fn place_count(&self) -> usize {
        self.places.len()
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn pre(&self, place: usize, transition: usize) -> u32 {
        self.pre[place][transition]
    }

    pub fn post(&self, place: usize, transition: usize) -> u32 {
        self.post[place][transition]
    }

    pub fn duration(&self, transition: usize) -> u8 {
        self.durations[transition]
    }

    pub fn hidden_place(&self, transition: usize) -> usize {
        self.transitions[transition].hidden_place
    }

    pub fn transition_index(&self, name: &str) -> Option<usize> {
        self.transitions.iter().position(|t| t.name == name)
    }

    pub fn place_index(&self, name: &str) -> Option<usize> {
        self.places.iter().position(|p| p.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("net serializes")
    }

    /// Parses a net document. Only shape errors are rejected here; run
    /// [`super::validate_net`] for the full structural check.
    pub fn from_json(text: &str) -> Result<Self, PetriError> {
        let net: PetriNet =
            serde_json::from_str(text).map_err(|e| PetriError::Format(e.to_string()))?;
        let (np, nt) = (net.places.len(), net.transitions.len());
        let shape_ok = |m: &Vec<Vec<u32>>| m.len() == np && m.iter().all(|row| row.len() == nt);
        if !shape_ok(&net.pre) || !shape_ok(&net.post) || net.durations.len() != nt {
            return Err(PetriError::Format(format!(
                "incidence matrices must be {np}x{nt} with {nt} durations"
            )));
        }
        Ok(net)
    }
}
