use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::net::{PetriNet, PlaceClass, TokenEffect, TokenValue};
use super::PetriError;

/// Tokens consumed and produced by one firing. For timed transitions the
/// produced half is held back until the countdown expires.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Firing {
    pub transition: usize,
    pub consumed: Vec<(usize, TokenValue)>,
    pub produced: Vec<(usize, TokenValue)>,
}

/// Simulation state: per-place token queues, outputs of busy transitions,
/// and the tick counter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Marking {
    tokens: Vec<VecDeque<TokenValue>>,
    in_transit: Vec<Option<Firing>>,
    tick: u64,
}

impl Marking {
    pub fn empty(net: &PetriNet) -> Self {
        Marking {
            tokens: vec![VecDeque::new(); net.place_count()],
            in_transit: vec![None; net.transition_count()],
            tick: 0,
        }
    }

    pub fn tokens(&self, place: usize) -> &VecDeque<TokenValue> {
        &self.tokens[place]
    }

    pub fn count(&self, place: usize) -> usize {
        self.tokens[place].len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.tokens.iter().map(VecDeque::len).collect()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub(crate) fn reset_clock(&mut self) {
        self.tick = 0;
    }

    /// Appends a token without any admissibility or capacity check.
    pub fn push(&mut self, place: usize, token: TokenValue) {
        self.tokens[place].push_back(token);
    }

    pub fn clear_place(&mut self, place: usize) {
        self.tokens[place].clear();
    }

    /// Outputs still pending for a busy transition.
    pub fn in_transit(&self, transition: usize) -> Option<&Firing> {
        self.in_transit[transition].as_ref()
    }

    pub fn in_transit_all(&self) -> impl Iterator<Item = &Firing> {
        self.in_transit.iter().flatten()
    }

    /// Remaining delay of `transition`, or `None` when idle.
    pub fn countdown(&self, net: &PetriNet, transition: usize) -> Option<u8> {
        self.tokens[net.hidden_place(transition)]
            .iter()
            .find_map(|t| match t {
                TokenValue::Countdown(r) => Some(*r),
                _ => None,
            })
    }

    pub fn is_enabled(&self, net: &PetriNet, t: usize) -> bool {
        if t >= net.transition_count() || !self.tokens[net.hidden_place(t)].is_empty() {
            return false;
        }
        (0..net.place_count()).all(|p| self.tokens[p].len() >= net.pre(p, t) as usize)
    }

    pub fn enabled(&self, net: &PetriNet) -> Vec<usize> {
        (0..net.transition_count())
            .filter(|&t| self.is_enabled(net, t))
            .collect()
    }

    /// Fires `t` in place. Inputs leave immediately; outputs are delivered now
    /// when the duration is zero, otherwise a countdown is started.
    ///
    /// For zero-duration transitions the returned firing has already been
    /// delivered; for timed ones it is parked until [`Marking::advance`].
    pub fn fire(&mut self, net: &PetriNet, t: usize) -> Result<Firing, PetriError> {
        if t >= net.transition_count() {
            return Err(PetriError::UnknownTransition(t));
        }
        if !self.is_enabled(net, t) {
            return Err(PetriError::NotEnabled(t));
        }
        let mut consumed = Vec::new();
        for p in 0..net.place_count() {
            for _ in 0..net.pre(p, t) {
                let token = self.tokens[p].pop_front().expect("enabled transition");
                consumed.push((p, token));
            }
        }
        let produced = produce(net, t, &consumed);
        let firing = Firing {
            transition: t,
            consumed,
            produced,
        };
        match net.duration(t) {
            0 => {
                self.deliver(net, &firing)?;
            }
            d => {
                self.tokens[net.hidden_place(t)].push_back(TokenValue::Countdown(d));
                self.in_transit[t] = Some(firing.clone());
            }
        }
        Ok(firing)
    }

    /// Advances time by one tick and returns the firings that completed, in
    /// transition order.
    pub fn advance(&mut self, net: &PetriNet) -> Result<Vec<Firing>, PetriError> {
        self.tick += 1;
        let mut completed = Vec::new();
        for t in 0..net.transition_count() {
            let hidden = net.hidden_place(t);
            let Some(TokenValue::Countdown(r)) = self.tokens[hidden].front().copied() else {
                continue;
            };
            if r > 1 {
                self.tokens[hidden][0] = TokenValue::Countdown(r - 1);
                continue;
            }
            self.tokens[hidden].clear();
            let firing = self.in_transit[t].take().expect("countdown without firing");
            self.deliver(net, &firing)?;
            completed.push(firing);
        }
        Ok(completed)
    }

    fn deliver(&mut self, net: &PetriNet, firing: &Firing) -> Result<(), PetriError> {
        for &(p, token) in &firing.produced {
            if let Some(cap) = net.places[p].capacity {
                if self.tokens[p].len() >= cap as usize {
                    return Err(PetriError::Collision {
                        place: p,
                        transition: firing.transition,
                    });
                }
            }
            if !net.places[p].admits(&token) {
                return Err(PetriError::Inadmissible { place: p, token });
            }
            self.tokens[p].push_back(token);
        }
        Ok(())
    }
}

fn produce(net: &PetriNet, t: usize, consumed: &[(usize, TokenValue)]) -> Vec<(usize, TokenValue)> {
    let carried: Vec<TokenValue> = consumed
        .iter()
        .filter(|(p, _)| net.places[*p].class != PlaceClass::Resource)
        .map(|&(_, token)| token)
        .collect();
    let mut carried: VecDeque<TokenValue> = match net.transitions[t].effect {
        TokenEffect::Transfer => carried.into(),
        TokenEffect::Assemble => match carried.iter().find_map(|tok| match tok {
            TokenValue::RawPart(c) => Some(*c),
            _ => None,
        }) {
            Some(color) => VecDeque::from([TokenValue::Product {
                color,
                riveted: false,
            }]),
            None => carried.into(),
        },
        TokenEffect::Rivet => carried
            .into_iter()
            .map(|tok| match tok {
                TokenValue::Product { color, .. } => TokenValue::Product {
                    color,
                    riveted: true,
                },
                other => other,
            })
            .collect(),
    };
    let mut produced = Vec::new();
    for p in 0..net.place_count() {
        for _ in 0..net.post(p, t) {
            let token = if net.places[p].class == PlaceClass::Resource {
                TokenValue::ResourceUnit
            } else {
                carried.pop_front().unwrap_or(TokenValue::Carriage)
            };
            produced.push((p, token));
        }
    }
    produced
}

/// Set of transitions enabled in `m`, ascending.
pub fn enabled_transitions(net: &PetriNet, m: &Marking) -> Vec<usize> {
    m.enabled(net)
}

/// Pure variant of [`Marking::fire`].
pub fn fire(net: &PetriNet, m: &Marking, t: usize) -> Result<Marking, PetriError> {
    let mut next = m.clone();
    next.fire(net, t)?;
    Ok(next)
}

/// Pure variant of [`Marking::advance`], returning the completed transitions.
pub fn tick(net: &PetriNet, m: &Marking) -> Result<(Marking, Vec<usize>), PetriError> {
    let mut next = m.clone();
    let done = next.advance(net)?;
    Ok((next, done.into_iter().map(|f| f.transition).collect()))
}
