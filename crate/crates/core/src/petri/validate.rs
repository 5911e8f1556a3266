use std::collections::{HashSet, VecDeque};
use std::fmt;

use super::marking::Marking;
use super::net::{PetriNet, PlaceClass, MAX_DURATION};

/// Default number of distinct markings the reachability check may visit.
pub const REACHABILITY_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    DurationOutOfRange {
        transition: usize,
        duration: u8,
    },
    MissingHiddenPlace {
        transition: usize,
    },
    SharedHiddenPlace {
        place: usize,
    },
    HiddenCountMismatch {
        hidden: usize,
        transitions: usize,
    },
    HiddenPlaceHasArcs {
        place: usize,
    },
    CapacityRule {
        place: usize,
    },
    InitialMarking {
        place: usize,
        reason: &'static str,
    },
    NotFireable {
        transition: usize,
        explored: usize,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected {expected}, found {found}"),
            Diagnostic::DurationOutOfRange {
                transition,
                duration,
            } => write!(
                f,
                "transition {transition}: duration {duration} exceeds {MAX_DURATION}"
            ),
            Diagnostic::MissingHiddenPlace { transition } => {
                write!(f, "transition {transition} has no hidden place")
            }
            Diagnostic::SharedHiddenPlace { place } => {
                write!(f, "hidden place {place} is shared by several transitions")
            }
            Diagnostic::HiddenCountMismatch {
                hidden,
                transitions,
            } => write!(f, "{hidden} hidden places for {transitions} transitions"),
            Diagnostic::HiddenPlaceHasArcs { place } => {
                write!(f, "hidden place {place} has incidence arcs")
            }
            Diagnostic::CapacityRule { place } => {
                write!(f, "place {place} violates the capacity rule of its class")
            }
            Diagnostic::InitialMarking { place, reason } => {
                write!(f, "initial marking at place {place}: {reason}")
            }
            Diagnostic::NotFireable {
                transition,
                explored,
            } => write!(
                f,
                "transition {transition} never enabled in {explored} reachable markings"
            ),
        }
    }
}

pub fn validate_net(net: &PetriNet, initial: &Marking) -> Vec<Diagnostic> {
    validate_net_with_budget(net, initial, REACHABILITY_BUDGET)
}

/// Structural checks, then a bounded breadth-first search from `initial`
/// confirming that every transition is enabled somewhere.
pub fn validate_net_with_budget(
    net: &PetriNet,
    initial: &Marking,
    budget: usize,
) -> Vec<Diagnostic> {
    let mut out = structural(net);
    if !out.is_empty() {
        return out;
    }
    out.extend(check_initial(net, initial));
    if !out.is_empty() {
        return out;
    }
    out.extend(reachability(net, initial, budget));
    out
}

fn structural(net: &PetriNet) -> Vec<Diagnostic> {
    let (np, nt) = (net.place_count(), net.transition_count());
    let mut out = Vec::new();
    for (what, matrix) in [("pre rows", &net.pre), ("post rows", &net.post)] {
        if matrix.len() != np {
            out.push(Diagnostic::DimensionMismatch {
                what,
                expected: np,
                found: matrix.len(),
            });
        }
    }
    for (what, matrix) in [("pre width", &net.pre), ("post width", &net.post)] {
        if let Some(row) = matrix.iter().find(|row| row.len() != nt) {
            out.push(Diagnostic::DimensionMismatch {
                what,
                expected: nt,
                found: row.len(),
            });
        }
    }
    if net.durations.len() != nt {
        out.push(Diagnostic::DimensionMismatch {
            what: "durations",
            expected: nt,
            found: net.durations.len(),
        });
    }
    if !out.is_empty() {
        return out;
    }

    for (t, &d) in net.durations.iter().enumerate() {
        if d > MAX_DURATION {
            out.push(Diagnostic::DurationOutOfRange {
                transition: t,
                duration: d,
            });
        }
    }
    let mut owners = vec![0usize; np];
    for (t, tr) in net.transitions.iter().enumerate() {
        match net.places.get(tr.hidden_place) {
            Some(p) if p.class == PlaceClass::Hidden => owners[tr.hidden_place] += 1,
            _ => out.push(Diagnostic::MissingHiddenPlace { transition: t }),
        }
    }
    for (p, &n) in owners.iter().enumerate() {
        if n > 1 {
            out.push(Diagnostic::SharedHiddenPlace { place: p });
        }
    }
    let hidden = net
        .places
        .iter()
        .filter(|p| p.class == PlaceClass::Hidden)
        .count();
    if hidden != nt {
        out.push(Diagnostic::HiddenCountMismatch {
            hidden,
            transitions: nt,
        });
    }
    for (p, place) in net.places.iter().enumerate() {
        if place.class == PlaceClass::Hidden
            && (net.pre[p].iter().any(|&w| w > 0) || net.post[p].iter().any(|&w| w > 0))
        {
            out.push(Diagnostic::HiddenPlaceHasArcs { place: p });
        }
        let capacity_ok = match place.class {
            PlaceClass::Storage => place.capacity.is_none(),
            _ => place.capacity == Some(1),
        };
        if !capacity_ok {
            out.push(Diagnostic::CapacityRule { place: p });
        }
    }
    out
}

fn check_initial(net: &PetriNet, m: &Marking) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (p, place) in net.places.iter().enumerate() {
        if place.class == PlaceClass::Hidden && m.count(p) > 0 {
            out.push(Diagnostic::InitialMarking {
                place: p,
                reason: "hidden place must start idle",
            });
        }
        if let Some(cap) = place.capacity {
            if m.count(p) > cap as usize {
                out.push(Diagnostic::InitialMarking {
                    place: p,
                    reason: "capacity exceeded",
                });
            }
        }
        if m.tokens(p).iter().any(|tok| !place.admits(tok)) {
            out.push(Diagnostic::InitialMarking {
                place: p,
                reason: "inadmissible token",
            });
        }
    }
    out
}

fn reachability(net: &PetriNet, initial: &Marking, budget: usize) -> Vec<Diagnostic> {
    let nt = net.transition_count();
    let mut seen_enabled = vec![false; nt];
    let mut remaining = nt;
    let mut visited: HashSet<Marking> = HashSet::new();
    let mut queue = VecDeque::new();
    visited.insert(initial.clone());
    queue.push_back(initial.clone());

    // Markings are compared without their clock so the search stays finite.
    let normalize = |mut m: Marking| {
        m.reset_clock();
        m
    };

    while let Some(m) = queue.pop_front() {
        for t in m.enabled(net) {
            if !seen_enabled[t] {
                seen_enabled[t] = true;
                remaining -= 1;
            }
            let mut next = m.clone();
            if next.fire(net, t).is_ok() {
                let next = normalize(next);
                if visited.len() < budget && visited.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        if remaining == 0 {
            return Vec::new();
        }
        let mut next = m.clone();
        if next.advance(net).is_ok() {
            let next = normalize(next);
            if visited.len() < budget && visited.insert(next.clone()) {
                queue.push_back(next);
            }
        }
    }
    let explored = visited.len();
    seen_enabled
        .iter()
        .enumerate()
        .filter(|(_, &seen)| !seen)
        .map(|(transition, _)| Diagnostic::NotFireable {
            transition,
            explored,
        })
        .collect()
}
