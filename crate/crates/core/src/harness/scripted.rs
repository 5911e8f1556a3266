//! A hand-written controller for the canonical line. It moves one product
//! at a time through the rotary/assembly loop and never fires into a place
//! that is occupied or about to be.

use crate::env::SortingEnv;
use crate::factory::{FactoryPlace, FactoryTransition, NON_ACTION};
use crate::petri::{Color, Marking, PetriNet, TokenValue};

fn claimed(net: &PetriNet, m: &Marking, place: FactoryPlace) -> bool {
    let p = place.index();
    m.count(p) > 0 || m.in_transit_all().any(|f| net.post(p, f.transition) > 0)
}

fn head(m: &Marking, place: FactoryPlace) -> Option<TokenValue> {
    m.tokens(place.index()).front().copied()
}

/// Chooses the next action for the environment's current state.
pub fn scripted_action(env: &SortingEnv) -> usize {
    use FactoryPlace as P;
    use FactoryTransition as T;
    let net = &env.topology().net;
    let m = env.marking().expect("episode active");
    let ok = |t: T| m.is_enabled(net, t.index());
    let free = |p: P| !claimed(net, m, p);

    if ok(T::ExitDone) {
        return T::ExitDone.index();
    }
    if let Some(TokenValue::Product { color, riveted }) = head(m, P::RotaryTable) {
        match (riveted, color) {
            (true, Color::Green) if ok(T::RotaryToStorage) => return T::RotaryToStorage.index(),
            (true, Color::Blue) if ok(T::RotaryToExitBelt) && free(P::ExitBelt) => {
                return T::RotaryToExitBelt.index()
            }
            (false, _) if ok(T::RotaryToAssemblyBelt) && free(P::AssemblyBelt) => {
                return T::RotaryToAssemblyBelt.index()
            }
            _ => {}
        }
    }
    if ok(T::AssemblyToRotary) && free(P::AssemblyBelt) {
        return T::AssemblyToRotary.index();
    }
    if let Some(TokenValue::Product { riveted, .. }) = head(m, P::AssemblyBelt) {
        if riveted && ok(T::RotaryAccept) && free(P::RotaryTable) {
            return T::RotaryAccept.index();
        }
        if !riveted && ok(T::InstallRivets) && free(P::AssemblyStation) {
            return T::InstallRivets.index();
        }
    }
    if ok(T::ExitBeltToExit) && free(P::ExitPoint) {
        return T::ExitBeltToExit.index();
    }
    let loop_busy = [P::RotaryTable, P::AssemblyBelt, P::AssemblyStation]
        .into_iter()
        .any(|p| claimed(net, m, p));
    if ok(T::BeltToRotary) && !loop_busy {
        return T::BeltToRotary.index();
    }
    if ok(T::EntryToBelt) && free(P::EntryBelt) {
        return T::EntryToBelt.index();
    }
    if ok(T::LoadParts) && free(P::EntryPoint) {
        return T::LoadParts.index();
    }
    NON_ACTION
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::RewardVariant;
    use crate::factory::{build_factory, EventKind, FactoryConfig};
    use std::sync::Arc;

    #[test]
    fn sorts_every_color_sequence() {
        let topo = Arc::new(build_factory(&FactoryConfig::default()).unwrap());
        let mut env = SortingEnv::new(topo, RewardVariant::R1);
        for n in 1..=3usize {
            for mask in 0..(1u32 << n) {
                let colors: Vec<Color> = (0..n)
                    .map(|i| if mask >> i & 1 == 1 { Color::Blue } else { Color::Green })
                    .collect();
                env.reset(0, n, Some(&colors)).unwrap();
                let mut last = None;
                for _ in 0..100 {
                    let r = env.step(scripted_action(&env)).unwrap();
                    assert!(r.reward >= 0.0, "{colors:?}: {:?}", r.info);
                    if r.terminated || r.truncated {
                        last = Some(r);
                        break;
                    }
                }
                let last = last.expect("episode ended");
                assert_eq!(last.info.event, EventKind::GoalReached, "{colors:?}");
                assert_eq!(last.info.correct, n);
            }
        }
    }
}
