//! The material-sorting line: entry, rotary table, assembly station, main
//! storage and exit, expressed as a timed colored Petri net.
//!
//! Products are assembled at the entry, travel to the rotary table, loop
//! through the assembly station to get riveted, and return to the rotary
//! table. Riveted green products belong in main storage, riveted blue ones
//! leave through the exit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::petri::{
    validate_net, Color, Diagnostic, Firing, Marking, PetriNet, Place, PlaceClass, TokenEffect,
    TokenValue, Transition, MAX_DURATION,
};

pub const VISIBLE_PLACES: usize = 13;
pub const CONTROLLABLE_TRANSITIONS: usize = 11;
/// One action per controllable transition plus the non-action.
pub const ACTION_COUNT: usize = CONTROLLABLE_TRANSITIONS + 1;
pub const NON_ACTION: usize = CONTROLLABLE_TRANSITIONS;
pub const DEFAULT_MAX_PRODUCTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FactoryPlace {
    RotaryFree,
    AssemblyFree,
    EntryCarriages,
    EntryLowerParts,
    EntryUpperParts,
    MainStorage,
    RotaryTable,
    AssemblyBelt,
    AssemblyStation,
    ExitBelt,
    ExitPoint,
    EntryPoint,
    EntryBelt,
}

impl FactoryPlace {
    /// Declaration order: resource, storage, regular, regular-short.
    pub const ALL: [FactoryPlace; VISIBLE_PLACES] = [
        FactoryPlace::RotaryFree,
        FactoryPlace::AssemblyFree,
        FactoryPlace::EntryCarriages,
        FactoryPlace::EntryLowerParts,
        FactoryPlace::EntryUpperParts,
        FactoryPlace::MainStorage,
        FactoryPlace::RotaryTable,
        FactoryPlace::AssemblyBelt,
        FactoryPlace::AssemblyStation,
        FactoryPlace::ExitBelt,
        FactoryPlace::ExitPoint,
        FactoryPlace::EntryPoint,
        FactoryPlace::EntryBelt,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FactoryPlace::RotaryFree => "rotary_free",
            FactoryPlace::AssemblyFree => "assembly_free",
            FactoryPlace::EntryCarriages => "entry_carriages",
            FactoryPlace::EntryLowerParts => "entry_lower_parts",
            FactoryPlace::EntryUpperParts => "entry_upper_parts",
            FactoryPlace::MainStorage => "main_storage",
            FactoryPlace::RotaryTable => "rotary_table",
            FactoryPlace::AssemblyBelt => "assembly_belt",
            FactoryPlace::AssemblyStation => "assembly_station",
            FactoryPlace::ExitBelt => "exit_belt",
            FactoryPlace::ExitPoint => "exit_point",
            FactoryPlace::EntryPoint => "entry_point",
            FactoryPlace::EntryBelt => "entry_belt",
        }
    }

    pub fn class(self) -> PlaceClass {
        use FactoryPlace::*;
        match self {
            RotaryFree | AssemblyFree => PlaceClass::Resource,
            EntryCarriages | EntryLowerParts | EntryUpperParts | MainStorage => PlaceClass::Storage,
            RotaryTable | AssemblyBelt | AssemblyStation | ExitBelt | ExitPoint => {
                PlaceClass::Regular
            }
            EntryPoint | EntryBelt => PlaceClass::RegularShort,
        }
    }
}

/// Controllable transitions; the discriminant is the action index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FactoryTransition {
    LoadParts,
    EntryToBelt,
    BeltToRotary,
    RotaryAccept,
    RotaryToAssemblyBelt,
    InstallRivets,
    AssemblyToRotary,
    RotaryToExitBelt,
    ExitBeltToExit,
    RotaryToStorage,
    ExitDone,
}

impl FactoryTransition {
    pub const ALL: [FactoryTransition; CONTROLLABLE_TRANSITIONS] = [
        FactoryTransition::LoadParts,
        FactoryTransition::EntryToBelt,
        FactoryTransition::BeltToRotary,
        FactoryTransition::RotaryAccept,
        FactoryTransition::RotaryToAssemblyBelt,
        FactoryTransition::InstallRivets,
        FactoryTransition::AssemblyToRotary,
        FactoryTransition::RotaryToExitBelt,
        FactoryTransition::ExitBeltToExit,
        FactoryTransition::RotaryToStorage,
        FactoryTransition::ExitDone,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FactoryTransition::LoadParts => "load_parts",
            FactoryTransition::EntryToBelt => "entry_to_belt",
            FactoryTransition::BeltToRotary => "belt_to_rotary",
            FactoryTransition::RotaryAccept => "rotary_accept",
            FactoryTransition::RotaryToAssemblyBelt => "rotary_to_assembly_belt",
            FactoryTransition::InstallRivets => "install_rivets",
            FactoryTransition::AssemblyToRotary => "assembly_to_rotary",
            FactoryTransition::RotaryToExitBelt => "rotary_to_exit_belt",
            FactoryTransition::ExitBeltToExit => "exit_belt_to_exit",
            FactoryTransition::RotaryToStorage => "rotary_to_storage",
            FactoryTransition::ExitDone => "exit_done",
        }
    }

    fn effect(self) -> TokenEffect {
        match self {
            FactoryTransition::LoadParts => TokenEffect::Assemble,
            FactoryTransition::InstallRivets => TokenEffect::Rivet,
            _ => TokenEffect::Transfer,
        }
    }

    fn arcs(self) -> (&'static [FactoryPlace], &'static [FactoryPlace]) {
        use FactoryPlace::*;
        match self {
            FactoryTransition::LoadParts => (
                &[EntryCarriages, EntryLowerParts, EntryUpperParts],
                &[EntryPoint],
            ),
            FactoryTransition::EntryToBelt => (&[EntryPoint], &[EntryBelt]),
            FactoryTransition::BeltToRotary => (&[EntryBelt, RotaryFree], &[RotaryTable]),
            FactoryTransition::RotaryAccept => (&[AssemblyBelt, RotaryFree], &[RotaryTable]),
            FactoryTransition::RotaryToAssemblyBelt => {
                (&[RotaryTable], &[AssemblyBelt, RotaryFree])
            }
            FactoryTransition::InstallRivets => {
                (&[AssemblyBelt, AssemblyFree], &[AssemblyStation])
            }
            FactoryTransition::AssemblyToRotary => {
                (&[AssemblyStation], &[AssemblyBelt, AssemblyFree])
            }
            FactoryTransition::RotaryToExitBelt => (&[RotaryTable], &[ExitBelt, RotaryFree]),
            FactoryTransition::ExitBeltToExit => (&[ExitBelt], &[ExitPoint]),
            FactoryTransition::RotaryToStorage => (&[RotaryTable], &[MainStorage, RotaryFree]),
            FactoryTransition::ExitDone => (&[ExitPoint], &[]),
        }
    }

    /// Belts 2, rotary moves 1, riveting 4, loading 2, deliveries 1.
    pub fn default_duration(self) -> u8 {
        match self {
            FactoryTransition::LoadParts => 2,
            FactoryTransition::EntryToBelt => 1,
            FactoryTransition::BeltToRotary => 2,
            FactoryTransition::RotaryAccept => 1,
            FactoryTransition::RotaryToAssemblyBelt => 1,
            FactoryTransition::InstallRivets => 4,
            FactoryTransition::AssemblyToRotary => 2,
            FactoryTransition::RotaryToExitBelt => 1,
            FactoryTransition::ExitBeltToExit => 2,
            FactoryTransition::RotaryToStorage => 1,
            FactoryTransition::ExitDone => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactoryConfig {
    /// Ticks per controllable transition, in action order.
    pub durations: Vec<u8>,
    pub max_products: usize,
}

impl Default for FactoryConfig {
    fn default() -> Self {
        FactoryConfig {
            durations: FactoryTransition::ALL
                .iter()
                .map(|t| t.default_duration())
                .collect(),
            max_products: DEFAULT_MAX_PRODUCTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("expected {expected} durations, got {found}")]
    DurationCount { expected: usize, found: usize },
    #[error("duration {duration} of {transition} is outside [0, {MAX_DURATION}]")]
    DurationRange {
        transition: &'static str,
        duration: u8,
    },
    #[error("product count {found} outside [1, {max}]")]
    ProductCount { found: usize, max: usize },
    #[error("factory net failed validation: {0:?}")]
    InvalidNet(Vec<Diagnostic>),
}

/// Colors of the products placed at the entry for one episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductSpec {
    colors: Vec<Color>,
}

impl ProductSpec {
    pub fn new(colors: Vec<Color>, max_products: usize) -> Result<Self, ConfigError> {
        if colors.is_empty() || colors.len() > max_products {
            return Err(ConfigError::ProductCount {
                found: colors.len(),
                max: max_products,
            });
        }
        Ok(ProductSpec { colors })
    }

    pub fn colors(&self) -> &[Color] {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactoryTopology {
    pub net: PetriNet,
    pub initial_marking: Marking,
    pub max_products: usize,
}

pub fn build_factory(config: &FactoryConfig) -> Result<FactoryTopology, ConfigError> {
    if config.durations.len() != CONTROLLABLE_TRANSITIONS {
        return Err(ConfigError::DurationCount {
            expected: CONTROLLABLE_TRANSITIONS,
            found: config.durations.len(),
        });
    }
    for (t, &d) in FactoryTransition::ALL.iter().zip(&config.durations) {
        if d > MAX_DURATION {
            return Err(ConfigError::DurationRange {
                transition: t.name(),
                duration: d,
            });
        }
    }
    if config.max_products == 0 {
        return Err(ConfigError::ProductCount { found: 0, max: 0 });
    }

    let mut places: Vec<Place> = FactoryPlace::ALL
        .iter()
        .map(|p| Place::new(p.name(), p.class()))
        .collect();
    let mut transitions = Vec::with_capacity(CONTROLLABLE_TRANSITIONS);
    for t in FactoryTransition::ALL {
        transitions.push(Transition {
            name: t.name().to_string(),
            effect: t.effect(),
            hidden_place: places.len(),
        });
        places.push(Place::new(
            format!("busy_{}", t.name()),
            PlaceClass::Hidden,
        ));
    }
    let mut pre = vec![vec![0; CONTROLLABLE_TRANSITIONS]; places.len()];
    let mut post = pre.clone();
    for t in FactoryTransition::ALL {
        let (inputs, outputs) = t.arcs();
        for p in inputs {
            pre[p.index()][t.index()] += 1;
        }
        for p in outputs {
            post[p.index()][t.index()] += 1;
        }
    }
    let net = PetriNet {
        places,
        transitions,
        pre,
        post,
        durations: config.durations.clone(),
    };

    let mut topology = FactoryTopology {
        initial_marking: Marking::empty(&net),
        net,
        max_products: config.max_products,
    };
    // The declared initial marking carries one product of each color, which
    // is enough to reach every transition.
    let colors = if config.max_products >= 2 {
        vec![Color::Blue, Color::Green]
    } else {
        vec![Color::Blue]
    };
    let spec = ProductSpec::new(colors, config.max_products)?;
    topology.initial_marking = topology.inject_products(&spec);

    let diagnostics = validate_net(&topology.net, &topology.initial_marking);
    if !diagnostics.is_empty() {
        return Err(ConfigError::InvalidNet(diagnostics));
    }
    Ok(topology)
}

impl FactoryTopology {
    /// Rest state with `spec` waiting at the entry: one carriage, one lower
    /// part and one upper part per product. Lower parts carry the color.
    pub fn inject_products(&self, spec: &ProductSpec) -> Marking {
        let mut m = Marking::empty(&self.net);
        m.push(FactoryPlace::RotaryFree.index(), TokenValue::ResourceUnit);
        m.push(FactoryPlace::AssemblyFree.index(), TokenValue::ResourceUnit);
        for &color in spec.colors() {
            m.push(FactoryPlace::EntryCarriages.index(), TokenValue::Carriage);
            m.push(FactoryPlace::EntryLowerParts.index(), TokenValue::RawPart(color));
            m.push(FactoryPlace::EntryUpperParts.index(), TokenValue::RawPart(color));
        }
        m
    }

    /// Products still inside the line: waiting at the entry, resting on a
    /// carriage slot, or travelling inside a busy transition.
    pub fn products_in_system(&self, m: &Marking) -> usize {
        let waiting = m.count(FactoryPlace::EntryCarriages.index());
        let resting: usize = FactoryPlace::ALL
            .iter()
            .filter(|p| matches!(p.class(), PlaceClass::Regular | PlaceClass::RegularShort))
            .map(|p| m.tokens(p.index()).iter().filter(|t| t.is_product()).count())
            .sum();
        let travelling: usize = m
            .in_transit_all()
            .map(|f| {
                let out = f.produced.iter().filter(|(_, t)| t.is_product()).count();
                if out > 0 {
                    out
                } else {
                    f.consumed.iter().filter(|(_, t)| t.is_product()).count()
                }
            })
            .sum();
        waiting + resting + travelling
    }

    pub fn census(&self) -> Census {
        let mut c = Census::default();
        for p in &self.net.places {
            match p.class {
                PlaceClass::Resource => c.resource += 1,
                PlaceClass::Storage => c.storage += 1,
                PlaceClass::Regular => c.regular += 1,
                PlaceClass::RegularShort => c.regular_short += 1,
                PlaceClass::Hidden => c.hidden += 1,
            }
        }
        c.transitions = self.net.transition_count();
        c
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Census {
    pub resource: usize,
    pub storage: usize,
    pub regular: usize,
    pub regular_short: usize,
    pub hidden: usize,
    pub transitions: usize,
}

/// What happened during one environment step. Exactly one per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    None,
    TransitionFired,
    NonAction,
    Invalid,
    Collision,
    Missort,
    CorrectDelivery,
    GoalReached,
}

/// Result of the agent's firing attempt within a step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FireStatus {
    NonAction,
    Invalid,
    /// Zero-duration firing, already delivered and judged here.
    Fired(Firing),
    /// Timed firing; its outputs are judged when the countdown completes.
    Started(Firing),
    Collided,
}

/// Result of the tick that closes a step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TickStatus {
    Completed(Vec<Firing>),
    Collided,
    /// The step ended before the tick (collision at fire time).
    Skipped,
}

/// Running delivery counts for one episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub missorted: usize,
}

/// Terminal a product left the line through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    Storage,
    Exit,
}

pub fn is_correct_delivery(product: TokenValue, terminal: Terminal) -> bool {
    matches!(
        (product, terminal),
        (
            TokenValue::Product {
                color: Color::Green,
                riveted: true
            },
            Terminal::Storage
        ) | (
            TokenValue::Product {
                color: Color::Blue,
                riveted: true
            },
            Terminal::Exit
        )
    )
}

/// Product delivered by a completed firing, if it reached a terminal.
fn delivery(firing: &Firing) -> Option<(TokenValue, Terminal)> {
    match FactoryTransition::from_index(firing.transition)? {
        FactoryTransition::RotaryToStorage => firing
            .produced
            .iter()
            .find(|(p, _)| *p == FactoryPlace::MainStorage.index())
            .map(|&(_, tok)| (tok, Terminal::Storage)),
        FactoryTransition::ExitDone => firing
            .consumed
            .iter()
            .find(|(p, _)| *p == FactoryPlace::ExitPoint.index())
            .map(|&(_, tok)| (tok, Terminal::Exit)),
        _ => None,
    }
}

/// Classifies one step and returns the updated tally.
///
/// Precedence: collision, missort, goal, correct delivery, invalid, then
/// plain firing or non-action.
pub fn classify_step(
    n_products: usize,
    before: Tally,
    fire: &FireStatus,
    tick: &TickStatus,
) -> (EventKind, Tally) {
    if matches!(fire, FireStatus::Collided) || matches!(tick, TickStatus::Collided) {
        return (EventKind::Collision, before);
    }
    let mut after = before;
    let immediate = match fire {
        FireStatus::Fired(f) => Some(f),
        _ => None,
    };
    let completed: &[Firing] = match tick {
        TickStatus::Completed(done) => done,
        _ => &[],
    };
    for firing in immediate.into_iter().chain(completed) {
        if let Some((product, terminal)) = delivery(firing) {
            if is_correct_delivery(product, terminal) {
                after.correct += 1;
            } else {
                after.missorted += 1;
            }
        }
    }
    let event = if after.missorted > before.missorted {
        EventKind::Missort
    } else if after.correct >= n_products {
        EventKind::GoalReached
    } else if after.correct > before.correct {
        EventKind::CorrectDelivery
    } else {
        match fire {
            FireStatus::Invalid => EventKind::Invalid,
            FireStatus::NonAction => EventKind::NonAction,
            _ => EventKind::TransitionFired,
        }
    };
    (event, after)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::petri::{enabled_transitions, validate_net};

    fn product(color: Color, riveted: bool) -> TokenValue {
        TokenValue::Product { color, riveted }
    }

    fn storage_firing(tok: TokenValue) -> Firing {
        Firing {
            transition: FactoryTransition::RotaryToStorage.index(),
            consumed: vec![(FactoryPlace::RotaryTable.index(), tok)],
            produced: vec![
                (FactoryPlace::RotaryFree.index(), TokenValue::ResourceUnit),
                (FactoryPlace::MainStorage.index(), tok),
            ],
        }
    }

    fn exit_firing(tok: TokenValue) -> Firing {
        Firing {
            transition: FactoryTransition::ExitDone.index(),
            consumed: vec![(FactoryPlace::ExitPoint.index(), tok)],
            produced: vec![],
        }
    }

    fn plain_firing() -> Firing {
        Firing {
            transition: FactoryTransition::EntryToBelt.index(),
            consumed: vec![],
            produced: vec![],
        }
    }

    #[test]
    fn default_census_matches_encoding_table() {
        let topo = build_factory(&FactoryConfig::default()).unwrap();
        assert_eq!(
            topo.census(),
            Census {
                resource: 2,
                storage: 4,
                regular: 5,
                regular_short: 2,
                hidden: 11,
                transitions: 11
            }
        );
        assert_eq!(topo.net.place_count(), 24);
        assert_eq!(ACTION_COUNT, 12);
        assert_eq!(validate_net(&topo.net, &topo.initial_marking), vec![]);
    }

    #[test]
    fn out_of_range_duration_is_rejected() {
        let mut cfg = FactoryConfig::default();
        cfg.durations[5] = 5;
        assert_eq!(
            build_factory(&cfg),
            Err(ConfigError::DurationRange {
                transition: "install_rivets",
                duration: 5
            })
        );
        cfg.durations.pop();
        assert!(matches!(
            build_factory(&cfg),
            Err(ConfigError::DurationCount { .. })
        ));
    }

    #[test]
    fn injection_fills_entry_storage() {
        let topo = build_factory(&FactoryConfig::default()).unwrap();
        let spec = ProductSpec::new(vec![Color::Blue], 3).unwrap();
        let m = topo.inject_products(&spec);
        let counts = m.counts();
        assert_eq!(counts[2..5], [1, 1, 1]);
        assert_eq!(counts[0..2], [1, 1]);
        assert!(counts[5..].iter().all(|&c| c == 0));

        let spec = ProductSpec::new(vec![Color::Blue, Color::Green, Color::Green], 3).unwrap();
        assert_eq!(topo.inject_products(&spec).counts()[2..5], [3, 3, 3]);
        assert!(ProductSpec::new(vec![], 3).is_err());
        assert!(ProductSpec::new(vec![Color::Blue; 4], 3).is_err());
    }

    #[test]
    fn only_loading_is_enabled_at_rest() {
        // Pre columns against the rest marking: every transition except
        // loading needs a product on some carriage slot.
        let topo = build_factory(&FactoryConfig::default()).unwrap();
        let spec = ProductSpec::new(vec![Color::Green; 3], 3).unwrap();
        let m = topo.inject_products(&spec);
        assert_eq!(
            enabled_transitions(&topo.net, &m),
            vec![FactoryTransition::LoadParts.index()]
        );
    }

    #[test]
    fn green_to_storage_is_correct() {
        let fire = FireStatus::Fired(plain_firing());
        let tick = TickStatus::Completed(vec![storage_firing(product(Color::Green, true))]);
        let (event, tally) = classify_step(3, Tally::default(), &fire, &tick);
        assert_eq!(event, EventKind::CorrectDelivery);
        assert_eq!(tally.correct, 1);
    }

    #[test]
    fn blue_to_storage_is_missort() {
        let tick = TickStatus::Completed(vec![storage_firing(product(Color::Blue, true))]);
        let (event, tally) = classify_step(3, Tally::default(), &FireStatus::NonAction, &tick);
        assert_eq!(event, EventKind::Missort);
        assert_eq!(tally.missorted, 1);
    }

    #[test]
    fn unriveted_or_wrong_exit_is_missort() {
        for tok in [product(Color::Blue, false), product(Color::Green, true)] {
            let tick = TickStatus::Completed(vec![exit_firing(tok)]);
            let (event, _) = classify_step(3, Tally::default(), &FireStatus::NonAction, &tick);
            assert_eq!(event, EventKind::Missort);
        }
        let tick = TickStatus::Completed(vec![storage_firing(product(Color::Green, false))]);
        let (event, _) = classify_step(3, Tally::default(), &FireStatus::NonAction, &tick);
        assert_eq!(event, EventKind::Missort);
    }

    #[test]
    fn last_correct_delivery_reaches_goal() {
        let before = Tally {
            correct: 2,
            missorted: 0,
        };
        let tick = TickStatus::Completed(vec![exit_firing(product(Color::Blue, true))]);
        let (event, tally) = classify_step(3, before, &FireStatus::NonAction, &tick);
        assert_eq!(event, EventKind::GoalReached);
        assert_eq!(tally.correct, 3);
    }

    #[test]
    fn precedence_is_total() {
        // Each candidate event is produced alone by a crafted step; combining
        // any two must yield the higher-ranked one.
        let ranked = [
            EventKind::Collision,
            EventKind::Missort,
            EventKind::GoalReached,
            EventKind::CorrectDelivery,
            EventKind::Invalid,
            EventKind::TransitionFired,
        ];
        let rank = |e: EventKind| ranked.iter().position(|&r| r == e).unwrap();
        let good = storage_firing(product(Color::Green, true));
        let bad = storage_firing(product(Color::Blue, true));
        // (collision, missort, goal, correct, invalid-attempt) flags.
        for mask in 0u32..32 {
            let collide = mask & 1 != 0;
            let missort = mask & 2 != 0;
            let goal = mask & 4 != 0;
            let correct = mask & 8 != 0;
            let invalid = mask & 16 != 0;
            let mut done = Vec::new();
            if missort {
                done.push(bad.clone());
            }
            if goal || correct {
                done.push(good.clone());
            }
            let before = Tally {
                correct: if goal { 2 } else { 0 },
                missorted: 0,
            };
            let fire = if invalid {
                FireStatus::Invalid
            } else {
                FireStatus::Fired(plain_firing())
            };
            let tick = if collide {
                TickStatus::Collided
            } else {
                TickStatus::Completed(done)
            };
            let (event, _) = classify_step(3, before, &fire, &tick);
            let expected = [
                (collide, EventKind::Collision),
                (missort, EventKind::Missort),
                (goal, EventKind::GoalReached),
                (correct, EventKind::CorrectDelivery),
                (invalid, EventKind::Invalid),
                (true, EventKind::TransitionFired),
            ]
            .into_iter()
            .find(|(flag, _)| *flag)
            .unwrap()
            .1;
            assert_eq!(event, expected, "mask {mask:05b}");
            assert!(rank(event) <= rank(EventKind::TransitionFired));
        }
    }

    #[test]
    fn net_document_round_trips() {
        let topo = build_factory(&FactoryConfig::default()).unwrap();
        let back = PetriNet::from_json(&topo.net.to_json()).unwrap();
        assert_eq!(back, topo.net);
    }
}
