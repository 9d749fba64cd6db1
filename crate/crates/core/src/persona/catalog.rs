use crate::sim::GameEvent::{Death, ExitDoor, MonsterKilled, TreasureCollected};

use super::{Criterion, CriterionKind, DevelopingPersona, Goal, PersonaMode, UtilityTable};

pub const BUILTIN_PERSONA_NAMES: [&str; 9] = [
    "Exit",
    "Monster Killer",
    "Treasure Collector",
    "Completionist",
    "Dev. Killer",
    "Dev. Collector",
    "Dev. Raider",
    "Dev. Completionist",
    "Dev. Casual Completionist",
];

fn killer_goal() -> Goal {
    Goal::new(
        "Killer",
        UtilityTable::new([(Death, -1.0), (MonsterKilled, 1.0)]),
        vec![Criterion::at_least(CriterionKind::MonstersKilledPct, 50.0)],
    )
}

fn collector_goal() -> Goal {
    Goal::new(
        "Collector",
        UtilityTable::new([(Death, -1.0), (TreasureCollected, 1.0)]),
        vec![Criterion::at_least(CriterionKind::TreasuresCollectedPct, 50.0)],
    )
}

fn completionist_utility() -> UtilityTable {
    UtilityTable::new([(Death, -1.0), (MonsterKilled, 1.0), (TreasureCollected, 1.0)])
}

fn completionist_goal() -> Goal {
    Goal::new(
        "Completionist",
        completionist_utility(),
        vec![
            Criterion::at_least(CriterionKind::MonstersKilledPct, 100.0),
            Criterion::at_least(CriterionKind::TreasuresCollectedPct, 100.0),
        ],
    )
}

fn casual_completionist_goal() -> Goal {
    Goal::new(
        "Casual Completionist",
        completionist_utility(),
        vec![Criterion::at_most(CriterionKind::RemainingHealthPct, 50.0)],
    )
}

fn exit_goal() -> Goal {
    Goal::new("Exit", UtilityTable::new([(Death, -1.0), (ExitDoor, 1.0)]), Vec::new())
}

fn developing(name: &str, goals: Vec<Goal>) -> DevelopingPersona {
    DevelopingPersona::new(name, PersonaMode::Sudden, goals)
}

/// Four procedural personas followed by five developing personas.
pub fn builtin_personas() -> Vec<DevelopingPersona> {
    vec![
        DevelopingPersona::procedural("Exit", UtilityTable::new([(ExitDoor, 1.0), (Death, -1.0)])),
        DevelopingPersona::procedural(
            "Monster Killer",
            UtilityTable::new([(ExitDoor, 0.5), (MonsterKilled, 1.0), (Death, -1.0)]),
        ),
        DevelopingPersona::procedural(
            "Treasure Collector",
            UtilityTable::new([(ExitDoor, 0.5), (TreasureCollected, 1.0), (Death, -1.0)]),
        ),
        DevelopingPersona::procedural("Completionist", completionist_utility()),
        developing("Dev. Killer", vec![killer_goal(), exit_goal()]),
        developing("Dev. Collector", vec![collector_goal(), exit_goal()]),
        developing("Dev. Raider", vec![killer_goal(), collector_goal(), exit_goal()]),
        developing("Dev. Completionist", vec![completionist_goal(), exit_goal()]),
        developing(
            "Dev. Casual Completionist",
            vec![casual_completionist_goal(), exit_goal()],
        ),
    ]
}

fn normalize(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Case- and punctuation-insensitive lookup ("dev-raider" finds "Dev. Raider").
pub fn builtin_persona(name: &str) -> Option<DevelopingPersona> {
    let key = normalize(name);
    builtin_personas().into_iter().find(|p| normalize(&p.name) == key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::GameEvent;

    #[test]
    fn catalog_names_match() {
        let names: Vec<_> = builtin_personas().into_iter().map(|p| p.name).collect();
        assert_eq!(names, BUILTIN_PERSONA_NAMES);
    }

    #[test]
    fn raider_sequence() {
        let p = builtin_persona("dev-raider").unwrap();
        let goals: Vec<_> = p.goals.iter().map(|g| g.name.as_str()).collect();
        assert_eq!(goals, ["Killer", "Collector", "Exit"]);
    }

    #[test]
    fn completionist_weights() {
        let p = builtin_persona("Completionist").unwrap();
        assert!(p.is_procedural());
        let u = &p.goals[0].utility;
        assert_eq!(u.weight(GameEvent::MonsterKilled), 1.0);
        assert_eq!(u.weight(GameEvent::TreasureCollected), 1.0);
        assert_eq!(u.weight(GameEvent::Death), -1.0);
        assert_eq!(u.weight(GameEvent::ExitDoor), 0.0);
    }

    #[test]
    fn death_never_rewarded() {
        for p in builtin_personas() {
            for g in &p.goals {
                assert!(g.utility.weight(GameEvent::Death) <= 0.0, "{}", p.name);
                assert!(g.utility.step_weight <= 0.0);
            }
        }
    }
}
