//! Persona definition files (TOML).
//!
//! ```toml
//! [[persona]]
//! name = "Dev. Raider"
//! mode = { kind = "Sudden" }
//!
//! [[persona.goals]]
//! name = "Killer"
//! utility = { step_weight = 0.0, weights = { Death = -1.0, MonsterKilled = 1.0 } }
//! criteria = [{ kind = "MonstersKilledPct", threshold = 50.0, direction = "AtLeast" }]
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DevelopingPersona, PersonaMode};

#[derive(Debug, Error)]
pub enum PersonaFormatError {
    #[error("malformed persona file: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("persona {name:?}: {message}")]
    Invalid { name: String, message: String },
}

#[derive(Serialize, Deserialize)]
struct PersonaFile {
    #[serde(rename = "persona", default)]
    personas: Vec<DevelopingPersona>,
}

fn validate(p: &DevelopingPersona) -> Result<(), PersonaFormatError> {
    let invalid = |message: String| PersonaFormatError::Invalid {
        name: p.name.clone(),
        message,
    };
    if p.goals.is_empty() {
        return Err(invalid("no goals".into()));
    }
    if let PersonaMode::Fuzzy { activation_pct } = p.mode {
        if !(0.0..=100.0).contains(&activation_pct) {
            return Err(invalid(format!("activation_pct {activation_pct} outside [0, 100]")));
        }
    }
    for g in &p.goals {
        if g.utility.weights.values().any(|w| !w.is_finite()) {
            return Err(invalid(format!("goal {:?} has a non-finite weight", g.name)));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
        if !(g.utility.step_weight <= 0.0) {
            return Err(invalid(format!("goal {:?} has a positive step weight", g.name)));
        }
        for c in &g.criteria {
            if !(0.0..=100.0).contains(&c.threshold) {
                return Err(invalid(format!("goal {:?}: threshold {} outside [0, 100]", g.name, c.threshold)));
            }
        }
    }
    Ok(())
}

pub fn personas_from_toml(text: &str) -> Result<Vec<DevelopingPersona>, PersonaFormatError> {
    let file: PersonaFile = toml::from_str(text)?;
    for p in &file.personas {
        validate(p)?;
    }
    Ok(file.personas)
}

pub fn personas_to_toml(personas: &[DevelopingPersona]) -> String {
    let file = PersonaFile {
        personas: personas.to_vec(),
    };
    toml::to_string(&file).expect("personas serialize to TOML")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::builtin_personas;

    #[test]
    fn catalog_round_trips() {
        let all = builtin_personas();
        let text = personas_to_toml(&all);
        assert_eq!(personas_from_toml(&text).unwrap(), all);
    }

    #[test]
    fn hand_written_file() {
        let text = r#"
[[persona]]
name = "Fuzzy Raider"
mode = { kind = "Fuzzy", activation_pct = 50.0 }

[[persona.goals]]
name = "Killer"
utility = { weights = { Death = -1.0, MonsterKilled = 1.0 } }
criteria = [{ kind = "MonstersKilledPct", threshold = 50.0, direction = "AtLeast" }]

[[persona.goals]]
name = "Exit"
utility = { step_weight = -0.001, weights = { ExitDoor = 1.0 } }
"#;
        let ps = personas_from_toml(text).unwrap();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].mode, PersonaMode::Fuzzy { activation_pct: 50.0 });
        assert_eq!(ps[0].goals[1].utility.step_weight, -0.001);
        assert!(ps[0].goals[1].criteria.is_empty());
    }

    #[test]
    fn rejects_bad_threshold() {
        let text = r#"
[[persona]]
name = "bad"
[[persona.goals]]
name = "g"
utility = {}
criteria = [{ kind = "MonstersKilledPct", threshold = 150.0, direction = "AtLeast" }]
"#;
        assert!(matches!(personas_from_toml(text), Err(PersonaFormatError::Invalid { .. })));
        assert!(matches!(personas_from_toml("[[persona]]\nname = 3"), Err(PersonaFormatError::Syntax(_))));
    }
}
