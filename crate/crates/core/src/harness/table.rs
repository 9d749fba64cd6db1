use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::{Evaluation, MeanSd};

use super::HarnessError;

/// A count that is exact when every episode agreed, otherwise mean and sd.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Stat {
    Exact(f64),
    Spread(MeanSd),
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        if values.windows(2).all(|w| w[0] == w[1]) {
            Stat::Exact(values[0])
        } else {
            Stat::Spread(MeanSd::of(values))
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Stat::Exact(v) => *v,
            Stat::Spread(m) => m.mean,
        }
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stat::Exact(v) => write!(f, "{v}"),
            Stat::Spread(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRow {
    pub persona: String,
    pub episodes: usize,
    pub monsters_killed: Stat,
    pub treasures_collected: Stat,
    pub doors_reached: Stat,
    pub deaths: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTable {
    pub rows: Vec<InteractionRow>,
}

impl InteractionTable {
    pub fn row(&self, persona: &str) -> Option<&InteractionRow> {
        self.rows.iter().find(|r| r.persona == persona)
    }
}

impl fmt::Display for InteractionTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.persona.len()).max().unwrap_or(0).max(7);
        writeln!(
            f,
            "{:<width$}  {:>13}  {:>13}  {:>13}  {:>13}",
            "persona", "monsters", "treasures", "door", "deaths"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<width$}  {:>13}  {:>13}  {:>13}  {:>13}",
                r.persona,
                r.monsters_killed.to_string(),
                r.treasures_collected.to_string(),
                r.doors_reached.to_string(),
                r.deaths.to_string()
            )?;
        }
        Ok(())
    }
}

/// One row per `(persona, evaluation)` pair, in order.
pub fn interaction_table(evaluations: &[(String, Evaluation)]) -> Result<InteractionTable, HarnessError> {
    if evaluations.is_empty() {
        return Err(HarnessError::Empty("no evaluations to tabulate".into()));
    }
    let rows = evaluations
        .iter()
        .map(|(persona, eval)| {
            if eval.episodes.is_empty() {
                return Err(HarnessError::Empty(format!("evaluation of {persona} has no episodes")));
            }
            let col = |f: fn(&crate::trajectory::EventCounts) -> usize| {
                let v: Vec<f64> = eval.episodes.iter().map(|e| f(&e.counts) as f64).collect();
                Stat::of(&v)
            };
            Ok(InteractionRow {
                persona: persona.clone(),
                episodes: eval.episodes.len(),
                monsters_killed: col(|c| c.monsters_killed),
                treasures_collected: col(|c| c.treasures_collected),
                doors_reached: col(|c| c.doors_reached),
                deaths: col(|c| c.deaths),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(InteractionTable { rows })
}
