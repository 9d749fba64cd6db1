//! Developing personas: linked sequences of goals whose utility tables
//! replace the game's reward and whose criteria decide when the next goal
//! takes over.
//!
//! A single-goal persona with no criteria is exactly a procedural persona.

mod catalog;
mod format;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sim::{EventSet, GameEvent, GameState, LevelSpec};

pub use catalog::{builtin_persona, builtin_personas, BUILTIN_PERSONA_NAMES};
pub use format::{personas_from_toml, personas_to_toml, PersonaFormatError};

/// Event weights of one goal. Events absent from `weights` are worth 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UtilityTable {
    #[serde(default)]
    pub weights: BTreeMap<GameEvent, f64>,
    /// Reward per `Step` event; non-positive.
    #[serde(default)]
    pub step_weight: f64,
}

impl UtilityTable {
    pub fn new(weights: impl IntoIterator<Item = (GameEvent, f64)>) -> Self {
        Self {
            weights: weights.into_iter().collect(),
            step_weight: 0.0,
        }
    }

    pub fn weight(&self, event: GameEvent) -> f64 {
        if event == GameEvent::Step {
            self.step_weight
        } else {
            self.weights.get(&event).copied().unwrap_or(0.0)
        }
    }

    pub fn reward(&self, events: EventSet) -> f64 {
        events.iter().map(|e| self.weight(e)).sum()
    }

    /// Multiplies every weight by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|(&e, &w)| (e, w * factor)).collect(),
            step_weight: self.step_weight * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CriterionKind {
    MonstersKilledPct,
    TreasuresCollectedPct,
    RemainingHealthPct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparison {
    AtLeast,
    AtMost,
}

/// Counters a persona needs to evaluate its criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InteractionLedger {
    pub monsters_killed: usize,
    pub monsters_total: usize,
    pub treasures_collected: usize,
    pub treasures_total: usize,
    pub hp_now: i32,
    pub hp_max: i32,
}

impl InteractionLedger {
    pub fn from_state(level: &LevelSpec, state: &GameState) -> Self {
        Self {
            monsters_killed: state.monsters_killed(level),
            monsters_total: level.monsters.len(),
            treasures_collected: state.treasures_collected(level),
            treasures_total: level.treasures.len(),
            hp_now: state.avatar_hp.max(0),
            hp_max: level.avatar_hp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub kind: CriterionKind,
    /// Percent in `[0, 100]`.
    pub threshold: f64,
    pub direction: Comparison,
}

impl Criterion {
    pub fn at_least(kind: CriterionKind, threshold: f64) -> Self {
        Self {
            kind,
            threshold,
            direction: Comparison::AtLeast,
        }
    }

    pub fn at_most(kind: CriterionKind, threshold: f64) -> Self {
        Self {
            kind,
            threshold,
            direction: Comparison::AtMost,
        }
    }

    /// Current percentage, or `None` when the denominator is zero.
    pub fn percent(&self, ledger: &InteractionLedger) -> Option<f64> {
        let (num, den) = match self.kind {
            CriterionKind::MonstersKilledPct => (ledger.monsters_killed as f64, ledger.monsters_total as f64),
            CriterionKind::TreasuresCollectedPct => {
                (ledger.treasures_collected as f64, ledger.treasures_total as f64)
            }
            CriterionKind::RemainingHealthPct => (ledger.hp_now.max(0) as f64, ledger.hp_max as f64),
        };
        (den > 0.0).then(|| 100.0 * num / den)
    }

    /// A criterion over an empty denominator holds vacuously.
    pub fn holds(&self, ledger: &InteractionLedger) -> bool {
        match self.percent(ledger) {
            None => {
                log::warn!("criterion {:?} has a zero denominator; treating it as fulfilled", self.kind);
                true
            }
            Some(v) => match self.direction {
                Comparison::AtLeast => v >= self.threshold,
                Comparison::AtMost => v <= self.threshold,
            },
        }
    }

    /// Progress towards the criterion in `[0, 1]`.
    pub fn fulfillment(&self, ledger: &InteractionLedger) -> f64 {
        let Some(v) = self.percent(ledger) else {
            return 1.0;
        };
        let ratio = match self.direction {
            Comparison::AtLeast if self.threshold <= 0.0 => 1.0,
            Comparison::AtLeast => v / self.threshold,
            Comparison::AtMost if v <= self.threshold => 1.0,
            Comparison::AtMost => (100.0 - v) / (100.0 - self.threshold),
        };
        ratio.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub name: String,
    pub utility: UtilityTable,
    /// Conjunction; an empty list never fulfils (terminal goal).
    #[serde(default)]
    pub criteria: Vec<Criterion>,
}

impl Goal {
    pub fn new(name: impl Into<String>, utility: UtilityTable, criteria: Vec<Criterion>) -> Self {
        Self {
            name: name.into(),
            utility,
            criteria,
        }
    }

    pub fn fulfilled(&self, ledger: &InteractionLedger) -> bool {
        !self.criteria.is_empty() && self.criteria.iter().all(|c| c.holds(ledger))
    }

    /// Mean per-criterion fulfillment ratio.
    pub fn fulfillment(&self, ledger: &InteractionLedger) -> f64 {
        if self.criteria.is_empty() {
            return 0.0;
        }
        self.criteria.iter().map(|c| c.fulfillment(ledger)).sum::<f64>() / self.criteria.len() as f64
    }
}

pub const DEFAULT_ACTIVATION_PCT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind")]
pub enum PersonaMode {
    /// The next goal replaces the active one once all criteria hold.
    #[default]
    Sudden,
    /// The next goal co-activates once the active goal is `activation_pct`
    /// percent fulfilled; the active goal retires at full fulfillment.
    Fuzzy { activation_pct: f64 },
}

/// Outcome of [`DevelopingPersona::advance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    Unchanged,
    /// The goal at the new cursor became the (sole) active goal.
    Advanced(usize),
    /// Fuzzy mode only: the goal at this index is now active alongside the cursor goal.
    CoActivated(usize),
    /// The final goal's criteria were fulfilled; no goals remain.
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevelopingPersona {
    pub name: String,
    #[serde(default)]
    pub mode: PersonaMode,
    pub goals: Vec<Goal>,
    #[serde(skip)]
    cursor: usize,
    #[serde(skip)]
    coactive: bool,
    #[serde(skip)]
    completed: bool,
}

/// Snapshot of which goals are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GoalCursor {
    pub cursor: usize,
    pub coactive: bool,
}

impl DevelopingPersona {
    /// Panics if `goals` is empty.
    pub fn new(name: impl Into<String>, mode: PersonaMode, goals: Vec<Goal>) -> Self {
        assert!(!goals.is_empty(), "a persona needs at least one goal");
        Self {
            name: name.into(),
            mode,
            goals,
            cursor: 0,
            coactive: false,
            completed: false,
        }
    }

    /// Single goal without criteria.
    pub fn procedural(name: impl Into<String>, utility: UtilityTable) -> Self {
        let name = name.into();
        Self::new(name.clone(), PersonaMode::Sudden, vec![Goal::new(name, utility, Vec::new())])
    }

    pub fn is_procedural(&self) -> bool {
        self.goals.len() == 1 && self.goals[0].criteria.is_empty()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn goal_cursor(&self) -> GoalCursor {
        GoalCursor {
            cursor: self.cursor,
            coactive: self.coactive,
        }
    }

    pub fn is_completed(&self) -> bool {
        self.completed
    }

    pub fn active_goal(&self) -> &Goal {
        &self.goals[self.cursor]
    }

    /// Goals currently contributing reward (one, or two in fuzzy co-activation).
    pub fn active_goals(&self) -> impl Iterator<Item = &Goal> {
        let end = if self.coactive { self.cursor + 2 } else { self.cursor + 1 };
        self.goals[self.cursor..end.min(self.goals.len())].iter()
    }

    pub fn reset(&mut self) {
        self.cursor = 0;
        self.coactive = false;
        self.completed = false;
    }

    /// Replaces reward with the utility of every active goal.
    pub fn persona_reward(&self, events: EventSet) -> f64 {
        if self.completed {
            return 0.0;
        }
        self.active_goals().map(|g| g.utility.reward(events)).sum()
    }

    /// Evaluates the active goal's criteria and moves the cursor at most one goal.
    pub fn advance(&mut self, ledger: &InteractionLedger) -> Transition {
        if self.completed {
            return Transition::Completed;
        }
        let goal = &self.goals[self.cursor];
        if goal.criteria.is_empty() {
            return Transition::Unchanged;
        }
        let has_next = self.cursor + 1 < self.goals.len();
        if goal.fulfilled(ledger) {
            self.coactive = false;
            if has_next {
                self.cursor += 1;
                return Transition::Advanced(self.cursor);
            }
            self.completed = true;
            return Transition::Completed;
        }
        if let PersonaMode::Fuzzy { activation_pct } = self.mode {
            if has_next && !self.coactive && goal.fulfillment(ledger) * 100.0 >= activation_pct {
                self.coactive = true;
                return Transition::CoActivated(self.cursor + 1);
            }
        }
        Transition::Unchanged
    }
}
