use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::apf::{ApfBackend, ApfModulator, CapLedger};
use crate::persona::{DevelopingPersona, GoalCursor, InteractionLedger, Transition};
use crate::sim::render::DEFAULT_BLOCK;
use crate::sim::{render, step, Action, Cell, Direction, EventSet, GameEvent, GameState, LevelSpec, Observation};
use crate::trajectory::{GoalMark, StepRecord, Trajectory};

use super::AgentError;

/// The parts of a state that determine its rendered frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct FrameKey {
    pos: Cell,
    facing: Direction,
    monsters: BTreeSet<Cell>,
    treasures: BTreeSet<Cell>,
}

impl FrameKey {
    fn of(state: &GameState) -> Self {
        Self {
            pos: state.avatar_pos,
            facing: state.avatar_facing,
            monsters: state.alive_monsters.clone(),
            treasures: state.remaining_treasures.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub events: EventSet,
    /// Persona reward minus the level's step penalty.
    pub env_reward: f64,
    /// Capped APF feedback (0 without a modulator).
    pub apf_feedback: f64,
    pub goal: Transition,
    pub done: bool,
}

/// A level played under a persona's reward, optionally modulated by an APF.
///
/// Frames are rendered at the default block size when requested; the APF
/// feedback of a step is memoized by the frames involved.
pub struct PersonaEnv<'a> {
    level: &'a LevelSpec,
    persona: DevelopingPersona,
    apf: Option<&'a ApfModulator>,
    record_frames: bool,
    state: GameState,
    ledger: Option<CapLedger>,
    rng: ChaCha8Rng,
    seed: u64,
    steps: Vec<StepRecord>,
    goal_trace: Vec<GoalMark>,
    frames: Vec<Observation>,
    frame_cache: Option<(FrameKey, Observation)>,
    feedback_cache: HashMap<(Option<FrameKey>, Action, FrameKey), f64>,
}

impl<'a> PersonaEnv<'a> {
    pub fn new(level: &'a LevelSpec, persona: DevelopingPersona, apf: Option<&'a ApfModulator>) -> Self {
        let mut env = Self {
            level,
            persona,
            apf,
            record_frames: false,
            state: GameState::initial(level),
            ledger: None,
            rng: ChaCha8Rng::seed_from_u64(0),
            seed: 0,
            steps: Vec::new(),
            goal_trace: Vec::new(),
            frames: Vec::new(),
            frame_cache: None,
            feedback_cache: HashMap::new(),
        };
        env.reset(0);
        env
    }

    /// Keeps every frame of the episode for the trajectory record.
    pub fn record_frames(mut self, on: bool) -> Self {
        self.record_frames = on;
        self.reset(self.seed);
        self
    }

    pub fn level(&self) -> &'a LevelSpec {
        self.level
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn persona(&self) -> &DevelopingPersona {
        &self.persona
    }

    pub fn goal_cursor(&self) -> GoalCursor {
        self.persona.goal_cursor()
    }

    pub fn ledger(&self) -> Option<&CapLedger> {
        self.ledger.as_ref()
    }

    /// Remaining positive APF budget in steps of `1 / BUDGET_BUCKETS` of the
    /// cap, rounded up; `None` without an APF.
    pub fn positive_budget(&self) -> Option<u8> {
        let (apf, ledger) = (self.apf?, self.ledger.as_ref()?);
        let cap = apf.config().pos_cap;
        if cap <= 0.0 {
            return Some(0);
        }
        let frac = (ledger.pos_remaining / cap).clamp(0.0, 1.0);
        Some((frac * BUDGET_BUCKETS as f64).ceil() as u8)
    }

    pub fn is_done(&self) -> bool {
        self.state.is_terminal() || self.persona.is_completed()
    }

    pub fn reset(&mut self, seed: u64) {
        self.seed = seed;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = GameState::initial(self.level);
        self.persona.reset();
        self.ledger = self.apf.map(|a| a.new_ledger());
        self.steps.clear();
        self.goal_trace = vec![GoalMark {
            t: 0,
            cursor: 0,
            coactive: false,
        }];
        self.frames.clear();
        if self.record_frames {
            let f = self.frame();
            self.frames.push(f);
        }
    }

    /// Current frame at the default block size.
    pub fn frame(&mut self) -> Observation {
        let key = FrameKey::of(&self.state);
        if let Some((k, f)) = &self.frame_cache {
            if *k == key {
                return f.clone();
            }
        }
        let f = render(self.level, &self.state, DEFAULT_BLOCK);
        self.frame_cache = Some((key, f.clone()));
        f
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, AgentError> {
        let prev = self.state.clone();
        let (next, events) = step(self.level, &self.state, action, &mut self.rng)?;
        self.state = next;

        let mut env_reward = self.persona.persona_reward(events);
        if events.contains(GameEvent::Step) {
            env_reward -= self.level.step_penalty;
        }
        let goal = self.persona.advance(&InteractionLedger::from_state(self.level, &self.state));
        if goal != Transition::Unchanged {
            let c = self.persona.goal_cursor();
            self.goal_trace.push(GoalMark {
                t: self.state.t,
                cursor: if self.persona.is_completed() { self.persona.goals.len() } else { c.cursor },
                coactive: c.coactive,
            });
        }

        let apf_feedback = match self.apf {
            Some(apf) => {
                let raw = self.raw_feedback(apf, &prev, action)?;
                self.ledger.as_mut().expect("ledger exists with an APF").apply(raw)
            }
            None => 0.0,
        };
        if !env_reward.is_finite() || !apf_feedback.is_finite() {
            return Err(AgentError::Diverged(format!(
                "non-finite reward at t={}: env {env_reward}, apf {apf_feedback}",
                self.state.t
            )));
        }

        self.steps.push(StepRecord {
            action,
            events,
            env_reward,
            cell: self.state.avatar_pos,
        });
        if self.record_frames {
            let f = self.frame();
            self.frames.push(f);
        }
        Ok(StepOutcome {
            events,
            env_reward,
            apf_feedback,
            goal,
            done: self.is_done(),
        })
    }

    fn raw_feedback(&mut self, apf: &ApfModulator, prev: &GameState, action: Action) -> Result<f64, AgentError> {
        let next_key = FrameKey::of(&self.state);
        let key = match apf.config().backend {
            ApfBackend::Cts => (None, action, next_key),
            ApfBackend::Icm => (Some(FrameKey::of(prev)), action, next_key),
        };
        if let Some(&v) = self.feedback_cache.get(&key) {
            return Ok(v);
        }
        let before = render(self.level, prev, DEFAULT_BLOCK);
        let after = self.frame();
        let v = apf.raw_feedback(&before, action, &after)?;
        self.feedback_cache.insert(key, v);
        Ok(v)
    }

    /// Record of the episode so far.
    pub fn trajectory(&self, level_name: &str) -> Trajectory {
        Trajectory {
            level_name: level_name.to_string(),
            level_hash: self.level.content_hash(),
            persona: self.persona.name.clone(),
            seed: self.seed,
            start: self.level.avatar_start,
            steps: self.steps.clone(),
            goal_trace: self.goal_trace.clone(),
            termination: self.state.termination,
            persona_completed: self.persona.is_completed(),
            observations: self.record_frames.then(|| self.frames.clone()),
        }
    }
}

pub const BUDGET_BUCKETS: u8 = 8;

/// Hashable summary of everything the tabular agent conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct StateKey {
    pub x: i32,
    pub y: i32,
    pub facing: u8,
    pub hp: i32,
    pub cursor: u16,
    pub coactive: bool,
    pub monsters: u64,
    pub treasures: u64,
    /// Bucketed remaining positive APF budget; 0 when not tracked.
    pub budget: u8,
}

fn set_digest(cells: &BTreeSet<Cell>) -> u64 {
    let mut h = DefaultHasher::new();
    cells.hash(&mut h);
    h.finish()
}

impl StateKey {
    pub fn new(state: &GameState, goal: GoalCursor) -> Self {
        Self {
            x: state.avatar_pos.x,
            y: state.avatar_pos.y,
            facing: state.avatar_facing.index() as u8,
            hp: state.avatar_hp,
            cursor: goal.cursor as u16,
            coactive: goal.coactive,
            monsters: set_digest(&state.alive_monsters),
            treasures: set_digest(&state.remaining_treasures),
            budget: 0,
        }
    }

    pub fn with_budget(mut self, budget: u8) -> Self {
        self.budget = budget;
        self
    }
}

/// Seed for episode `index` of a run seeded with `seed`.
pub fn episode_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persona::builtin_persona;
    use crate::sim::levels;

    #[test]
    fn exit_persona_reward_on_corridor() {
        let level = levels::builtin("corridor").unwrap();
        let mut env = PersonaEnv::new(&level, builtin_persona("Exit").unwrap(), None);
        let mut total = 0.0;
        while !env.is_done() {
            total += env.step(Action::Right).unwrap().env_reward;
        }
        assert_eq!(total, 1.0);
        let t = env.trajectory("corridor");
        assert_eq!(t.len(), 5);
        assert!(env.step(Action::Right).is_err());
    }

    #[test]
    fn step_penalty_is_subtracted() {
        let level = crate::sim::load_level("#step_penalty=0.001\nWWWW\nWA.W\nWWDW\n").unwrap();
        let mut env = PersonaEnv::new(&level, builtin_persona("Exit").unwrap(), None);
        let out = env.step(Action::NoOp).unwrap();
        assert!((out.env_reward + 0.001).abs() < 1e-15);
    }

    #[test]
    fn goal_trace_records_advances() {
        let level = crate::sim::load_level("WWWWW\nWAM.W\nW..DW\nWWWWW\n").unwrap();
        let mut env = PersonaEnv::new(&level, builtin_persona("Dev. Killer").unwrap(), None);
        env.step(Action::Right).unwrap();
        let out = env.step(Action::Attack).unwrap();
        assert_eq!(out.goal, Transition::Advanced(1));
        // killing was rewarded by the Killer goal
        assert_eq!(out.env_reward, 1.0);
        let t = env.trajectory("x");
        assert_eq!(t.goal_trace.len(), 2);
        assert_eq!(t.goal_trace[1], GoalMark { t: 2, cursor: 1, coactive: false });
    }

    #[test]
    fn episode_seeds_differ() {
        assert_ne!(episode_seed(1, 0), episode_seed(1, 1));
        assert_eq!(episode_seed(5, 3), episode_seed(5, 3));
    }
}
