//! Recorded episodes and their deterministic replay.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apf::PathFrames;
use crate::sim::{render, step, Action, Cell, EventSet, GameEvent, GameState, LevelSpec, Observation, TerminationCause};

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("trajectory was recorded on level {recorded}, not {given}")]
    LevelMismatch { recorded: String, given: String },
    #[error("replay diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: Action,
    pub events: EventSet,
    /// Persona reward including any step penalty, without exploration or APF terms.
    pub env_reward: f64,
    /// Avatar cell after the step.
    pub cell: Cell,
}

/// Goal cursor from timestep `t` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalMark {
    pub t: u32,
    pub cursor: usize,
    pub coactive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub level_name: String,
    pub level_hash: String,
    pub persona: String,
    /// Seed of the environment stream (monster moves) for this episode.
    pub seed: u64,
    pub start: Cell,
    pub steps: Vec<StepRecord>,
    /// Starts with the mark for `t = 0`; one more mark per goal change.
    pub goal_trace: Vec<GoalMark>,
    pub termination: TerminationCause,
    pub persona_completed: bool,
    /// Frames `f_0..f_n` when stored; otherwise rebuilt by replay.
    pub observations: Option<Vec<Observation>>,
}

/// Per-episode interaction counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventCounts {
    pub monsters_killed: usize,
    pub treasures_collected: usize,
    pub doors_reached: usize,
    pub deaths: usize,
    pub steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }

    /// Start cell followed by the avatar cell after every step.
    pub fn cells(&self) -> Vec<Cell> {
        std::iter::once(self.start).chain(self.steps.iter().map(|s| s.cell)).collect()
    }

    /// Cells the avatar entered, excluding the start cell.
    pub fn visited_cells(&self) -> BTreeSet<Cell> {
        let mut set: BTreeSet<Cell> = self.steps.iter().map(|s| s.cell).collect();
        set.remove(&self.start);
        set
    }

    pub fn is_space_disjoint(&self, other: &Trajectory) -> bool {
        self.visited_cells().is_disjoint(&other.visited_cells())
    }

    pub fn counts(&self) -> EventCounts {
        let mut c = EventCounts {
            steps: self.steps.len(),
            ..Default::default()
        };
        for s in &self.steps {
            for e in s.events.iter() {
                match e {
                    GameEvent::MonsterKilled => c.monsters_killed += 1,
                    GameEvent::TreasureCollected => c.treasures_collected += 1,
                    GameEvent::ExitDoor => c.doors_reached += 1,
                    GameEvent::Death => c.deaths += 1,
                    GameEvent::Step => {}
                }
            }
        }
        c
    }

    /// `sum_t gamma^t r_t` over the recorded rewards.
    pub fn env_return(&self, gamma: f64) -> f64 {
        discounted(self.steps.iter().map(|s| s.env_reward), gamma)
    }
}

pub fn discounted(rewards: impl IntoIterator<Item = f64>, gamma: f64) -> f64 {
    let mut g = 1.0;
    let mut total = 0.0;
    for r in rewards {
        total += g * r;
        g *= gamma;
    }
    total
}

/// States `s_0..s_n` obtained by re-running the recorded actions.
pub fn replay_states(level: &LevelSpec, traj: &Trajectory) -> Result<Vec<GameState>, ReplayError> {
    let hash = level.content_hash();
    if hash != traj.level_hash {
        return Err(ReplayError::LevelMismatch {
            recorded: traj.level_hash.clone(),
            given: hash,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(traj.seed);
    let mut state = GameState::initial(level);
    if state.avatar_pos != traj.start {
        return Err(ReplayError::Divergence {
            step: 0,
            detail: format!("start cell {} differs from recorded {}", state.avatar_pos, traj.start),
        });
    }
    let mut states = vec![state.clone()];
    for (i, rec) in traj.steps.iter().enumerate() {
        let (next, events) = step(level, &state, rec.action, &mut rng).map_err(|e| ReplayError::Divergence {
            step: i,
            detail: e.to_string(),
        })?;
        if events != rec.events || next.avatar_pos != rec.cell {
            return Err(ReplayError::Divergence {
                step: i,
                detail: format!(
                    "got events {events} at {}, recorded {} at {}",
                    next.avatar_pos, rec.events, rec.cell
                ),
            });
        }
        state = next;
        states.push(state.clone());
    }
    Ok(states)
}

/// Frames for the trajectory at render `block`: stored observations when they
/// have the matching size, otherwise rebuilt by replay.
pub fn trajectory_frames(level: &LevelSpec, traj: &Trajectory, block: usize) -> Result<Vec<Observation>, ReplayError> {
    let expected = (level.width * block, level.height * block);
    if let Some(obs) = &traj.observations {
        if obs.len() == traj.steps.len() + 1 && obs.iter().all(|o| o.dims() == expected) {
            return Ok(obs.clone());
        }
    }
    Ok(replay_states(level, traj)?.iter().map(|s| render(level, s, block)).collect())
}

pub fn path_frames(level: &LevelSpec, traj: &Trajectory, block: usize) -> Result<PathFrames, ReplayError> {
    Ok(PathFrames {
        frames: trajectory_frames(level, traj, block)?,
        actions: traj.actions(),
    })
}

/// Plays a fixed action list from the initial state, recording it as a trajectory
/// with persona rewards left at zero.
pub fn scripted(level: &LevelSpec, level_name: &str, actions: &[Action], seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = GameState::initial(level);
    let mut steps = Vec::with_capacity(actions.len());
    for &a in actions {
        if state.is_terminal() {
            break;
        }
        let (next, events) = step(level, &state, a, &mut rng).expect("state is not terminal");
        steps.push(StepRecord {
            action: a,
            events,
            env_reward: 0.0,
            cell: next.avatar_pos,
        });
        state = next;
    }
    Trajectory {
        level_name: level_name.to_string(),
        level_hash: level.content_hash(),
        persona: String::new(),
        seed,
        start: level.avatar_start,
        steps,
        goal_trace: vec![GoalMark {
            t: 0,
            cursor: 0,
            coactive: false,
        }],
        termination: state.termination,
        persona_completed: false,
        observations: None,
    }
}
