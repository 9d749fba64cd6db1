use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::level::{Cell, Direction, LevelSpec, MonsterPolicy};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("step called on a terminal state (cause: {0:?})")]
    TerminalState(TerminationCause),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    NoOp,
    Attack,
    Left,
    Right,
    Up,
    Down,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; Action::COUNT] = [
        Action::NoOp,
        Action::Attack,
        Action::Left,
        Action::Right,
        Action::Up,
        Action::Down,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    pub fn direction(self) -> Option<Direction> {
        match self {
            Action::Left => Some(Direction::Left),
            Action::Right => Some(Direction::Right),
            Action::Up => Some(Direction::Up),
            Action::Down => Some(Direction::Down),
            Action::NoOp | Action::Attack => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::NoOp => "NoOp",
            Action::Attack => "Attack",
            Action::Left => "Left",
            Action::Right => "Right",
            Action::Up => "Up",
            Action::Down => "Down",
        }
    }

    pub fn from_name(name: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GameEvent {
    MonsterKilled,
    TreasureCollected,
    ExitDoor,
    Death,
    Step,
}

impl GameEvent {
    pub const ALL: [GameEvent; 5] = [
        GameEvent::MonsterKilled,
        GameEvent::TreasureCollected,
        GameEvent::ExitDoor,
        GameEvent::Death,
        GameEvent::Step,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn name(self) -> &'static str {
        match self {
            GameEvent::MonsterKilled => "MonsterKilled",
            GameEvent::TreasureCollected => "TreasureCollected",
            GameEvent::ExitDoor => "ExitDoor",
            GameEvent::Death => "Death",
            GameEvent::Step => "Step",
        }
    }

    pub fn from_name(name: &str) -> Option<GameEvent> {
        GameEvent::ALL.into_iter().find(|e| e.name() == name)
    }
}

/// Set of events emitted by one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct EventSet(u8);

impl EventSet {
    pub fn empty() -> Self {
        Self(0)
    }

    pub fn insert(&mut self, event: GameEvent) {
        self.0 |= event.bit();
    }

    pub fn with(mut self, event: GameEvent) -> Self {
        self.insert(event);
        self
    }

    pub fn contains(&self, event: GameEvent) -> bool {
        self.0 & event.bit() != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = GameEvent> + '_ {
        GameEvent::ALL.into_iter().filter(|e| self.contains(*e))
    }
}

impl FromIterator<GameEvent> for EventSet {
    fn from_iter<I: IntoIterator<Item = GameEvent>>(iter: I) -> Self {
        let mut set = EventSet::empty();
        for e in iter {
            set.insert(e);
        }
        set
    }
}

impl fmt::Display for EventSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.iter().map(GameEvent::name).collect();
        if names.is_empty() {
            f.write_str("-")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum TerminationCause {
    #[default]
    None,
    ExitDoor,
    Death,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameState {
    pub avatar_pos: Cell,
    pub avatar_facing: Direction,
    pub avatar_hp: i32,
    pub alive_monsters: BTreeSet<Cell>,
    pub remaining_treasures: BTreeSet<Cell>,
    pub t: u32,
    pub termination: TerminationCause,
}

impl GameState {
    pub fn initial(level: &LevelSpec) -> Self {
        Self {
            avatar_pos: level.avatar_start,
            avatar_facing: level.avatar_facing,
            avatar_hp: level.avatar_hp,
            alive_monsters: level.monsters.iter().copied().collect(),
            remaining_treasures: level.treasures.iter().copied().collect(),
            t: 0,
            termination: TerminationCause::None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.termination != TerminationCause::None
    }

    pub fn monsters_killed(&self, level: &LevelSpec) -> usize {
        level.monsters.len() - self.alive_monsters.len()
    }

    pub fn treasures_collected(&self, level: &LevelSpec) -> usize {
        level.treasures.len() - self.remaining_treasures.len()
    }
}

fn take_damage(state: &mut GameState, level: &LevelSpec, events: &mut EventSet) {
    state.avatar_hp -= level.monster_damage;
    if state.avatar_hp <= 0 && state.termination == TerminationCause::None {
        state.avatar_hp = state.avatar_hp.max(0);
        state.termination = TerminationCause::Death;
        events.insert(GameEvent::Death);
    }
}

/// Advances the world by one timestep.
///
/// The avatar resolves first: a direction matching the current facing moves
/// one cell, any other direction only turns. Walls block silently; walking
/// into a monster is a collision (damage, no movement). Monsters then move
/// under their policy, and a monster stepping onto the avatar also deals
/// damage.
pub fn step<R: Rng + ?Sized>(
    level: &LevelSpec,
    state: &GameState,
    action: Action,
    rng: &mut R,
) -> Result<(GameState, EventSet), SimError> {
    if state.is_terminal() {
        return Err(SimError::TerminalState(state.termination));
    }
    let mut next = state.clone();
    let mut events = EventSet::empty().with(GameEvent::Step);

    match action {
        Action::NoOp => {}
        Action::Attack => {
            let target = next.avatar_pos.offset(next.avatar_facing);
            if next.alive_monsters.remove(&target) {
                events.insert(GameEvent::MonsterKilled);
            }
        }
        _ => {
            let dir = action.direction().expect("movement action");
            if dir != next.avatar_facing {
                next.avatar_facing = dir;
            } else {
                let target = next.avatar_pos.offset(dir);
                if !level.is_floor(target) {
                    // blocked
                } else if next.alive_monsters.contains(&target) {
                    take_damage(&mut next, level, &mut events);
                } else {
                    next.avatar_pos = target;
                    if next.remaining_treasures.remove(&target) {
                        events.insert(GameEvent::TreasureCollected);
                    }
                    if level.is_door(target) {
                        next.termination = TerminationCause::ExitDoor;
                        events.insert(GameEvent::ExitDoor);
                    }
                }
            }
        }
    }

    if !next.is_terminal() && level.monster_policy == MonsterPolicy::RandomWalk {
        move_monsters(level, &mut next, rng, &mut events);
    }

    next.t += 1;
    if !next.is_terminal() && next.t >= level.max_timesteps {
        next.termination = TerminationCause::Timeout;
    }
    Ok((next, events))
}

fn move_monsters<R: Rng + ?Sized>(
    level: &LevelSpec,
    state: &mut GameState,
    rng: &mut R,
    events: &mut EventSet,
) {
    let order: Vec<Cell> = state.alive_monsters.iter().copied().collect();
    for monster in order {
        // 0 = stay, 1..=4 = Direction::ALL
        let choice = rng.random_range(0..5usize);
        if choice == 0 {
            continue;
        }
        let target = monster.offset(Direction::ALL[choice - 1]);
        if target == state.avatar_pos {
            take_damage(state, level, events);
            if state.is_terminal() {
                return;
            }
            continue;
        }
        let blocked = !level.is_floor(target)
            || level.is_door(target)
            || state.remaining_treasures.contains(&target)
            || state.alive_monsters.contains(&target);
        if !blocked {
            state.alive_monsters.remove(&monster);
            state.alive_monsters.insert(target);
        }
    }
}
