//! Grid dungeon simulator: level format, world dynamics and frame rendering.

pub mod level;
pub mod levels;
pub mod render;
pub mod state;

pub use level::{load_level, Cell, Direction, LevelError, LevelSpec, MonsterPolicy, Tile};
pub use render::{render, Observation};
pub use state::{step, Action, EventSet, GameEvent, GameState, SimError, TerminationCause};
