//! Persona-driven automated playtesting for grid dungeon levels.

pub mod agent;
pub mod apf;
pub mod density;
pub mod dynamics;
pub mod harness;
mod io;
pub mod nn;
pub mod persona;
pub mod sim;
pub mod trajectory;

pub use agent::{evaluate, train, AgentConfig, AgentError, EvalOptions, Evaluation, Policy, RewardStack, TrainingLog};
pub use apf::{ApfConfig, ApfModulator, CapLedger, TrajectoryMask};
pub use density::{ContextFilter, DensityModel};
pub use dynamics::{FeatureEncoder, Icm};
pub use harness::{discover_alternatives, interaction_table, return_matrix, Discovery, HarnessError, InteractionTable, ReturnMatrix};
pub use persona::{DevelopingPersona, Goal, PersonaMode, Transition, UtilityTable};
pub use sim::{Action, GameEvent, GameState, LevelSpec, Observation};
pub use io::write_atomic;
pub use trajectory::{ReplayError, Trajectory};
