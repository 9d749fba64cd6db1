//! Experiment orchestration on top of the agent and APF layers: path
//! discovery, return matrices, interaction tables, trajectory files and path
//! overlays.

mod discover;
mod matrix;
mod render;
mod store;
mod table;

use thiserror::Error;

use crate::agent::AgentError;
use crate::apf::ApfError;
use crate::trajectory::ReplayError;

pub use discover::{discover_alternatives, Discovery, DiscoveryRound};
pub use matrix::{equivalence_classes, rescore, return_matrix, return_matrix_with, train_path_apfs, ReturnMatrix, Rescored};
pub use render::{cell_labels, path_label, render_ascii, render_paths, render_ppm, PathOverlay};
pub use store::{
    load_trajectories, save_trajectories, trajectories_from_str, trajectories_to_string, TRAJECTORY_FORMAT_VERSION,
};
pub use table::{interaction_table, InteractionRow, InteractionTable, Stat};

/// Episodes per persona when evaluating on a level with random monsters.
pub const STOCHASTIC_EVAL_EPISODES: usize = 1000;

/// Evaluation episodes for `level`: one when it is deterministic, otherwise
/// `stochastic` (normally [`STOCHASTIC_EVAL_EPISODES`]).
pub fn eval_episodes(level: &crate::sim::LevelSpec, stochastic: usize) -> usize {
    if level.is_deterministic() {
        1
    } else {
        stochastic
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trajectory file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("trajectory file checksum mismatch")]
    Checksum,
    #[error("empty input: {0}")]
    Empty(String),
    #[error("path {path} leaves the level at {cell}")]
    OutOfBounds { path: usize, cell: crate::sim::Cell },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Apf(#[from] ApfError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
