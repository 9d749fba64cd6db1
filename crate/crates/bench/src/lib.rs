//! Fixtures shared by the benchmarks.

use playtest_core::apf::DEFAULT_FRAME_SIDE;
use playtest_core::sim::render::DEFAULT_BLOCK;
use playtest_core::sim::{levels, render, Action, LevelSpec, Observation};
use playtest_core::trajectory::{scripted, trajectory_frames, Trajectory};

pub fn dungeon() -> LevelSpec {
    levels::dungeon()
}

/// The fifteen-step route from the dungeon start to the upper-left door.
pub fn upper_left_route(level: &LevelSpec) -> Trajectory {
    let mut actions = vec![Action::Up; 6];
    actions.extend([Action::Left; 9]);
    scripted(level, "dungeon", &actions, 0)
}

/// Frames of `traj`, downsampled to the side used by the density and dynamics models.
pub fn model_frames(level: &LevelSpec, traj: &Trajectory) -> Vec<Observation> {
    trajectory_frames(level, traj, DEFAULT_BLOCK)
        .expect("scripted route replays")
        .iter()
        .map(|f| f.resize(DEFAULT_FRAME_SIDE, DEFAULT_FRAME_SIDE))
        .collect()
}

pub fn start_frame(level: &LevelSpec) -> Observation {
    render(level, &playtest_core::GameState::initial(level), DEFAULT_BLOCK)
}
