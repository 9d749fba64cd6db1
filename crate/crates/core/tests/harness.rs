use std::collections::{BTreeSet, HashMap, VecDeque};

use proptest::prelude::*;

use playtest_core::agent::{evaluate, train, AgentConfig, EvalOptions, RewardStack};
use playtest_core::apf::ApfConfig;
use playtest_core::harness::{
    cell_labels, discover_alternatives, equivalence_classes, interaction_table, load_trajectories, render_paths,
    rescore, return_matrix, save_trajectories, trajectories_from_str, trajectories_to_string, HarnessError, Stat,
};
use playtest_core::persona::builtin_persona;
use playtest_core::sim::render::DEFAULT_BLOCK;
use playtest_core::sim::{levels, Action, Cell, Direction, LevelSpec, MonsterPolicy};
use playtest_core::trajectory::{scripted, trajectory_frames, Trajectory};

fn recorded(level_name: &str, persona: &str, observations: bool) -> Trajectory {
    let level = levels::builtin(level_name).unwrap();
    let p = builtin_persona(persona).unwrap();
    let trained = train(&AgentConfig::tabular(3_000), &level, level_name, &p, &RewardStack::persona_only(), 2).unwrap();
    let opts = EvalOptions {
        record_observations: observations,
        ..Default::default()
    };
    evaluate(&trained.policy, &level, level_name, &p, None, 3, &opts)
        .unwrap()
        .trajectories
        .remove(0)
}

#[test]
fn trajectory_file_round_trips() {
    let trajs = vec![recorded("corridor", "Exit", true), recorded("dungeon", "Dev. Killer", false)];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paths.traj");
    save_trajectories(&path, &trajs).unwrap();
    assert_eq!(load_trajectories(&path).unwrap(), trajs);
}

#[test]
fn wrong_version_is_rejected() {
    let text = trajectories_to_string(&[recorded("corridor", "Exit", false)]);
    let bumped = text.replacen("playtest-trajectories 1", "playtest-trajectories 2", 1);
    assert!(matches!(
        trajectories_from_str(&bumped),
        Err(HarnessError::Version { found: 2, expected: 1 })
    ));
}

#[test]
fn corruption_is_detected() {
    let text = trajectories_to_string(&[recorded("corridor", "Exit", false)]);
    let corrupted = text.replacen("step Right", "step Left", 1);
    assert_ne!(corrupted, text);
    assert!(matches!(trajectories_from_str(&corrupted), Err(HarnessError::Checksum)));
    let truncated = &text[..text.len() / 2];
    assert!(trajectories_from_str(truncated).is_err());
}

#[test]
fn actions_alone_reconstruct_observations() {
    let level = levels::builtin("corridor").unwrap();
    let with = recorded("corridor", "Exit", true);
    let mut without = with.clone();
    without.observations = None;
    let rebuilt = trajectory_frames(&level, &without, DEFAULT_BLOCK).unwrap();
    assert_eq!(Some(rebuilt), with.observations);
}

proptest! {
    #[test]
    fn rewards_round_trip_exactly(rewards in prop::collection::vec(-1e6f64..1e6, 1..20)) {
        let level = levels::builtin("dungeon").unwrap();
        let mut t = scripted(&level, "dungeon", &vec![Action::Up; rewards.len()], 0);
        for (s, r) in t.steps.iter_mut().zip(&rewards) {
            s.env_reward = *r;
        }
        let back = trajectories_from_str(&trajectories_to_string(std::slice::from_ref(&t))).unwrap();
        prop_assert_eq!(back, vec![t]);
    }
}

/// Distinct visited-cell sets over every shortest action sequence that ends
/// at a door, found by exhaustive breadth-first search over (cell, facing).
fn shortest_path_cell_sets(level: &LevelSpec) -> BTreeSet<BTreeSet<Cell>> {
    type Node = (Cell, Direction);
    let start: Node = (level.avatar_start, level.avatar_facing);
    let mut dist: HashMap<Node, usize> = HashMap::from([(start, 0)]);
    let mut preds: HashMap<Node, Vec<Node>> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    let mut best = usize::MAX;
    let mut goals = Vec::new();
    while let Some(n) = queue.pop_front() {
        let d = dist[&n];
        if d > best {
            break;
        }
        if level.is_door(n.0) {
            best = d;
            goals.push(n);
            continue;
        }
        for dir in Direction::ALL {
            let next = if dir != n.1 {
                (n.0, dir)
            } else {
                let target = n.0.offset(dir);
                (if level.is_floor(target) { target } else { n.0 }, dir)
            };
            match dist.get(&next) {
                None => {
                    dist.insert(next, d + 1);
                    preds.insert(next, vec![n]);
                    queue.push_back(next);
                }
                Some(&e) if e == d + 1 => preds.get_mut(&next).unwrap().push(n),
                _ => {}
            }
        }
    }
    fn walk(n: (Cell, Direction), start: Cell, preds: &HashMap<(Cell, Direction), Vec<(Cell, Direction)>>, acc: BTreeSet<Cell>, out: &mut BTreeSet<BTreeSet<Cell>>) {
        let mut acc = acc;
        if n.0 != start {
            acc.insert(n.0);
        }
        match preds.get(&n) {
            None => {
                out.insert(acc);
            }
            Some(ps) => {
                for &p in ps {
                    walk(p, start, preds, acc.clone(), out);
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for g in goals {
        walk(g, level.avatar_start, &preds, BTreeSet::new(), &mut out);
    }
    out
}

#[test]
fn two_door_level_yields_both_paths() {
    let level = levels::builtin("two-doors").unwrap();
    let oracle = shortest_path_cell_sets(&level);
    assert_eq!(oracle.len(), 2);
    let exit = builtin_persona("Exit").unwrap();
    let d = discover_alternatives(&level, "two-doors", &exit, &AgentConfig::tabular(4_000), &ApfConfig::cts(), 5, 0).unwrap();
    let found: BTreeSet<BTreeSet<Cell>> = d.distinct_paths().iter().map(|t| t.visited_cells()).collect();
    assert_eq!(found, oracle);
    // the last round repeats an earlier one
    assert!(d.rounds.last().unwrap().repeat_of.is_some());
}

#[test]
fn corridor_discovery_stops_on_repeat() {
    let level = levels::builtin("corridor").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let d = discover_alternatives(&level, "corridor", &exit, &AgentConfig::tabular(3_000), &ApfConfig::cts(), 5, 0).unwrap();
    assert_eq!(d.rounds.len(), 2);
    let last = &d.rounds[1];
    assert!(last.repeat_of.is_some() || last.degenerate);
    assert_eq!(d.distinct_paths().len(), 1);
}

#[test]
fn zero_rounds_is_rejected() {
    let level = levels::builtin("corridor").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let r = discover_alternatives(&level, "corridor", &exit, &AgentConfig::tabular(100), &ApfConfig::cts(), 0, 0);
    assert!(matches!(r, Err(HarnessError::InvalidArgument(_))));
}

fn two_door_paths(level: &LevelSpec) -> Vec<Trajectory> {
    vec![
        scripted(level, "two-doors", &[Action::Left; 4], 0),
        scripted(level, "two-doors", &[Action::Right; 4], 0),
    ]
}

#[test]
fn zero_beta_matrix_repeats_baseline() {
    let level = levels::builtin("two-doors").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let cfg = ApfConfig { beta: 0.0, ..ApfConfig::cts() };
    let m = return_matrix(&level, &exit, &two_door_paths(&level), &cfg, 0.99).unwrap();
    for row in &m.rows {
        assert_eq!(row, &m.baseline);
    }
}

#[test]
fn matrix_penalizes_own_path_and_rewards_the_other() {
    let level = levels::builtin("two-doors").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let paths = two_door_paths(&level);
    assert!(paths[0].is_space_disjoint(&paths[1]));
    for cfg in [ApfConfig::cts(), ApfConfig::icm()] {
        let m = return_matrix(&level, &exit, &paths, &cfg, 0.99).unwrap();
        for i in 0..2 {
            assert!(m.diagonal_drop(i) > 0.0, "{:?} {m}", cfg.backend);
            assert!(m.increase(i, 1 - i) > 0.0, "{:?} {m}", cfg.backend);
        }
        let again = return_matrix(&level, &exit, &paths, &cfg, 0.99).unwrap();
        assert_eq!(m, again);
        // each path only penalizes itself
        assert_eq!(equivalence_classes(&m, 0.0), vec![vec![0], vec![1]]);
    }
}

#[test]
fn scripted_paths_get_persona_rewards() {
    let level = levels::builtin("corridor").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let path = scripted(&level, "corridor", &[Action::Right; 5], 0);
    let r = rescore(&level, &path, &exit, None, 1.0).unwrap();
    let expected: f64 = path.steps.len() as f64 * -level.step_penalty + exit.goals[0].utility.weight(playtest_core::GameEvent::ExitDoor);
    assert!((r.env_return - expected).abs() < 1e-12, "{r:?} vs {expected}");
    assert_eq!(r.env_return, r.modulated_return);
}

#[test]
fn rescoring_on_another_level_fails() {
    let level = levels::builtin("corridor").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let path = scripted(&level, "corridor", &[Action::Right; 5], 0);
    let other = levels::builtin("two-doors").unwrap();
    assert!(matches!(rescore(&other, &path, &exit, None, 0.99), Err(HarnessError::Replay(_))));
}

#[test]
fn equivalence_classes_partition_the_catalog() {
    let level = levels::builtin("ring").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    use Action::*;
    let paths = vec![
        scripted(&level, "ring", &[Left, Left, Left, Down, Down, Down, Down, Right, Right, Right], 0),
        scripted(&level, "ring", &[Right, Right, Right, Down, Down, Down, Down, Left, Left, Left], 0),
        scripted(&level, "ring", &[Left, Left, Left, Down, Down, Down, Down, Right, Right, Right], 0),
    ];
    let m = return_matrix(&level, &exit, &paths, &ApfConfig::cts(), 0.99).unwrap();
    let classes = equivalence_classes(&m, 0.0);
    let mut all: Vec<usize> = classes.iter().flatten().copied().collect();
    all.sort();
    assert_eq!(all, vec![0, 1, 2]);
    assert!(classes.iter().any(|c| c.contains(&0) && c.contains(&2)));
}

#[test]
fn exit_persona_interactions_are_exact() {
    let level = levels::builtin("dungeon").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let trained = train(&AgentConfig::tabular(300_000), &level, "dungeon", &exit, &RewardStack::persona_only(), 0).unwrap();
    let eval = evaluate(&trained.policy, &level, "dungeon", &exit, None, 0, &EvalOptions::default()).unwrap();
    let table = interaction_table(&[("Exit".to_string(), eval)]).unwrap();
    let row = table.row("Exit").unwrap();
    assert_eq!(row.monsters_killed, Stat::Exact(0.0));
    assert_eq!(row.treasures_collected, Stat::Exact(0.0));
    assert_eq!(row.doors_reached, Stat::Exact(1.0));
    assert!(table.to_string().contains("Exit"));
}

#[test]
fn stochastic_interactions_report_spread() {
    let mut level = levels::builtin("dungeon").unwrap();
    level.monster_policy = MonsterPolicy::RandomWalk;
    let killer = builtin_persona("Dev. Killer").unwrap();
    let trained = train(&AgentConfig::tabular(5_000), &level, "dungeon", &killer, &RewardStack::persona_only(), 0).unwrap();
    let opts = EvalOptions {
        episodes: 30,
        ..Default::default()
    };
    let eval = evaluate(&trained.policy, &level, "dungeon", &killer, None, 0, &opts).unwrap();
    let table = interaction_table(&[("Dev. Killer".to_string(), eval)]).unwrap();
    let row = &table.rows[0];
    assert_eq!(row.episodes, 30);
    let stats = [row.monsters_killed, row.treasures_collected, row.doors_reached, row.deaths];
    assert!(stats.iter().all(|s| s.mean() >= 0.0));
    assert!(stats.iter().any(|s| matches!(s, Stat::Spread(_))), "{table}");
}

#[test]
fn empty_interaction_table_is_an_error() {
    assert!(matches!(interaction_table(&[]), Err(HarnessError::Empty(_))));
}

#[test]
fn straight_path_marks_each_cell_once() {
    let level = levels::builtin("corridor").unwrap();
    let path = scripted(&level, "corridor", &[Action::Right; 5], 0);
    let labels = cell_labels(&level, std::slice::from_ref(&path)).unwrap();
    assert_eq!(labels.len(), 4);
    assert!(labels.values().all(|l| l == &vec!['1']));
    let overlay = render_paths(&level, &[path]).unwrap();
    assert_eq!(overlay.ascii, "WWWWWWW\nWA1111W\nWWWWWWW\n");
    let header = format!("P6\n{} {}\n255\n", 7 * 12, 3 * 12);
    assert!(overlay.ppm.starts_with(header.as_bytes()));
    assert_eq!(overlay.ppm.len(), header.len() + 7 * 12 * 3 * 12 * 3);
}

#[test]
fn crossing_paths_share_a_cell() {
    let level = levels::builtin("ring").unwrap();
    use Action::*;
    let a = scripted(&level, "ring", &[Left, Left, Left, Down, Down, Down, Down, Right, Right, Right], 0);
    let b = scripted(&level, "ring", &[Right, Right, Right, Down, Down, Down, Down, Left, Left, Left], 0);
    let labels = cell_labels(&level, &[a.clone(), b.clone()]).unwrap();
    let door = level.doors[0];
    assert_eq!(labels[&door], vec!['1', '2']);
    let overlay = render_paths(&level, &[a, b]).unwrap();
    assert!(overlay.ascii.contains("12"));
}

#[test]
fn path_outside_level_is_an_error() {
    let level = levels::builtin("corridor").unwrap();
    let mut path = scripted(&level, "corridor", &[Action::Right; 2], 0);
    path.steps[1].cell = Cell::new(40, 1);
    assert!(matches!(
        render_paths(&level, &[path]),
        Err(HarnessError::OutOfBounds { path: 0, .. })
    ));
}
