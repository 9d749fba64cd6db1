use std::collections::{HashSet, VecDeque};

use playtest_core::agent::{
    evaluate, train, AgentConfig, AgentError, EvalOptions, Exploration, ExplorationKind, FilterName, Policy,
    RewardStack, StateKey,
};
use playtest_core::apf::{train_apf, ApfConfig, PathFrames, TrajectoryMask};
use playtest_core::persona::{builtin_persona, DevelopingPersona};
use playtest_core::sim::{levels, load_level, Action, Cell, Direction, GameState, LevelSpec, TerminationCause};
use playtest_core::trajectory::{path_frames, scripted};

const OPEN_3X3: &str = "\
WWWWW
WA..W
W...W
W..DW
WWWWW
";

/// Fewest actions to reach a door, searching over (cell, facing) where a
/// direction other than the facing only turns.
fn shortest_exit(level: &LevelSpec) -> usize {
    let start = (level.avatar_start, level.avatar_facing);
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some(((cell, facing), d)) = queue.pop_front() {
        if level.is_door(cell) {
            return d;
        }
        for dir in Direction::ALL {
            let next = if dir != facing {
                (cell, dir)
            } else {
                let (dx, dy) = dir.delta();
                let target = Cell::new(cell.x + dx, cell.y + dy);
                if level.is_floor(target) {
                    (target, dir)
                } else {
                    (cell, dir)
                }
            };
            if seen.insert(next) {
                queue.push_back((next, d + 1));
            }
        }
    }
    panic!("no reachable door");
}

fn greedy_steps(policy: &Policy, level: &LevelSpec, persona: &DevelopingPersona) -> (usize, TerminationCause) {
    let eval = evaluate(policy, level, "test", persona, None, 0, &EvalOptions::default()).unwrap();
    let t = &eval.trajectories[0];
    (t.len(), t.termination)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

#[test]
fn tabular_reaches_door_in_minimal_steps() {
    let level = load_level(OPEN_3X3).unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let optimal = shortest_exit(&level);
    // avatars start facing up: turn down, two moves, turn right, two moves
    assert_eq!(optimal, 6);
    let trained = train(&AgentConfig::tabular(10_000), &level, "open", &exit, &RewardStack::persona_only(), 1).unwrap();
    assert_eq!(greedy_steps(&trained.policy, &level, &exit), (optimal, TerminationCause::ExitDoor));
}

#[test]
fn tabular_corridor_matches_oracle() {
    let level = levels::builtin("corridor").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let trained = train(&AgentConfig::tabular(5_000), &level, "corridor", &exit, &RewardStack::persona_only(), 4).unwrap();
    assert_eq!(greedy_steps(&trained.policy, &level, &exit), (shortest_exit(&level), TerminationCause::ExitDoor));
}

#[test]
fn zero_budget_is_an_error() {
    let level = levels::builtin("corridor").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    for cfg in [AgentConfig::tabular(0), AgentConfig::ppo(0)] {
        let r = train(&cfg, &level, "corridor", &exit, &RewardStack::persona_only(), 0);
        assert!(matches!(r, Err(AgentError::ZeroBudget)));
    }
}

#[test]
fn tabular_training_is_reproducible() {
    let level = levels::builtin("dungeon").unwrap();
    let persona = builtin_persona("Dev. Killer").unwrap();
    let cfg = AgentConfig::tabular(6_000).with_exploration(ExplorationKind::Cts);
    let stack = RewardStack::from_config(&cfg);
    let a = train(&cfg, &level, "dungeon", &persona, &stack, 11).unwrap();
    let b = train(&cfg, &level, "dungeon", &persona, &stack, 11).unwrap();
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.log, b.log);
    let c = train(&cfg, &level, "dungeon", &persona, &stack, 12).unwrap();
    assert_ne!(a.log, c.log);
}

#[test]
fn disabled_layers_equal_persona_only_training() {
    let level = levels::builtin("two-doors").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let cfg = AgentConfig::tabular(3_000);
    let base = train(&cfg, &level, "two-doors", &exit, &RewardStack::persona_only(), 5).unwrap();

    let path: PathFrames = path_frames(&level, &scripted(&level, "two-doors", &[Action::Left; 4], 0), 3).unwrap();
    let apf = train_apf(&ApfConfig { beta: 0.0, ..ApfConfig::cts() }, &[path], &[TrajectoryMask::none()]).unwrap();
    let silent = RewardStack {
        exploration: Exploration::PseudoCount {
            beta: 0.0,
            filter: FilterName::LShaped,
        },
        apf: Some(&apf),
    };
    let layered = train(&cfg, &level, "two-doors", &exit, &silent, 5).unwrap();
    assert_eq!(base.policy, layered.policy);
    assert_eq!(base.log.env_returns(), layered.log.env_returns());
}

fn scaled(persona: &DevelopingPersona, factor: f64) -> DevelopingPersona {
    let mut p = persona.clone();
    for g in &mut p.goals {
        g.utility = g.utility.scaled(factor);
    }
    p
}

#[test]
fn scaling_utilities_keeps_greedy_actions() {
    let level = levels::builtin("corridor").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let cfg = AgentConfig::tabular(4_000);
    let a = train(&cfg, &level, "corridor", &exit, &RewardStack::persona_only(), 2).unwrap();
    let b = train(&cfg, &level, "corridor", &scaled(&exit, 2.0), &RewardStack::persona_only(), 2).unwrap();
    let (Policy::TabularQ(qa), Policy::TabularQ(qb)) = (&a.policy, &b.policy) else {
        panic!("tabular policies expected");
    };
    assert_eq!(qa.len(), qb.len());
    // enumerate every (cell, facing) of the corridor
    let mut checked = 0;
    for x in 1..level.width as i32 - 1 {
        for facing in Direction::ALL {
            let mut s = GameState::initial(&level);
            s.avatar_pos = Cell::new(x, 1);
            s.avatar_facing = facing;
            let key = StateKey::new(&s, Default::default());
            assert_eq!(qa.greedy(&key), qb.greedy(&key));
            checked += 1;
        }
    }
    assert!(checked >= 16);
}

#[test]
fn tabular_returns_improve_on_corridor() {
    let level = levels::builtin("corridor").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let cfg = AgentConfig {
        epsilon_decay: 0.3,
        ..AgentConfig::tabular(20_000)
    };
    let log = train(&cfg, &level, "corridor", &exit, &RewardStack::persona_only(), 3).unwrap().log;
    let returns = log.env_returns();
    let k = (returns.len() / 10).max(1);
    assert!(median(returns[returns.len() - k..].to_vec()) >= median(returns[..k].to_vec()));
}

fn small_ppo(timesteps: u64) -> AgentConfig {
    AgentConfig {
        num_actors: 4,
        horizon: 64,
        num_minibatch: 4,
        hidden: vec![32, 32],
        learning_rate: Some(3e-3),
        ..AgentConfig::ppo(timesteps)
    }
}

#[test]
fn ppo_learns_corridor() {
    let level = levels::builtin("corridor").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let trained = train(&small_ppo(12_000), &level, "corridor", &exit, &RewardStack::persona_only(), 7).unwrap();
    assert_eq!(greedy_steps(&trained.policy, &level, &exit), (shortest_exit(&level), TerminationCause::ExitDoor));
    let returns = trained.log.env_returns();
    let k = (returns.len() / 10).max(1);
    assert!(median(returns[returns.len() - k..].to_vec()) >= median(returns[..k].to_vec()));
}

#[test]
fn ppo_training_is_reproducible() {
    let level = levels::builtin("two-doors").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let cfg = small_ppo(1_024);
    let a = train(&cfg, &level, "two-doors", &exit, &RewardStack::persona_only(), 9).unwrap();
    let b = train(&cfg, &level, "two-doors", &exit, &RewardStack::persona_only(), 9).unwrap();
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.log, b.log);
}

#[test]
fn ppo_with_curiosity_runs() {
    let level = levels::builtin("tiny").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let cfg = small_ppo(512).with_exploration(ExplorationKind::Icm);
    let trained = train(&cfg, &level, "tiny", &exit, &RewardStack::from_config(&cfg), 1).unwrap();
    assert!(trained.log.episodes.iter().any(|e| e.exploration_bonus > 0.0));
}

#[test]
fn evaluation_is_deterministic_and_round_trips() {
    let level = levels::builtin("corridor").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let trained = train(&AgentConfig::tabular(3_000), &level, "corridor", &exit, &RewardStack::persona_only(), 1).unwrap();
    let opts = EvalOptions {
        episodes: 3,
        ..Default::default()
    };
    let a = evaluate(&trained.policy, &level, "corridor", &exit, None, 4, &opts).unwrap();
    let b = evaluate(&trained.policy, &level, "corridor", &exit, None, 4, &opts).unwrap();
    assert_eq!(a, b);
    assert!(a.summary.env_return.sd < 1e-12);
    assert_eq!(a.summary.doors_reached.mean, 1.0);
    assert_eq!(a.episodes[0].env_return, a.episodes[0].modulated_return);

    let back = Policy::from_json(&trained.policy.to_json()).unwrap();
    assert_eq!(back, trained.policy);
    let tampered = trained.policy.to_json().replacen("\"version\":1", "\"version\":7", 1);
    assert!(matches!(Policy::from_json(&tampered), Err(AgentError::Version(7))));
}

#[test]
fn training_log_is_one_record_per_episode() {
    let level = levels::builtin("corridor").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let log = train(&AgentConfig::tabular(500), &level, "corridor", &exit, &RewardStack::persona_only(), 1).unwrap().log;
    let text = log.to_jsonl();
    assert_eq!(text.lines().count(), log.len());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    log.append_jsonl(&path).unwrap();
    log.append_jsonl(&path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2 * log.len());
}

#[test]
fn ppo_policy_rejects_other_levels() {
    let level = levels::builtin("corridor").unwrap();
    let exit = builtin_persona("Exit").unwrap();
    let trained = train(&small_ppo(256), &level, "corridor", &exit, &RewardStack::persona_only(), 1).unwrap();
    let other = levels::builtin("tiny").unwrap();
    let r = evaluate(&trained.policy, &other, "tiny", &exit, None, 0, &EvalOptions::default());
    assert!(matches!(r, Err(AgentError::Incompatible(_))));
}
