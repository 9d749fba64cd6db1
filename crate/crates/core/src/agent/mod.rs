//! Agents that realize a persona on a level: tabular Q-learning and a small
//! PPO actor-critic, both trained on the composed reward
//! persona reward, then exploration bonus, then APF feedback.

mod config;
mod env;
mod explore;
pub mod ppo;
pub mod tabular;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apf::{ApfError, ApfModulator};
use crate::density::DensityError;
use crate::dynamics::DynamicsError;
use crate::persona::DevelopingPersona;
use crate::sim::{Action, LevelSpec, SimError, TerminationCause};
use crate::trajectory::{EventCounts, GoalMark, Trajectory};

pub use config::{AgentConfig, AgentKind, ApfFileConfig, ExplorationKind, FilterName};
pub use env::{episode_seed, PersonaEnv, StateKey, StepOutcome, BUDGET_BUCKETS};
pub use ppo::{gae, PpoPolicy, UpdateStats};
pub use tabular::QTable;

pub const POLICY_VERSION: u32 = 1;
pub const DEFAULT_DISCOUNT: f64 = 0.99;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("training budget must be positive")]
    ZeroBudget,
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("policy does not fit this level and persona: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Apf(#[from] ApfError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("unsupported policy version {0}")]
    Version(u32),
    #[error("policy serialization: {0}")]
    Serialization(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Online exploration bonus added on top of the persona reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Exploration {
    #[default]
    None,
    PseudoCount { beta: f64, filter: FilterName },
    Curiosity { beta: f64, features: usize },
}

/// Reward layers on top of the persona reward, composed in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct RewardStack<'a> {
    pub exploration: Exploration,
    pub apf: Option<&'a ApfModulator>,
}

impl<'a> RewardStack<'a> {
    pub fn persona_only() -> Self {
        Self::default()
    }

    /// Exploration as selected by the config, without APF.
    pub fn from_config(config: &AgentConfig) -> Self {
        let exploration = match config.exploration {
            ExplorationKind::None => Exploration::None,
            ExplorationKind::Cts => Exploration::PseudoCount {
                beta: config.cts_beta,
                filter: config.cts_filter,
            },
            ExplorationKind::Icm => Exploration::Curiosity {
                beta: config.icm_beta,
                features: config.icm_state_features,
            },
        };
        Self { exploration, apf: None }
    }

    pub fn with_apf(mut self, apf: &'a ApfModulator) -> Self {
        self.apf = Some(apf);
        self
    }

    pub fn compose(env_reward: f64, bonus: f64, apf_feedback: f64) -> f64 {
        (env_reward + bonus) + apf_feedback
    }
}

/// One training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: u64,
    pub seed: u64,
    pub steps: usize,
    /// Undiscounted sum of persona rewards.
    pub env_return: f64,
    pub discounted_return: f64,
    pub exploration_bonus: f64,
    pub apf_feedback: f64,
    pub goal_trace: Vec<GoalMark>,
    pub termination: TerminationCause,
    pub persona_completed: bool,
    pub counts: EventCounts,
}

impl EpisodeLog {
    pub fn from_trajectory(episode: u64, traj: &Trajectory, exploration_bonus: f64, apf_feedback: f64, gamma: f64) -> Self {
        Self {
            episode,
            seed: traj.seed,
            steps: traj.len(),
            env_return: traj.steps.iter().map(|s| s.env_reward).sum(),
            discounted_return: traj.env_return(gamma),
            exploration_bonus,
            apf_feedback,
            goal_trace: traj.goal_trace.clone(),
            termination: traj.termination,
            persona_completed: traj.persona_completed,
            counts: traj.counts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
}

impl TrainingLog {
    pub fn push(&mut self, episode: EpisodeLog) {
        self.episodes.push(episode);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn env_returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.env_return).collect()
    }

    /// One JSON record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.episodes {
            out.push_str(&serde_json::to_string(e).expect("episode log serializes"));
            out.push('\n');
        }
        out
    }

    /// Appends the records to `path`, creating it if needed.
    pub fn append_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        f.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    TabularQ(QTable),
    Ppo(PpoPolicy),
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    version: u32,
    policy: Policy,
}

impl Policy {
    /// Greedy (tabular) or mode (PPO) action in the environment's current state.
    pub fn act(&self, env: &PersonaEnv) -> Action {
        match self {
            Policy::TabularQ(q) => q.greedy(&q.key(env)),
            Policy::Ppo(p) => p.mode_action(&p.features(env.level(), env.state(), env.goal_cursor())),
        }
    }

    /// Action distribution; one-hot on the greedy action for the tabular agent.
    pub fn action_probs(&self, env: &PersonaEnv) -> Vec<f64> {
        match self {
            Policy::TabularQ(q) => {
                let mut p = vec![0.0; Action::COUNT];
                p[q.greedy(&q.key(env)).index()] = 1.0;
                p
            }
            Policy::Ppo(p) => p.action_probs(&p.features(env.level(), env.state(), env.goal_cursor())),
        }
    }

    pub fn check_compatible(&self, level: &LevelSpec, persona: &DevelopingPersona) -> Result<(), AgentError> {
        match self {
            Policy::TabularQ(_) => Ok(()),
            Policy::Ppo(p) => p.check_compatible(level, persona),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&PolicyFile {
            version: POLICY_VERSION,
            policy: self.clone(),
        })
        .expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let version = v.get("version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
        if version != POLICY_VERSION {
            return Err(AgentError::Version(version));
        }
        let f: PolicyFile = serde_json::from_value(v)?;
        Ok(f.policy)
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        crate::io::write_atomic(path, self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub policy: Policy,
    pub log: TrainingLog,
}

/// Trains an agent for `config.timesteps` environment steps.
pub fn train(
    config: &AgentConfig,
    level: &LevelSpec,
    level_name: &str,
    persona: &DevelopingPersona,
    stack: &RewardStack,
    seed: u64,
) -> Result<Trained, AgentError> {
    config.validate()?;
    match config.kind {
        AgentKind::TabularQ => {
            let (q, log) = tabular::train_tabular(config, level, level_name, persona, stack, seed)?;
            Ok(Trained {
                policy: Policy::TabularQ(q),
                log,
            })
        }
        AgentKind::Ppo => {
            let (p, log) = ppo::train_ppo(config, level, level_name, persona, stack, seed)?;
            Ok(Trained {
                policy: Policy::Ppo(p),
                log,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, sd }
    }
}

impl std::fmt::Display for MeanSd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.sd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEval {
    pub env_return: f64,
    /// Discounted env reward plus capped APF feedback; equals `env_return` without an APF.
    pub modulated_return: f64,
    pub counts: EventCounts,
    pub termination: TerminationCause,
    pub persona_completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub env_return: MeanSd,
    pub modulated_return: MeanSd,
    pub monsters_killed: MeanSd,
    pub treasures_collected: MeanSd,
    pub doors_reached: MeanSd,
    pub deaths: MeanSd,
    pub steps: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub trajectories: Vec<Trajectory>,
    pub episodes: Vec<EpisodeEval>,
    pub summary: EvalSummary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    pub gamma: f64,
    /// Store rendered frames in each trajectory.
    pub record_observations: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            episodes: 1,
            gamma: DEFAULT_DISCOUNT,
            record_observations: false,
        }
    }
}

/// Runs the policy's greedy/mode action for `options.episodes` episodes.
pub fn evaluate(
    policy: &Policy,
    level: &LevelSpec,
    level_name: &str,
    persona: &DevelopingPersona,
    apf: Option<&ApfModulator>,
    seed: u64,
    options: &EvalOptions,
) -> Result<Evaluation, AgentError> {
    if options.episodes == 0 {
        return Err(AgentError::InvalidConfig("evaluation needs at least one episode".into()));
    }
    policy.check_compatible(level, persona)?;
    let mut env = PersonaEnv::new(level, persona.clone(), apf).record_frames(options.record_observations);
    let mut trajectories = Vec::with_capacity(options.episodes);
    let mut episodes = Vec::with_capacity(options.episodes);
    for i in 0..options.episodes {
        env.reset(episode_seed(seed, i as u64));
        let mut modulated = 0.0;
        let mut g = 1.0;
        while !env.is_done() {
            let a = policy.act(&env);
            let out = env.step(a)?;
            modulated += g * (out.env_reward + out.apf_feedback);
            g *= options.gamma;
        }
        let traj = env.trajectory(level_name);
        episodes.push(EpisodeEval {
            env_return: traj.env_return(options.gamma),
            modulated_return: modulated,
            counts: traj.counts(),
            termination: traj.termination,
            persona_completed: traj.persona_completed,
        });
        trajectories.push(traj);
    }
    let summary = summarize(&episodes);
    Ok(Evaluation {
        trajectories,
        episodes,
        summary,
    })
}

fn summarize(episodes: &[EpisodeEval]) -> EvalSummary {
    let stat = |f: &dyn Fn(&EpisodeEval) -> f64| MeanSd::of(&episodes.iter().map(f).collect::<Vec<_>>());
    EvalSummary {
        episodes: episodes.len(),
        env_return: stat(&|e| e.env_return),
        modulated_return: stat(&|e| e.modulated_return),
        monsters_killed: stat(&|e| e.counts.monsters_killed as f64),
        treasures_collected: stat(&|e| e.counts.treasures_collected as f64),
        doors_reached: stat(&|e| e.counts.doors_reached as f64),
        deaths: stat(&|e| e.counts.deaths as f64),
        steps: stat(&|e| e.counts.steps as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd() {
        let m = MeanSd::of(&[1.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.sd - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(MeanSd::of(&[4.0]).sd, 0.0);
    }

    #[test]
    fn stack_from_config() {
        let cfg = AgentConfig::tabular(10).with_exploration(ExplorationKind::Cts);
        assert_eq!(
            RewardStack::from_config(&cfg).exploration,
            Exploration::PseudoCount {
                beta: 0.05,
                filter: FilterName::LShaped
            }
        );
        assert_eq!(RewardStack::persona_only().exploration, Exploration::None);
    }
}
