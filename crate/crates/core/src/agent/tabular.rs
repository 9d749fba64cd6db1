use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::persona::DevelopingPersona;
use crate::sim::{Action, LevelSpec};

use super::config::AgentConfig;
use super::env::{episode_seed, PersonaEnv, StateKey, BUDGET_BUCKETS};
use super::explore::Explorer;
use super::{AgentError, EpisodeLog, RewardStack, TrainingLog};

/// Action values per state; unseen states hold `initial` for every action.
///
/// A table trained under an APF also keys on the remaining positive APF
/// budget: capped feedback depends on what was already paid out this episode,
/// and without it a looping policy looks endlessly rewarded.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: HashMap<StateKey, [f64; Action::COUNT]>,
    initial: f64,
    budget_aware: bool,
}

#[derive(Serialize, Deserialize)]
struct QTableRepr {
    initial: f64,
    budget_aware: bool,
    entries: Vec<(StateKey, [f64; Action::COUNT])>,
}

impl Serialize for QTable {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut entries: Vec<_> = self.values.iter().map(|(k, v)| (*k, *v)).collect();
        entries.sort_by_key(|e| e.0);
        QTableRepr {
            initial: self.initial,
            budget_aware: self.budget_aware,
            entries,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for QTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = QTableRepr::deserialize(d)?;
        Ok(Self {
            values: r.entries.into_iter().collect(),
            initial: r.initial,
            budget_aware: r.budget_aware,
        })
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl QTable {
    pub fn new(initial: f64, budget_aware: bool) -> Self {
        Self {
            values: HashMap::new(),
            initial,
            budget_aware,
        }
    }

    pub fn is_budget_aware(&self) -> bool {
        self.budget_aware
    }

    /// Key of the environment's current state. Without an APF a budget-aware
    /// table sees a full budget.
    pub fn key(&self, env: &PersonaEnv) -> StateKey {
        let key = StateKey::new(env.state(), env.goal_cursor());
        if self.budget_aware {
            key.with_budget(env.positive_budget().unwrap_or(BUDGET_BUCKETS))
        } else {
            key
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self, key: &StateKey) -> [f64; Action::COUNT] {
        self.values.get(key).copied().unwrap_or([self.initial; Action::COUNT])
    }

    pub fn greedy(&self, key: &StateKey) -> Action {
        Action::from_index(argmax(&self.values(key))).unwrap()
    }

    fn update(&mut self, key: StateKey, action: Action, target: f64, lr: f64) {
        let initial = self.initial;
        let q = &mut self.values.entry(key).or_insert([initial; Action::COUNT])[action.index()];
        *q += lr * (target - *q);
    }

    fn max_value(&self, key: &StateKey) -> f64 {
        self.values(key).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Experience {
    key: StateKey,
    action: Action,
    reward: f64,
    next: StateKey,
    done: bool,
}

fn epsilon(cfg: &AgentConfig, steps: u64) -> f64 {
    let horizon = (cfg.epsilon_decay * cfg.timesteps as f64).max(1.0);
    let frac = (steps as f64 / horizon).min(1.0);
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac
}

pub(crate) fn train_tabular(
    cfg: &AgentConfig,
    level: &LevelSpec,
    level_name: &str,
    persona: &DevelopingPersona,
    stack: &RewardStack,
    seed: u64,
) -> Result<(QTable, TrainingLog), AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut explorer = Explorer::new(stack.exploration, seed);
    let mut env = PersonaEnv::new(level, persona.clone(), stack.apf);
    // a zero-beta APF pays nothing, so its budget carries no information
    let budget_aware = stack.apf.is_some_and(|a| a.config().beta > 0.0);
    let mut table = QTable::new(cfg.initial_q, budget_aware);
    let mut log = TrainingLog::default();
    let (gamma, lr) = (cfg.discount, cfg.learning_rate());
    let mut steps = 0u64;
    let mut episode = 0u64;
    while steps < cfg.timesteps {
        env.reset(episode_seed(seed, episode));
        let mut experience = Vec::new();
        let mut bonus_total = 0.0;
        let mut apf_total = 0.0;
        let mut key = table.key(&env);
        let mut frame = explorer.needs_frames().then(|| env.frame());
        while !env.is_done() && steps < cfg.timesteps {
            let action = if rng.random::<f64>() < epsilon(cfg, steps) {
                Action::from_index(rng.random_range(0..Action::COUNT)).unwrap()
            } else {
                table.greedy(&key)
            };
            let out = env.step(action)?;
            let bonus = match frame.take() {
                Some(prev) => {
                    let next = env.frame();
                    let b = explorer.bonus(&prev, action, &next)?;
                    frame = Some(next);
                    b
                }
                None => 0.0,
            };
            let reward = RewardStack::compose(out.env_reward, bonus, out.apf_feedback);
            if !reward.is_finite() {
                return Err(AgentError::Diverged(format!("non-finite reward in episode {episode}")));
            }
            bonus_total += bonus;
            apf_total += out.apf_feedback;
            let next = table.key(&env);
            let target = if out.done { reward } else { reward + gamma * table.max_value(&next) };
            table.update(key, action, target, lr);
            experience.push(Experience {
                key,
                action,
                reward,
                next,
                done: out.done,
            });
            key = next;
            steps += 1;
        }
        for _ in 0..cfg.replay_passes {
            for e in experience.iter().rev() {
                let target = if e.done {
                    e.reward
                } else {
                    e.reward + gamma * table.max_value(&e.next)
                };
                table.update(e.key, e.action, target, lr);
            }
        }
        log.push(EpisodeLog::from_trajectory(
            episode,
            &env.trajectory(level_name),
            bonus_total,
            apf_total,
            gamma,
        ));
        episode += 1;
    }
    Ok((table, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.0, 1.0, 1.0]), 1);
        assert_eq!(argmax(&[0.0; 6]), 0);
        assert_eq!(argmax(&[-1.0, -2.0]), 0);
    }

    #[test]
    fn epsilon_decays_linearly() {
        let cfg = AgentConfig {
            timesteps: 100,
            epsilon_decay: 0.5,
            ..AgentConfig::tabular(100)
        };
        assert_eq!(epsilon(&cfg, 0), 1.0);
        assert!((epsilon(&cfg, 25) - 0.525).abs() < 1e-12);
        assert!((epsilon(&cfg, 80) - 0.05).abs() < 1e-12);
    }
}
