use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nn::{clip_grad_norm, l2_norm, log_softmax, softmax, Activation, Adam, Mlp};
use crate::persona::{DevelopingPersona, GoalCursor};
use crate::sim::{render, Action, GameState, LevelSpec, Observation};
use crate::trajectory::Trajectory;

use super::config::AgentConfig;
use super::env::{episode_seed, PersonaEnv};
use super::explore::Explorer;
use super::tabular::argmax;
use super::{AgentError, EpisodeLog, RewardStack, TrainingLog};

/// Samples per parallel gradient chunk; fixed so summation order never changes.
const GRAD_CHUNK: usize = 32;
const ADV_EPS: f64 = 1e-8;
/// Keeps initial action distributions close to uniform.
const ACTOR_OUTPUT_SCALE: f64 = 0.01;

/// Separate actor and critic MLPs over the flattened one-pixel-per-tile frame,
/// plus facing and persona-cursor one-hots (facing is invisible at that scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoPolicy {
    pub actor: Mlp,
    pub critic: Mlp,
    width: usize,
    height: usize,
    num_goals: usize,
}

impl PpoPolicy {
    pub fn new<R: Rng + ?Sized>(level: &LevelSpec, persona: &DevelopingPersona, hidden: &[usize], rng: &mut R) -> Self {
        let input = Self::input_dim(level, persona);
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        let mut actor_sizes = sizes.clone();
        actor_sizes.push(Action::COUNT);
        sizes.push(1);
        Self {
            actor: Mlp::new(&actor_sizes, Activation::Tanh, ACTOR_OUTPUT_SCALE, rng),
            critic: Mlp::new(&sizes, Activation::Tanh, 1.0, rng),
            width: level.width,
            height: level.height,
            num_goals: persona.goals.len(),
        }
    }

    pub fn input_dim(level: &LevelSpec, persona: &DevelopingPersona) -> usize {
        level.width * level.height + 4 + persona.goals.len() + 1
    }

    pub fn check_compatible(&self, level: &LevelSpec, persona: &DevelopingPersona) -> Result<(), AgentError> {
        if (self.width, self.height) != (level.width, level.height) {
            return Err(AgentError::Incompatible(format!(
                "trained on a {}x{} level, given {}x{}",
                self.width, self.height, level.width, level.height
            )));
        }
        if self.num_goals != persona.goals.len() {
            return Err(AgentError::Incompatible(format!(
                "trained for {} goals, persona has {}",
                self.num_goals,
                persona.goals.len()
            )));
        }
        Ok(())
    }

    pub fn features(&self, level: &LevelSpec, state: &GameState, goal: GoalCursor) -> Vec<f64> {
        let mut x = render(level, state, 1).to_unit_floats();
        let mut facing = [0.0; 4];
        facing[state.avatar_facing.index()] = 1.0;
        x.extend_from_slice(&facing);
        let mut cursor = vec![0.0; self.num_goals];
        cursor[goal.cursor.min(self.num_goals - 1)] = 1.0;
        x.extend(cursor);
        x.push(if goal.coactive { 1.0 } else { 0.0 });
        x
    }

    pub fn action_probs(&self, features: &[f64]) -> Vec<f64> {
        softmax(&self.actor.forward(features))
    }

    pub fn value(&self, features: &[f64]) -> f64 {
        self.critic.forward(features)[0]
    }

    /// Most likely action, lowest index on ties.
    pub fn mode_action(&self, features: &[f64]) -> Action {
        Action::from_index(argmax(&self.actor.forward(features))).unwrap()
    }
}

/// One transition ready for the surrogate loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub action: Action,
    pub log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Generalized advantage estimates and value targets. `dones[t]` marks an
/// episode ending after step `t`; `last_value` bootstraps the unfinished tail.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "rollout columns differ in length");
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

pub struct PpoOptimizer {
    actor: Adam,
    critic: Adam,
}

impl PpoOptimizer {
    pub fn new(policy: &PpoPolicy, lr: f64) -> Self {
        Self {
            actor: Adam::new(lr, policy.actor.num_params()),
            critic: Adam::new(lr, policy.critic.num_params()),
        }
    }
}

/// Averages over all minibatch updates of one call to [`ppo_update`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Mean gradient norm before clipping.
    pub grad_norm: f64,
    /// Largest gradient norm actually applied.
    pub max_applied_norm: f64,
    pub minibatches: usize,
}

#[derive(Default)]
struct Partial {
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    kl: f64,
    clipped: f64,
}

fn chunk_grads(policy: &PpoPolicy, chunk: &[&Sample], cfg: &AgentConfig, scale: f64) -> (Vec<f64>, Vec<f64>, Partial) {
    let mut ga = vec![0.0; policy.actor.num_params()];
    let mut gc = vec![0.0; policy.critic.num_params()];
    let mut part = Partial::default();
    let eps = cfg.clipping_param;
    for s in chunk {
        let trace = policy.actor.forward_trace(&s.features);
        let logp = log_softmax(trace.output());
        let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let a = s.action.index();
        let ratio = (logp[a] - s.log_prob).exp();
        let adv = s.advantage;
        let surrogate = (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv);
        let clipped = (adv >= 0.0 && ratio > 1.0 + eps) || (adv < 0.0 && ratio < 1.0 - eps);
        // d surrogate / d log pi(a)
        let g_logp = if clipped { 0.0 } else { ratio * adv };
        let entropy: f64 = -p.iter().zip(&logp).map(|(pi, li)| pi * li).sum::<f64>();
        let grad_logits: Vec<f64> = (0..Action::COUNT)
            .map(|j| {
                let onehot = if j == a { 1.0 } else { 0.0 };
                scale * (-g_logp * (onehot - p[j]) + cfg.entropy_coeff * p[j] * (logp[j] + entropy))
            })
            .collect();
        policy.actor.backward(&trace, &grad_logits, &mut ga);

        let trace = policy.critic.forward_trace(&s.features);
        let v = trace.output()[0];
        policy.critic.backward(&trace, &[scale * cfg.vf_coeff * (v - s.ret)], &mut gc);

        part.policy_loss -= scale * surrogate;
        part.value_loss += scale * 0.5 * (v - s.ret).powi(2);
        part.entropy += scale * entropy;
        part.kl += scale * (s.log_prob - logp[a]);
        part.clipped += scale * if clipped { 1.0 } else { 0.0 };
    }
    (ga, gc, part)
}

/// Clipped-surrogate update over `num_epochs` passes of `num_minibatch`
/// shuffled minibatches. Advantages are normalized over the whole batch.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut PpoPolicy,
    optim: &mut PpoOptimizer,
    samples: &[Sample],
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<UpdateStats, AgentError> {
    if samples.len() < cfg.num_minibatch {
        return Err(AgentError::InvalidConfig(format!(
            "batch of {} is smaller than {} minibatches",
            samples.len(),
            cfg.num_minibatch
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
    let sd = (samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n).sqrt();
    let normalized: Vec<Sample> = samples
        .iter()
        .map(|s| Sample {
            advantage: (s.advantage - mean) / (sd + ADV_EPS),
            ..s.clone()
        })
        .collect();

    let mut stats = UpdateStats::default();
    let mut order: Vec<usize> = (0..normalized.len()).collect();
    for epoch in 0..cfg.num_epochs {
        order.shuffle(rng);
        let size = order.len().div_ceil(cfg.num_minibatch);
        for mb in order.chunks(size) {
            let batch: Vec<&Sample> = mb.iter().map(|&i| &normalized[i]).collect();
            let scale = 1.0 / batch.len() as f64;
            let parts: Vec<_> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|c| chunk_grads(policy, c, cfg, scale))
                .collect();
            let mut ga = vec![0.0; policy.actor.num_params()];
            let mut gc = vec![0.0; policy.critic.num_params()];
            let mut total = Partial::default();
            for (pa, pc, part) in parts {
                ga.iter_mut().zip(&pa).for_each(|(g, v)| *g += v);
                gc.iter_mut().zip(&pc).for_each(|(g, v)| *g += v);
                total.policy_loss += part.policy_loss;
                total.value_loss += part.value_loss;
                total.entropy += part.entropy;
                total.kl += part.kl;
                total.clipped += part.clipped;
            }
            let loss = total.policy_loss + cfg.vf_coeff * total.value_loss - cfg.entropy_coeff * total.entropy;
            if !loss.is_finite() || !ga.iter().chain(&gc).all(|g| g.is_finite()) {
                return Err(AgentError::Diverged(format!("non-finite PPO loss in epoch {epoch}")));
            }
            let norm = clip_grad_norm(&mut [&mut ga, &mut gc], cfg.max_grad_norm);
            let applied = (l2_norm(&ga).powi(2) + l2_norm(&gc).powi(2)).sqrt();
            optim.actor.step(policy.actor.params_mut(), &ga);
            optim.critic.step(policy.critic.params_mut(), &gc);

            stats.policy_loss += total.policy_loss;
            stats.value_loss += total.value_loss;
            stats.entropy += total.entropy;
            stats.approx_kl += total.kl;
            stats.clip_fraction += total.clipped;
            stats.grad_norm += norm;
            stats.max_applied_norm = stats.max_applied_norm.max(applied);
            stats.minibatches += 1;
        }
    }
    let k = stats.minibatches.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_fraction /= k;
    stats.grad_norm /= k;
    Ok(stats)
}

struct StepData {
    features: Vec<f64>,
    action: Action,
    log_prob: f64,
    value: f64,
    env_reward: f64,
    apf_feedback: f64,
    done: bool,
    frames: Option<(Observation, Observation)>,
    finished: Option<Trajectory>,
}

struct Actor<'a> {
    env: PersonaEnv<'a>,
    rng: ChaCha8Rng,
    base_seed: u64,
    episode: u64,
    bonus_total: f64,
    apf_total: f64,
}

fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

impl Actor<'_> {
    fn rollout(
        &mut self,
        policy: &PpoPolicy,
        horizon: usize,
        level_name: &str,
        with_frames: bool,
    ) -> Result<(Vec<StepData>, f64), AgentError> {
        let level = self.env.level();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let features = policy.features(level, self.env.state(), self.env.goal_cursor());
            let logits = policy.actor.forward(&features);
            let logp = log_softmax(&logits);
            let probs = softmax(&logits);
            let a = sample_action(&probs, &mut self.rng);
            let action = Action::from_index(a).unwrap();
            let value = policy.value(&features);
            let before = with_frames.then(|| self.env.frame());
            let step = self.env.step(action)?;
            let frames = before.map(|b| (b, self.env.frame()));
            let finished = step.done.then(|| self.env.trajectory(level_name));
            out.push(StepData {
                features,
                action,
                log_prob: logp[a],
                value,
                env_reward: step.env_reward,
                apf_feedback: step.apf_feedback,
                done: step.done,
                frames,
                finished,
            });
            if step.done {
                self.episode += 1;
                self.env.reset(episode_seed(self.base_seed, self.episode));
            }
        }
        let last = policy.value(&policy.features(level, self.env.state(), self.env.goal_cursor()));
        Ok((out, last))
    }
}

pub(crate) fn train_ppo(
    cfg: &AgentConfig,
    level: &LevelSpec,
    level_name: &str,
    persona: &DevelopingPersona,
    stack: &RewardStack,
    seed: u64,
) -> Result<(PpoPolicy, TrainingLog), AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = PpoPolicy::new(level, persona, &cfg.hidden, &mut rng);
    let mut optim = PpoOptimizer::new(&policy, cfg.learning_rate());
    let mut explorer = Explorer::new(stack.exploration, seed);
    let with_frames = explorer.needs_frames();
    let mut actors: Vec<Actor> = (0..cfg.num_actors)
        .map(|i| {
            let base_seed = episode_seed(seed, u64::MAX - i as u64);
            let mut env = PersonaEnv::new(level, persona.clone(), stack.apf);
            env.reset(episode_seed(base_seed, 0));
            Actor {
                env,
                rng: ChaCha8Rng::seed_from_u64(base_seed),
                base_seed,
                episode: 0,
                bonus_total: 0.0,
                apf_total: 0.0,
            }
        })
        .collect();

    let mut log = TrainingLog::default();
    let mut steps = 0u64;
    while steps < cfg.timesteps {
        let rollouts: Vec<_> = actors
            .par_iter_mut()
            .map(|actor| actor.rollout(&policy, cfg.horizon, level_name, with_frames))
            .collect::<Result<_, _>>()?;
        steps += (cfg.horizon * cfg.num_actors) as u64;

        let mut samples = Vec::with_capacity(cfg.horizon * cfg.num_actors);
        for (actor, (data, last_value)) in actors.iter_mut().zip(rollouts) {
            let mut rewards = Vec::with_capacity(data.len());
            for d in &data {
                let bonus = match &d.frames {
                    Some((f, n)) => explorer.bonus(f, d.action, n)?,
                    None => 0.0,
                };
                let r = RewardStack::compose(d.env_reward, bonus, d.apf_feedback);
                if !r.is_finite() {
                    return Err(AgentError::Diverged(format!("non-finite reward after {steps} steps")));
                }
                rewards.push(r);
                actor.bonus_total += bonus;
                actor.apf_total += d.apf_feedback;
                if let Some(traj) = &d.finished {
                    log.push(EpisodeLog::from_trajectory(
                        log.len() as u64,
                        traj,
                        actor.bonus_total,
                        actor.apf_total,
                        cfg.discount,
                    ));
                    actor.bonus_total = 0.0;
                    actor.apf_total = 0.0;
                }
            }
            let values: Vec<f64> = data.iter().map(|d| d.value).collect();
            let dones: Vec<bool> = data.iter().map(|d| d.done).collect();
            let (adv, ret) = gae(&rewards, &values, &dones, last_value, cfg.discount, cfg.gae_lambda);
            for ((d, a), r) in data.into_iter().zip(adv).zip(ret) {
                samples.push(Sample {
                    features: d.features,
                    action: d.action,
                    log_prob: d.log_prob,
                    advantage: a,
                    ret: r,
                });
            }
        }
        let stats = ppo_update(&mut policy, &mut optim, &samples, cfg, &mut rng)?;
        log::debug!(
            "ppo step {steps}: policy {:.4} value {:.4} entropy {:.3} kl {:.4}",
            stats.policy_loss,
            stats.value_loss,
            stats.entropy,
            stats.approx_kl
        );
    }
    Ok((policy, log))
}
