use serde::{Deserialize, Serialize};

use crate::agent::{evaluate, train, AgentConfig, EvalOptions, RewardStack};
use crate::apf::{train_apf, ApfConfig, TrajectoryMask};
use crate::persona::DevelopingPersona;
use crate::sim::render::DEFAULT_BLOCK;
use crate::sim::{LevelSpec, TerminationCause};
use crate::trajectory::{path_frames, Trajectory};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryRound {
    pub round: usize,
    /// Greedy episode of the agent trained this round.
    pub trajectory: Trajectory,
    /// Earlier round with the same visited-cell set, if any.
    pub repeat_of: Option<usize>,
    /// The episode did not end at a door (death, timeout or persona stop).
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    pub rounds: Vec<DiscoveryRound>,
}

impl Discovery {
    /// Paths of the rounds that neither repeat an earlier one nor are degenerate.
    pub fn distinct_paths(&self) -> Vec<&Trajectory> {
        self.rounds
            .iter()
            .filter(|r| r.repeat_of.is_none() && !r.degenerate)
            .map(|r| &r.trajectory)
            .collect()
    }

    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.rounds.iter().map(|r| r.trajectory.clone()).collect()
    }
}

/// Round 0 trains without an APF; round `k` trains an APF on the round
/// `k - 1` path and retrains from scratch under it. Every round uses the same
/// seed. Stops after `max_rounds` rounds or at the first round whose visited
/// cells repeat an earlier round.
pub fn discover_alternatives(
    level: &LevelSpec,
    level_name: &str,
    persona: &DevelopingPersona,
    agent: &AgentConfig,
    apf_config: &ApfConfig,
    max_rounds: usize,
    seed: u64,
) -> Result<Discovery, HarnessError> {
    if max_rounds == 0 {
        return Err(HarnessError::InvalidArgument("max_rounds must be at least 1".into()));
    }
    apf_config.validate()?;
    let exploration = RewardStack::from_config(agent).exploration;
    let mut rounds: Vec<DiscoveryRound> = Vec::new();
    for round in 0..max_rounds {
        let apf = match rounds.last() {
            Some(prev) => {
                let frames = path_frames(level, &prev.trajectory, DEFAULT_BLOCK)?;
                Some(train_apf(apf_config, &[frames], &[TrajectoryMask::none()])?)
            }
            None => None,
        };
        let stack = RewardStack {
            exploration,
            apf: apf.as_ref(),
        };
        let trained = train(agent, level, level_name, persona, &stack, seed)?;
        // evaluate under the same modulator so budget-aware policies see the
        // ledger they were trained with
        let eval = evaluate(&trained.policy, level, level_name, persona, apf.as_ref(), seed, &EvalOptions::default())?;
        let trajectory = eval.trajectories.into_iter().next().expect("one evaluation episode");
        let cells = trajectory.visited_cells();
        let repeat_of = rounds.iter().position(|r| r.trajectory.visited_cells() == cells);
        let degenerate = trajectory.termination != TerminationCause::ExitDoor;
        log::info!(
            "round {round}: {} steps, {:?}{}",
            trajectory.len(),
            trajectory.termination,
            repeat_of.map(|r| format!(", repeats round {r}")).unwrap_or_default()
        );
        rounds.push(DiscoveryRound {
            round,
            trajectory,
            repeat_of,
            degenerate,
        });
        if repeat_of.is_some() {
            break;
        }
    }
    Ok(Discovery { rounds })
}
