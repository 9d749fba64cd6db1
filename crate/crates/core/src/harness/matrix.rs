use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::PersonaEnv;
use crate::apf::{train_apf, ApfConfig, ApfModulator, TrajectoryMask};
use crate::persona::DevelopingPersona;
use crate::sim::render::DEFAULT_BLOCK;
use crate::sim::LevelSpec;
use crate::trajectory::{path_frames, ReplayError, Trajectory};

use super::HarnessError;

/// A trajectory's returns recomputed under a persona and optional modulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescored {
    /// Discounted persona reward.
    pub env_return: f64,
    /// Discounted persona reward plus capped APF feedback.
    pub modulated_return: f64,
    /// Undiscounted capped APF feedback.
    pub apf_total: f64,
}

/// Replays the recorded actions under `persona` (fresh cap ledger) and sums
/// discounted rewards. Scripted paths carry no persona rewards, so this is how
/// they get scored.
pub fn rescore(
    level: &LevelSpec,
    traj: &Trajectory,
    persona: &DevelopingPersona,
    apf: Option<&ApfModulator>,
    gamma: f64,
) -> Result<Rescored, HarnessError> {
    let hash = level.content_hash();
    if hash != traj.level_hash {
        return Err(ReplayError::LevelMismatch {
            recorded: traj.level_hash.clone(),
            given: hash,
        }
        .into());
    }
    let mut env = PersonaEnv::new(level, persona.clone(), apf);
    env.reset(traj.seed);
    let mut out = Rescored {
        env_return: 0.0,
        modulated_return: 0.0,
        apf_total: 0.0,
    };
    let mut g = 1.0;
    for (i, rec) in traj.steps.iter().enumerate() {
        if env.is_done() {
            return Err(ReplayError::Divergence {
                step: i,
                detail: "episode ended before the recorded actions ran out".into(),
            }
            .into());
        }
        let o = env.step(rec.action)?;
        if o.events != rec.events || env.state().avatar_pos != rec.cell {
            return Err(ReplayError::Divergence {
                step: i,
                detail: format!(
                    "got events {} at {}, recorded {} at {}",
                    o.events,
                    env.state().avatar_pos,
                    rec.events,
                    rec.cell
                ),
            }
            .into());
        }
        out.env_return += g * o.env_reward;
        out.modulated_return += g * (o.env_reward + o.apf_feedback);
        out.apf_total += o.apf_feedback;
        g *= gamma;
    }
    Ok(out)
}

/// Discounted returns of every catalog path: env-only in `baseline`, and under
/// the modulator trained on path `i` in `rows[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnMatrix {
    pub gamma: f64,
    pub baseline: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl ReturnMatrix {
    pub fn len(&self) -> usize {
        self.baseline.len()
    }

    pub fn is_empty(&self) -> bool {
        self.baseline.is_empty()
    }

    /// How much training on path `i` lowers its own return.
    pub fn diagonal_drop(&self, i: usize) -> f64 {
        self.baseline[i] - self.rows[i][i]
    }

    /// How much the modulator trained on path `i` raises path `j`.
    pub fn increase(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j] - self.baseline[j]
    }
}

impl std::fmt::Display for ReturnMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:<10}", "trained")?;
        for j in 0..self.len() {
            write!(f, " {:>8}", format!("path {}", j + 1))?;
        }
        writeln!(f)?;
        write!(f, "{:<10}", "none")?;
        for v in &self.baseline {
            write!(f, " {v:>8.3}")?;
        }
        writeln!(f)?;
        for (i, row) in self.rows.iter().enumerate() {
            write!(f, "{:<10}", format!("path {}", i + 1))?;
            for v in row {
                write!(f, " {v:>8.3}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// One modulator per path, each trained on that path alone.
pub fn train_path_apfs(
    level: &LevelSpec,
    paths: &[Trajectory],
    config: &ApfConfig,
) -> Result<Vec<ApfModulator>, HarnessError> {
    paths
        .par_iter()
        .map(|p| {
            let frames = path_frames(level, p, DEFAULT_BLOCK)?;
            Ok(train_apf(config, &[frames], &[TrajectoryMask::none()])?)
        })
        .collect()
}

/// Trains a modulator per path with `config` and scores every path under each.
pub fn return_matrix(
    level: &LevelSpec,
    persona: &DevelopingPersona,
    paths: &[Trajectory],
    config: &ApfConfig,
    gamma: f64,
) -> Result<ReturnMatrix, HarnessError> {
    let apfs = train_path_apfs(level, paths, config)?;
    return_matrix_with(level, persona, paths, &apfs, gamma)
}

/// Scores every path under each given modulator; `modulators[i]` is taken to
/// be the one trained on `paths[i]`.
pub fn return_matrix_with(
    level: &LevelSpec,
    persona: &DevelopingPersona,
    paths: &[Trajectory],
    modulators: &[ApfModulator],
    gamma: f64,
) -> Result<ReturnMatrix, HarnessError> {
    if paths.is_empty() {
        return Err(HarnessError::Empty("no paths to score".into()));
    }
    if modulators.len() != paths.len() {
        return Err(HarnessError::InvalidArgument(format!(
            "{} modulators for {} paths",
            modulators.len(),
            paths.len()
        )));
    }
    let score = |apf: Option<&ApfModulator>| -> Result<Vec<f64>, HarnessError> {
        paths
            .iter()
            .map(|p| Ok(rescore(level, p, persona, apf, gamma)?.modulated_return))
            .collect()
    };
    let baseline = score(None)?;
    let rows = modulators
        .par_iter()
        .map(|m| score(Some(m)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReturnMatrix { gamma, baseline, rows })
}

/// Groups paths that penalize each other: `i` and `j` share a class when the
/// modulator of each lowers the other's return by more than `margin`.
pub fn equivalence_classes(matrix: &ReturnMatrix, margin: f64) -> Vec<Vec<usize>> {
    let n = matrix.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        parent[i] = r;
        r
    }
    let penalizes = |i: usize, j: usize| matrix.increase(i, j) < -margin;
    for i in 0..n {
        for j in i + 1..n {
            if penalizes(i, j) && penalizes(j, i) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut index = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if index[r] == usize::MAX {
            index[r] = classes.len();
            classes.push(Vec::new());
        }
        classes[index[r]].push(i);
    }
    classes
}
