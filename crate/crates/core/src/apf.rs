//! Alternative path finder: a reward modulator trained on earlier paths that
//! penalizes revisiting familiar frames or transitions and rewards novel ones,
//! within per-episode budgets.
//!
//! Two backends measure familiarity. The density backend trains a pixel
//! density model on the recorded frames; its boundary is the smallest
//! recoding probability among them. The dynamics backend trains forward and
//! inverse models on the recorded transitions; its boundary is their mean
//! prediction error.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{ContextFilter, DensityConfig, DensityError, DensityModel, Estimator};
use crate::dynamics::{DynamicsError, FeatureEncoder, Icm, IcmTrainConfig, Transition, DEFAULT_FEATURE_DIM, DEFAULT_HIDDEN};
use crate::io::write_atomic;
use crate::sim::{Action, Observation};

pub const BUNDLE_VERSION: u32 = 1;
/// Prediction errors are floored here before taking logarithms.
pub const ERROR_FLOOR: f64 = 1e-12;
pub const DEFAULT_FRAME_SIDE: usize = 42;

#[derive(Debug, Error)]
pub enum ApfError {
    #[error("no frames or transitions left to train on")]
    EmptyTrainingSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("path has {frames} frames for {actions} actions")]
    MalformedPath { frames: usize, actions: usize },
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("unsupported bundle version {0}")]
    Version(u32),
    #[error("bundle serialization: {0}")]
    Serialization(#[from] serde_json::Error),
    #[error("bundle io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApfBackend {
    Cts,
    Icm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtsSettings {
    pub filter: ContextFilter,
    pub estimator: Estimator,
}

impl Default for CtsSettings {
    fn default() -> Self {
        Self {
            filter: ContextFilter::l_shaped(),
            estimator: Estimator::ContextTreeSwitching,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcmSettings {
    pub feature_dim: usize,
    pub hidden: usize,
    pub encoder_seed: u64,
    pub train: IcmTrainConfig,
}

impl Default for IcmSettings {
    fn default() -> Self {
        Self {
            feature_dim: DEFAULT_FEATURE_DIM,
            hidden: DEFAULT_HIDDEN,
            encoder_seed: 0,
            train: IcmTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApfConfig {
    pub beta: f64,
    pub pos_cap: f64,
    pub neg_cap: f64,
    pub backend: ApfBackend,
    /// Frames are resized to `side x side` before training and queries; `None` keeps them as rendered.
    pub frame_side: Option<usize>,
    #[serde(default)]
    pub cts: CtsSettings,
    #[serde(default)]
    pub icm: IcmSettings,
}

impl ApfConfig {
    /// Density backend: `beta = 0.01`, caps `+0.4 / -0.4`.
    pub fn cts() -> Self {
        Self {
            beta: 0.01,
            pos_cap: 0.4,
            neg_cap: -0.4,
            backend: ApfBackend::Cts,
            frame_side: Some(DEFAULT_FRAME_SIDE),
            cts: CtsSettings::default(),
            icm: IcmSettings::default(),
        }
    }

    /// Dynamics backend: `beta = 0.01`, caps `+0.1 / -0.4`.
    pub fn icm() -> Self {
        Self {
            pos_cap: 0.1,
            backend: ApfBackend::Icm,
            ..Self::cts()
        }
    }

    /// A zero `beta` is accepted and turns the modulator into a pass-through.
    pub fn validate(&self) -> Result<(), ApfError> {
        let bad = |m: String| Err(ApfError::InvalidConfig(m));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta {} must be finite and non-negative", self.beta));
        }
        if !(self.pos_cap >= 0.0 && self.pos_cap.is_finite()) {
            return bad(format!("pos_cap {} must be finite and non-negative", self.pos_cap));
        }
        if !(self.neg_cap <= 0.0 && self.neg_cap.is_finite()) {
            return bad(format!("neg_cap {} must be finite and non-positive", self.neg_cap));
        }
        if self.frame_side == Some(0) {
            return bad("frame_side must be positive".into());
        }
        Ok(())
    }

    fn preprocess(&self, frame: &Observation) -> Observation {
        match self.frame_side {
            Some(side) if frame.dims() != (side, side) => frame.resize(side, side),
            _ => frame.clone(),
        }
    }
}

/// Density-backend feedback from log recoding probabilities: a penalty when
/// the frame is more probable than the boundary, a reward when less.
pub fn cts_feedback(log_p_new: f64, log_p_min: f64, beta: f64) -> f64 {
    let d = log_p_new - log_p_min;
    if d > 0.0 {
        beta / (1.0 + d) - beta
    } else {
        beta - beta / (1.0 - d)
    }
}

/// Dynamics-backend feedback: a reward when the prediction error exceeds the
/// boundary, a penalty when it is below.
pub fn icm_feedback(q_new: f64, q_mean: f64, beta: f64) -> f64 {
    let d = q_new.max(ERROR_FLOOR).ln() - q_mean.max(ERROR_FLOOR).ln();
    if d > 0.0 {
        beta - beta / (1.0 + d)
    } else {
        beta / (1.0 - d) - beta
    }
}

/// Remaining per-episode budget for positive and negative feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapLedger {
    pub pos_remaining: f64,
    pub neg_remaining: f64,
}

impl CapLedger {
    pub fn new(pos_cap: f64, neg_cap: f64) -> Self {
        Self {
            pos_remaining: pos_cap,
            neg_remaining: neg_cap,
        }
    }

    /// Clamps `raw` to the remaining budget of its sign and spends it.
    pub fn apply(&mut self, raw: f64) -> f64 {
        if raw > 0.0 {
            let emitted = raw.min(self.pos_remaining);
            self.pos_remaining -= emitted;
            emitted
        } else if raw < 0.0 {
            let emitted = raw.max(self.neg_remaining);
            self.neg_remaining -= emitted;
            emitted
        } else {
            0.0
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.pos_remaining <= 0.0 && self.neg_remaining >= 0.0
    }
}

/// Half-open index ranges excluded from training: frame indices for the
/// density backend, transition indices for the dynamics backend.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryMask {
    ranges: Vec<(usize, usize)>,
}

impl TrajectoryMask {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(mut ranges: Vec<(usize, usize)>) -> Result<Self, ApfError> {
        ranges.sort_unstable();
        for &(s, e) in &ranges {
            if s >= e {
                return Err(ApfError::InvalidMask(format!("empty or reversed range [{s}, {e})")));
            }
        }
        for w in ranges.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(ApfError::InvalidMask(format!(
                    "ranges [{}, {}) and [{}, {}) overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(Self { ranges })
    }

    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    pub fn excludes(&self, index: usize) -> bool {
        self.ranges.iter().any(|&(s, e)| (s..e).contains(&index))
    }

    fn check_bounds(&self, len: usize) -> Result<(), ApfError> {
        match self.ranges.last() {
            Some(&(_, e)) if e > len => Err(ApfError::InvalidMask(format!("range end {e} exceeds length {len}"))),
            _ => Ok(()),
        }
    }
}

/// Frames `f_0..f_n` and the `n` actions between them.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFrames {
    pub frames: Vec<Observation>,
    pub actions: Vec<Action>,
}

impl PathFrames {
    pub fn new(frames: Vec<Observation>, actions: Vec<Action>) -> Result<Self, ApfError> {
        if frames.len() != actions.len() + 1 {
            return Err(ApfError::MalformedPath {
                frames: frames.len(),
                actions: actions.len(),
            });
        }
        Ok(Self { frames, actions })
    }

    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        self.actions.iter().enumerate().map(|(i, &a)| Transition {
            frame: self.frames[i].clone(),
            action: a,
            next_frame: self.frames[i + 1].clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ApfModel {
    Cts { model: DensityModel, log_p_min: f64 },
    Icm { icm: Icm, q_mean: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApfModulator {
    config: ApfConfig,
    model: ApfModel,
}

#[derive(Serialize, Deserialize)]
struct Bundle {
    version: u32,
    modulator: ApfModulator,
}

fn mask_for(masks: &[TrajectoryMask], i: usize) -> Option<&TrajectoryMask> {
    masks.get(i)
}

/// Trains a modulator on `paths`; `masks[i]` (if present) applies to `paths[i]`.
pub fn train_apf(config: &ApfConfig, paths: &[PathFrames], masks: &[TrajectoryMask]) -> Result<ApfModulator, ApfError> {
    train_apf_with_encoder(config, paths, masks, None)
}

/// As [`train_apf`], with a caller-supplied frozen encoder for the dynamics backend.
pub fn train_apf_with_encoder(
    config: &ApfConfig,
    paths: &[PathFrames],
    masks: &[TrajectoryMask],
    encoder: Option<FeatureEncoder>,
) -> Result<ApfModulator, ApfError> {
    config.validate()?;
    if masks.len() > paths.len() {
        return Err(ApfError::InvalidMask(format!("{} masks for {} paths", masks.len(), paths.len())));
    }
    for p in paths {
        if p.frames.len() != p.actions.len() + 1 {
            return Err(ApfError::MalformedPath {
                frames: p.frames.len(),
                actions: p.actions.len(),
            });
        }
    }
    let model = match config.backend {
        ApfBackend::Cts => {
            let mut frames = Vec::new();
            for (i, p) in paths.iter().enumerate() {
                let mask = mask_for(masks, i);
                if let Some(m) = mask {
                    m.check_bounds(p.frames.len())?;
                }
                frames.extend(
                    p.frames
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| !mask.is_some_and(|m| m.excludes(*j)))
                        .map(|(_, f)| config.preprocess(f)),
                );
            }
            let Some(first) = frames.first() else {
                return Err(ApfError::EmptyTrainingSet);
            };
            let (w, h) = first.dims();
            let mut model = DensityModel::new(
                DensityConfig::new(w, h, config.cts.filter.clone()).with_estimator(config.cts.estimator),
            )?;
            for f in &frames {
                model.update(f)?;
            }
            let mut log_p_min = f64::INFINITY;
            for f in &frames {
                log_p_min = log_p_min.min(model.log_prob(f)?);
            }
            ApfModel::Cts { model, log_p_min }
        }
        ApfBackend::Icm => {
            let mut transitions = Vec::new();
            for (i, p) in paths.iter().enumerate() {
                let mask = mask_for(masks, i);
                if let Some(m) = mask {
                    m.check_bounds(p.actions.len())?;
                }
                transitions.extend(
                    p.transitions()
                        .enumerate()
                        .filter(|(j, _)| !mask.is_some_and(|m| m.excludes(*j)))
                        .map(|(_, t)| Transition {
                            frame: config.preprocess(&t.frame),
                            action: t.action,
                            next_frame: config.preprocess(&t.next_frame),
                        }),
                );
            }
            let Some(first) = transitions.first() else {
                return Err(ApfError::EmptyTrainingSet);
            };
            let (w, h) = first.frame.dims();
            let encoder = encoder
                .unwrap_or_else(|| FeatureEncoder::random_projection(w, h, config.icm.feature_dim, config.icm.encoder_seed));
            let mut icm = Icm::new(encoder, config.icm.hidden, config.icm.train.seed);
            icm.train(&transitions, &config.icm.train)?;
            let q_mean = icm.q_mean(&transitions)?;
            ApfModel::Icm { icm, q_mean }
        }
    };
    Ok(ApfModulator {
        config: config.clone(),
        model,
    })
}

impl ApfModulator {
    pub fn config(&self) -> &ApfConfig {
        &self.config
    }

    pub fn model(&self) -> &ApfModel {
        &self.model
    }

    /// `log p_min` for the density backend, `q_mean` for the dynamics backend.
    pub fn boundary(&self) -> f64 {
        match &self.model {
            ApfModel::Cts { log_p_min, .. } => *log_p_min,
            ApfModel::Icm { q_mean, .. } => *q_mean,
        }
    }

    pub fn new_ledger(&self) -> CapLedger {
        CapLedger::new(self.config.pos_cap, self.config.neg_cap)
    }

    /// Uncapped feedback for the step `frame --action--> next_frame`. The
    /// density backend only looks at `next_frame`.
    pub fn raw_feedback(&self, frame: &Observation, action: Action, next_frame: &Observation) -> Result<f64, ApfError> {
        let beta = self.config.beta;
        match &self.model {
            ApfModel::Cts { model, log_p_min } => {
                let log_p = model.log_prob(&self.config.preprocess(next_frame))?;
                Ok(cts_feedback(log_p, *log_p_min, beta))
            }
            ApfModel::Icm { icm, q_mean } => {
                let q = icm.prediction_error(
                    &self.config.preprocess(frame),
                    action,
                    &self.config.preprocess(next_frame),
                )?;
                Ok(icm_feedback(q, *q_mean, beta))
            }
        }
    }

    /// `env_reward` plus the capped feedback; spends `ledger`.
    pub fn modulate(
        &self,
        ledger: &mut CapLedger,
        env_reward: f64,
        frame: &Observation,
        action: Action,
        next_frame: &Observation,
    ) -> Result<f64, ApfError> {
        let raw = self.raw_feedback(frame, action, next_frame)?;
        Ok(env_reward + ledger.apply(raw))
    }

    pub fn to_json(&self) -> Result<String, ApfError> {
        Ok(serde_json::to_string(&Bundle {
            version: BUNDLE_VERSION,
            modulator: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self, ApfError> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.version != BUNDLE_VERSION {
            return Err(ApfError::Version(header.version));
        }
        let bundle: Bundle = serde_json::from_str(text)?;
        bundle.modulator.config.validate()?;
        Ok(bundle.modulator)
    }

    pub fn save(&self, path: &Path) -> Result<(), ApfError> {
        write_atomic(path, self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ApfError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
