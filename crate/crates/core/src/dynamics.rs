//! Curiosity-style dynamics models over frozen frame features.
//!
//! A [`FeatureEncoder`] maps frames to feature vectors and never changes after
//! construction. The forward model predicts next-frame features from the
//! current features and the action; the inverse model predicts the action from
//! both feature vectors. The forward model's squared error is the transition
//! novelty signal.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{log_softmax, softmax, Activation, Mlp, SgdMomentum};
use crate::sim::{Action, Observation};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_FEATURE_DIM: usize = 64;
pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("frame is {found:?}, encoder expects {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("no transitions to train on")]
    EmptyTransitions,
    #[error("invalid encoder: {0}")]
    InvalidEncoder(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("model serialization: {0}")]
    Serialization(#[from] serde_json::Error),
}

/// One observed `(frame, action, next frame)` step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub frame: Observation,
    pub action: Action,
    pub next_frame: Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncoderKind {
    /// Linear projection with seeded Gaussian weights.
    FixedRandomProjection { seed: u64 },
    /// Area-averaged downsample to `width x height`, pixels scaled to `[0, 1]`.
    IdentityDownsample { width: usize, height: usize },
    /// Linear weights supplied by another model.
    Transferred { source: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    kind: EncoderKind,
    input_width: usize,
    input_height: usize,
    output_dim: usize,
    /// Row-major `output_dim x (input_width * input_height)`; empty for downsampling.
    weights: Vec<f64>,
}

impl FeatureEncoder {
    pub fn random_projection(input_width: usize, input_height: usize, output_dim: usize, seed: u64) -> Self {
        let inputs = input_width * input_height;
        let normal = Normal::new(0.0, (1.0 / inputs as f64).sqrt()).expect("finite std");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            kind: EncoderKind::FixedRandomProjection { seed },
            input_width,
            input_height,
            output_dim,
            weights: (0..inputs * output_dim).map(|_| normal.sample(&mut rng)).collect(),
        }
    }

    pub fn identity_downsample(input_width: usize, input_height: usize, width: usize, height: usize) -> Self {
        Self {
            kind: EncoderKind::IdentityDownsample { width, height },
            input_width,
            input_height,
            output_dim: width * height,
            weights: Vec::new(),
        }
    }

    pub fn transferred(
        input_width: usize,
        input_height: usize,
        output_dim: usize,
        weights: Vec<f64>,
        source: impl Into<String>,
    ) -> Result<Self, DynamicsError> {
        if weights.len() != input_width * input_height * output_dim {
            return Err(DynamicsError::InvalidEncoder(format!(
                "expected {} weights, got {}",
                input_width * input_height * output_dim,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(DynamicsError::InvalidEncoder("non-finite weight".into()));
        }
        Ok(Self {
            kind: EncoderKind::Transferred { source: source.into() },
            input_width,
            input_height,
            output_dim,
            weights,
        })
    }

    pub fn kind(&self) -> &EncoderKind {
        &self.kind
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.input_width, self.input_height)
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn encode(&self, frame: &Observation) -> Result<Vec<f64>, DynamicsError> {
        if frame.dims() != self.input_dims() {
            return Err(DynamicsError::DimensionMismatch {
                expected: self.input_dims(),
                found: frame.dims(),
            });
        }
        Ok(match self.kind {
            EncoderKind::IdentityDownsample { width, height } => frame.resize(width, height).to_unit_floats(),
            _ => {
                let x = frame.to_unit_floats();
                self.weights
                    .chunks(x.len())
                    .map(|row| row.iter().zip(&x).map(|(w, v)| w * v).sum())
                    .collect()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcmTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub forward_weight: f64,
    pub inverse_weight: f64,
    pub seed: u64,
}

impl Default for IcmTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 16,
            forward_weight: 0.8,
            inverse_weight: 0.2,
            seed: 0,
        }
    }
}

/// Transition with both frames already encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTransition {
    pub features: Vec<f64>,
    pub action: Action,
    pub next_features: Vec<f64>,
}

/// Batch-mean losses of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcmLoss {
    /// Mean squared feature error, `||predicted - actual||^2`.
    pub forward: f64,
    /// Mean action cross-entropy.
    pub inverse: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Icm {
    encoder: FeatureEncoder,
    pub forward: Mlp,
    pub inverse: Mlp,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct IcmFile {
    version: u32,
    model: Icm,
}

fn forward_input(features: &[f64], action: Action) -> Vec<f64> {
    let mut x = Vec::with_capacity(features.len() + Action::COUNT);
    x.extend_from_slice(features);
    x.extend((0..Action::COUNT).map(|i| if i == action.index() { 1.0 } else { 0.0 }));
    x
}

fn inverse_input(features: &[f64], next_features: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(2 * features.len());
    x.extend_from_slice(features);
    x.extend_from_slice(next_features);
    x
}

impl Icm {
    pub fn new(encoder: FeatureEncoder, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = encoder.output_dim();
        let forward = Mlp::new(&[d + Action::COUNT, hidden, d], Activation::Tanh, 1.0, &mut rng);
        let inverse = Mlp::new(&[2 * d, hidden, Action::COUNT], Activation::Tanh, 1.0, &mut rng);
        Self {
            encoder,
            forward,
            inverse,
            seed,
        }
    }

    pub fn encoder(&self) -> &FeatureEncoder {
        &self.encoder
    }

    pub fn encode_transition(&self, t: &Transition) -> Result<EncodedTransition, DynamicsError> {
        Ok(EncodedTransition {
            features: self.encoder.encode(&t.frame)?,
            action: t.action,
            next_features: self.encoder.encode(&t.next_frame)?,
        })
    }

    pub fn predict_next(&self, features: &[f64], action: Action) -> Vec<f64> {
        self.forward.forward(&forward_input(features, action))
    }

    pub fn action_probs(&self, features: &[f64], next_features: &[f64]) -> Vec<f64> {
        softmax(&self.inverse.forward(&inverse_input(features, next_features)))
    }

    pub fn encoded_error(&self, t: &EncodedTransition) -> f64 {
        self.predict_next(&t.features, t.action)
            .iter()
            .zip(&t.next_features)
            .map(|(p, y)| (p - y).powi(2))
            .sum()
    }

    /// Squared feature-space error of the forward model on one transition.
    pub fn prediction_error(&self, frame: &Observation, action: Action, next_frame: &Observation) -> Result<f64, DynamicsError> {
        let t = EncodedTransition {
            features: self.encoder.encode(frame)?,
            action,
            next_features: self.encoder.encode(next_frame)?,
        };
        Ok(self.encoded_error(&t))
    }

    /// Mean prediction error over `transitions`.
    pub fn q_mean(&self, transitions: &[Transition]) -> Result<f64, DynamicsError> {
        if transitions.is_empty() {
            return Err(DynamicsError::EmptyTransitions);
        }
        let mut sum = 0.0;
        for t in transitions {
            sum += self.prediction_error(&t.frame, t.action, &t.next_frame)?;
        }
        Ok(sum / transitions.len() as f64)
    }

    /// Batch-mean losses, plus gradients with respect to the forward and
    /// inverse parameters when `grads` is given.
    pub fn loss(
        &self,
        batch: &[EncodedTransition],
        forward_weight: f64,
        inverse_weight: f64,
        mut grads: Option<(&mut [f64], &mut [f64])>,
    ) -> IcmLoss {
        let n = batch.len().max(1) as f64;
        let (mut fwd, mut inv) = (0.0, 0.0);
        for t in batch {
            let trace = self.forward.forward_trace(&forward_input(&t.features, t.action));
            let diff: Vec<f64> = trace.output().iter().zip(&t.next_features).map(|(p, y)| p - y).collect();
            fwd += diff.iter().map(|d| d * d).sum::<f64>();

            let itrace = self.inverse.forward_trace(&inverse_input(&t.features, &t.next_features));
            let logp = log_softmax(itrace.output());
            inv -= logp[t.action.index()];

            if let Some((gf, gi)) = grads.as_mut() {
                let g_out: Vec<f64> = diff.iter().map(|d| forward_weight * 2.0 * d / n).collect();
                self.forward.backward(&trace, &g_out, gf);
                let g_logits: Vec<f64> = logp
                    .iter()
                    .enumerate()
                    .map(|(i, lp)| {
                        let target = if i == t.action.index() { 1.0 } else { 0.0 };
                        inverse_weight * (lp.exp() - target) / n
                    })
                    .collect();
                self.inverse.backward(&itrace, &g_logits, gi);
            }
        }
        let (forward, inverse) = (fwd / n, inv / n);
        IcmLoss {
            forward,
            inverse,
            total: forward_weight * forward + inverse_weight * inverse,
        }
    }

    /// Minibatch SGD on the forward and inverse models; the encoder is untouched.
    /// Returns the mean training loss of every epoch.
    pub fn train(&mut self, transitions: &[Transition], config: &IcmTrainConfig) -> Result<Vec<IcmLoss>, DynamicsError> {
        if transitions.is_empty() {
            return Err(DynamicsError::EmptyTransitions);
        }
        let encoded = transitions
            .iter()
            .map(|t| self.encode_transition(t))
            .collect::<Result<Vec<_>, _>>()?;
        self.train_encoded(&encoded, config)
    }

    pub fn train_encoded(&mut self, encoded: &[EncodedTransition], config: &IcmTrainConfig) -> Result<Vec<IcmLoss>, DynamicsError> {
        if encoded.is_empty() {
            return Err(DynamicsError::EmptyTransitions);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut opt_f = SgdMomentum::new(config.learning_rate, config.momentum, self.forward.num_params());
        let mut opt_i = SgdMomentum::new(config.learning_rate, config.momentum, self.inverse.num_params());
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        let batch_size = config.batch_size.max(1);
        let mut curve = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let (mut f_sum, mut i_sum, mut t_sum) = (0.0, 0.0, 0.0);
            for chunk in order.chunks(batch_size) {
                let batch: Vec<EncodedTransition> = chunk.iter().map(|&i| encoded[i].clone()).collect();
                let mut gf = vec![0.0; self.forward.num_params()];
                let mut gi = vec![0.0; self.inverse.num_params()];
                let loss = self.loss(&batch, config.forward_weight, config.inverse_weight, Some((&mut gf, &mut gi)));
                if !loss.total.is_finite() {
                    return Err(DynamicsError::Diverged { epoch, loss: loss.total });
                }
                let w = batch.len() as f64;
                f_sum += loss.forward * w;
                i_sum += loss.inverse * w;
                t_sum += loss.total * w;
                opt_f.step(self.forward.params_mut(), &gf);
                opt_i.step(self.inverse.params_mut(), &gi);
            }
            let n = encoded.len() as f64;
            curve.push(IcmLoss {
                forward: f_sum / n,
                inverse: i_sum / n,
                total: t_sum / n,
            });
        }
        Ok(curve)
    }

    pub fn to_json(&self) -> Result<String, DynamicsError> {
        Ok(serde_json::to_string(&IcmFile {
            version: FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self, DynamicsError> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.version != FORMAT_VERSION {
            return Err(DynamicsError::Version(header.version));
        }
        Ok(serde_json::from_str::<IcmFile>(text)?.model)
    }
}

/// Exploration bonus proportional to the raw prediction error.
pub fn curiosity_bonus(q: f64, beta: f64) -> f64 {
    beta * q
}
