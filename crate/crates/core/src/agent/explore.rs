use crate::apf::DEFAULT_FRAME_SIDE;
use crate::density::{DensityConfig, DensityModel};
use crate::dynamics::{EncodedTransition, FeatureEncoder, Icm, DEFAULT_HIDDEN};
use crate::nn::SgdMomentum;
use crate::sim::{Action, Observation};

use super::config::FilterName;
use super::{AgentError, Exploration};

const CURIOSITY_LR: f64 = 1e-3;
const CURIOSITY_MOMENTUM: f64 = 0.9;

/// Online exploration bonus, trained as the agent plays.
pub(crate) enum Explorer {
    None,
    PseudoCount {
        model: Option<DensityModel>,
        beta: f64,
        filter: FilterName,
    },
    Curiosity {
        icm: Option<Box<(Icm, SgdMomentum, SgdMomentum)>>,
        beta: f64,
        features: usize,
        seed: u64,
    },
}

fn preprocess(frame: &Observation) -> Observation {
    frame.resize(DEFAULT_FRAME_SIDE, DEFAULT_FRAME_SIDE)
}

impl Explorer {
    pub fn new(exploration: Exploration, seed: u64) -> Self {
        match exploration {
            Exploration::None => Explorer::None,
            Exploration::PseudoCount { beta, filter } => Explorer::PseudoCount {
                model: None,
                beta,
                filter,
            },
            Exploration::Curiosity { beta, features } => Explorer::Curiosity {
                icm: None,
                beta,
                features,
                seed,
            },
        }
    }

    pub fn needs_frames(&self) -> bool {
        !matches!(self, Explorer::None)
    }

    /// Bonus for the step `frame --action--> next_frame`; trains the model on it.
    pub fn bonus(&mut self, frame: &Observation, action: Action, next_frame: &Observation) -> Result<f64, AgentError> {
        match self {
            Explorer::None => Ok(0.0),
            Explorer::PseudoCount { model, beta, filter } => {
                let next = preprocess(next_frame);
                if model.is_none() {
                    let (w, h) = next.dims();
                    *model = Some(DensityModel::new(DensityConfig::new(w, h, filter.filter()))?);
                }
                Ok(model.as_mut().unwrap().pseudo_count_bonus(&next, *beta)?)
            }
            Explorer::Curiosity {
                icm,
                beta,
                features,
                seed,
            } => {
                let (f, n) = (preprocess(frame), preprocess(next_frame));
                let parts = icm.get_or_insert_with(|| {
                    let (w, h) = f.dims();
                    let model = Icm::new(FeatureEncoder::random_projection(w, h, *features, *seed), DEFAULT_HIDDEN, *seed);
                    let of = SgdMomentum::new(CURIOSITY_LR, CURIOSITY_MOMENTUM, model.forward.num_params());
                    let oi = SgdMomentum::new(CURIOSITY_LR, CURIOSITY_MOMENTUM, model.inverse.num_params());
                    Box::new((model, of, oi))
                });
                let (model, opt_f, opt_i) = &mut **parts;
                let t = EncodedTransition {
                    features: model.encoder().encode(&f)?,
                    action,
                    next_features: model.encoder().encode(&n)?,
                };
                let q = model.encoded_error(&t);
                let mut gf = vec![0.0; model.forward.num_params()];
                let mut gi = vec![0.0; model.inverse.num_params()];
                model.loss(std::slice::from_ref(&t), 0.8, 0.2, Some((&mut gf, &mut gi)));
                opt_f.step(model.forward.params_mut(), &gf);
                opt_i.step(model.inverse.params_mut(), &gi);
                Ok(crate::dynamics::curiosity_bonus(q, *beta))
            }
        }
    }
}
