//! Per-pixel context-tree density model over 3-bit frames.
//!
//! Every pixel position owns a context tree. The context of a pixel is the
//! sequence of neighbour values picked out by a [`ContextFilter`]; node depth
//! `d` conditions on the first `d` of them. Each node carries a
//! Krichevsky-Trofimov style estimator with a `1/8` pseudo-count per symbol,
//!
//! ```text
//! p(x) = (n_x + 1/8) / (n + 1)
//! ```
//!
//! and, with [`Estimator::ContextTreeSwitching`], a pair of switching weights
//! that mix the node's own estimate with the prediction of the deeper child.
//! [`Estimator::LaplaceTable`] skips the mixing and predicts from the full
//! context only; it is the reference configuration.
//!
//! Per-pixel predictions are mixed in linear space; frame probabilities are
//! accumulated in log space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::render::GRAY_LEVELS;
use crate::sim::Observation;

const SYMBOLS: usize = GRAY_LEVELS as usize;
/// Context value used for neighbours outside the frame.
const OUT_OF_BOUNDS: usize = SYMBOLS;
const CONTEXT_SYMBOLS: usize = SYMBOLS + 1;
const PRIOR: f64 = 1.0 / SYMBOLS as f64;
const NO_CHILD: u32 = u32::MAX;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("frame is {found:?}, model expects {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid context filter: {0}")]
    InvalidFilter(String),
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("model serialization: {0}")]
    Serialization(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterShape {
    LShaped,
    PlusShaped,
    Custom,
}

/// Relative neighbour offsets `(dx, dy)`, most significant first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextFilter {
    pub shape: FilterShape,
    pub offsets: Vec<(i32, i32)>,
}

impl ContextFilter {
    /// Left, up and up-left neighbours.
    pub fn l_shaped() -> Self {
        Self {
            shape: FilterShape::LShaped,
            offsets: vec![(-1, 0), (0, -1), (-1, -1)],
        }
    }

    /// Causal half of a plus-shaped neighbourhood: left, up, up-left, up-right.
    pub fn plus_shaped() -> Self {
        Self {
            shape: FilterShape::PlusShaped,
            offsets: vec![(-1, 0), (0, -1), (-1, -1), (1, -1)],
        }
    }

    pub fn custom(offsets: Vec<(i32, i32)>) -> Result<Self, DensityError> {
        let filter = Self {
            shape: FilterShape::Custom,
            offsets,
        };
        filter.validate()?;
        Ok(filter)
    }

    /// True when every offset points at a pixel visited earlier in raster order.
    pub fn is_causal(&self) -> bool {
        self.offsets.iter().all(|&(dx, dy)| dy < 0 || (dy == 0 && dx < 0))
    }

    /// An empty filter is valid: every pixel is predicted without context.
    pub fn validate(&self) -> Result<(), DensityError> {
        if self.offsets.contains(&(0, 0)) {
            return Err(DensityError::InvalidFilter("filter includes the predicted pixel".into()));
        }
        if self.offsets.len() > 8 {
            return Err(DensityError::InvalidFilter("at most 8 offsets are supported".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Estimator {
    /// Context tree switching over all context depths.
    #[default]
    ContextTreeSwitching,
    /// Estimator of the full context only.
    LaplaceTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub width: usize,
    pub height: usize,
    pub filter: ContextFilter,
    pub estimator: Estimator,
}

impl DensityConfig {
    pub fn new(width: usize, height: usize, filter: ContextFilter) -> Self {
        Self {
            width,
            height,
            filter,
            estimator: Estimator::default(),
        }
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Node {
    counts: [u32; SYMBOLS],
    total: u32,
    /// Posterior weight of predicting with this node's own estimate rather
    /// than deferring to the child; the split weight is `1 - stop`.
    stop: f64,
    children: [u32; CONTEXT_SYMBOLS],
}

impl Node {
    fn fresh() -> Self {
        Self {
            counts: [0; SYMBOLS],
            total: 0,
            stop: 0.5,
            children: [NO_CHILD; CONTEXT_SYMBOLS],
        }
    }

    fn estimate(&self, symbol: usize) -> f64 {
        (self.counts[symbol] as f64 + PRIOR) / (self.total as f64 + 1.0)
    }

    fn log_estimate(&self, symbol: usize) -> f64 {
        self.estimate(symbol).ln()
    }

    fn mix(&self, est: f64, child: f64) -> f64 {
        self.stop * est + (1.0 - self.stop) * child
    }

    /// Switching update with switch rate `1 / (n + 2)`.
    fn update_switch(&mut self, est: f64, child: f64) {
        let alpha = 1.0 / (self.total as f64 + 2.0);
        let (ws, wc) = (self.stop * est, (1.0 - self.stop) * child);
        let stop = (1.0 - alpha) * ws + alpha * wc;
        let split = (1.0 - alpha) * wc + alpha * ws;
        self.stop = stop / (stop + split);
    }

    fn observe(&mut self, symbol: usize) {
        self.counts[symbol] += 1;
        self.total += 1;
    }
}

/// Pixel density model; see the module docs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityModel {
    config: DensityConfig,
    /// Node arena; the first `width * height` entries are the per-position roots.
    nodes: Vec<Node>,
    frames_trained: u64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    model: DensityModel,
}

impl DensityModel {
    pub fn new(config: DensityConfig) -> Result<Self, DensityError> {
        config.filter.validate()?;
        if config.width == 0 || config.height == 0 {
            return Err(DensityError::DimensionMismatch {
                expected: (1, 1),
                found: (config.width, config.height),
            });
        }
        let positions = config.width * config.height;
        Ok(Self {
            config,
            nodes: vec![Node::fresh(); positions],
            frames_trained: 0,
        })
    }

    pub fn config(&self) -> &DensityConfig {
        &self.config
    }

    pub fn frames_trained(&self) -> u64 {
        self.frames_trained
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn check_dims(&self, frame: &Observation) -> Result<(), DensityError> {
        let expected = (self.config.width, self.config.height);
        if frame.dims() != expected {
            return Err(DensityError::DimensionMismatch {
                expected,
                found: frame.dims(),
            });
        }
        Ok(())
    }

    fn context(&self, frame: &Observation, x: usize, y: usize, out: &mut [usize]) {
        for (slot, &(dx, dy)) in out.iter_mut().zip(&self.config.filter.offsets) {
            let (nx, ny) = (x as i64 + dx as i64, y as i64 + dy as i64);
            *slot = if nx < 0 || ny < 0 || nx >= frame.width() as i64 || ny >= frame.height() as i64 {
                OUT_OF_BOUNDS
            } else {
                frame.get(nx as usize, ny as usize) as usize
            };
        }
    }

    /// Existing nodes along the context path, root first; `None` past the
    /// deepest node created so far.
    fn path(&self, position: usize, ctx: &[usize], out: &mut Vec<Option<usize>>) {
        out.clear();
        let mut node = Some(position);
        out.push(node);
        for &c in ctx {
            node = node.and_then(|n| {
                let child = self.nodes[n].children[c];
                (child != NO_CHILD).then_some(child as usize)
            });
            out.push(node);
        }
    }

    fn log_predict(&self, path: &[Option<usize>], symbol: usize) -> f64 {
        let depth = path.len() - 1;
        match self.config.estimator {
            Estimator::LaplaceTable => match path[depth] {
                Some(n) => self.nodes[n].log_estimate(symbol),
                None => PRIOR.ln(),
            },
            Estimator::ContextTreeSwitching => {
                // An unvisited subtree predicts the uniform prior.
                let mut p = PRIOR;
                for d in (0..=depth).rev() {
                    let Some(n) = path[d] else { continue };
                    let node = &self.nodes[n];
                    let est = node.estimate(symbol);
                    p = if d == depth { est } else { node.mix(est, p) };
                }
                p.ln()
            }
        }
    }

    /// Natural log of the frame's recoding probability. Does not mutate the model.
    pub fn log_prob(&self, frame: &Observation) -> Result<f64, DensityError> {
        self.check_dims(frame)?;
        let depth = self.config.filter.offsets.len();
        let mut ctx = vec![0usize; depth];
        let mut path = Vec::with_capacity(depth + 1);
        let mut total = 0.0;
        for y in 0..frame.height() {
            for x in 0..frame.width() {
                self.context(frame, x, y, &mut ctx);
                self.path(y * frame.width() + x, &ctx, &mut path);
                total += self.log_predict(&path, frame.get(x, y) as usize);
            }
        }
        Ok(total)
    }

    /// Recoding probability in linear space; underflows to 0 for large frames.
    pub fn recoding_prob(&self, frame: &Observation) -> Result<f64, DensityError> {
        Ok(self.log_prob(frame)?.exp())
    }

    /// Trains on one frame; returns the frame's log probability before the update.
    pub fn update(&mut self, frame: &Observation) -> Result<f64, DensityError> {
        self.check_dims(frame)?;
        let depth = self.config.filter.offsets.len();
        let mut ctx = vec![0usize; depth];
        let mut path: Vec<usize> = Vec::with_capacity(depth + 1);
        let mut total = 0.0;
        for y in 0..frame.height() {
            for x in 0..frame.width() {
                self.context(frame, x, y, &mut ctx);
                let symbol = frame.get(x, y) as usize;
                path.clear();
                let mut node = y * frame.width() + x;
                path.push(node);
                for &c in &ctx {
                    let child = self.nodes[node].children[c];
                    node = if child == NO_CHILD {
                        let idx = self.nodes.len();
                        self.nodes.push(Node::fresh());
                        self.nodes[node].children[c] = idx as u32;
                        idx
                    } else {
                        child as usize
                    };
                    path.push(node);
                }
                let mut p = 0.0;
                for d in (0..=depth).rev() {
                    let node = &mut self.nodes[path[d]];
                    let est = node.estimate(symbol);
                    if d == depth {
                        p = est;
                    } else {
                        let mixed = node.mix(est, p);
                        node.update_switch(est, p);
                        p = mixed;
                    }
                    node.observe(symbol);
                }
                total += match self.config.estimator {
                    Estimator::ContextTreeSwitching => p.ln(),
                    Estimator::LaplaceTable => {
                        // log_p at the leaf is the estimate before the update
                        let leaf = &self.nodes[path[depth]];
                        ((leaf.counts[symbol] as f64 - 1.0 + PRIOR) / leaf.total as f64).ln()
                    }
                };
            }
        }
        self.frames_trained += 1;
        Ok(total)
    }

    /// Exploration bonus `beta / sqrt(N + 0.01)` from the pseudo-count
    /// `N = p (1 - p') / (p' - p)`, where `p` and `p'` are the frame's
    /// probabilities before and after training on it. The model is updated.
    pub fn pseudo_count_bonus(&mut self, frame: &Observation, beta: f64) -> Result<f64, DensityError> {
        let before = self.update(frame)?;
        let after = self.log_prob(frame)?;
        Ok(pseudo_count_bonus_from_logs(before, after, beta))
    }

    pub fn to_json(&self) -> Result<String, DensityError> {
        Ok(serde_json::to_string(&ModelFile {
            version: FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self, DensityError> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.version != FORMAT_VERSION {
            return Err(DensityError::Version(header.version));
        }
        let file: ModelFile = serde_json::from_str(text)?;
        Ok(file.model)
    }
}

/// Pseudo-count `N` from log probabilities before and after a training step;
/// infinite when the step did not raise the probability.
pub fn pseudo_count_from_logs(log_before: f64, log_after: f64) -> f64 {
    let gain = log_after - log_before;
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
    if !(gain > 0.0) {
        return f64::INFINITY;
    }
    // p(1-p')/(p'-p) = (1-p') / (exp(gain) - 1)
    let one_minus_after = -log_after.exp_m1();
    one_minus_after / gain.exp_m1()
}

pub fn pseudo_count_bonus_from_logs(log_before: f64, log_after: f64, beta: f64) -> f64 {
    let n = pseudo_count_from_logs(log_before, log_after);
    if n.is_infinite() {
        0.0
    } else {
        beta / (n + 0.01).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(w: usize, h: usize, px: &[u8]) -> Observation {
        Observation::new(w, h, px.to_vec())
    }

    fn model(w: usize, h: usize, est: Estimator) -> DensityModel {
        DensityModel::new(DensityConfig::new(w, h, ContextFilter::plus_shaped()).with_estimator(est)).unwrap()
    }

    #[test]
    fn untrained_model_is_uniform() {
        for est in [Estimator::ContextTreeSwitching, Estimator::LaplaceTable] {
            let m = model(4, 3, est);
            let f = frame(4, 3, &[0, 1, 2, 3, 4, 5, 6, 7, 0, 1, 2, 3]);
            let expected = 12.0 * (1.0f64 / 8.0).ln();
            assert!((m.log_prob(&f).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn single_pixel_laplace_closed_form() {
        let mut m = model(1, 1, Estimator::LaplaceTable);
        for v in [3u8, 3, 5, 3] {
            m.update(&frame(1, 1, &[v])).unwrap();
        }
        let p = m.recoding_prob(&frame(1, 1, &[3])).unwrap();
        assert!((p - (3.0 + 0.125) / (4.0 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn update_returns_prior_log_prob() {
        for est in [Estimator::ContextTreeSwitching, Estimator::LaplaceTable] {
            let mut m = model(3, 2, est);
            let f = frame(3, 2, &[1, 1, 2, 1, 6, 7]);
            m.update(&f).unwrap();
            let before = m.log_prob(&f).unwrap();
            let reported = m.update(&f).unwrap();
            assert!((before - reported).abs() < 1e-9, "{est:?}: {before} vs {reported}");
        }
    }

    #[test]
    fn repeated_training_increases_probability() {
        for est in [Estimator::ContextTreeSwitching, Estimator::LaplaceTable] {
            let mut m = model(5, 4, est);
            let f = frame(5, 4, &[1, 1, 1, 0, 0, 1, 6, 7, 0, 0, 1, 1, 1, 2, 2, 3, 3, 4, 4, 1]);
            let mut last = m.log_prob(&f).unwrap();
            for _ in 0..10 {
                m.update(&f).unwrap();
                let now = m.log_prob(&f).unwrap();
                assert!(now > last, "{est:?}");
                last = now;
            }
        }
    }

    #[test]
    fn disjoint_contexts_leave_other_frames_untouched() {
        // With a Laplace table, training a frame whose (position, context)
        // pairs never occur in B cannot change p(B).
        let mut m = model(2, 1, Estimator::LaplaceTable);
        let a = frame(2, 1, &[1, 2]);
        let b = frame(2, 1, &[3, 4]);
        let prior = m.log_prob(&b).unwrap();
        // first pixel shares the (out-of-bounds) context; second pixel context differs
        m.update(&a).unwrap();
        let after = m.log_prob(&b).unwrap();
        let expected = prior + ((0.125f64) / 2.0).ln() - (0.125f64).ln();
        assert!((after - expected).abs() < 1e-12);
    }

    #[test]
    fn query_is_pure() {
        let mut m = model(3, 3, Estimator::ContextTreeSwitching);
        let f = frame(3, 3, &[1, 2, 3, 1, 2, 3, 1, 2, 3]);
        m.update(&f).unwrap();
        let snapshot = m.clone();
        let g = frame(3, 3, &[7; 9]);
        let _ = m.log_prob(&g).unwrap();
        assert_eq!(m, snapshot);
    }

    #[test]
    fn dimension_mismatch() {
        let mut m = model(3, 3, Estimator::LaplaceTable);
        assert!(matches!(
            m.update(&frame(2, 2, &[0; 4])),
            Err(DensityError::DimensionMismatch { .. })
        ));
        assert!(m.log_prob(&frame(3, 2, &[0; 6])).is_err());
    }

    #[test]
    fn pseudo_count_bonus_limits() {
        let mut m = model(6, 6, Estimator::ContextTreeSwitching);
        let f = Observation::filled(6, 6, 2);
        let first = m.pseudo_count_bonus(&f, 0.05).unwrap();
        assert!((first - 0.05 / 0.1).abs() < 1e-6, "{first}");
        let mut last = first;
        for _ in 0..200 {
            last = m.pseudo_count_bonus(&f, 0.05).unwrap();
        }
        assert!(last < 0.01 * first, "{last}");
        assert_eq!(m.pseudo_count_bonus(&f, 0.0).unwrap(), 0.0);
        assert_eq!(pseudo_count_bonus_from_logs(-1.0, -1.0, 1.0), 0.0);
        assert_eq!(pseudo_count_bonus_from_logs(-1.0, -2.0, 1.0), 0.0);
    }

    #[test]
    fn filters() {
        assert!(ContextFilter::l_shaped().is_causal());
        assert!(ContextFilter::plus_shaped().is_causal());
        assert!(!ContextFilter::custom(vec![(1, 0)]).unwrap().is_causal());
        assert!(ContextFilter::custom(vec![]).unwrap().is_causal());
        assert!(ContextFilter::custom(vec![(0, 0)]).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut m = model(4, 4, Estimator::ContextTreeSwitching);
        for v in 0..5u8 {
            m.update(&Observation::filled(4, 4, v % 3)).unwrap();
        }
        let restored = DensityModel::from_json(&m.to_json().unwrap()).unwrap();
        let probe = frame(4, 4, &[0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 7, 7, 7, 7]);
        assert_eq!(
            m.log_prob(&probe).unwrap().to_bits(),
            restored.log_prob(&probe).unwrap().to_bits()
        );
        let bad = m.to_json().unwrap().replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(DensityModel::from_json(&bad), Err(DensityError::Version(9))));
    }
}
