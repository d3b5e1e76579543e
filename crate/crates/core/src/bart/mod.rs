//! Sum-of-trees posterior sampler: continuous BART, probit BART for binary
//! outcomes, and random-intercept variants (rBART) of both, with prediction
//! and imputation-draw extraction.
//!
//! Each backfitting iteration proposes a grow, prune, or change move per tree,
//! accepts by Metropolis-Hastings with the leaf-marginalized likelihood under
//! the conjugate normal leaf prior, draws every leaf value from its conjugate
//! normal posterior, and finally draws the error variance from its scaled
//! inverse chi-square posterior. Probit models run the usual truncated-normal
//! latent augmentation with the error scale fixed at one; random-intercept
//! models add conjugate Gibbs steps for the cluster intercepts and their
//! variance.

use thiserror::Error;

use crate::dataset::{ResultSet, Value};
use crate::special::normal_cdf;

mod data;
mod sampler;
mod tree;

pub use data::{FeatureColumn, FeatureSig, Features};
pub use sampler::{fit_bart, fit_bart_probit, fit_rbart, fit_rbart_probit};
pub use tree::{SplitRule, TreeNode};

#[derive(Debug, Error)]
pub enum BartError {
    #[error("features hold no columns")]
    NoFeatures,
    #[error("input lengths differ")]
    LengthMismatch,
    #[error("non-finite or out-of-range input in {0}")]
    NonFiniteInput(String),
    #[error("need at least 10 rows, got {0}")]
    TooFewRows(usize),
    #[error("binary response takes a single class")]
    SingleClass,
    #[error("random-intercept model needs at least 2 groups")]
    SingleGroup,
    #[error("prediction columns do not match training columns")]
    ColumnMismatch,
    #[error("draw index {0} out of range ({1} draws)")]
    IndexOutOfRange(usize, usize),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

/// Test instrumentation; all off by default.
#[derive(Debug, Clone, Default)]
pub struct Hooks {
    /// Flatten the likelihood so structure moves target the tree prior alone.
    pub flatten_likelihood: bool,
    /// Pin the (internal-scale) error sd instead of sampling it.
    pub fixed_sigma: Option<f64>,
    /// Skip all structural moves.
    pub freeze_structure: bool,
    /// Skip leaf redraws, keeping initial leaf values.
    pub freeze_leaves: bool,
}

/// Sampler options with the canonical defaults.
#[derive(Debug, Clone)]
pub struct BartOptions {
    pub n_trees: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    pub nu: f64,
    pub q: f64,
    pub n_burn: usize,
    pub n_keep: usize,
    pub thin: usize,
    /// (grow, prune, change) proposal probabilities.
    pub move_probs: [f64; 3],
    /// Grow and change proposals must leave every leaf at least this many
    /// training units.
    pub min_leaf: usize,
    /// Prior df for the random-intercept variance.
    pub nu_tau: f64,
    pub hooks: Hooks,
}

impl Default for BartOptions {
    fn default() -> Self {
        BartOptions {
            n_trees: 100,
            alpha: 0.95,
            beta: 2.0,
            k: 2.0,
            nu: 3.0,
            q: 0.90,
            n_burn: 1000,
            n_keep: 1000,
            thin: 10,
            move_probs: [0.25, 0.25, 0.50],
            min_leaf: 5,
            nu_tau: 3.0,
            hooks: Hooks::default(),
        }
    }
}

impl BartOptions {
    pub fn validate(&self) -> Result<(), BartError> {
        let bad = |m: &str| Err(BartError::InvalidOptions(m.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be >= 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.beta < 0.0 {
            return bad("beta must be >= 0");
        }
        if !(self.k > 0.0 && self.nu > 0.0 && self.nu_tau > 0.0) {
            return bad("k, nu, nu_tau must be positive");
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad("q must lie in (0, 1)");
        }
        if self.n_keep == 0 || self.thin == 0 {
            return bad("n_keep and thin must be >= 1");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be >= 1");
        }
        let sum: f64 = self.move_probs.iter().sum();
        if self.move_probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return bad("move probabilities must be nonnegative and sum to 1");
        }
        Ok(())
    }
}

/// Affine map from the sampler's internal response scale back to the data
/// scale: y = internal * scale + offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseScaling {
    pub offset: f64,
    pub scale: f64,
}

impl ResponseScaling {
    pub fn identity() -> Self {
        ResponseScaling { offset: 0.0, scale: 1.0 }
    }

    /// Bounds of the original response mapped onto [-0.5, 0.5].
    pub fn from_bounds(y_min: f64, y_max: f64) -> Self {
        let range = y_max - y_min;
        if range > 0.0 {
            ResponseScaling { offset: (y_min + y_max) / 2.0, scale: range }
        } else {
            ResponseScaling { offset: y_min, scale: 1.0 }
        }
    }

    pub fn to_internal(&self, y: f64) -> f64 {
        (y - self.offset) / self.scale
    }

    pub fn to_original(&self, internal: f64) -> f64 {
        internal * self.scale + self.offset
    }
}

/// Cluster random intercepts of one retained draw, on the internal scale.
#[derive(Debug, Clone)]
pub struct InterceptDraw {
    pub deltas: Vec<(i64, f64)>,
    pub tau2: f64,
}

impl InterceptDraw {
    pub fn delta_for(&self, group: i64) -> f64 {
        self.deltas
            .binary_search_by_key(&group, |(g, _)| *g)
            .map(|i| self.deltas[i].1)
            .unwrap_or(0.0)
    }
}

/// One retained posterior state.
#[derive(Debug, Clone)]
pub struct TreeEnsembleDraw {
    pub trees: Vec<TreeNode>,
    /// Error sd on the internal (scaled) response scale; 1 for probit.
    pub sigma_internal: f64,
    pub intercepts: Option<InterceptDraw>,
    pub scaling: ResponseScaling,
}

impl TreeEnsembleDraw {
    /// Error sd on the original response scale.
    pub fn sigma(&self) -> f64 {
        self.sigma_internal * self.scaling.scale
    }

    fn ensemble(&self, x: &Features, row: usize) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x, row)).sum()
    }

    pub fn n_leaves(&self) -> usize {
        self.trees.iter().map(|t| t.n_leaves()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Continuous,
    ContinuousRandomIntercept,
    Probit,
    ProbitRandomIntercept,
}

impl ModelKind {
    pub fn is_probit(&self) -> bool {
        matches!(self, ModelKind::Probit | ModelKind::ProbitRandomIntercept)
    }

    pub fn has_intercepts(&self) -> bool {
        matches!(self, ModelKind::ContinuousRandomIntercept | ModelKind::ProbitRandomIntercept)
    }
}

/// Where to evaluate a chain.
#[derive(Debug, Clone, Copy)]
pub enum PredictAt {
    Draw(usize),
    PosteriorMean,
}

/// Ordered retained draws of one fit.
#[derive(Debug, Clone)]
pub struct PosteriorChain {
    pub draws: Vec<TreeEnsembleDraw>,
    pub model_kind: ModelKind,
    signature: Vec<FeatureSig>,
}

impl PosteriorChain {
    pub(crate) fn new(
        draws: Vec<TreeEnsembleDraw>,
        model_kind: ModelKind,
        signature: Vec<FeatureSig>,
    ) -> Self {
        PosteriorChain { draws, model_kind, signature }
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    /// Evaluate one draw or the posterior mean on new rows. Probit chains
    /// return probabilities; continuous chains return responses on the data
    /// scale. `groups` supplies the cluster labels for random-intercept
    /// chains; unseen (or absent) groups contribute a zero intercept.
    pub fn predict(
        &self,
        x: &Features,
        groups: Option<&[i64]>,
        at: PredictAt,
    ) -> Result<Vec<f64>, BartError> {
        if x.signature() != self.signature {
            return Err(BartError::ColumnMismatch);
        }
        if let Some(g) = groups {
            if g.len() != x.n_rows() {
                return Err(BartError::LengthMismatch);
            }
        }
        match at {
            PredictAt::Draw(d) => {
                if d >= self.draws.len() {
                    return Err(BartError::IndexOutOfRange(d, self.draws.len()));
                }
                Ok(self.predict_draw(&self.draws[d], x, groups))
            }
            PredictAt::PosteriorMean => {
                let mut acc = vec![0.0; x.n_rows()];
                for draw in &self.draws {
                    for (a, v) in acc.iter_mut().zip(self.predict_draw(draw, x, groups)) {
                        *a += v;
                    }
                }
                let n = self.draws.len() as f64;
                acc.iter_mut().for_each(|a| *a /= n);
                Ok(acc)
            }
        }
    }

    fn predict_draw(&self, draw: &TreeEnsembleDraw, x: &Features, groups: Option<&[i64]>) -> Vec<f64> {
        (0..x.n_rows())
            .map(|i| {
                let mut g = draw.ensemble(x, i);
                if let (Some(ints), Some(ids)) = (&draw.intercepts, groups) {
                    g += ints.delta_for(ids[i]);
                }
                if self.model_kind.is_probit() {
                    normal_cdf(g)
                } else {
                    draw.scaling.to_original(g)
                }
            })
            .collect()
    }

    /// Convergence diagnostics: per-draw error sd and ensemble leaf count.
    pub fn diagnostics(&self) -> ResultSet {
        ResultSet {
            columns: vec!["draw".into(), "sigma".into(), "n_leaves".into()],
            rows: self
                .draws
                .iter()
                .enumerate()
                .map(|(d, draw)| {
                    vec![
                        Value::Int(d as i64),
                        Value::Real(draw.sigma()),
                        Value::Int(draw.n_leaves() as i64),
                    ]
                })
                .collect(),
        }
    }
}
