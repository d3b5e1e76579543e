//! Tree-based multiple imputation of the phase-I sample and Rubin-rule
//! combination of the per-imputation design-based estimates.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::bart::{BartError, Features, PosteriorChain, PredictAt};
use crate::dataset::{DesignFrame, ResultSet, Value};
use crate::estimators::{
    ci_from, taylor_variance, weighted_mean, EstimatorError, PointEstimate,
};

/// Cap applied to the Satterthwaite df when the between-imputation variance
/// vanishes; the t reference is indistinguishable from normal beyond it.
const DF_CAP: f64 = 1e6;

#[derive(Debug, Error)]
pub enum MiError {
    #[error("chain holds {kept} draws, need {requested} imputations")]
    ChainTooShort { kept: usize, requested: usize },
    #[error("need at least 2 imputations, got {0}")]
    TooFewImputations(usize),
    #[error("negative per-imputation variance at position {0}")]
    NegativeVariance(usize),
    #[error("input lengths differ")]
    LengthMismatch,
    #[error(transparent)]
    Bart(#[from] BartError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// One completed phase-I dataset: observed outcomes pass through, missing
/// outcomes are imputed from a single posterior draw.
#[derive(Debug, Clone)]
pub struct CompletedDataset {
    pub y: Vec<f64>,
    /// Index of the posterior draw that produced the imputations.
    pub draw_index: usize,
}

/// Rubin-combined estimate over D imputations.
#[derive(Debug, Clone)]
pub struct MiResult {
    pub per_imputation: Vec<(f64, f64)>,
    pub estimate: f64,
    pub within_variance: f64,
    pub between_variance: f64,
    pub total_variance: f64,
    pub df: f64,
    pub lower: f64,
    pub upper: f64,
    pub d: usize,
}

impl MiResult {
    pub fn interval_width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Impute the phase-I outcomes from the last `d` retained draws of a chain
/// trained on the phase-II respondents. Continuous chains add fresh
/// N(0, sigma_d^2) noise per missing unit; probit chains draw Bernoulli
/// outcomes from the predicted probabilities.
pub fn impute_datasets(
    chain: &PosteriorChain,
    features: &Features,
    groups: Option<&[i64]>,
    observed: &[Option<f64>],
    d: usize,
    rng: &mut impl Rng,
) -> Result<Vec<CompletedDataset>, MiError> {
    if observed.len() != features.n_rows() {
        return Err(MiError::LengthMismatch);
    }
    if d > chain.n_draws() {
        return Err(MiError::ChainTooShort { kept: chain.n_draws(), requested: d });
    }
    let first = chain.n_draws() - d;
    let mut out = Vec::with_capacity(d);
    for draw_index in first..chain.n_draws() {
        let pred = chain.predict(features, groups, PredictAt::Draw(draw_index))?;
        let draw = &chain.draws[draw_index];
        let sigma = draw.sigma();
        let y = observed
            .iter()
            .zip(&pred)
            .map(|(obs, &p)| match obs {
                Some(v) => *v,
                None => {
                    if chain.model_kind.is_probit() {
                        (rng.random::<f64>() < p) as u8 as f64
                    } else {
                        let z: f64 = StandardNormal.sample(rng);
                        p + sigma * z
                    }
                }
            })
            .collect();
        out.push(CompletedDataset { y, draw_index });
    }
    Ok(out)
}

/// Rubin's rules with the Satterthwaite df and a 95% t interval.
pub fn rubin_combine(estimates: &[f64], variances: &[f64]) -> Result<MiResult, MiError> {
    let d = estimates.len();
    if d < 2 {
        return Err(MiError::TooFewImputations(d));
    }
    if variances.len() != d {
        return Err(MiError::LengthMismatch);
    }
    if let Some(bad) = variances.iter().position(|&v| v < 0.0) {
        return Err(MiError::NegativeVariance(bad));
    }
    let df64 = d as f64;
    let estimate = estimates.iter().sum::<f64>() / df64;
    let within = variances.iter().sum::<f64>() / df64;
    let between =
        estimates.iter().map(|e| (e - estimate) * (e - estimate)).sum::<f64>() / (df64 - 1.0);
    let total = within + (1.0 + 1.0 / df64) * between;
    let df = if between == 0.0 {
        DF_CAP
    } else {
        let nu = (df64 - 1.0) * (1.0 + df64 / (df64 + 1.0) * within / between).powi(2);
        nu.min(DF_CAP)
    };
    let (lower, upper) =
        ci_from(&PointEstimate { estimate, variance: total, df }, 0.95)?;
    Ok(MiResult {
        per_imputation: estimates.iter().copied().zip(variances.iter().copied()).collect(),
        estimate,
        within_variance: within,
        between_variance: between,
        total_variance: total,
        df,
        lower,
        upper,
        d,
    })
}

/// Per-imputation weighted mean and Taylor variance over the phase-I
/// design, combined with Rubin's rules.
pub fn mi_estimate_mean(
    completed: &[CompletedDataset],
    design: &DesignFrame,
) -> Result<MiResult, MiError> {
    let mut estimates = Vec::with_capacity(completed.len());
    let mut variances = Vec::with_capacity(completed.len());
    for dataset in completed {
        if dataset.y.len() != design.n() {
            return Err(MiError::LengthMismatch);
        }
        estimates.push(weighted_mean(&dataset.y, &design.weight)?);
        variances.push(taylor_variance(
            &dataset.y,
            &design.weight,
            &design.stratum_id,
            &design.cluster_id,
        )?);
    }
    rubin_combine(&estimates, &variances)
}

/// Export labelled results as (method, estimate, lower, upper, width) rows.
pub fn results_to_result_set(rows: &[(String, &MiResult)]) -> ResultSet {
    ResultSet {
        columns: vec![
            "method".into(),
            "estimate".into(),
            "lower".into(),
            "upper".into(),
            "width".into(),
        ],
        rows: rows
            .iter()
            .map(|(label, r)| {
                vec![
                    Value::Text(label.clone()),
                    Value::Real(r.estimate),
                    Value::Real(r.lower),
                    Value::Real(r.upper),
                    Value::Real(r.interval_width()),
                ]
            })
            .collect(),
    }
}
