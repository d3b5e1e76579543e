//! Phase-II nonresponse adjustment backends and subsample weight
//! construction: logistic regression, Lasso screening, CHAID adjustment
//! cells, and probit BART/rBART propensities.

use rand::Rng;
use thiserror::Error;

use crate::bart::{
    fit_bart_probit, fit_rbart_probit, BartOptions, FeatureColumn, Features, PosteriorChain,
    PredictAt,
};
use crate::dataset::{ResultSet, Value};

pub mod chaid;
pub mod lasso;
pub mod logistic;

pub use chaid::{chaid_cells, CellPartition, ChaidParams};
pub use lasso::{lasso_lambda_max, lasso_logistic_at, lasso_logistic_cv, lasso_logistic_select, LassoCv};
pub use logistic::{fit_logistic, LogisticFit};

#[derive(Debug, Error)]
pub enum PropensityError {
    #[error("empty input")]
    EmptyInput,
    #[error("input lengths differ")]
    LengthMismatch,
    #[error("response takes a single class")]
    SingleClass,
    #[error("design matrix is singular")]
    SingularDesign,
    #[error("complete or quasi-complete separation")]
    Separation,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Bart(#[from] crate::bart::BartError),
}

/// Nonresponse adjustment backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustmentMethod {
    Logistic,
    Chaid,
    Bart,
    Rbart,
}

/// The phase-II-selected units an adjustment is fit on: auxiliary covariate
/// columns, the response indicator, and the design variables the BART
/// backends consume.
#[derive(Debug, Clone)]
pub struct SelectedSample<'a> {
    /// Auxiliary covariate columns (x then z), one vector per column.
    pub aux: &'a [Vec<f64>],
    pub aux_names: &'a [String],
    pub response: &'a [u8],
    pub strata: &'a [i64],
    pub clusters: &'a [i64],
    /// Log phase-I weights.
    pub log_weights: &'a [f64],
    /// Label universes for the categorical design features of the BART
    /// backends. Supplying the full phase-I labels lets the fitted chain
    /// predict propensities at units outside the selected sample; None uses
    /// the sample's own labels.
    pub stratum_levels: Option<&'a [i64]>,
    pub cluster_levels: Option<&'a [i64]>,
}

#[derive(Debug, Clone)]
pub struct AdjustmentOptions {
    /// Fitted propensities are clipped to [clip_floor, 1] before inversion.
    pub clip_floor: f64,
    pub lasso_folds: usize,
    /// Lasso-screen the logistic and CHAID backends when the auxiliary
    /// column count exceeds this.
    pub screen_above: usize,
    pub chaid: ChaidParams,
    pub bart: BartOptions,
}

impl Default for AdjustmentOptions {
    fn default() -> Self {
        AdjustmentOptions {
            clip_floor: 0.01,
            lasso_folds: 10,
            screen_above: 5,
            chaid: ChaidParams::default(),
            bart: BartOptions::default(),
        }
    }
}

/// A fitted nonresponse adjustment.
#[derive(Debug, Clone)]
pub struct AdjustmentResult {
    pub method: AdjustmentMethod,
    /// Estimated response propensity per phase-II-selected unit (unclipped).
    pub fitted_propensity: Vec<f64>,
    /// a_i = 1 / clip(propensity) for the respondents, in the order they
    /// appear among the selected units.
    pub respondent_adjustment: Vec<f64>,
    /// Adjustment cells (CHAID backend only).
    pub cells: Option<CellPartition>,
    /// Propensity chain (BART backends only), reusable for prediction at
    /// units outside the selected sample.
    pub chain: Option<PosteriorChain>,
    /// Screened auxiliary column indices, when screening ran.
    pub screened: Option<Vec<usize>>,
}

impl AdjustmentResult {
    /// Export (unit index, fitted propensity, adjustment) rows.
    pub fn to_result_set(&self) -> ResultSet {
        let clip = |p: f64| 1.0 / p.clamp(0.01, 1.0);
        ResultSet {
            columns: vec!["unit".into(), "propensity".into(), "adjustment".into()],
            rows: self
                .fitted_propensity
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    vec![Value::Int(i as i64), Value::Real(p), Value::Real(clip(p))]
                })
                .collect(),
        }
    }
}

pub fn clip_propensity(pi: f64, floor: f64) -> f64 {
    pi.clamp(floor, 1.0)
}

/// Quintile discretization against the sample's own distribution; columns
/// holding only 0/1 keep their two levels.
pub fn discretize_quintiles(values: &[f64]) -> Vec<u32> {
    if values.iter().all(|&v| v == 0.0 || v == 1.0) {
        return values.iter().map(|&v| v as u32).collect();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut breaks: Vec<f64> =
        (1..5).map(|k| sorted[(k * n / 5).min(n - 1)]).collect();
    breaks.dedup_by(|a, b| a == b);
    values
        .iter()
        .map(|&v| breaks.iter().take_while(|&&b| v > b).count() as u32)
        .collect()
}

/// Fit the chosen backend on the phase-II-selected sample and derive the
/// respondents' nonresponse adjustments a_i = 1 / clip(propensity).
pub fn nonresponse_adjustment(
    method: AdjustmentMethod,
    sample: &SelectedSample<'_>,
    opts: &AdjustmentOptions,
    rng: &mut impl Rng,
) -> Result<AdjustmentResult, PropensityError> {
    let n = sample.response.len();
    if n == 0 {
        return Err(PropensityError::EmptyInput);
    }
    if sample.aux.iter().any(|c| c.len() != n)
        || sample.strata.len() != n
        || sample.clusters.len() != n
        || sample.log_weights.len() != n
    {
        return Err(PropensityError::LengthMismatch);
    }
    let respondents = sample.response.iter().filter(|&&r| r == 1).count();
    if respondents == 0 {
        return Err(PropensityError::SingleClass);
    }
    if respondents == n {
        // everyone responded: no adjustment for any method
        return Ok(AdjustmentResult {
            method,
            fitted_propensity: vec![1.0; n],
            respondent_adjustment: vec![1.0; n],
            cells: None,
            chain: None,
            screened: None,
        });
    }

    let mut screened = None;
    let mut cells = None;
    let mut chain = None;
    let fitted: Vec<f64> = match method {
        AdjustmentMethod::Logistic => {
            let cols = screen_aux(sample, opts, &mut screened, rng)?;
            let fit = fit_logistic(&cols, sample.response)?;
            fit.predict(&cols)
        }
        AdjustmentMethod::Chaid => {
            let cols = screen_aux(sample, opts, &mut screened, rng)?;
            let coded: Vec<Vec<u32>> = cols.iter().map(|c| discretize_quintiles(c)).collect();
            let partition = chaid_cells(&coded, sample.response, &opts.chaid);
            let rates = partition.rates();
            let fitted =
                partition.cell_id.iter().map(|&c| rates[c as usize]).collect::<Vec<f64>>();
            cells = Some(partition);
            fitted
        }
        AdjustmentMethod::Bart | AdjustmentMethod::Rbart => {
            let features = propensity_features(
                sample.aux,
                sample.aux_names,
                sample.strata,
                (method == AdjustmentMethod::Bart).then_some(sample.clusters),
                sample.log_weights,
                sample.stratum_levels.unwrap_or(sample.strata),
                sample.cluster_levels.unwrap_or(sample.clusters),
            )?;
            let fit_chain = if method == AdjustmentMethod::Bart {
                fit_bart_probit(&features, sample.response, &opts.bart, rng)?
            } else {
                fit_rbart_probit(&features, sample.response, sample.clusters, &opts.bart, rng)?
            };
            let groups = (method == AdjustmentMethod::Rbart).then_some(sample.clusters);
            let fitted = fit_chain.predict(&features, groups, PredictAt::PosteriorMean)?;
            chain = Some(fit_chain);
            fitted
        }
    };

    let respondent_adjustment = sample
        .response
        .iter()
        .zip(&fitted)
        .filter(|(&r, _)| r == 1)
        .map(|(_, &p)| 1.0 / clip_propensity(p, opts.clip_floor))
        .collect();
    Ok(AdjustmentResult {
        method,
        fitted_propensity: fitted,
        respondent_adjustment,
        cells,
        chain,
        screened,
    })
}

fn screen_aux(
    sample: &SelectedSample<'_>,
    opts: &AdjustmentOptions,
    screened: &mut Option<Vec<usize>>,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>, PropensityError> {
    if sample.aux.len() <= opts.screen_above {
        return Ok(sample.aux.to_vec());
    }
    let picked = lasso_logistic_select(sample.aux, sample.response, opts.lasso_folds, rng)?;
    *screened = Some(picked.clone());
    if picked.is_empty() {
        // nothing survives: fall back to an intercept-only model
        return Ok(Vec::new());
    }
    Ok(picked.iter().map(|&j| sample.aux[j].clone()).collect())
}

/// Covariates of the BART propensity models: auxiliaries, stratum as a
/// categorical column, the cluster as a categorical column (plain BART
/// only; rBART models it as the random-intercept group), and the log
/// phase-I weight. The level universes fix the categorical codings so a
/// chain fit on the selected units can score any phase-I unit.
pub fn propensity_features(
    aux: &[Vec<f64>],
    aux_names: &[String],
    strata: &[i64],
    clusters_as_column: Option<&[i64]>,
    log_weights: &[f64],
    stratum_levels: &[i64],
    cluster_levels: &[i64],
) -> Result<Features, PropensityError> {
    let mut columns: Vec<FeatureColumn> = aux
        .iter()
        .zip(aux_names)
        .map(|(c, name)| FeatureColumn::Continuous { name: name.clone(), values: c.clone() })
        .collect();
    columns.push(categorical_from_labels("stratum", strata, stratum_levels)?);
    if let Some(clusters) = clusters_as_column {
        columns.push(categorical_from_labels("cluster", clusters, cluster_levels)?);
    }
    columns.push(FeatureColumn::Continuous {
        name: "log_weight".into(),
        values: log_weights.to_vec(),
    });
    Ok(Features::new(columns)?)
}

pub(crate) fn categorical_from_labels(
    name: &str,
    labels: &[i64],
    universe: &[i64],
) -> Result<FeatureColumn, PropensityError> {
    let mut levels: Vec<i64> = universe.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let codes = labels
        .iter()
        .map(|l| {
            levels
                .binary_search(l)
                .map(|i| i as u32)
                .map_err(|_| PropensityError::InvalidParameter(format!("{name} label {l} outside universe")))
        })
        .collect::<Result<Vec<u32>, _>>()?;
    Ok(FeatureColumn::Categorical { name: name.into(), codes, n_levels: levels.len() as u32 })
}

/// Subsample weights w_s = w_c * (1 / phase-II selection probability) * a.
pub fn subsample_weights(
    w_c: &[f64],
    phase2_selection_prob: f64,
    adjustment: &[f64],
) -> Result<Vec<f64>, PropensityError> {
    if w_c.len() != adjustment.len() {
        return Err(PropensityError::LengthMismatch);
    }
    if !(phase2_selection_prob > 0.0 && phase2_selection_prob <= 1.0) {
        return Err(PropensityError::InvalidParameter(format!(
            "phase-II selection probability {phase2_selection_prob}"
        )));
    }
    if w_c.iter().any(|&w| w <= 0.0) || adjustment.iter().any(|&a| a <= 0.0) {
        return Err(PropensityError::InvalidParameter("non-positive weight input".into()));
    }
    Ok(w_c
        .iter()
        .zip(adjustment)
        .map(|(&w, &a)| w / phase2_selection_prob * a)
        .collect())
}
