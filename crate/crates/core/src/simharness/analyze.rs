//! Real-data pipeline: run one weighting or imputation method on an
//! ingested table with bound design columns.

use crate::bart::{
    fit_bart, fit_bart_probit, fit_rbart, fit_rbart_probit, BartOptions, FeatureColumn, Features,
    PredictAt,
};
use crate::dataset::{ColumnKind, DesignFrame, ResultSet, Table, Value};
use crate::estimators::{ci_from, design_df, taylor_variance_opts, weighted_mean, PointEstimate};
use crate::mi::{impute_datasets, mi_estimate_mean};
use crate::propensity::{
    clip_propensity, nonresponse_adjustment, propensity_features, subsample_weights,
    AdjustmentMethod, AdjustmentOptions, SelectedSample,
};
use crate::rng::stage_rng;

use super::{HarnessError, Method};

#[derive(Debug, Clone)]
pub struct AnalyzeConfig {
    pub method: Method,
    pub imputations: usize,
    pub seed: u64,
    pub bart: BartOptions,
    pub adjustment: AdjustmentOptions,
    /// Known phase-II selection probability; 1 when the respondent
    /// indicator already carries all of phase II.
    pub phase2_selection_prob: f64,
    /// Collapse singleton-cluster strata in the variance instead of
    /// failing (real designs often have them).
    pub collapse_singletons: bool,
}

impl AnalyzeConfig {
    pub fn new(method: Method) -> AnalyzeConfig {
        AnalyzeConfig {
            method,
            imputations: 10,
            seed: 20240601,
            bart: BartOptions::default(),
            adjustment: AdjustmentOptions::default(),
            phase2_selection_prob: 1.0,
            collapse_singletons: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AnalysisOutput {
    pub method: Method,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl AnalysisOutput {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn to_result_set(&self) -> ResultSet {
        ResultSet {
            columns: vec![
                "method".into(),
                "estimate".into(),
                "lower".into(),
                "upper".into(),
                "width".into(),
            ],
            rows: vec![vec![
                Value::Text(self.method.name().into()),
                Value::Real(self.estimate),
                Value::Real(self.lower),
                Value::Real(self.upper),
                Value::Real(self.width()),
            ]],
        }
    }
}

/// Estimate the population mean of `outcome` from a bound dataset using
/// one weighting or imputation method.
pub fn analyze_dataset(
    covariates: &Table,
    design: &DesignFrame,
    outcome: &str,
    config: &AnalyzeConfig,
) -> Result<AnalysisOutput, HarnessError> {
    if config.method == Method::Benchmark {
        return Err(HarnessError::InvalidConfig(
            "the benchmark estimator needs a fully observed outcome; pick a wt-* or mi-* method"
                .into(),
        ));
    }
    if covariates.n_rows() != design.n() {
        return Err(HarnessError::InvalidConfig("table and design sizes differ".into()));
    }
    let outcome_col = covariates
        .column(outcome)
        .ok_or_else(|| HarnessError::InvalidConfig(format!("no outcome column {outcome}")))?;
    let outcome_binary = match outcome_col.kind {
        ColumnKind::Continuous => false,
        ColumnKind::Binary => true,
        ColumnKind::Categorical { .. } => {
            return Err(HarnessError::InvalidConfig(
                "outcome must be continuous or binary".into(),
            ))
        }
    };
    let observed = outcome_col.values.clone();
    let respondent_rows: Vec<usize> =
        (0..design.n()).filter(|&i| design.phase2_respondent[i] == 1).collect();
    let selected_rows: Vec<usize> =
        (0..design.n()).filter(|&i| design.phase2_selected[i] == 1).collect();
    if respondent_rows.is_empty() {
        return Err(HarnessError::InvalidConfig("no phase-II respondents".into()));
    }
    for &i in &respondent_rows {
        if observed[i].is_none() {
            return Err(HarnessError::InvalidConfig(format!(
                "outcome missing for phase-II respondent at row {}",
                i + 1
            )));
        }
    }
    if config.method.is_mi()
        && (config.imputations < 2 || config.imputations > config.bart.n_keep)
    {
        return Err(HarnessError::InvalidConfig(format!(
            "imputations must lie in [2, kept draws]; got {} with {} kept",
            config.imputations, config.bart.n_keep
        )));
    }

    // numeric view of the covariates for the logistic/CHAID/lasso backends
    // (categorical columns become dummies) and a typed view for BART
    let mut aux_numeric: Vec<Vec<f64>> = Vec::new();
    let mut aux_names: Vec<String> = Vec::new();
    let mut bart_cols: Vec<FeatureColumn> = Vec::new();
    for col in covariates.columns() {
        if col.name == outcome {
            continue;
        }
        let values: Vec<f64> = col
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    HarnessError::InvalidConfig(format!(
                        "covariate {} missing at row {}",
                        col.name,
                        i + 1
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        match &col.kind {
            ColumnKind::Continuous | ColumnKind::Binary => {
                aux_numeric.push(values.clone());
                aux_names.push(col.name.clone());
                bart_cols
                    .push(FeatureColumn::Continuous { name: col.name.clone(), values });
            }
            ColumnKind::Categorical { levels } => {
                for level in 1..levels.len() {
                    aux_numeric.push(
                        values.iter().map(|&v| (v as usize == level) as u8 as f64).collect(),
                    );
                    aux_names.push(format!("{}={}", col.name, levels[level]));
                }
                bart_cols.push(FeatureColumn::Categorical {
                    name: col.name.clone(),
                    codes: values.iter().map(|&v| v as u32).collect(),
                    n_levels: levels.len() as u32,
                });
            }
        }
    }

    let log_w: Vec<f64> = design.weight.iter().map(|w| w.ln()).collect();
    let backend = match config.method {
        Method::WtLgm => AdjustmentMethod::Logistic,
        Method::WtChaid => AdjustmentMethod::Chaid,
        Method::WtBart | Method::MiBart => AdjustmentMethod::Bart,
        Method::WtRbart | Method::MiRbart => AdjustmentMethod::Rbart,
        Method::Benchmark => unreachable!("rejected above"),
    };

    // adjustment fit on the phase-II-selected units
    let sel_aux: Vec<Vec<f64>> = aux_numeric
        .iter()
        .map(|c| selected_rows.iter().map(|&i| c[i]).collect())
        .collect();
    let sel_response: Vec<u8> =
        selected_rows.iter().map(|&i| design.phase2_respondent[i]).collect();
    let sel_strata: Vec<i64> = selected_rows.iter().map(|&i| design.stratum_id[i]).collect();
    let sel_clusters: Vec<i64> = selected_rows.iter().map(|&i| design.cluster_id[i]).collect();
    let sel_log_w: Vec<f64> = selected_rows.iter().map(|&i| log_w[i]).collect();
    let selected = SelectedSample {
        aux: &sel_aux,
        aux_names: &aux_names,
        response: &sel_response,
        strata: &sel_strata,
        clusters: &sel_clusters,
        log_weights: &sel_log_w,
        stratum_levels: Some(&design.stratum_id),
        cluster_levels: Some(&design.cluster_id),
    };
    let mut adjust_rng = stage_rng(config.seed, "analyze-adjust");
    let adjustment =
        nonresponse_adjustment(backend, &selected, &config.adjustment, &mut adjust_rng)?;

    if !config.method.is_mi() {
        // subsample-weighted estimate over the respondents
        let w_c: Vec<f64> = respondent_rows.iter().map(|&i| design.weight[i]).collect();
        let w_s = subsample_weights(
            &w_c,
            config.phase2_selection_prob,
            &adjustment.respondent_adjustment,
        )?;
        let y: Vec<f64> =
            respondent_rows.iter().map(|&i| observed[i].expect("checked")).collect();
        let strata: Vec<i64> = respondent_rows.iter().map(|&i| design.stratum_id[i]).collect();
        let clusters: Vec<i64> =
            respondent_rows.iter().map(|&i| design.cluster_id[i]).collect();
        let estimate = weighted_mean(&y, &w_s)?;
        let variance =
            taylor_variance_opts(&y, &w_s, &strata, &clusters, config.collapse_singletons)?;
        let df = match design_df(&strata, &clusters) {
            Ok(v) => v,
            Err(_) if config.collapse_singletons => {
                let clusters_distinct =
                    clusters.iter().collect::<std::collections::BTreeSet<_>>().len();
                (clusters_distinct as f64 - 1.0).max(1.0)
            }
            Err(e) => return Err(e.into()),
        };
        let (lower, upper) = ci_from(&PointEstimate { estimate, variance, df }, 0.95)?;
        return Ok(AnalysisOutput { method: config.method, estimate, lower, upper });
    }

    // multiple imputation of the phase-I rows
    let cluster_as_column = backend == AdjustmentMethod::Bart;
    let a_all: Vec<f64> = match &adjustment.chain {
        Some(chain) => {
            let features = propensity_features(
                &aux_numeric,
                &aux_names,
                &design.stratum_id,
                cluster_as_column.then_some(&design.cluster_id),
                &log_w,
                &design.stratum_id,
                &design.cluster_id,
            )?;
            let groups = (!cluster_as_column).then_some(design.cluster_id.as_slice());
            chain
                .predict(&features, groups, PredictAt::PosteriorMean)?
                .iter()
                .map(|&p| 1.0 / clip_propensity(p, config.adjustment.clip_floor))
                .collect()
        }
        None => vec![1.0; design.n()],
    };

    let mut imp_cols = bart_cols;
    imp_cols.push(stratum_column(&design.stratum_id));
    if cluster_as_column {
        imp_cols.push(cluster_column(&design.cluster_id));
    }
    imp_cols.push(FeatureColumn::Continuous { name: "log_weight".into(), values: log_w });
    imp_cols.push(FeatureColumn::Continuous {
        name: "log_adjustment".into(),
        values: a_all.iter().map(|a| a.ln()).collect(),
    });
    let features_all = Features::new(imp_cols)?;
    let train = features_all.select_rows(&respondent_rows);
    let groups_train: Vec<i64> =
        respondent_rows.iter().map(|&i| design.cluster_id[i]).collect();
    let mut fit_rng = stage_rng(config.seed, "analyze-fit");
    let chain = if outcome_binary {
        let y_train: Vec<u8> = respondent_rows
            .iter()
            .map(|&i| observed[i].expect("checked") as u8)
            .collect();
        if cluster_as_column {
            fit_bart_probit(&train, &y_train, &config.bart, &mut fit_rng)?
        } else {
            fit_rbart_probit(&train, &y_train, &groups_train, &config.bart, &mut fit_rng)?
        }
    } else {
        let y_train: Vec<f64> =
            respondent_rows.iter().map(|&i| observed[i].expect("checked")).collect();
        if cluster_as_column {
            fit_bart(&train, &y_train, &config.bart, &mut fit_rng)?
        } else {
            fit_rbart(&train, &y_train, &groups_train, &config.bart, &mut fit_rng)?
        }
    };

    let groups_all = (!cluster_as_column).then_some(design.cluster_id.as_slice());
    let mut impute_rng = stage_rng(config.seed, "analyze-impute");
    let completed = impute_datasets(
        &chain,
        &features_all,
        groups_all,
        &observed,
        config.imputations,
        &mut impute_rng,
    )?;
    let result = mi_estimate_mean(&completed, design)?;
    Ok(AnalysisOutput {
        method: config.method,
        estimate: result.estimate,
        lower: result.lower,
        upper: result.upper,
    })
}

fn stratum_column(labels: &[i64]) -> FeatureColumn {
    encode_labels("stratum", labels)
}

fn cluster_column(labels: &[i64]) -> FeatureColumn {
    encode_labels("cluster", labels)
}

fn encode_labels(name: &str, labels: &[i64]) -> FeatureColumn {
    let mut levels: Vec<i64> = labels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    FeatureColumn::Categorical {
        name: name.into(),
        codes: labels
            .iter()
            .map(|l| levels.binary_search(l).expect("own universe") as u32)
            .collect(),
        n_levels: levels.len() as u32,
    }
}
