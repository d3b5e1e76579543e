//! One simulation replicate: regenerate the population and two-phase
//! sample from the replicate seed, then run every requested method arm.

use std::collections::BTreeMap;

use crate::bart::{fit_bart, fit_rbart, Features, PredictAt};
use crate::estimators::{ci_from, design_df, taylor_variance, weighted_mean, PointEstimate};
use crate::mi::{impute_datasets, mi_estimate_mean};
use crate::popgen::{generate_population, true_mean, Population};
use crate::propensity::{
    clip_propensity, nonresponse_adjustment, propensity_features, subsample_weights,
    AdjustmentMethod, AdjustmentResult, SelectedSample,
};
use crate::rng::{derive_seed, replicate_seed, stage_rng};
use crate::sampling::{draw_two_phase_sample, TwoPhaseSample};

use super::{HarnessError, Method, RunConfig};

/// A point estimate with its 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Per-method results of one replicate, alongside the replicate's true
/// population mean.
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub truth: f64,
    pub results: Vec<(Method, Result<Interval, String>)>,
}

/// Run the requested method arms on replicate `replicate`. A failing arm
/// records its error without disturbing the others.
pub fn run_replicate(config: &RunConfig, replicate: usize) -> ReplicateOutcome {
    match ReplicateCtx::prepare(config, replicate) {
        Ok(mut ctx) => {
            let results =
                config.methods.iter().map(|&m| (m, ctx.estimate(m))).collect();
            ReplicateOutcome { replicate, truth: ctx.truth, results }
        }
        Err(e) => {
            let message = e.to_string();
            ReplicateOutcome {
                replicate,
                truth: f64::NAN,
                results: config.methods.iter().map(|&m| (m, Err(message.clone()))).collect(),
            }
        }
    }
}

struct ReplicateCtx<'a> {
    config: &'a RunConfig,
    rep_seed: u64,
    truth: f64,
    sample: TwoPhaseSample,
    /// Auxiliary covariate columns over the phase-I rows, x then z.
    aux_all: Vec<Vec<f64>>,
    aux_names: Vec<String>,
    log_w_all: Vec<f64>,
    selected_rows: Vec<usize>,
    respondent_rows: Vec<usize>,
    outcome_all: Vec<Option<f64>>,
    pop: Population,
    adjustments: BTreeMap<&'static str, Result<AdjustmentResult, String>>,
}

impl<'a> ReplicateCtx<'a> {
    fn prepare(config: &'a RunConfig, replicate: usize) -> Result<Self, HarnessError> {
        let rep_seed = replicate_seed(config.seed, replicate as u64);
        let mut pop_cfg = config.population.clone();
        pop_cfg.n_continuous = config.scenario.n_continuous;
        pop_cfg.n_binary = config.scenario.n_binary;
        pop_cfg.seed = derive_seed(rep_seed, "population");
        let pop = generate_population(&pop_cfg)?;
        let truth = true_mean(&pop);
        let sample = draw_two_phase_sample(&pop, &config.scenario, rep_seed, &config.two_phase)?;

        let mut aux_all = Vec::new();
        let mut aux_names = Vec::new();
        for col in sample.table.columns() {
            if col.name == "y" {
                continue;
            }
            aux_names.push(col.name.clone());
            aux_all.push(col.values.iter().map(|v| v.expect("covariates complete")).collect());
        }
        let log_w_all: Vec<f64> = sample.design.weight.iter().map(|w| w.ln()).collect();
        let selected_rows: Vec<usize> = (0..sample.design.n())
            .filter(|&i| sample.design.phase2_selected[i] == 1)
            .collect();
        let respondent_rows: Vec<usize> = (0..sample.design.n())
            .filter(|&i| sample.design.phase2_respondent[i] == 1)
            .collect();
        let outcome_all = sample.table.column("y").expect("outcome present").values.clone();

        Ok(ReplicateCtx {
            config,
            rep_seed,
            truth,
            sample,
            aux_all,
            aux_names,
            log_w_all,
            selected_rows,
            respondent_rows,
            outcome_all,
            pop,
            adjustments: BTreeMap::new(),
        })
    }

    fn estimate(&mut self, method: Method) -> Result<Interval, String> {
        match method {
            Method::Benchmark => self.benchmark(),
            Method::WtLgm => self.weighted(AdjustmentMethod::Logistic),
            Method::WtChaid => self.weighted(AdjustmentMethod::Chaid),
            Method::WtBart => self.weighted(AdjustmentMethod::Bart),
            Method::WtRbart => self.weighted(AdjustmentMethod::Rbart),
            Method::MiBart => self.multiple_imputation(AdjustmentMethod::Bart),
            Method::MiRbart => self.multiple_imputation(AdjustmentMethod::Rbart),
        }
    }

    /// Weighted mean and Taylor interval as if the outcome were observed on
    /// the whole phase-I sample.
    fn benchmark(&self) -> Result<Interval, String> {
        let y_full = self.pop.table.complete_values("y").map_err(|e| e.to_string())?;
        let y: Vec<f64> = self.sample.unit_index.iter().map(|&i| y_full[i]).collect();
        self.taylor_interval(
            &y,
            &self.sample.design.weight,
            &self.sample.design.stratum_id,
            &self.sample.design.cluster_id,
        )
    }

    fn taylor_interval(
        &self,
        y: &[f64],
        w: &[f64],
        strata: &[i64],
        clusters: &[i64],
    ) -> Result<Interval, String> {
        let estimate = weighted_mean(y, w).map_err(|e| e.to_string())?;
        let variance = taylor_variance(y, w, strata, clusters).map_err(|e| e.to_string())?;
        let df = design_df(strata, clusters).map_err(|e| e.to_string())?;
        let (lower, upper) =
            ci_from(&PointEstimate { estimate, variance, df }, 0.95).map_err(|e| e.to_string())?;
        Ok(Interval { estimate, lower, upper })
    }

    fn stage_tag(backend: AdjustmentMethod) -> &'static str {
        match backend {
            AdjustmentMethod::Logistic => "adjust-lgm",
            AdjustmentMethod::Chaid => "adjust-chaid",
            AdjustmentMethod::Bart => "adjust-bart",
            AdjustmentMethod::Rbart => "adjust-rbart",
        }
    }

    /// Fit (once) and cache the nonresponse adjustment for a backend.
    fn adjustment(&mut self, backend: AdjustmentMethod) -> Result<&AdjustmentResult, String> {
        let tag = Self::stage_tag(backend);
        if !self.adjustments.contains_key(tag) {
            let result = self.fit_adjustment(backend, tag);
            self.adjustments.insert(tag, result);
        }
        self.adjustments[tag].as_ref().map_err(Clone::clone)
    }

    fn fit_adjustment(
        &self,
        backend: AdjustmentMethod,
        tag: &'static str,
    ) -> Result<AdjustmentResult, String> {
        let rows = &self.selected_rows;
        let aux: Vec<Vec<f64>> = self
            .aux_all
            .iter()
            .map(|c| rows.iter().map(|&i| c[i]).collect())
            .collect();
        let response: Vec<u8> =
            rows.iter().map(|&i| self.sample.design.phase2_respondent[i]).collect();
        let strata: Vec<i64> = rows.iter().map(|&i| self.sample.design.stratum_id[i]).collect();
        let clusters: Vec<i64> = rows.iter().map(|&i| self.sample.design.cluster_id[i]).collect();
        let log_w: Vec<f64> = rows.iter().map(|&i| self.log_w_all[i]).collect();
        let sample = SelectedSample {
            aux: &aux,
            aux_names: &self.aux_names,
            response: &response,
            strata: &strata,
            clusters: &clusters,
            log_weights: &log_w,
            stratum_levels: Some(&self.sample.design.stratum_id),
            cluster_levels: Some(&self.sample.design.cluster_id),
        };
        let mut rng = stage_rng(self.rep_seed, tag);
        nonresponse_adjustment(backend, &sample, &self.config.adjustment, &mut rng)
            .map_err(|e| e.to_string())
    }

    /// Subsample-weighted estimate on the phase-II respondents.
    fn weighted(&mut self, backend: AdjustmentMethod) -> Result<Interval, String> {
        let adjustment = self.adjustment(backend)?.respondent_adjustment.clone();
        let rows = &self.respondent_rows;
        let w_c: Vec<f64> = rows.iter().map(|&i| self.sample.design.weight[i]).collect();
        let w_s = subsample_weights(&w_c, self.config.scenario.phase2_selection_prob, &adjustment)
            .map_err(|e| e.to_string())?;
        let y: Vec<f64> = rows
            .iter()
            .map(|&i| self.outcome_all[i].expect("respondent outcome observed"))
            .collect();
        let strata: Vec<i64> = rows.iter().map(|&i| self.sample.design.stratum_id[i]).collect();
        let clusters: Vec<i64> = rows.iter().map(|&i| self.sample.design.cluster_id[i]).collect();
        self.taylor_interval(&y, &w_s, &strata, &clusters)
    }

    /// Tree-based multiple imputation of the phase-I sample.
    fn multiple_imputation(&mut self, backend: AdjustmentMethod) -> Result<Interval, String> {
        let cluster_as_column = backend == AdjustmentMethod::Bart;
        // populate the cache first; then borrow only the cache entry so the
        // other fields stay readable
        self.adjustment(backend)?;
        let adj = self.adjustments[Self::stage_tag(backend)].as_ref().map_err(Clone::clone)?;
        // propensity at every phase-I unit, from the (cached) probit chain
        let a_all: Vec<f64> = {
            match &adj.chain {
                Some(chain) => {
                    let features = propensity_features(
                        &self.aux_all,
                        &self.aux_names,
                        &self.sample.design.stratum_id,
                        cluster_as_column.then_some(&self.sample.design.cluster_id),
                        &self.log_w_all,
                        &self.sample.design.stratum_id,
                        &self.sample.design.cluster_id,
                    )
                    .map_err(|e| e.to_string())?;
                    let groups =
                        (!cluster_as_column).then_some(self.sample.design.cluster_id.as_slice());
                    let pi = chain
                        .predict(&features, groups, PredictAt::PosteriorMean)
                        .map_err(|e| e.to_string())?;
                    pi.iter()
                        .map(|&p| 1.0 / clip_propensity(p, self.config.adjustment.clip_floor))
                        .collect()
                }
                // every selected unit responded: unit adjustment everywhere
                None => vec![1.0; self.sample.design.n()],
            }
        };

        // imputation covariates: auxiliaries, stratum, cluster (column or
        // group), log weight, log adjustment
        let features_all = self.imputation_features(cluster_as_column, &a_all)?;
        let train = features_all.select_rows(&self.respondent_rows);
        let y_train: Vec<f64> = self
            .respondent_rows
            .iter()
            .map(|&i| self.outcome_all[i].expect("respondent outcome observed"))
            .collect();
        let groups_train: Vec<i64> = self
            .respondent_rows
            .iter()
            .map(|&i| self.sample.design.cluster_id[i])
            .collect();

        let (fit_tag, impute_tag) = if cluster_as_column {
            ("mi-bart-fit", "mi-bart-impute")
        } else {
            ("mi-rbart-fit", "mi-rbart-impute")
        };
        let mut fit_rng = stage_rng(self.rep_seed, fit_tag);
        let chain = if cluster_as_column {
            fit_bart(&train, &y_train, &self.config.bart, &mut fit_rng)
        } else {
            fit_rbart(&train, &y_train, &groups_train, &self.config.bart, &mut fit_rng)
        }
        .map_err(|e| e.to_string())?;

        let groups_all =
            (!cluster_as_column).then_some(self.sample.design.cluster_id.as_slice());
        let mut impute_rng = stage_rng(self.rep_seed, impute_tag);
        let completed = impute_datasets(
            &chain,
            &features_all,
            groups_all,
            &self.outcome_all,
            self.config.imputations,
            &mut impute_rng,
        )
        .map_err(|e| e.to_string())?;
        let result = mi_estimate_mean(&completed, &self.sample.design).map_err(|e| e.to_string())?;
        Ok(Interval { estimate: result.estimate, lower: result.lower, upper: result.upper })
    }

    fn imputation_features(
        &self,
        cluster_as_column: bool,
        a_all: &[f64],
    ) -> Result<Features, String> {
        let mut features = propensity_features(
            &self.aux_all,
            &self.aux_names,
            &self.sample.design.stratum_id,
            cluster_as_column.then_some(&self.sample.design.cluster_id),
            &self.log_w_all,
            &self.sample.design.stratum_id,
            &self.sample.design.cluster_id,
        )
        .map_err(|e| e.to_string())?;
        features
            .push_continuous("log_adjustment", a_all.iter().map(|a| a.ln()).collect())
            .map_err(|e| e.to_string())?;
        Ok(features)
    }
}
