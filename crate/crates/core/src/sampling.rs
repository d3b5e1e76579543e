//! Two-phase sample selection: PPS cluster sampling with base weights,
//! phase-I unit response, phase-II Bernoulli subsampling, and the four
//! scenario-specific phase-II response models.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::dataset::{Column, ColumnKind, DatasetError, DesignFrame, Table};
use crate::popgen::Population;
use crate::propensity::{fit_logistic, PropensityError};
use crate::rng::stage_rng;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("stratum {stratum} has {available} clusters, cannot draw {requested}")]
    TooManyDraws { stratum: usize, available: usize, requested: usize },
    #[error("missing covariate {0}")]
    MissingCovariate(String),
    #[error("selection probability must lie in (0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("phase-I weight adjustment failed: {0}")]
    WeightAdjustment(#[from] PropensityError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Phase-II response scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    S1,
    S2,
    S3,
    S4,
}

impl Scenario {
    /// (continuous, binary) covariate dimensions of the scenario.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Scenario::S1 => (2, 3),
            _ => (10, 10),
        }
    }

    pub fn parse(s: &str) -> Option<Scenario> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Some(Scenario::S1),
            "s2" => Some(Scenario::S2),
            "s3" => Some(Scenario::S3),
            "s4" => Some(Scenario::S4),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
            Scenario::S3 => "s3",
            Scenario::S4 => "s4",
        }
    }
}

/// Scenario parameters for one simulation run.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n_continuous: usize,
    pub n_binary: usize,
    pub phase2_selection_prob: f64,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        let (l1, l2) = scenario.dims();
        ScenarioConfig { scenario, n_continuous: l1, n_binary: l2, phase2_selection_prob: 0.5 }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        let need_x = if self.scenario == Scenario::S4 { 3 } else { 2 };
        if self.n_continuous < need_x {
            return Err(SamplingError::MissingCovariate(format!("x{need_x}")));
        }
        if self.n_binary < 3 {
            return Err(SamplingError::MissingCovariate("z3".into()));
        }
        if !(self.phase2_selection_prob > 0.0 && self.phase2_selection_prob <= 1.0) {
            return Err(SamplingError::InvalidProbability(self.phase2_selection_prob));
        }
        Ok(())
    }
}

/// Options for the full two-phase draw.
#[derive(Debug, Clone)]
pub struct TwoPhaseOptions {
    pub draws_per_stratum: Vec<usize>,
    /// Multiply base weights by an inverse fitted phase-I response
    /// propensity (logistic on z1..z3). Off = base weights only.
    pub adjust_phase1_weights: bool,
}

impl Default for TwoPhaseOptions {
    fn default() -> Self {
        TwoPhaseOptions { draws_per_stratum: vec![10, 8, 6, 4], adjust_phase1_weights: true }
    }
}

/// A drawn two-phase sample: the phase-I respondents with covariates, the
/// outcome masked outside phase-II respondents, the design frame carrying
/// phase-I weights, and diagnostics.
#[derive(Debug, Clone)]
pub struct TwoPhaseSample {
    pub table: Table,
    pub design: DesignFrame,
    /// True scenario propensity per phase-I respondent (diagnostics only).
    pub true_phase2_propensity: Vec<f64>,
    /// Population row of each phase-I respondent.
    pub unit_index: Vec<usize>,
}

pub fn logit_inv(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// Phase-I response probability of a unit.
pub fn phase1_response_prob(z1: f64, z2: f64, z3: f64) -> f64 {
    logit_inv(-1.0 + 2.0 * z1 + 2.0 * z2 - z3)
}

/// True phase-II response propensity under a scenario. `x` and `z` hold the
/// unit's covariates in declaration order.
pub fn scenario_propensity(
    config: &ScenarioConfig,
    x: &[f64],
    z: &[f64],
) -> Result<f64, SamplingError> {
    let need_x = if config.scenario == Scenario::S4 { 3 } else { 2 };
    if x.len() < need_x {
        return Err(SamplingError::MissingCovariate(format!("x{need_x}")));
    }
    if z.len() < 3 {
        return Err(SamplingError::MissingCovariate("z3".into()));
    }
    let base = 1.0 + 2.0 * x[0] + 2.0 * z[0] + z[1] - 2.0 * z[2] - x[0] * z[0];
    let eta = match config.scenario {
        Scenario::S1 | Scenario::S2 => base + 1.5 * x[1] * x[1],
        Scenario::S3 => base - 1.5 * x[1] * x[1],
        Scenario::S4 => base - 1.5 * x[2] * x[2],
    };
    Ok(logit_inv(eta))
}

/// One selected cluster with its base weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectedCluster {
    pub cluster_id: i64,
    pub weight: f64,
}

/// PPS cluster selection over a population, `draws_per_stratum[h]` clusters
/// from stratum h.
pub fn pps_select_clusters(
    pop: &Population,
    draws_per_stratum: &[usize],
    rng: &mut impl Rng,
) -> Result<Vec<SelectedCluster>, SamplingError> {
    let n_strata = pop.cluster_stratum.iter().collect::<std::collections::BTreeSet<_>>().len();
    if draws_per_stratum.len() != n_strata {
        return Err(SamplingError::TooManyDraws {
            stratum: draws_per_stratum.len(),
            available: n_strata,
            requested: draws_per_stratum.len(),
        });
    }
    let mut by_stratum: Vec<Vec<(i64, f64)>> = vec![Vec::new(); n_strata];
    for (c, (&h, &size)) in pop.cluster_stratum.iter().zip(&pop.cluster_sizes).enumerate() {
        by_stratum[h as usize].push((c as i64, size as f64));
    }
    pps_select_from_sizes(&by_stratum, draws_per_stratum, rng)
}

/// PPS selection from explicit (cluster id, size) lists per stratum.
/// Certainty clusters (inclusion probability >= 1) are removed first and
/// the remainder renormalized; the rest are drawn by systematic PPS on a
/// uniformly random ordering, so each stratum yields exactly its requested
/// count and every weight is the inverse of the final inclusion probability.
pub fn pps_select_from_sizes(
    by_stratum: &[Vec<(i64, f64)>],
    draws_per_stratum: &[usize],
    rng: &mut impl Rng,
) -> Result<Vec<SelectedCluster>, SamplingError> {
    let mut selected = Vec::new();
    for (h, clusters) in by_stratum.iter().enumerate() {
        let requested = draws_per_stratum[h];
        if requested > clusters.len() {
            return Err(SamplingError::TooManyDraws {
                stratum: h,
                available: clusters.len(),
                requested,
            });
        }
        let mut remaining: Vec<(i64, f64)> = clusters.clone();
        let mut n = requested;
        // peel off certainty selections until none remain
        loop {
            if n == 0 {
                remaining.clear();
                break;
            }
            let total: f64 = remaining.iter().map(|(_, s)| s).sum();
            let certain: Vec<usize> = remaining
                .iter()
                .enumerate()
                .filter(|(_, (_, s))| n as f64 * s / total >= 1.0)
                .map(|(i, _)| i)
                .collect();
            if certain.is_empty() {
                break;
            }
            for &i in certain.iter().rev() {
                let (id, _) = remaining.remove(i);
                selected.push(SelectedCluster { cluster_id: id, weight: 1.0 });
                n -= 1;
            }
        }
        if n > 0 {
            let total: f64 = remaining.iter().map(|(_, s)| s).sum();
            let mut probs: Vec<f64> =
                remaining.iter().map(|(_, s)| n as f64 * s / total).collect();
            let sum: f64 = probs.iter().sum();
            for p in probs.iter_mut() {
                *p *= n as f64 / sum;
            }
            let mut order: Vec<usize> = (0..remaining.len()).collect();
            order.shuffle(rng);
            let u: f64 = rng.random();
            let mut r = u;
            let mut cum = 0.0;
            let mut count = 0;
            for &i in &order {
                let p = probs[i];
                if cum <= r && r < cum + p {
                    selected.push(SelectedCluster {
                        cluster_id: remaining[i].0,
                        weight: 1.0 / p,
                    });
                    r += 1.0;
                    count += 1;
                }
                cum += p;
            }
            debug_assert_eq!(count, n, "systematic walk missed a selection");
        }
    }
    selected.sort_by_key(|c| c.cluster_id);
    Ok(selected)
}

/// Independent phase-I response draws for the given population rows.
pub fn phase1_response(
    pop: &Population,
    units: &[usize],
    rng: &mut impl Rng,
) -> Result<Vec<u8>, SamplingError> {
    let z1 = pop
        .table
        .complete_values("z1")
        .map_err(|_| SamplingError::MissingCovariate("z1".into()))?;
    let z2 = pop
        .table
        .complete_values("z2")
        .map_err(|_| SamplingError::MissingCovariate("z2".into()))?;
    let z3 = pop
        .table
        .complete_values("z3")
        .map_err(|_| SamplingError::MissingCovariate("z3".into()))?;
    Ok(units
        .iter()
        .map(|&i| {
            let p = phase1_response_prob(z1[i], z2[i], z3[i]);
            (rng.random::<f64>() < p) as u8
        })
        .collect())
}

/// i.i.d. Bernoulli(p) phase-II selection indicators.
pub fn phase2_select(n: usize, p: f64, rng: &mut impl Rng) -> Result<Vec<u8>, SamplingError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SamplingError::InvalidProbability(p));
    }
    Ok((0..n).map(|_| (rng.random::<f64>() < p) as u8).collect())
}

/// Compose the full two-phase draw for one replicate seed.
pub fn draw_two_phase_sample(
    pop: &Population,
    config: &ScenarioConfig,
    seed: u64,
    opts: &TwoPhaseOptions,
) -> Result<TwoPhaseSample, SamplingError> {
    config.validate()?;
    let mut rng_pps = stage_rng(seed, "pps");
    let selected = pps_select_clusters(pop, &opts.draws_per_stratum, &mut rng_pps)?;
    let mut cluster_weight = std::collections::BTreeMap::new();
    for sc in &selected {
        cluster_weight.insert(sc.cluster_id, sc.weight);
    }

    // everyone in a selected cluster is invited
    let invited: Vec<usize> =
        (0..pop.n_units()).filter(|&i| cluster_weight.contains_key(&pop.cluster[i])).collect();

    let mut rng_resp = stage_rng(seed, "phase1-response");
    let responded = phase1_response(pop, &invited, &mut rng_resp)?;

    // phase-I weights: base weight, optionally divided by a fitted
    // response propensity from the invited sample
    let weights_by_invited: Vec<f64> = if opts.adjust_phase1_weights {
        let z_cols: Vec<Vec<f64>> = ["z1", "z2", "z3"]
            .iter()
            .map(|name| {
                let all = pop.table.complete_values(name).expect("checked above");
                invited.iter().map(|&i| all[i]).collect()
            })
            .collect();
        let fit = fit_logistic(&z_cols, &responded)?;
        let pi = fit.predict(&z_cols);
        invited
            .iter()
            .zip(&pi)
            .map(|(&i, &p)| cluster_weight[&pop.cluster[i]] / p.max(1e-6))
            .collect()
    } else {
        invited.iter().map(|&i| cluster_weight[&pop.cluster[i]]).collect()
    };

    let respondent_rows: Vec<usize> = invited
        .iter()
        .zip(&responded)
        .filter(|(_, &r)| r == 1)
        .map(|(&i, _)| i)
        .collect();
    let respondent_weights: Vec<f64> = weights_by_invited
        .iter()
        .zip(&responded)
        .filter(|(_, &r)| r == 1)
        .map(|(&w, _)| w)
        .collect();
    let n1 = respondent_rows.len();

    let mut rng_sel = stage_rng(seed, "phase2-select");
    let p2_selected = phase2_select(n1, config.phase2_selection_prob, &mut rng_sel)?;

    // true phase-II propensities and response draws
    let x_cols: Vec<Vec<f64>> = (1..=config.n_continuous)
        .map(|l| pop.table.complete_values(&format!("x{l}")))
        .collect::<Result<_, _>>()
        .map_err(|_| SamplingError::MissingCovariate("x".into()))?;
    let z_cols: Vec<Vec<f64>> = (1..=config.n_binary)
        .map(|l| pop.table.complete_values(&format!("z{l}")))
        .collect::<Result<_, _>>()
        .map_err(|_| SamplingError::MissingCovariate("z".into()))?;

    let mut rng_p2 = stage_rng(seed, "phase2-response");
    let mut propensity = Vec::with_capacity(n1);
    let mut p2_respondent = Vec::with_capacity(n1);
    for (k, &i) in respondent_rows.iter().enumerate() {
        let x: Vec<f64> = x_cols.iter().map(|c| c[i]).collect();
        let z: Vec<f64> = z_cols.iter().map(|c| c[i]).collect();
        let p = scenario_propensity(config, &x, &z)?;
        propensity.push(p);
        let responds = p2_selected[k] == 1 && rng_p2.random::<f64>() < p;
        p2_respondent.push(responds as u8);
    }

    // assemble the phase-I respondent table with the outcome masked
    let y_all = pop.table.complete_values("y")?;
    let mut columns = Vec::new();
    for (l, col) in x_cols.iter().enumerate() {
        columns.push(Column::continuous(
            &format!("x{}", l + 1),
            respondent_rows.iter().map(|&i| col[i]).collect(),
        ));
    }
    for (l, col) in z_cols.iter().enumerate() {
        columns.push(Column::binary(
            &format!("z{}", l + 1),
            respondent_rows.iter().map(|&i| col[i]).collect(),
        ));
    }
    columns.push(Column {
        name: "y".into(),
        kind: ColumnKind::Continuous,
        values: respondent_rows
            .iter()
            .enumerate()
            .map(|(k, &i)| if p2_respondent[k] == 1 { Some(y_all[i]) } else { None })
            .collect(),
    });
    let table = Table::new(columns)?;
    let design = DesignFrame::new(
        respondent_rows.iter().map(|&i| pop.stratum[i]).collect(),
        respondent_rows.iter().map(|&i| pop.cluster[i]).collect(),
        respondent_weights,
        p2_selected,
        p2_respondent,
    )?;

    Ok(TwoPhaseSample {
        table,
        design,
        true_phase2_propensity: propensity,
        unit_index: respondent_rows,
    })
}
