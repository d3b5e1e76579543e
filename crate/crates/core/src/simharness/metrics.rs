//! Bias, RMSE, coverage, and interval width over simulation replicates.

use crate::dataset::{ResultSet, Value};
use crate::sampling::Scenario;

use super::{HarnessError, Method, ReplicateOutcome};

#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub scenario: String,
    pub method: Method,
    pub replicates: usize,
    pub failures: usize,
    pub abs_bias_x100: f64,
    pub rmse_x100: f64,
    pub coverage_pct: f64,
    pub avg_width_x100: f64,
}

#[derive(Debug, Clone)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn row(&self, method: Method) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_result_set(&self) -> ResultSet {
        ResultSet {
            columns: vec![
                "scenario".into(),
                "method".into(),
                "replicates".into(),
                "failures".into(),
                "abs_bias_x100".into(),
                "rmse_x100".into(),
                "coverage_pct".into(),
                "avg_width_x100".into(),
            ],
            rows: self
                .rows
                .iter()
                .map(|r| {
                    vec![
                        Value::Text(r.scenario.clone()),
                        Value::Text(r.method.name().into()),
                        Value::Int(r.replicates as i64),
                        Value::Int(r.failures as i64),
                        Value::Real(r.abs_bias_x100),
                        Value::Real(r.rmse_x100),
                        Value::Real(r.coverage_pct),
                        Value::Real(r.avg_width_x100),
                    ]
                })
                .collect(),
        }
    }
}

/// Aggregate per-replicate results into the metrics table; all four
/// headline metrics are scaled by 100. Order of the outcomes does not
/// matter.
pub fn compute_metrics(
    outcomes: &[ReplicateOutcome],
    scenario: Scenario,
    methods: &[Method],
) -> Result<MetricsTable, HarnessError> {
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut errors = Vec::new();
        let mut widths = Vec::new();
        let mut covered = 0usize;
        let mut failures = 0usize;
        for outcome in outcomes {
            let Some((_, result)) = outcome.results.iter().find(|(m, _)| *m == method) else {
                continue;
            };
            match result {
                Ok(interval) => {
                    errors.push(interval.estimate - outcome.truth);
                    widths.push(interval.upper - interval.lower);
                    if interval.lower <= outcome.truth && outcome.truth <= interval.upper {
                        covered += 1;
                    }
                }
                Err(_) => failures += 1,
            }
        }
        if errors.is_empty() {
            return Err(HarnessError::NoSuccessfulReplicates(method.name().to_string()));
        }
        let n = errors.len() as f64;
        let bias = (errors.iter().sum::<f64>() / n).abs();
        let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
        rows.push(MetricsRow {
            scenario: scenario.name().to_string(),
            method,
            replicates: errors.len(),
            failures,
            abs_bias_x100: bias * 100.0,
            rmse_x100: rmse * 100.0,
            coverage_pct: 100.0 * covered as f64 / n,
            avg_width_x100: 100.0 * widths.iter().sum::<f64>() / n,
        });
    }
    Ok(MetricsTable { rows })
}
