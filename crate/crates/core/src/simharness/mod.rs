//! Simulation orchestration: replicated two-phase draws over scenarios
//! S1-S4, the seven estimation methods, and the bias/RMSE/coverage/width
//! metrics, plus the real-data analysis pipeline behind the CLI.

use rayon::prelude::*;
use thiserror::Error;

use crate::bart::{BartError, BartOptions};
use crate::dataset::DatasetError;
use crate::estimators::EstimatorError;
use crate::mi::MiError;
use crate::popgen::{PopGenError, PopulationConfig};
use crate::propensity::{AdjustmentOptions, PropensityError};
use crate::sampling::{SamplingError, Scenario, ScenarioConfig, TwoPhaseOptions};

mod analyze;
mod metrics;
mod replicate;

pub use analyze::{analyze_dataset, AnalysisOutput, AnalyzeConfig};
pub use metrics::{compute_metrics, MetricsRow, MetricsTable};
pub use replicate::{run_replicate, Interval, ReplicateOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("no successful replicates for {0}")]
    NoSuccessfulReplicates(String),
    #[error(transparent)]
    PopGen(#[from] PopGenError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Propensity(#[from] PropensityError),
    #[error(transparent)]
    Bart(#[from] BartError),
    #[error(transparent)]
    Mi(#[from] MiError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Estimation method arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Benchmark,
    WtLgm,
    WtChaid,
    WtBart,
    WtRbart,
    MiBart,
    MiRbart,
}

impl Method {
    pub fn all() -> Vec<Method> {
        vec![
            Method::Benchmark,
            Method::WtLgm,
            Method::WtChaid,
            Method::WtBart,
            Method::WtRbart,
            Method::MiBart,
            Method::MiRbart,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Benchmark => "benchmark",
            Method::WtLgm => "wt-lgm",
            Method::WtChaid => "wt-chaid",
            Method::WtBart => "wt-bart",
            Method::WtRbart => "wt-rbart",
            Method::MiBart => "mi-bart",
            Method::MiRbart => "mi-rbart",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().as_str() {
            "benchmark" => Some(Method::Benchmark),
            "wt-lgm" => Some(Method::WtLgm),
            "wt-chaid" => Some(Method::WtChaid),
            "wt-bart" => Some(Method::WtBart),
            "wt-rbart" => Some(Method::WtRbart),
            "mi-bart" => Some(Method::MiBart),
            "mi-rbart" => Some(Method::MiRbart),
            _ => None,
        }
    }

    pub fn is_mi(&self) -> bool {
        matches!(self, Method::MiBart | Method::MiRbart)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Built-in run profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Scaled-down check: 100 replicates, 50 trees, 200 kept draws, D = 10.
    Desk,
    /// Full evaluation: 500 replicates, 100 trees, 1000 kept draws, D = 10.
    Paper,
}

impl Profile {
    pub fn parse(s: &str) -> Option<Profile> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Some(Profile::Desk),
            "paper" => Some(Profile::Paper),
            _ => None,
        }
    }
}

/// Configuration of one simulation run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub imputations: usize,
    pub seed: u64,
    pub bart: BartOptions,
    pub adjustment: AdjustmentOptions,
    pub two_phase: TwoPhaseOptions,
    pub population: PopulationConfig,
}

impl RunConfig {
    pub fn new(scenario: Scenario, profile: Profile) -> RunConfig {
        let (replicates, n_trees, n_keep) = match profile {
            Profile::Desk => (100, 50, 200),
            Profile::Paper => (500, 100, 1000),
        };
        let bart = BartOptions { n_trees, n_keep, ..Default::default() };
        let mut adjustment = AdjustmentOptions::default();
        adjustment.bart = bart.clone();
        RunConfig {
            scenario: ScenarioConfig::new(scenario),
            methods: Method::all(),
            replicates,
            imputations: 10,
            seed: 20240601,
            bart,
            adjustment,
            two_phase: TwoPhaseOptions::default(),
            population: PopulationConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.replicates == 0 {
            return Err(HarnessError::InvalidConfig("replicates must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::InvalidConfig("no methods requested".into()));
        }
        if self.methods.iter().any(Method::is_mi) {
            if self.imputations < 2 {
                return Err(HarnessError::InvalidConfig(
                    "MI methods need at least 2 imputations".into(),
                ));
            }
            if self.imputations > self.bart.n_keep {
                return Err(HarnessError::InvalidConfig(format!(
                    "imputations ({}) exceed kept draws ({})",
                    self.imputations, self.bart.n_keep
                )));
            }
        }
        self.scenario.validate().map_err(HarnessError::Sampling)?;
        self.bart.validate().map_err(HarnessError::Bart)?;
        Ok(())
    }
}

/// Run every replicate (in parallel), aggregate the metrics.
pub fn run_simulation(config: &RunConfig) -> Result<MetricsTable, HarnessError> {
    config.validate()?;
    let outcomes: Vec<ReplicateOutcome> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, r))
        .collect();
    compute_metrics(&outcomes, config.scenario.scenario, &config.methods)
}
