//! Two-phase survey inference toolkit.
//!
//! Estimates finite-population means from a phase-II subsample two ways:
//! weighted analyses with propensity-based nonresponse adjustments (logistic,
//! CHAID cells, probit BART, probit rBART) and tree-based multiple imputation
//! of the phase-I sample, combined with Rubin's rules. A simulation harness
//! reproduces the four-scenario evaluation of those methods.

pub mod bart;
pub mod dataset;
pub mod estimators;
pub mod mi;
pub mod popgen;
pub mod propensity;
pub mod rng;
pub mod sampling;
pub mod simharness;
pub mod special;

pub use dataset::{
    bind_design, load_table, write_results, ColumnKind, DatasetError, DesignFrame, DesignRole,
    OutputFormat, ResultSet, Table, Value,
};
