//! Covariate matrix for the tree samplers: continuous columns split on
//! thresholds, categorical columns on level subsets.

use crate::dataset::{ColumnKind, Table};

use super::BartError;

#[derive(Debug, Clone)]
pub enum FeatureColumn {
    Continuous { name: String, values: Vec<f64> },
    Categorical { name: String, codes: Vec<u32>, n_levels: u32 },
}

impl FeatureColumn {
    pub fn name(&self) -> &str {
        match self {
            FeatureColumn::Continuous { name, .. } => name,
            FeatureColumn::Categorical { name, .. } => name,
        }
    }

    fn len(&self) -> usize {
        match self {
            FeatureColumn::Continuous { values, .. } => values.len(),
            FeatureColumn::Categorical { codes, .. } => codes.len(),
        }
    }
}

/// Column signature used to check that prediction inputs line up with the
/// training matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureSig {
    Continuous(String),
    Categorical(String, u32),
}

#[derive(Debug, Clone)]
pub struct Features {
    columns: Vec<FeatureColumn>,
    n_rows: usize,
}

impl Features {
    pub fn new(columns: Vec<FeatureColumn>) -> Result<Self, BartError> {
        if columns.is_empty() {
            return Err(BartError::NoFeatures);
        }
        let n_rows = columns[0].len();
        for c in &columns {
            if c.len() != n_rows {
                return Err(BartError::LengthMismatch);
            }
            if let FeatureColumn::Continuous { values, name } = c {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(BartError::NonFiniteInput(name.clone()));
                }
            }
            if let FeatureColumn::Categorical { codes, n_levels, name } = c {
                if codes.iter().any(|&v| v >= *n_levels) {
                    return Err(BartError::NonFiniteInput(name.clone()));
                }
            }
        }
        Ok(Features { columns, n_rows })
    }

    /// Build from a table: continuous and binary columns become continuous
    /// features, categorical columns keep their codes.
    pub fn from_table(table: &Table) -> Result<Self, BartError> {
        let mut columns = Vec::new();
        for col in table.columns() {
            let values: Result<Vec<f64>, BartError> = col
                .values
                .iter()
                .map(|v| v.ok_or_else(|| BartError::NonFiniteInput(col.name.clone())))
                .collect();
            let values = values?;
            match &col.kind {
                ColumnKind::Continuous | ColumnKind::Binary => {
                    columns.push(FeatureColumn::Continuous { name: col.name.clone(), values });
                }
                ColumnKind::Categorical { levels } => columns.push(FeatureColumn::Categorical {
                    name: col.name.clone(),
                    codes: values.iter().map(|&v| v as u32).collect(),
                    n_levels: levels.len() as u32,
                }),
            }
        }
        Features::new(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &FeatureColumn {
        &self.columns[j]
    }

    pub fn signature(&self) -> Vec<FeatureSig> {
        self.columns
            .iter()
            .map(|c| match c {
                FeatureColumn::Continuous { name, .. } => FeatureSig::Continuous(name.clone()),
                FeatureColumn::Categorical { name, n_levels, .. } => {
                    FeatureSig::Categorical(name.clone(), *n_levels)
                }
            })
            .collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Features {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                FeatureColumn::Continuous { name, values } => FeatureColumn::Continuous {
                    name: name.clone(),
                    values: rows.iter().map(|&r| values[r]).collect(),
                },
                FeatureColumn::Categorical { name, codes, n_levels } => {
                    FeatureColumn::Categorical {
                        name: name.clone(),
                        codes: rows.iter().map(|&r| codes[r]).collect(),
                        n_levels: *n_levels,
                    }
                }
            })
            .collect();
        Features { columns, n_rows: rows.len() }
    }

    /// Append a continuous column.
    pub fn push_continuous(&mut self, name: &str, values: Vec<f64>) -> Result<(), BartError> {
        if values.len() != self.n_rows {
            return Err(BartError::LengthMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BartError::NonFiniteInput(name.to_string()));
        }
        self.columns.push(FeatureColumn::Continuous { name: name.to_string(), values });
        Ok(())
    }

    /// Append a categorical column with codes in 0..n_levels.
    pub fn push_categorical(
        &mut self,
        name: &str,
        codes: Vec<u32>,
        n_levels: u32,
    ) -> Result<(), BartError> {
        if codes.len() != self.n_rows {
            return Err(BartError::LengthMismatch);
        }
        if codes.iter().any(|&c| c >= n_levels) {
            return Err(BartError::NonFiniteInput(name.to_string()));
        }
        self.columns.push(FeatureColumn::Categorical { name: name.to_string(), codes, n_levels });
        Ok(())
    }
}
