//! Tabular data model, survey-design frame validation, and file I/O shared
//! by the rest of the crate.
//!
//! A [`Table`] is an ordered set of typed columns of equal length with an
//! explicit missing marker. [`bind_design`] splits the survey-design columns
//! (stratum, cluster, weight, phase-II indicators) off into a validated
//! [`DesignFrame`], leaving the covariates behind.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: String, message: String },
    #[error("empty file: {0}")]
    EmptyFile(String),
    #[error("columns have unequal lengths")]
    LengthMismatch,
    #[error("duplicate column name: {0}")]
    DuplicateColumn(String),
    #[error("invalid value in column {column} at row {row}: {message}")]
    InvalidValue { row: usize, column: String, message: String },
    #[error("invalid design role: {0}")]
    InvalidRole(String),
    #[error("non-positive weight at row {0}")]
    NonPositiveWeight(usize),
    #[error("cluster {0} spans more than one stratum")]
    ClusterSpansStrata(i64),
    #[error("phase-II respondent not selected at row {0}")]
    RespondentNotSelected(usize),
    #[error("missing covariate value in column {column} at row {row}")]
    MissingCovariate { row: usize, column: String },
    #[error("no records to write")]
    EmptyRecords,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Column type, with declared levels for categorical columns.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnKind {
    Continuous,
    Binary,
    Categorical { levels: Vec<String> },
}

/// A single typed column; `None` is the missing marker.
#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<Option<f64>>,
}

impl Column {
    pub fn continuous(name: &str, values: Vec<f64>) -> Self {
        Column {
            name: name.to_string(),
            kind: ColumnKind::Continuous,
            values: values.into_iter().map(Some).collect(),
        }
    }

    pub fn binary(name: &str, values: Vec<f64>) -> Self {
        Column {
            name: name.to_string(),
            kind: ColumnKind::Binary,
            values: values.into_iter().map(Some).collect(),
        }
    }

    fn check(&self) -> Result<(), DatasetError> {
        for (i, v) in self.values.iter().enumerate() {
            let Some(v) = v else { continue };
            if !v.is_finite() {
                return Err(DatasetError::InvalidValue {
                    row: i + 1,
                    column: self.name.clone(),
                    message: "non-finite value".into(),
                });
            }
            match &self.kind {
                ColumnKind::Continuous => {}
                ColumnKind::Binary => {
                    if *v != 0.0 && *v != 1.0 {
                        return Err(DatasetError::InvalidValue {
                            row: i + 1,
                            column: self.name.clone(),
                            message: format!("binary column holds {v}"),
                        });
                    }
                }
                ColumnKind::Categorical { levels } => {
                    let code = *v as usize;
                    if v.fract() != 0.0 || *v < 0.0 || code >= levels.len() {
                        return Err(DatasetError::InvalidValue {
                            row: i + 1,
                            column: self.name.clone(),
                            message: format!("categorical code {v} outside declared levels"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// An immutable column-typed table.
#[derive(Debug, Clone)]
pub struct Table {
    columns: Vec<Column>,
    n_rows: usize,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Result<Self, DatasetError> {
        if columns.is_empty() || columns[0].values.is_empty() {
            return Err(DatasetError::EmptyFile("table with no data".into()));
        }
        let n_rows = columns[0].values.len();
        let mut seen = std::collections::BTreeSet::new();
        for c in &columns {
            if c.values.len() != n_rows {
                return Err(DatasetError::LengthMismatch);
            }
            if !seen.insert(c.name.clone()) {
                return Err(DatasetError::DuplicateColumn(c.name.clone()));
            }
            c.check()?;
        }
        Ok(Table { columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Values of a column that must be complete, as plain reals.
    pub fn complete_values(&self, name: &str) -> Result<Vec<f64>, DatasetError> {
        let col = self
            .column(name)
            .ok_or_else(|| DatasetError::SchemaMismatch(format!("no column {name}")))?;
        col.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or(DatasetError::MissingCovariate { row: i + 1, column: name.to_string() })
            })
            .collect()
    }

    /// Restrict the table to the given row indices.
    pub fn select_rows(&self, rows: &[usize]) -> Table {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                kind: c.kind.clone(),
                values: rows.iter().map(|&r| c.values[r]).collect(),
            })
            .collect();
        Table { columns, n_rows: rows.len() }
    }
}

/// Survey design variables for each unit of a sample.
#[derive(Debug, Clone)]
pub struct DesignFrame {
    pub stratum_id: Vec<i64>,
    pub cluster_id: Vec<i64>,
    pub weight: Vec<f64>,
    pub phase2_selected: Vec<u8>,
    pub phase2_respondent: Vec<u8>,
}

impl DesignFrame {
    pub fn new(
        stratum_id: Vec<i64>,
        cluster_id: Vec<i64>,
        weight: Vec<f64>,
        phase2_selected: Vec<u8>,
        phase2_respondent: Vec<u8>,
    ) -> Result<Self, DatasetError> {
        let n = stratum_id.len();
        if [cluster_id.len(), weight.len(), phase2_selected.len(), phase2_respondent.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(DatasetError::LengthMismatch);
        }
        let mut cluster_stratum: BTreeMap<i64, i64> = BTreeMap::new();
        for i in 0..n {
            if !(weight[i] > 0.0 && weight[i].is_finite()) {
                return Err(DatasetError::NonPositiveWeight(i + 1));
            }
            match cluster_stratum.get(&cluster_id[i]) {
                Some(&h) if h != stratum_id[i] => {
                    return Err(DatasetError::ClusterSpansStrata(cluster_id[i]))
                }
                None => {
                    cluster_stratum.insert(cluster_id[i], stratum_id[i]);
                }
                _ => {}
            }
            if phase2_respondent[i] == 1 && phase2_selected[i] != 1 {
                return Err(DatasetError::RespondentNotSelected(i + 1));
            }
        }
        Ok(DesignFrame { stratum_id, cluster_id, weight, phase2_selected, phase2_respondent })
    }

    pub fn n(&self) -> usize {
        self.stratum_id.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignFrame {
        DesignFrame {
            stratum_id: rows.iter().map(|&r| self.stratum_id[r]).collect(),
            cluster_id: rows.iter().map(|&r| self.cluster_id[r]).collect(),
            weight: rows.iter().map(|&r| self.weight[r]).collect(),
            phase2_selected: rows.iter().map(|&r| self.phase2_selected[r]).collect(),
            phase2_respondent: rows.iter().map(|&r| self.phase2_respondent[r]).collect(),
        }
    }
}

/// Design role a table column can play in [`bind_design`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignRole {
    Stratum,
    Cluster,
    Weight,
    Phase2Selected,
    Phase2Respondent,
}

/// Read a CSV file against a declared schema. Empty fields and the literal
/// token `NA` become the missing marker.
pub fn load_table(path: &Path, schema: &[(String, ColumnKind)]) -> Result<Table, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| DatasetError::EmptyFile(e.to_string()))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let expected: Vec<&str> = schema.iter().map(|(n, _)| n.as_str()).collect();
    if headers.len() != expected.len() || headers.iter().map(String::as_str).ne(expected.iter().copied()) {
        return Err(DatasetError::SchemaMismatch(format!(
            "header [{}] does not match schema [{}]",
            headers.join(","),
            expected.join(",")
        )));
    }
    let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); schema.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DatasetError::Parse {
            row: row_idx + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        for (col_idx, field) in record.iter().enumerate() {
            let (name, kind) = &schema[col_idx];
            let parsed = parse_field(field, kind).map_err(|message| DatasetError::Parse {
                row: row_idx + 1,
                column: name.clone(),
                message,
            })?;
            values[col_idx].push(parsed);
        }
    }
    if values[0].is_empty() {
        return Err(DatasetError::EmptyFile(path.display().to_string()));
    }
    let columns = schema
        .iter()
        .zip(values)
        .map(|((name, kind), values)| Column { name: name.clone(), kind: kind.clone(), values })
        .collect();
    Table::new(columns)
}

fn parse_field(field: &str, kind: &ColumnKind) -> Result<Option<f64>, String> {
    if field.is_empty() || field == "NA" {
        return Ok(None);
    }
    match kind {
        ColumnKind::Continuous => field
            .parse::<f64>()
            .map(Some)
            .map_err(|_| format!("expected a real number, found {field:?}")),
        ColumnKind::Binary => match field.parse::<f64>() {
            Ok(v) if v == 0.0 || v == 1.0 => Ok(Some(v)),
            _ => Err(format!("expected 0 or 1, found {field:?}")),
        },
        ColumnKind::Categorical { levels } => levels
            .iter()
            .position(|l| l == field)
            .map(|i| Some(i as f64))
            .ok_or_else(|| format!("level {field:?} not in declared set")),
    }
}

/// Scan a CSV file and build a schema: columns whose non-missing values are
/// all 0/1 become binary, all-numeric columns continuous, anything else
/// categorical with the sorted distinct values as levels.
pub fn infer_schema(path: &Path) -> Result<Vec<(String, ColumnKind)>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| DatasetError::EmptyFile(e.to_string()))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    if headers.is_empty() {
        return Err(DatasetError::EmptyFile(path.display().to_string()));
    }
    let mut numeric = vec![true; headers.len()];
    let mut binary = vec![true; headers.len()];
    let mut levels: Vec<std::collections::BTreeSet<String>> = vec![Default::default(); headers.len()];
    let mut any_rows = false;
    for record in reader.records() {
        let record = record.map_err(|e| DatasetError::Parse {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?;
        any_rows = true;
        for (j, field) in record.iter().enumerate() {
            if field.is_empty() || field == "NA" {
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) => {
                    if v != 0.0 && v != 1.0 {
                        binary[j] = false;
                    }
                }
                Err(_) => {
                    numeric[j] = false;
                    binary[j] = false;
                }
            }
            levels[j].insert(field.to_string());
        }
    }
    if !any_rows {
        return Err(DatasetError::EmptyFile(path.display().to_string()));
    }
    Ok(headers
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let kind = if binary[j] {
                ColumnKind::Binary
            } else if numeric[j] {
                ColumnKind::Continuous
            } else {
                ColumnKind::Categorical { levels: levels[j].iter().cloned().collect() }
            };
            (name, kind)
        })
        .collect())
}

/// Split design columns off a table into a validated [`DesignFrame`].
///
/// Missing values are rejected everywhere except in `outcome`, which is the
/// only column allowed to carry the missing marker.
pub fn bind_design(
    table: &Table,
    roles: &[(&str, DesignRole)],
    outcome: Option<&str>,
) -> Result<(DesignFrame, Table), DatasetError> {
    let mut by_role: BTreeMap<&str, &str> = BTreeMap::new();
    for role in [
        DesignRole::Stratum,
        DesignRole::Cluster,
        DesignRole::Weight,
        DesignRole::Phase2Selected,
        DesignRole::Phase2Respondent,
    ] {
        let mut found = roles.iter().filter(|(_, r)| *r == role).map(|(n, _)| *n);
        let name = found
            .next()
            .ok_or_else(|| DatasetError::InvalidRole(format!("missing role {role:?}")))?;
        if found.next().is_some() {
            return Err(DatasetError::InvalidRole(format!("duplicate role {role:?}")));
        }
        if table.column(name).is_none() {
            return Err(DatasetError::InvalidRole(format!("column {name} not in table")));
        }
        by_role.insert(role_key(role), name);
    }

    let id_column = |role: DesignRole| -> Result<Vec<i64>, DatasetError> {
        let name = by_role[role_key(role)];
        let col = table.column(name).unwrap();
        match &col.kind {
            ColumnKind::Continuous | ColumnKind::Binary => {
                table.complete_values(name)?.iter().map(|v| to_integer(*v, name)).collect()
            }
            ColumnKind::Categorical { .. } => {
                Ok(table.complete_values(name)?.iter().map(|v| *v as i64).collect())
            }
        }
    };

    let stratum_id = id_column(DesignRole::Stratum)?;
    let cluster_id = id_column(DesignRole::Cluster)?;
    let weight_name = by_role[role_key(DesignRole::Weight)];
    if table.column(weight_name).unwrap().kind != ColumnKind::Continuous {
        return Err(DatasetError::InvalidRole(format!("weight column {weight_name} must be continuous")));
    }
    let weight = table.complete_values(weight_name)?;
    let indicator = |role: DesignRole| -> Result<Vec<u8>, DatasetError> {
        let name = by_role[role_key(role)];
        table
            .complete_values(name)?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if *v == 0.0 || *v == 1.0 {
                    Ok(*v as u8)
                } else {
                    Err(DatasetError::InvalidValue {
                        row: i + 1,
                        column: name.to_string(),
                        message: format!("indicator holds {v}"),
                    })
                }
            })
            .collect()
    };
    let phase2_selected = indicator(DesignRole::Phase2Selected)?;
    let phase2_respondent = indicator(DesignRole::Phase2Respondent)?;
    let design =
        DesignFrame::new(stratum_id, cluster_id, weight, phase2_selected, phase2_respondent)?;

    let design_names: Vec<&str> = by_role.values().copied().collect();
    let mut covariates = Vec::new();
    for col in table.columns() {
        if design_names.contains(&col.name.as_str()) {
            continue;
        }
        if Some(col.name.as_str()) != outcome {
            if let Some(row) = col.values.iter().position(|v| v.is_none()) {
                return Err(DatasetError::MissingCovariate { row: row + 1, column: col.name.clone() });
            }
        }
        covariates.push(col.clone());
    }
    let covariates = Table::new(covariates)?;
    Ok((design, covariates))
}

fn role_key(role: DesignRole) -> &'static str {
    match role {
        DesignRole::Stratum => "stratum",
        DesignRole::Cluster => "cluster",
        DesignRole::Weight => "weight",
        DesignRole::Phase2Selected => "phase2_selected",
        DesignRole::Phase2Respondent => "phase2_respondent",
    }
}

fn to_integer(v: f64, name: &str) -> Result<i64, DatasetError> {
    if v.fract() == 0.0 && v.abs() < 2f64.powi(53) {
        Ok(v as i64)
    } else {
        Err(DatasetError::InvalidRole(format!("column {name} holds non-integer id {v}")))
    }
}

/// One output cell of a result set.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Text(String),
}

/// A rectangular set of records with a fixed column order, ready to be
/// written to CSV or JSON.
#[derive(Debug, Clone)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Render a real with 11 significant digits, enough to reload it with a
/// relative error no worse than 1e-10.
fn fmt_real(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v:.10e}")
    }
}

/// Write records to `path` with a deterministic column order. Writing the
/// same records twice produces byte-identical files.
pub fn write_results(set: &ResultSet, path: &Path, format: OutputFormat) -> Result<(), DatasetError> {
    if set.rows.is_empty() {
        return Err(DatasetError::EmptyRecords);
    }
    let mut out = String::new();
    match format {
        OutputFormat::Csv => {
            out.push_str(&set.columns.iter().map(|c| csv_quote(c)).collect::<Vec<_>>().join(","));
            out.push('\n');
            for row in &set.rows {
                let rendered: Vec<String> = row
                    .iter()
                    .map(|v| match v {
                        Value::Int(i) => i.to_string(),
                        Value::Real(r) => fmt_real(*r),
                        Value::Text(t) => csv_quote(t),
                    })
                    .collect();
                out.push_str(&rendered.join(","));
                out.push('\n');
            }
        }
        OutputFormat::Json => {
            let objects: Vec<serde_json::Value> = set
                .rows
                .iter()
                .map(|row| {
                    let mut obj = serde_json::Map::new();
                    for (name, v) in set.columns.iter().zip(row) {
                        let jv = match v {
                            Value::Int(i) => serde_json::Value::from(*i),
                            Value::Real(r) => serde_json::Value::from(*r),
                            Value::Text(t) => serde_json::Value::from(t.clone()),
                        };
                        obj.insert(name.clone(), jv);
                    }
                    serde_json::Value::Object(obj)
                })
                .collect();
            write!(out, "{}", serde_json::Value::Array(objects)).expect("string write");
            out.push('\n');
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn xy_schema() -> Vec<(String, ColumnKind)> {
        vec![
            ("x1".into(), ColumnKind::Continuous),
            ("z1".into(), ColumnKind::Binary),
            ("y".into(), ColumnKind::Continuous),
        ]
    }

    #[test]
    fn load_complete_rows() {
        let f = write_csv("x1,z1,y\n1.5,0,2.0\n-0.5,1,3.0\n2.25,1,0.0\n");
        let t = load_table(f.path(), &xy_schema()).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.columns().len(), 3);
        assert_eq!(t.complete_values("x1").unwrap(), vec![1.5, -0.5, 2.25]);
    }

    #[test]
    fn na_token_becomes_missing() {
        let f = write_csv("x1,z1,y\n1.5,NA,2.0\n");
        let t = load_table(f.path(), &xy_schema()).unwrap();
        assert_eq!(t.column("z1").unwrap().values[0], None);
    }

    #[test]
    fn binary_out_of_range_is_parse_error() {
        let f = write_csv("x1,z1,y\n1.0,0,2.0\n1.0,2,3.0\n");
        let err = load_table(f.path(), &xy_schema()).unwrap_err();
        match err {
            DatasetError::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "z1");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn header_mismatch_is_schema_error() {
        let f = write_csv("x1,z9,y\n1.0,0,2.0\n");
        assert!(matches!(load_table(f.path(), &xy_schema()), Err(DatasetError::SchemaMismatch(_))));
    }

    #[test]
    fn empty_data_is_empty_file() {
        let f = write_csv("x1,z1,y\n");
        assert!(matches!(load_table(f.path(), &xy_schema()), Err(DatasetError::EmptyFile(_))));
    }

    fn design_table(weights: Vec<f64>, clusters: Vec<f64>, strata: Vec<f64>) -> Table {
        let n = weights.len();
        Table::new(vec![
            Column::continuous("h", strata),
            Column::continuous("c", clusters),
            Column::continuous("w", weights),
            Column::binary("sel", vec![1.0; n]),
            Column::binary("res", vec![1.0; n]),
            Column::continuous("x1", vec![0.5; n]),
            Column {
                name: "y".into(),
                kind: ColumnKind::Continuous,
                values: vec![Some(1.0); n],
            },
        ])
        .unwrap()
    }

    fn roles() -> Vec<(&'static str, DesignRole)> {
        vec![
            ("h", DesignRole::Stratum),
            ("c", DesignRole::Cluster),
            ("w", DesignRole::Weight),
            ("sel", DesignRole::Phase2Selected),
            ("res", DesignRole::Phase2Respondent),
        ]
    }

    #[test]
    fn bind_design_splits_covariates() {
        let t = design_table(vec![1.0; 4], vec![1.0, 1.0, 2.0, 2.0], vec![1.0; 4]);
        let (design, cov) = bind_design(&t, &roles(), Some("y")).unwrap();
        assert_eq!(design.n(), 4);
        assert_eq!(cov.columns().len(), 2);
        assert!(cov.column("x1").is_some() && cov.column("y").is_some());
    }

    #[test]
    fn zero_weight_is_rejected_with_row() {
        let t = design_table(vec![1.0, 0.0, 1.0, 1.0], vec![1.0, 1.0, 2.0, 2.0], vec![1.0; 4]);
        match bind_design(&t, &roles(), Some("y")) {
            Err(DatasetError::NonPositiveWeight(row)) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cluster_spanning_strata_is_rejected() {
        let t = design_table(vec![1.0; 4], vec![7.0, 7.0, 7.0, 8.0], vec![1.0, 1.0, 2.0, 2.0]);
        match bind_design(&t, &roles(), Some("y")) {
            Err(DatasetError::ClusterSpansStrata(c)) => assert_eq!(c, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn respondent_requires_selection() {
        let t = Table::new(vec![
            Column::continuous("h", vec![1.0, 1.0]),
            Column::continuous("c", vec![1.0, 2.0]),
            Column::continuous("w", vec![1.0, 1.0]),
            Column::binary("sel", vec![1.0, 0.0]),
            Column::binary("res", vec![1.0, 1.0]),
        ])
        .unwrap();
        match bind_design(&t, &roles(), None) {
            Err(DatasetError::RespondentNotSelected(row)) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_covariate_outside_outcome_rejected() {
        let mut t = design_table(vec![1.0; 2], vec![1.0, 2.0], vec![1.0, 1.0]);
        // poke a hole in x1
        let cols: Vec<Column> = t
            .columns()
            .iter()
            .map(|c| {
                let mut c = c.clone();
                if c.name == "x1" {
                    c.values[1] = None;
                }
                c
            })
            .collect();
        t = Table::new(cols).unwrap();
        match bind_design(&t, &roles(), Some("y")) {
            Err(DatasetError::MissingCovariate { row, column }) => {
                assert_eq!((row, column.as_str()), (2, "x1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn write_results_deterministic_and_nonempty() {
        let set = ResultSet {
            columns: vec!["method".into(), "estimate".into()],
            rows: vec![vec![Value::Text("wt-lgm".into()), Value::Real(2.9712345678912)]],
        };
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_results(&set, &p1, OutputFormat::Csv).unwrap();
        write_results(&set, &p2, OutputFormat::Csv).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let text = std::fs::read_to_string(&p1).unwrap();
        assert_eq!(text.lines().count(), 2);

        let empty = ResultSet { columns: vec!["a".into()], rows: vec![] };
        let p3 = dir.path().join("c.csv");
        assert!(matches!(write_results(&empty, &p3, OutputFormat::Csv), Err(DatasetError::EmptyRecords)));
        assert!(!p3.exists());
    }

    proptest! {
        // round-trip through CSV keeps every real within 1e-10 relative error
        #[test]
        fn csv_roundtrip_recovers_reals(values in proptest::collection::vec(-1e12f64..1e12, 1..40)) {
            let set = ResultSet {
                columns: vec!["v".into()],
                rows: values.iter().map(|v| vec![Value::Real(*v)]).collect(),
            };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("roundtrip.csv");
            write_results(&set, &path, OutputFormat::Csv).unwrap();
            let schema = vec![("v".to_string(), ColumnKind::Continuous)];
            let table = load_table(&path, &schema).unwrap();
            let got = table.complete_values("v").unwrap();
            for (a, b) in values.iter().zip(&got) {
                let scale = a.abs().max(1e-300);
                prop_assert!(((a - b).abs() / scale) <= 1e-9);
            }
        }
    }
}
