//! CSV ingestion, model specification, and deterministic fold assignment.
//!
//! A [`ModelSpec`] names the response and predictor columns of a regression
//! problem together with the metadata (descriptions, units) that feeds the
//! elicitation prompt. [`load_csv`] binds a spec to a CSV file, dropping rows
//! with missing or non-numeric cells in the used columns, and [`make_folds`]
//! produces a deterministic, optionally stratified, k-fold partition.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorClass;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),
    #[error("no usable rows after dropping {dropped} incomplete rows")]
    EmptyData { dropped: usize },
    #[error("binary response `{column}` contains value {value} outside {{0,1}} at data row {row}")]
    NonBinaryResponse {
        column: String,
        value: f64,
        row: usize,
    },
    #[error("model spec invalid: {0}")]
    InvalidSpec(String),
    #[error("fold count {k} out of range for {n} rows (need 2 <= k <= n)")]
    BadFoldCount { k: usize, n: usize },
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV parse error in `{path}`: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("spec parse error: {0}")]
    SpecParse(#[from] serde_json::Error),
}

impl DataError {
    pub fn class(&self) -> ErrorClass {
        match self {
            DataError::Io { .. } | DataError::Csv { .. } => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }
}

/// Kind of the response variable, which selects the likelihood family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Binary,
    Continuous,
}

/// One predictor column with the metadata surfaced in elicitation prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub name: String,
    pub description: String,
    pub unit: String,
}

/// Rule mapping a raw response column onto {0,1} at bind time.
///
/// Values strictly greater than the threshold map to 1, everything else to 0.
/// Bundled as part of a spec config so that derived responses (e.g. a
/// multi-class severity code collapsed to presence/absence) stay declarative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinarizeRule {
    pub greater_than: f64,
}

/// Specification of a regression model: response, predictors, intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response_name: String,
    pub response_kind: ResponseKind,
    pub predictors: Vec<Predictor>,
    pub intercept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binarize: Option<BinarizeRule>,
}

impl ModelSpec {
    /// Checks the structural invariants: non-empty, unique predictor names.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.predictors.is_empty() {
            return Err(DataError::InvalidSpec("no predictors".into()));
        }
        let mut seen = HashSet::new();
        for p in &self.predictors {
            if p.name.trim().is_empty() {
                return Err(DataError::InvalidSpec("empty predictor name".into()));
            }
            if !seen.insert(p.name.as_str()) {
                return Err(DataError::InvalidSpec(format!(
                    "duplicate predictor name `{}`",
                    p.name
                )));
            }
        }
        if self.binarize.is_some() && self.response_kind != ResponseKind::Binary {
            return Err(DataError::InvalidSpec(
                "binarize rule requires a binary response".into(),
            ));
        }
        Ok(())
    }

    /// Names of all fitted coefficients, intercept first when present.
    pub fn coefficient_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.predictors.len() + 1);
        if self.intercept {
            names.push(crate::INTERCEPT_NAME.to_string());
        }
        names.extend(self.predictors.iter().map(|p| p.name.clone()));
        names
    }

    /// Number of fitted coefficients (predictors plus intercept).
    pub fn coefficient_count(&self) -> usize {
        self.predictors.len() + usize::from(self.intercept)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelSpec, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let spec: ModelSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// A dataset bound to a spec: design matrix with the intercept column of
/// ones first (when requested), response vector, and the drop count from
/// complete-case filtering. Immutable after construction.
#[derive(Debug, Clone)]
pub struct BoundDataset {
    pub spec: ModelSpec,
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub n: usize,
    pub p: usize,
    pub dropped: usize,
}

impl BoundDataset {
    /// Builds a dataset directly from columns already in spec order.
    /// `rows[i]` holds the predictor values of observation i.
    pub fn from_rows(
        spec: ModelSpec,
        rows: &[Vec<f64>],
        response: &[f64],
    ) -> Result<BoundDataset, DataError> {
        spec.validate()?;
        let n = rows.len();
        let p = spec.predictors.len();
        if n == 0 {
            return Err(DataError::EmptyData { dropped: 0 });
        }
        if response.len() != n || rows.iter().any(|r| r.len() != p) {
            return Err(DataError::InvalidSpec(
                "row/response shape does not match spec".into(),
            ));
        }
        let d = spec.coefficient_count();
        let mut design = DMatrix::zeros(n, d);
        let offset = usize::from(spec.intercept);
        for i in 0..n {
            if spec.intercept {
                design[(i, 0)] = 1.0;
            }
            for j in 0..p {
                design[(i, offset + j)] = rows[i][j];
            }
        }
        let y = DVector::from_column_slice(response);
        if spec.response_kind == ResponseKind::Binary {
            for (i, &v) in y.iter().enumerate() {
                if v != 0.0 && v != 1.0 {
                    return Err(DataError::NonBinaryResponse {
                        column: spec.response_name.clone(),
                        value: v,
                        row: i,
                    });
                }
            }
        }
        Ok(BoundDataset {
            spec,
            design,
            response: y,
            n,
            p,
            dropped: 0,
        })
    }

    /// New dataset restricted to `rows` (in the given order).
    pub fn subset(&self, rows: &[usize]) -> BoundDataset {
        let design = DMatrix::from_fn(rows.len(), self.design.ncols(), |i, j| {
            self.design[(rows[i], j)]
        });
        let response = DVector::from_fn(rows.len(), |i, _| self.response[rows[i]]);
        BoundDataset {
            spec: self.spec.clone(),
            design,
            response,
            n: rows.len(),
            p: self.p,
            dropped: 0,
        }
    }
}

/// Deterministic k-fold assignment. Identical inputs (n, k, seed,
/// stratified, response) give identical assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
    pub stratified: bool,
}

impl FoldPlan {
    /// Row indices of the test set for `fold`, in ascending order.
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Row indices of the training set for `fold`, in ascending order.
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Loads a CSV file and binds it to `spec`.
///
/// Rows with a missing or non-numeric cell in any used column are dropped
/// and counted; surviving rows keep their file order. A `binarize` rule in
/// the spec is applied to the raw response before the {0,1} domain check.
pub fn load_csv(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<BoundDataset, DataError> {
    spec.validate()?;
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|source| DataError::Csv {
            path: path.display().to_string(),
            source,
        })?;

    let headers = reader
        .headers()
        .map_err(|source| DataError::Csv {
            path: path.display().to_string(),
            source,
        })?
        .clone();
    let col_index = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };

    let response_idx = col_index(&spec.response_name)?;
    let predictor_idx: Vec<usize> = spec
        .predictors
        .iter()
        .map(|p| col_index(&p.name))
        .collect::<Result<_, _>>()?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut response: Vec<f64> = Vec::new();
    let mut dropped = 0usize;

    for record in reader.records() {
        let record = record.map_err(|source| DataError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        let parse = |idx: usize| -> Option<f64> {
            let cell = record.get(idx)?.trim();
            if cell.is_empty() || cell == "?" || cell.eq_ignore_ascii_case("na") {
                return None;
            }
            cell.parse::<f64>().ok().filter(|v| v.is_finite())
        };
        let mut vals = Vec::with_capacity(predictor_idx.len());
        let mut complete = true;
        for &idx in &predictor_idx {
            match parse(idx) {
                Some(v) => vals.push(v),
                None => {
                    complete = false;
                    break;
                }
            }
        }
        let y = parse(response_idx);
        match (complete, y) {
            (true, Some(raw)) => {
                let y = match spec.binarize {
                    Some(rule) => {
                        if raw > rule.greater_than {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    None => raw,
                };
                rows.push(vals);
                response.push(y);
            }
            _ => dropped += 1,
        }
    }

    if rows.is_empty() {
        return Err(DataError::EmptyData { dropped });
    }
    let mut bound = BoundDataset::from_rows(spec.clone(), &rows, &response)?;
    bound.dropped = dropped;
    Ok(bound)
}

/// Assigns every row to one of `k` folds, shuffled by `seed`.
///
/// Binary responses are stratified: within each class the fold sizes differ
/// by at most one. Continuous responses get a plain shuffled split.
pub fn make_folds(data: &BoundDataset, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    let n = data.n;
    if k < 2 || k > n {
        return Err(DataError::BadFoldCount { k, n });
    }
    let stratified = data.spec.response_kind == ResponseKind::Binary;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut assignments = vec![0usize; n];

    let strata: Vec<Vec<usize>> = if stratified {
        let zeros = (0..n).filter(|&i| data.response[i] == 0.0).collect();
        let ones = (0..n).filter(|&i| data.response[i] == 1.0).collect();
        vec![zeros, ones]
    } else {
        vec![(0..n).collect()]
    };

    for mut stratum in strata {
        stratum.shuffle(&mut rng);
        for (pos, row) in stratum.into_iter().enumerate() {
            assignments[row] = pos % k;
        }
    }

    Ok(FoldPlan {
        k,
        assignments,
        seed,
        stratified,
    })
}
