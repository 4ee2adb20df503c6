//! Per-coefficient Gaussian prior sets with provenance, validation, and
//! catalog file I/O.
//!
//! Entries keep raw `(mean, sd)` numbers so that a catalog can be loaded
//! and *then* validated: [`validate_prior_set`] reports missing or extra
//! coefficients, non-positive sds, and out-of-range weights instead of
//! failing at parse time.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ModelSpec;
use crate::error::ErrorClass;
use crate::glm::GaussianDist;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("catalog schema error in `{path}` at `{field}`: {detail}")]
    Schema {
        path: String,
        field: String,
        detail: String,
    },
    #[error("duplicate prior set label `{0}` in catalog")]
    DuplicateLabel(String),
    #[error("prior set `{label}` fails validation: {report}")]
    Invalid { label: String, report: ValidationReport },
    #[error("prior set `{label}` has no entry for coefficient `{coefficient}`")]
    MissingEntry { label: String, coefficient: String },
    #[error("failed to access `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PriorError {
    pub fn class(&self) -> ErrorClass {
        match self {
            PriorError::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }
}

/// How informative a prior set claims to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Informativeness {
    Moderate,
    Weak,
    Custom,
}

impl fmt::Display for Informativeness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Informativeness::Moderate => write!(f, "moderate"),
            Informativeness::Weak => write!(f, "weak"),
            Informativeness::Custom => write!(f, "custom"),
        }
    }
}

/// Prior for one coefficient: raw hyperparameters plus the justification
/// text the source supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorEntry {
    pub mean: f64,
    pub sd: f64,
    #[serde(default)]
    pub justification: String,
}

impl PriorEntry {
    /// The entry as a validated Gaussian; fails on non-positive sd.
    pub fn dist(&self) -> Result<GaussianDist, crate::glm::GlmError> {
        GaussianDist::new(self.mean, self.sd)
    }
}

/// One suggested set of per-coefficient priors with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    pub label: String,
    pub source: String,
    pub informativeness: Informativeness,
    pub confidence_weight: f64,
    /// Keyed by coefficient name; BTreeMap keeps serialization stable.
    pub entries: BTreeMap<String, PriorEntry>,
}

impl PriorSet {
    pub fn entry(&self, coefficient: &str) -> Result<&PriorEntry, PriorError> {
        self.entries
            .get(coefficient)
            .ok_or_else(|| PriorError::MissingEntry {
                label: self.label.clone(),
                coefficient: coefficient.to_string(),
            })
    }
}

/// A collection of prior sets for one model spec. Labels are unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorCatalog {
    pub model_spec_id: String,
    pub sets: Vec<PriorSet>,
}

impl PriorCatalog {
    pub fn find(&self, label: &str) -> Option<&PriorSet> {
        self.sets.iter().find(|s| s.label == label)
    }

    fn check_unique_labels(&self) -> Result<(), PriorError> {
        let mut seen = std::collections::HashSet::new();
        for set in &self.sets {
            if !seen.insert(set.label.as_str()) {
                return Err(PriorError::DuplicateLabel(set.label.clone()));
            }
        }
        Ok(())
    }
}

/// One problem found while validating a prior set against a spec.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Finding {
    MissingCoefficient(String),
    ExtraCoefficient(String),
    InvalidSd { coefficient: String, sd: f64 },
    OutOfRangeWeight(f64),
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::MissingCoefficient(c) => write!(f, "missing coefficient `{c}`"),
            Finding::ExtraCoefficient(c) => write!(f, "extra coefficient `{c}`"),
            Finding::InvalidSd { coefficient, sd } => {
                write!(f, "coefficient `{coefficient}` has non-positive sd {sd}")
            }
            Finding::OutOfRangeWeight(w) => write!(f, "confidence weight {w} outside [0,1]"),
        }
    }
}

/// The findings of [`validate_prior_set`]; empty means valid.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.findings.iter().map(|x| x.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Checks a prior set against a spec's coefficient list.
pub fn validate_prior_set(set: &PriorSet, spec: &ModelSpec) -> ValidationReport {
    let mut findings = Vec::new();
    let expected = spec.coefficient_names();
    for name in &expected {
        match set.entries.get(name) {
            None => findings.push(Finding::MissingCoefficient(name.clone())),
            Some(entry) => {
                if !(entry.sd > 0.0 && entry.sd.is_finite() && entry.mean.is_finite()) {
                    findings.push(Finding::InvalidSd {
                        coefficient: name.clone(),
                        sd: entry.sd,
                    });
                }
            }
        }
    }
    for name in set.entries.keys() {
        if !expected.iter().any(|e| e == name) {
            findings.push(Finding::ExtraCoefficient(name.clone()));
        }
    }
    if !(0.0..=1.0).contains(&set.confidence_weight) || !set.confidence_weight.is_finite() {
        findings.push(Finding::OutOfRangeWeight(set.confidence_weight));
    }
    ValidationReport { findings }
}

/// Errors unless every set in the catalog validates against `spec`.
pub fn validate_catalog(catalog: &PriorCatalog, spec: &ModelSpec) -> Result<(), PriorError> {
    catalog.check_unique_labels()?;
    for set in &catalog.sets {
        let report = validate_prior_set(set, spec);
        if !report.is_empty() {
            return Err(PriorError::Invalid {
                label: set.label.clone(),
                report,
            });
        }
    }
    Ok(())
}

/// Loads a catalog JSON file and checks label uniqueness.
///
/// Schema violations name the offending field path; malformed JSON reports
/// line and column.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<PriorCatalog, PriorError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| PriorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut deserializer = serde_json::Deserializer::from_str(&text);
    let catalog: PriorCatalog = serde_path_to_error::deserialize(&mut deserializer)
        .map_err(|err| PriorError::Schema {
            path: path.display().to_string(),
            field: err.path().to_string(),
            detail: err.into_inner().to_string(),
        })?;
    catalog.check_unique_labels()?;
    Ok(catalog)
}

/// Writes a catalog as pretty JSON. Numbers round-trip exactly
/// (serde_json emits the shortest decimal that parses back to the same f64).
pub fn save_catalog(catalog: &PriorCatalog, path: impl AsRef<Path>) -> Result<(), PriorError> {
    let path = path.as_ref();
    catalog.check_unique_labels()?;
    let text = serde_json::to_string_pretty(catalog).expect("catalog serialization cannot fail");
    std::fs::write(path, text).map_err(|source| PriorError::Io {
        path: path.display().to_string(),
        source,
    })
}
