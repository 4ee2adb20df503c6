//! Scoring prior sets against the Gaussian MLE sampling distribution:
//! closed-form KL divergence, per-variable tables with averages and
//! tie-averaged ranks, and prior predictive simulation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{ModelSpec, ResponseKind};
use crate::error::ErrorClass;
use crate::glm::{sigmoid, GaussianDist, MLEFit};
use crate::priors::{validate_prior_set, Informativeness, PriorCatalog, PriorError, PriorSet};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

impl EvalError {
    pub fn class(&self) -> ErrorClass {
        ErrorClass::Validation
    }
}

/// KL divergence D(mle || prior) between two univariate Gaussians, in nats.
///
/// The MLE distribution is the weighting density, so priors that put little
/// mass where the MLE concentrates are penalized hard, while a merely wide
/// prior costs little.
pub fn kl_gaussian(mle: &GaussianDist, prior: &GaussianDist) -> Result<f64, EvalError> {
    for d in [mle, prior] {
        if !d.mean.is_finite() || !d.sd.is_finite() || d.sd <= 0.0 {
            return Err(EvalError::BadArgument(format!(
                "kl_gaussian needs finite distributions with positive sd, got N({}, {}^2)",
                d.mean, d.sd
            )));
        }
    }
    let shift = mle.mean - prior.mean;
    Ok((prior.sd / mle.sd).ln()
        + (mle.sd * mle.sd + shift * shift) / (2.0 * prior.sd * prior.sd)
        - 0.5)
}

/// Per-variable KL table over a catalog of prior sets.
///
/// Rows are predictors (the intercept is excluded), columns are prior sets
/// in a deterministic order: descending informativeness (moderate, weak,
/// custom), then source, then label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KLReport {
    /// Predictor names in spec order.
    pub predictor_order: Vec<String>,
    /// Prior-set labels in display order.
    pub column_order: Vec<String>,
    /// coefficient name -> prior label -> KL (nats).
    pub rows: BTreeMap<String, BTreeMap<String, f64>>,
    /// prior label -> mean KL over predictors.
    pub averages: BTreeMap<String, f64>,
    /// prior label -> mean rank (1 = lowest KL per predictor, ties averaged).
    pub avg_ranks: BTreeMap<String, f64>,
    /// How the MLE marginal sds were obtained ("fisher" or "bootstrap(n)").
    pub mle_sd_source: String,
}

fn informativeness_rank(i: Informativeness) -> u8 {
    match i {
        Informativeness::Moderate => 0,
        Informativeness::Weak => 1,
        Informativeness::Custom => 2,
    }
}

/// Display order for catalog columns.
pub fn column_order(catalog: &PriorCatalog) -> Vec<String> {
    let mut sets: Vec<&PriorSet> = catalog.sets.iter().collect();
    sets.sort_by(|a, b| {
        informativeness_rank(a.informativeness)
            .cmp(&informativeness_rank(b.informativeness))
            .then_with(|| a.source.cmp(&b.source))
            .then_with(|| a.label.cmp(&b.label))
    });
    sets.into_iter().map(|s| s.label.clone()).collect()
}

/// Average ranks with ties averaged (1-based; lower value gets rank 1).
fn tie_averaged_ranks(values: &[f64]) -> Vec<f64> {
    let m = values.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite KL values"));
    let mut ranks = vec![0.0; m];
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j + 1 < m && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// KL table from explicit named MLE marginals.
pub fn kl_table_from_marginals(
    names: &[String],
    marginals: &[GaussianDist],
    catalog: &PriorCatalog,
    spec: &ModelSpec,
    mle_sd_source: &str,
) -> Result<KLReport, EvalError> {
    crate::priors::validate_catalog(catalog, spec)?;
    let predictor_order: Vec<String> = spec.predictors.iter().map(|p| p.name.clone()).collect();
    let cols = column_order(catalog);

    let marginal_for = |name: &str| -> Result<&GaussianDist, EvalError> {
        names
            .iter()
            .position(|n| n == name)
            .map(|j| &marginals[j])
            .ok_or_else(|| EvalError::BadArgument(format!("no MLE marginal for `{name}`")))
    };

    let mut rows: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for pname in &predictor_order {
        let mle = marginal_for(pname)?;
        let mut row = BTreeMap::new();
        for set in &catalog.sets {
            let entry = &set.entries[pname];
            let prior = GaussianDist::new(entry.mean, entry.sd)
                .map_err(|e| EvalError::BadArgument(e.to_string()))?;
            row.insert(set.label.clone(), kl_gaussian(mle, &prior)?);
        }
        rows.insert(pname.clone(), row);
    }

    let mut averages = BTreeMap::new();
    let mut rank_sums: BTreeMap<String, f64> = BTreeMap::new();
    for pname in &predictor_order {
        let row = &rows[pname];
        let vals: Vec<f64> = cols.iter().map(|l| row[l]).collect();
        let ranks = tie_averaged_ranks(&vals);
        for (label, rank) in cols.iter().zip(ranks) {
            *rank_sums.entry(label.clone()).or_insert(0.0) += rank;
        }
    }
    let np = predictor_order.len() as f64;
    for label in &cols {
        let total: f64 = predictor_order.iter().map(|p| rows[p][label]).sum();
        averages.insert(label.clone(), total / np);
    }
    let avg_ranks = rank_sums
        .into_iter()
        .map(|(label, sum)| (label, sum / np))
        .collect();

    Ok(KLReport {
        predictor_order,
        column_order: cols,
        rows,
        averages,
        avg_ranks,
        mle_sd_source: mle_sd_source.to_string(),
    })
}

/// KL table of a Fisher-information MLE fit against a catalog.
pub fn kl_table(
    mle_fit: &MLEFit,
    catalog: &PriorCatalog,
    spec: &ModelSpec,
) -> Result<KLReport, EvalError> {
    kl_table_from_marginals(&mle_fit.names, &mle_fit.marginals, catalog, spec, "fisher")
}

/// Aligned plain-text rendering of a [`KLReport`]: variables as rows, prior
/// sets as columns, with `Avg KL Div.` and `Avg Rank` footer rows. Values
/// are shown to two decimals.
pub fn render_kl_table(report: &KLReport) -> String {
    let mut col_widths: Vec<usize> = report
        .column_order
        .iter()
        .map(|label| label.len().max(8))
        .collect();
    let name_width = report
        .predictor_order
        .iter()
        .map(|n| n.len())
        .chain(["Avg KL Div.".len(), "Variable".len()])
        .max()
        .unwrap_or(8);
    for (i, label) in report.column_order.iter().enumerate() {
        let value_width = report
            .predictor_order
            .iter()
            .map(|p| format!("{:.2}", report.rows[p][label]).len())
            .max()
            .unwrap_or(4);
        col_widths[i] = col_widths[i].max(value_width);
    }

    let mut out = String::new();
    out.push_str(&format!("{:<name_width$}", "Variable"));
    for (label, w) in report.column_order.iter().zip(&col_widths) {
        out.push_str(&format!("  {label:>w$}"));
    }
    out.push('\n');
    for pname in &report.predictor_order {
        out.push_str(&format!("{pname:<name_width$}"));
        for (label, w) in report.column_order.iter().zip(&col_widths) {
            out.push_str(&format!("  {:>w$.2}", report.rows[pname][label]));
        }
        out.push('\n');
    }
    out.push_str(&format!("{:<name_width$}", "Avg KL Div."));
    for (label, w) in report.column_order.iter().zip(&col_widths) {
        out.push_str(&format!("  {:>w$.2}", report.averages[label]));
    }
    out.push('\n');
    out.push_str(&format!("{:<name_width$}", "Avg Rank"));
    for (label, w) in report.column_order.iter().zip(&col_widths) {
        out.push_str(&format!("  {:>w$.2}", report.avg_ranks[label]));
    }
    out.push('\n');
    out
}

/// Summary statistics of simulated responses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseSummary {
    pub mean: f64,
    pub sd: f64,
    /// (percentile, value) at 2.5 / 25 / 50 / 75 / 97.5.
    pub percentiles: Vec<(f64, f64)>,
}

/// Result of prior predictive simulation: pooled response draws plus
/// summary statistics.
#[derive(Debug, Clone)]
pub struct PriorPredictive {
    pub samples: Vec<f64>,
    pub summary: ResponseSummary,
    pub reps: usize,
}

/// Linear-interpolated percentile of a sorted slice (numpy default).
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = pct / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn summarize(samples: &[f64]) -> ResponseSummary {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let percentiles = [2.5, 25.0, 50.0, 75.0, 97.5]
        .iter()
        .map(|&p| (p, percentile(&sorted, p)))
        .collect();
    ResponseSummary {
        mean,
        sd: var.sqrt(),
        percentiles,
    }
}

/// Simulates responses from the prior predictive distribution.
///
/// Each rep draws a coefficient vector from the prior, then a synthetic
/// response for every row of `design` from the likelihood at that draw:
/// Bernoulli-logit for binary specs, Gaussian with `noise_sd` for
/// continuous specs (required there, rejected otherwise).
pub fn prior_predictive_sample(
    spec: &ModelSpec,
    prior: &PriorSet,
    design: &DMatrix<f64>,
    reps: usize,
    seed: u64,
    noise_sd: Option<f64>,
) -> Result<PriorPredictive, EvalError> {
    if reps == 0 {
        return Err(EvalError::BadArgument("reps must be >= 1".into()));
    }
    let report = validate_prior_set(prior, spec);
    if !report.is_empty() {
        return Err(EvalError::Prior(PriorError::Invalid {
            label: prior.label.clone(),
            report,
        }));
    }
    let names = spec.coefficient_names();
    if design.ncols() != names.len() {
        return Err(EvalError::BadArgument(format!(
            "design has {} columns, spec has {} coefficients",
            design.ncols(),
            names.len()
        )));
    }
    let noise_sd = match spec.response_kind {
        ResponseKind::Continuous => Some(noise_sd.ok_or_else(|| {
            EvalError::BadArgument("continuous likelihood needs a noise sd".into())
        })?),
        ResponseKind::Binary => None,
    };

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(reps * design.nrows());
    let mut theta = DVector::zeros(names.len());
    for _ in 0..reps {
        for (j, name) in names.iter().enumerate() {
            let entry = &prior.entries[name];
            let z: f64 = StandardNormal.sample(&mut rng);
            theta[j] = entry.mean + entry.sd * z;
        }
        let eta = design * &theta;
        match noise_sd {
            None => {
                for i in 0..eta.len() {
                    let p = sigmoid(eta[i]);
                    samples.push(f64::from(rng.gen::<f64>() < p));
                }
            }
            Some(sd) => {
                for i in 0..eta.len() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    samples.push(eta[i] + sd * z);
                }
            }
        }
    }
    let summary = summarize(&samples);
    Ok(PriorPredictive {
        samples,
        summary,
        reps,
    })
}

/// Shared evaluation grid spanning every distribution's mean +/- 4 sd.
pub fn density_grid(dists: &[GaussianDist], points: usize) -> Vec<f64> {
    let lo = dists
        .iter()
        .map(|d| d.mean - 4.0 * d.sd)
        .fold(f64::INFINITY, f64::min);
    let hi = dists
        .iter()
        .map(|d| d.mean + 4.0 * d.sd)
        .fold(f64::NEG_INFINITY, f64::max);
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}
