//! k-fold cross-validated predictive evaluation of the frequentist MLE and
//! the Bayesian models from a prior catalog, with Nadeau-Bengio corrected
//! paired t-tests against the frequentist baseline.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::bayes::{self, BayesError};
use crate::dataset::{BoundDataset, FoldPlan, ResponseKind};
use crate::error::ErrorClass;
use crate::glm::{self, GaussianDist, GlmError};
use crate::priors::{PriorCatalog, PriorError};
use crate::seeding;

/// Log-score probability clamp; prevents infinities from saturated
/// predictions without materially changing scores.
pub const PROB_CLAMP: f64 = 1e-12;

/// Model label used for the no-prior maximum-likelihood baseline.
pub const FREQUENTIST_LABEL: &str = "Frequentist";

#[derive(Debug, Error)]
pub enum CvError {
    #[error("length mismatch: {left} predictions vs {right} outcomes")]
    LengthMismatch { left: usize, right: usize },
    #[error("AUC undefined: labels contain a single class")]
    SingleClassLabels,
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<CvError>,
    },
    #[error("fold training labels are single-class")]
    SingleClassTraining,
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

impl CvError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CvError::LengthMismatch { .. }
            | CvError::SingleClassLabels
            | CvError::BadArgument(_) => ErrorClass::Validation,
            CvError::Fold { source, .. } => source.class(),
            CvError::SingleClassTraining => ErrorClass::Numeric,
            CvError::Glm(e) => e.class(),
            CvError::Bayes(_) => ErrorClass::Numeric,
            CvError::Prior(e) => e.class(),
        }
    }
}

fn check_lengths(left: usize, right: usize) -> Result<(), CvError> {
    if left != right {
        return Err(CvError::LengthMismatch { left, right });
    }
    Ok(())
}

/// Mean squared difference between probabilities and binary outcomes.
pub fn brier(probs: &[f64], labels: &[f64]) -> Result<f64, CvError> {
    check_lengths(probs.len(), labels.len())?;
    let n = probs.len() as f64;
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / n)
}

/// Mean negative Bernoulli log-score, probabilities clamped to
/// [PROB_CLAMP, 1 - PROB_CLAMP].
pub fn mnls_binary(probs: &[f64], labels: &[f64]) -> Result<f64, CvError> {
    check_lengths(probs.len(), labels.len())?;
    let n = probs.len() as f64;
    Ok(-probs
        .iter()
        .zip(labels)
        .map(|(p, y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum::<f64>()
        / n)
}

/// Area under the ROC curve, Mann-Whitney formulation with tied scores
/// contributing half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64, CvError> {
    check_lengths(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CvError::SingleClassLabels);
    }
    // average ranks over ties
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] == 1.0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Root mean squared error.
pub fn rmse(preds: &[f64], truth: &[f64]) -> Result<f64, CvError> {
    check_lengths(preds.len(), truth.len())?;
    let n = preds.len() as f64;
    Ok((preds
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
        .sqrt())
}

/// Mean absolute error.
pub fn mae(preds: &[f64], truth: &[f64]) -> Result<f64, CvError> {
    check_lengths(preds.len(), truth.len())?;
    let n = preds.len() as f64;
    Ok(preds.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n)
}

/// Mean negative Gaussian predictive log-density.
pub fn mnls_gaussian(pred_dists: &[GaussianDist], truth: &[f64]) -> Result<f64, CvError> {
    check_lengths(pred_dists.len(), truth.len())?;
    let n = truth.len() as f64;
    Ok(-pred_dists
        .iter()
        .zip(truth)
        .map(|(d, t)| d.log_pdf(*t))
        .sum::<f64>()
        / n)
}

/// Outcome of a Nadeau-Bengio corrected paired t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTestResult {
    pub t_stat: f64,
    /// One-sided p-value: small means the differences favor the candidate.
    pub p_value: f64,
    /// Set when the fold differences had zero variance; p is then 0.5 by
    /// convention rather than a division by zero.
    pub degenerate: bool,
}

/// Corrected paired t-test over per-fold metric differences.
///
/// `t = mean(d) / sqrt((1/k + n_test/n_train) * var(d))` with the unbiased
/// variance; the p-value is the Student-t survival probability at `t` with
/// k-1 degrees of freedom. Fold sizes may be averaged (hence f64) when the
/// plan's folds are unequal.
pub fn nb_ttest(diffs: &[f64], n_train: f64, n_test: f64) -> Result<TTestResult, CvError> {
    let k = diffs.len();
    if k < 2 {
        return Err(CvError::BadArgument(format!(
            "need at least 2 fold differences, got {k}"
        )));
    }
    if !(n_train > 0.0 && n_test > 0.0) {
        return Err(CvError::BadArgument(
            "fold sizes must be positive".into(),
        ));
    }
    let kf = k as f64;
    let mean = diffs.iter().sum::<f64>() / kf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (kf - 1.0);
    if var == 0.0 {
        return Ok(TTestResult {
            t_stat: 0.0,
            p_value: 0.5,
            degenerate: true,
        });
    }
    let corrected = (1.0 / kf + n_test / n_train) * var;
    let t_stat = mean / corrected.sqrt();
    let dist = StudentsT::new(0.0, 1.0, kf - 1.0)
        .map_err(|e| CvError::BadArgument(format!("t distribution: {e}")))?;
    let p_value = 1.0 - dist.cdf(t_stat);
    Ok(TTestResult {
        t_stat,
        p_value,
        degenerate: false,
    })
}

/// Per-model, per-metric cross-validation summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub per_fold: Vec<f64>,
    pub mean: f64,
}

/// Settings for [`run_cv`].
#[derive(Debug, Clone, Copy)]
pub struct CvConfig {
    /// Base seed for the Monte Carlo posterior predictive draws.
    pub seed: u64,
    /// Posterior draws per (fold, model) for binary prediction.
    pub mc_draws: usize,
    /// Logistic fit tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            seed: 0,
            mc_draws: 1000,
            tol: glm::DEFAULT_TOL,
            max_iter: glm::DEFAULT_MAX_ITER,
        }
    }
}

/// Cross-validation report: per-fold and mean metric values per model, and
/// corrected t-tests of every Bayesian model against the frequentist
/// baseline. Whether higher is better depends on the metric; comparisons
/// are oriented so that positive differences favor the Bayesian model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CVReport {
    /// Model labels in display order: frequentist first, then catalog order.
    pub model_order: Vec<String>,
    /// Metric names in display order.
    pub metric_order: Vec<String>,
    /// model label -> metric name -> summary.
    pub metrics: BTreeMap<String, BTreeMap<String, MetricSummary>>,
    /// Bayesian model label -> metric name -> corrected t-test vs baseline.
    pub comparisons: BTreeMap<String, BTreeMap<String, TTestResult>>,
    pub fold_plan: FoldPlan,
    pub seed: u64,
}

/// True when larger values of the metric are better.
fn higher_is_better(metric: &str) -> bool {
    metric == "auc"
}

fn metric_names(kind: ResponseKind) -> Vec<String> {
    match kind {
        ResponseKind::Binary => vec!["brier".into(), "mnls".into(), "auc".into()],
        ResponseKind::Continuous => vec!["mnls".into(), "rmse".into(), "mae".into()],
    }
}

fn binary_metrics(probs: &[f64], labels: &[f64]) -> Result<BTreeMap<String, f64>, CvError> {
    let mut out = BTreeMap::new();
    out.insert("brier".into(), brier(probs, labels)?);
    out.insert("mnls".into(), mnls_binary(probs, labels)?);
    out.insert("auc".into(), auc(probs, labels)?);
    Ok(out)
}

fn gaussian_metrics(
    dists: &[GaussianDist],
    truth: &[f64],
) -> Result<BTreeMap<String, f64>, CvError> {
    let means: Vec<f64> = dists.iter().map(|d| d.mean).collect();
    let mut out = BTreeMap::new();
    out.insert("mnls".into(), mnls_gaussian(dists, truth)?);
    out.insert("rmse".into(), rmse(&means, truth)?);
    out.insert("mae".into(), mae(&means, truth)?);
    Ok(out)
}

/// Runs k-fold CV of the frequentist model and one Bayesian model per prior
/// set, scoring held-out rows and testing each Bayesian model against the
/// baseline. Fully deterministic for a fixed config and fold plan.
pub fn run_cv(
    data: &BoundDataset,
    catalog: Option<&PriorCatalog>,
    folds: &FoldPlan,
    config: &CvConfig,
) -> Result<CVReport, CvError> {
    if folds.assignments.len() != data.n {
        return Err(CvError::BadArgument(format!(
            "fold plan covers {} rows, dataset has {}",
            folds.assignments.len(),
            data.n
        )));
    }
    if let Some(catalog) = catalog {
        crate::priors::validate_catalog(catalog, &data.spec)?;
    }
    let kind = data.spec.response_kind;
    let k = folds.k;
    let set_labels: Vec<String> = catalog
        .map(|c| c.sets.iter().map(|s| s.label.clone()).collect())
        .unwrap_or_default();

    let mut model_order = vec![FREQUENTIST_LABEL.to_string()];
    model_order.extend(set_labels.iter().cloned());
    let metric_order = metric_names(kind);

    // metrics[model][metric][fold]
    let mut per_fold: BTreeMap<String, BTreeMap<String, Vec<f64>>> = model_order
        .iter()
        .map(|m| {
            (
                m.clone(),
                metric_order
                    .iter()
                    .map(|x| (x.clone(), vec![0.0; k]))
                    .collect(),
            )
        })
        .collect();
    let mut train_sizes = vec![0usize; k];
    let mut test_sizes = vec![0usize; k];

    for fold in 0..k {
        let fold_err = |source: CvError| CvError::Fold {
            fold,
            source: Box::new(source),
        };
        let train_rows = folds.train_rows(fold);
        let test_rows = folds.test_rows(fold);
        train_sizes[fold] = train_rows.len();
        test_sizes[fold] = test_rows.len();
        let train = data.subset(&train_rows);
        let test = data.subset(&test_rows);
        let truth: Vec<f64> = test.response.iter().copied().collect();

        if kind == ResponseKind::Binary {
            let ones = train.response.iter().filter(|&&y| y == 1.0).count();
            if ones == 0 || ones == train.n {
                return Err(fold_err(CvError::SingleClassTraining));
            }
        }

        let mle = glm::fit_mle(&train, config.tol, config.max_iter).map_err(CvError::from)
            .map_err(&fold_err)?;

        match kind {
            ResponseKind::Binary => {
                let eta = &test.design * &mle.coefficients;
                let probs: Vec<f64> = eta.iter().map(|&e| glm::sigmoid(e)).collect();
                let vals = binary_metrics(&probs, &truth).map_err(&fold_err)?;
                for (metric, v) in vals {
                    per_fold.get_mut(FREQUENTIST_LABEL).unwrap().get_mut(&metric).unwrap()[fold] = v;
                }
            }
            ResponseKind::Continuous => {
                // Predictive variance includes the parameter-uncertainty
                // term x'Cov x (standard prediction variance), which is
                // also the flat-prior limit of the conjugate posterior
                // predictive.
                let noise = mle
                    .noise_variance
                    .expect("linear fit carries noise variance");
                let dists: Vec<GaussianDist> = (0..test.n)
                    .map(|i| {
                        let row: DVector<f64> = test.design.row(i).transpose();
                        let mean = mle.coefficients.dot(&row);
                        let var = (row.transpose() * &mle.covariance * &row)[(0, 0)] + noise;
                        GaussianDist::new(mean, var.sqrt())
                    })
                    .collect::<Result<_, _>>()
                    .map_err(CvError::from)
                    .map_err(&fold_err)?;
                let vals = gaussian_metrics(&dists, &truth).map_err(&fold_err)?;
                for (metric, v) in vals {
                    per_fold.get_mut(FREQUENTIST_LABEL).unwrap().get_mut(&metric).unwrap()[fold] = v;
                }
            }
        }

        if let Some(catalog) = catalog {
            for (set_idx, set) in catalog.sets.iter().enumerate() {
                let vals = match kind {
                    ResponseKind::Binary => {
                        let post =
                            bayes::posterior_logistic_laplace(&train, set, config.tol, config.max_iter)
                                .map_err(CvError::from)
                                .map_err(&fold_err)?;
                        // draw seed fixed per (fold, model) so fold order and
                        // model order never change results
                        let draw_seed = seeding::derive(
                            config.seed,
                            (fold as u64) << 32 | (set_idx as u64 + 1),
                        );
                        let probs = bayes::predictive_binary_batch(
                            &post,
                            &test.design,
                            config.mc_draws,
                            draw_seed,
                        )
                        .map_err(CvError::from)
                        .map_err(&fold_err)?;
                        binary_metrics(&probs, &truth).map_err(&fold_err)?
                    }
                    ResponseKind::Continuous => {
                        let post = bayes::posterior_linear_conjugate(&train, set)
                            .map_err(CvError::from)
                            .map_err(&fold_err)?;
                        let dists: Vec<GaussianDist> = (0..test.n)
                            .map(|i| {
                                let row: DVector<f64> = test.design.row(i).transpose();
                                bayes::predictive_gaussian(&post, &row)
                            })
                            .collect::<Result<_, _>>()
                            .map_err(CvError::from)
                            .map_err(&fold_err)?;
                        gaussian_metrics(&dists, &truth).map_err(&fold_err)?
                    }
                };
                for (metric, v) in vals {
                    per_fold.get_mut(&set.label).unwrap().get_mut(&metric).unwrap()[fold] = v;
                }
            }
        }
    }

    let mut metrics: BTreeMap<String, BTreeMap<String, MetricSummary>> = BTreeMap::new();
    for (model, by_metric) in per_fold {
        let summaries = by_metric
            .into_iter()
            .map(|(metric, per_fold)| {
                let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
                (metric, MetricSummary { per_fold, mean })
            })
            .collect();
        metrics.insert(model, summaries);
    }

    let avg_train = train_sizes.iter().sum::<usize>() as f64 / k as f64;
    let avg_test = test_sizes.iter().sum::<usize>() as f64 / k as f64;
    let mut comparisons: BTreeMap<String, BTreeMap<String, TTestResult>> = BTreeMap::new();
    for label in &set_labels {
        let mut by_metric = BTreeMap::new();
        for metric in &metric_order {
            let base = &metrics[FREQUENTIST_LABEL][metric].per_fold;
            let bayes_vals = &metrics[label][metric].per_fold;
            // oriented so positive favors the Bayesian model
            let diffs: Vec<f64> = base
                .iter()
                .zip(bayes_vals)
                .map(|(f, b)| if higher_is_better(metric) { b - f } else { f - b })
                .collect();
            by_metric.insert(metric.clone(), nb_ttest(&diffs, avg_train, avg_test)?);
        }
        comparisons.insert(label.clone(), by_metric);
    }

    Ok(CVReport {
        model_order,
        metric_order,
        metrics,
        comparisons,
        fold_plan: folds.clone(),
        seed: config.seed,
    })
}

/// Aligned text table: one row per model,
/// metric columns with p-values in parentheses for the Bayesian rows.
pub fn render_cv_table(report: &CVReport) -> String {
    let mut out = String::new();
    let name_width = report
        .model_order
        .iter()
        .map(|m| m.len())
        .chain(["Model".len()])
        .max()
        .unwrap_or(8);
    let cells: Vec<Vec<String>> = report
        .model_order
        .iter()
        .map(|model| {
            report
                .metric_order
                .iter()
                .map(|metric| {
                    let mean = report.metrics[model][metric].mean;
                    match report.comparisons.get(model).and_then(|c| c.get(metric)) {
                        Some(t) => format!("{mean:.4} (p={:.3})", t.p_value),
                        None => format!("{mean:.4}"),
                    }
                })
                .collect()
        })
        .collect();
    let col_widths: Vec<usize> = report
        .metric_order
        .iter()
        .enumerate()
        .map(|(j, metric)| {
            cells
                .iter()
                .map(|row| row[j].len())
                .chain([metric.len()])
                .max()
                .unwrap_or(8)
        })
        .collect();

    out.push_str(&format!("{:<name_width$}", "Model"));
    for (metric, w) in report.metric_order.iter().zip(&col_widths) {
        let arrow = if higher_is_better(metric) { "^" } else { "v" };
        out.push_str(&format!("  {:>w$}", format!("{metric} {arrow}")));
    }
    out.push('\n');
    for (model, row) in report.model_order.iter().zip(&cells) {
        out.push_str(&format!("{model:<name_width$}"));
        for (cell, w) in row.iter().zip(&col_widths) {
            out.push_str(&format!("  {cell:>w$}"));
        }
        out.push('\n');
    }
    out
}
