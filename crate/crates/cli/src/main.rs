//! Command-line pipeline: elicit priors from an LLM endpoint, evaluate
//! them against the data (KL tables, density curves), run cross-validated
//! predictive comparisons, and emit posterior overlay curves.
//!
//! Exit codes are stable for scripting: 0 success, 1 validation,
//! 2 numeric, 3 transport, 4 I/O.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use priorgauge::bayes::{self, PosteriorFit};
use priorgauge::cv::{self, CvConfig};
use priorgauge::dataset::{self, BoundDataset, ModelSpec, ResponseKind};
use priorgauge::elicit::{self, Likelihood};
use priorgauge::eval;
use priorgauge::glm::{self, GaussianDist, MLEFit};
use priorgauge::priors::{self, PriorCatalog};
use priorgauge::ErrorClass;

#[derive(Parser)]
#[command(
    name = "priorgauge",
    about = "Elicit Gaussian GLM priors from LLMs and gauge them against the data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the elicitation prompt, call the configured LLM endpoint, and
    /// write the parsed prior catalog plus an audit record.
    Elicit(ElicitArgs),
    /// Fit the MLE, score a prior catalog with per-variable KL divergence,
    /// and emit plot-ready density curves.
    Evaluate(EvaluateArgs),
    /// Cross-validated predictive comparison of the frequentist model and
    /// the Bayesian models from the catalog.
    Cv(CvArgs),
    /// Prior / MLE / posterior overlay curves for one prior set.
    Posterior(PosteriorArgs),
}

#[derive(Args)]
struct ElicitArgs {
    /// Model spec JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Endpoint config JSON file.
    #[arg(long)]
    endpoint: PathBuf,
    /// Extra context appended verbatim to the prompt.
    #[arg(long, default_value = "")]
    extra_context: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Model spec JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Prior catalog JSON file.
    #[arg(long)]
    catalog: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Bootstrap replicates for the MLE sds (0 = Fisher information only).
    #[arg(long, default_value_t = 0)]
    bootstrap_reps: usize,
    /// Seed for the bootstrap resampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CvArgs {
    /// Dataset CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Model spec JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Prior catalog JSON file; omit for a frequentist-only run.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Fold count.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Seed for fold assignment and Monte Carlo prediction.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Posterior draws per fold for binary prediction.
    #[arg(long, default_value_t = 1000)]
    mc_draws: usize,
}

#[derive(Args)]
struct PosteriorArgs {
    /// Dataset CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Model spec JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Prior catalog JSON file.
    #[arg(long)]
    catalog: PathBuf,
    /// Label of the prior set to use.
    #[arg(long)]
    prior_label: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Failure {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn code_for(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Validation => 1,
        ErrorClass::Numeric => 2,
        ErrorClass::Transport => 3,
        ErrorClass::Io => 4,
    }
}

impl From<priorgauge::Error> for Failure {
    fn from(err: priorgauge::Error) -> Failure {
        Failure::new(code_for(err.class()), err.to_string())
    }
}

macro_rules! from_module_error {
    ($ty:ty) => {
        impl From<$ty> for Failure {
            fn from(err: $ty) -> Failure {
                Failure::from(priorgauge::Error::from(err))
            }
        }
    };
}

from_module_error!(priorgauge::dataset::DataError);
from_module_error!(priorgauge::glm::GlmError);
from_module_error!(priorgauge::priors::PriorError);
from_module_error!(priorgauge::elicit::ElicitError);
from_module_error!(priorgauge::bayes::BayesError);
from_module_error!(priorgauge::eval::EvalError);
from_module_error!(priorgauge::cv::CvError);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Elicit(args) => cmd_elicit(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Posterior(args) => cmd_posterior(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn ensure_out_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path)
        .map_err(|e| Failure::new(4, format!("cannot create output dir {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::new(4, format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::new(4, format!("serialization: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

fn load_inputs(
    data: &Path,
    spec: &Path,
) -> Result<(ModelSpec, BoundDataset), Failure> {
    let spec = ModelSpec::load(spec)?;
    let bound = dataset::load_csv(data, &spec)?;
    Ok((spec, bound))
}

fn spec_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Serializable view of an MLE fit for report files.
fn mle_view(fit: &MLEFit, sd_source: &str) -> serde_json::Value {
    let d = fit.coefficients.len();
    json!({
        "names": fit.names,
        "coefficients": fit.coefficients.iter().copied().collect::<Vec<f64>>(),
        "sds": fit.marginals.iter().map(|m| m.sd).collect::<Vec<f64>>(),
        "covariance": (0..d)
            .map(|i| (0..d).map(|j| fit.covariance[(i, j)]).collect::<Vec<f64>>())
            .collect::<Vec<Vec<f64>>>(),
        "loglik": fit.loglik,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "noise_variance": fit.noise_variance,
        "sd_source": sd_source,
    })
}

fn cmd_elicit(args: ElicitArgs) -> Result<(), Failure> {
    ensure_out_dir(&args.out)?;
    let spec = ModelSpec::load(&args.spec)?;
    let endpoint = elicit::EndpointConfig::load(&args.endpoint)?;
    let likelihood = match spec.response_kind {
        ResponseKind::Binary => Likelihood::Logistic,
        ResponseKind::Continuous => Likelihood::Linear,
    };
    let prompt = elicit::build_prompt(&spec, likelihood, &args.extra_context)?;
    let response = elicit::call_llm(&prompt, &endpoint)?;

    let audit_path = args.out.join("elicitations.jsonl");
    match elicit::parse_response(&response.text, &spec) {
        Ok(sets) => {
            let record =
                elicit::ElicitationRecord::new(prompt, &response, sets.clone(), &endpoint, false);
            elicit::append_record(&audit_path, &record)?;
            let catalog = PriorCatalog {
                model_spec_id: spec_id(&args.spec),
                sets,
            };
            let catalog_path = args.out.join("catalog.json");
            priors::save_catalog(&catalog, &catalog_path)?;
            println!(
                "wrote {} with {} prior set(s)",
                catalog_path.display(),
                catalog.sets.len()
            );
            Ok(())
        }
        Err(err) => {
            let record =
                elicit::ElicitationRecord::new(prompt, &response, Vec::new(), &endpoint, true);
            elicit::append_record(&audit_path, &record)?;
            write_text(&args.out.join("raw_response.txt"), &response.text)?;
            Err(Failure::from(err))
        }
    }
}

fn density_curves_json(
    names: &[String],
    mle: &[GaussianDist],
    catalog: &PriorCatalog,
) -> Result<serde_json::Value, Failure> {
    let mut per_coef = BTreeMap::new();
    for (j, name) in names.iter().enumerate() {
        let mut dists = vec![mle[j]];
        let mut prior_dists: Vec<(String, GaussianDist)> = Vec::new();
        for set in &catalog.sets {
            let entry = set.entry(name)?;
            let dist = entry.dist()?;
            dists.push(dist);
            prior_dists.push((set.label.clone(), dist));
        }
        let grid = eval::density_grid(&dists, 512);
        let densities = |d: &GaussianDist| grid.iter().map(|&x| d.pdf(x)).collect::<Vec<f64>>();
        let priors_json: BTreeMap<String, Vec<f64>> = prior_dists
            .iter()
            .map(|(label, d)| (label.clone(), densities(d)))
            .collect();
        per_coef.insert(
            name.clone(),
            json!({
                "grid": grid,
                "mle": densities(&mle[j]),
                "priors": priors_json,
            }),
        );
    }
    Ok(json!(per_coef))
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    ensure_out_dir(&args.out)?;
    let (spec, data) = load_inputs(&args.data, &args.spec)?;
    let catalog = priors::load_catalog(&args.catalog)?;
    priors::validate_catalog(&catalog, &spec)?;

    let fit = glm::fit_mle(&data, glm::DEFAULT_TOL, glm::DEFAULT_MAX_ITER)?;
    let (marginals, sd_source) = if args.bootstrap_reps > 0 {
        let boot = glm::bootstrap_mle(&data, args.bootstrap_reps, args.seed)?;
        (
            boot.marginals,
            format!("bootstrap({})", args.bootstrap_reps),
        )
    } else {
        (fit.marginals.clone(), "fisher".to_string())
    };

    let report =
        eval::kl_table_from_marginals(&fit.names, &marginals, &catalog, &spec, &sd_source)?;
    let report_json = json!({
        "mle": mle_view(&fit, &sd_source),
        "kl": report,
        "dropped_rows": data.dropped,
        "n": data.n,
    });
    write_json(&args.out.join("kl_report.json"), &report_json)?;
    let table = eval::render_kl_table(&report);
    write_text(&args.out.join("kl_table.txt"), &table)?;

    let curves = density_curves_json(&fit.names, &marginals, &catalog)?;
    write_json(&args.out.join("curves.json"), &curves)?;

    print!("{table}");
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Result<(), Failure> {
    ensure_out_dir(&args.out)?;
    let (spec, data) = load_inputs(&args.data, &args.spec)?;
    let catalog = match &args.catalog {
        Some(path) => {
            let catalog = priors::load_catalog(path)?;
            priors::validate_catalog(&catalog, &spec)?;
            Some(catalog)
        }
        None => None,
    };

    let folds = dataset::make_folds(&data, args.folds, args.seed)?;
    let config = CvConfig {
        seed: args.seed,
        mc_draws: args.mc_draws,
        ..CvConfig::default()
    };
    let report = cv::run_cv(&data, catalog.as_ref(), &folds, &config)?;

    let report_json =
        serde_json::to_value(&report).map_err(|e| Failure::new(4, format!("serialization: {e}")))?;
    write_json(&args.out.join("cv_report.json"), &report_json)?;
    let table = cv::render_cv_table(&report);
    write_text(&args.out.join("cv_table.txt"), &table)?;

    print!("{table}");
    Ok(())
}

fn posterior_for(
    data: &BoundDataset,
    set: &priors::PriorSet,
) -> Result<PosteriorFit, Failure> {
    match data.spec.response_kind {
        ResponseKind::Binary => Ok(bayes::posterior_logistic_laplace(
            data,
            set,
            glm::DEFAULT_TOL,
            glm::DEFAULT_MAX_ITER,
        )?),
        ResponseKind::Continuous => Ok(bayes::posterior_linear_conjugate(data, set)?),
    }
}

fn cmd_posterior(args: PosteriorArgs) -> Result<(), Failure> {
    ensure_out_dir(&args.out)?;
    let (spec, data) = load_inputs(&args.data, &args.spec)?;
    let catalog = priors::load_catalog(&args.catalog)?;
    priors::validate_catalog(&catalog, &spec)?;

    let set = catalog.find(&args.prior_label).ok_or_else(|| {
        let labels: Vec<&str> = catalog.sets.iter().map(|s| s.label.as_str()).collect();
        Failure::new(
            1,
            format!(
                "prior set `{}` not found; available: {}",
                args.prior_label,
                labels.join(", ")
            ),
        )
    })?;

    let mle = glm::fit_mle(&data, glm::DEFAULT_TOL, glm::DEFAULT_MAX_ITER)?;
    let posterior = posterior_for(&data, set)?;

    let mut per_coef = BTreeMap::new();
    for (j, name) in mle.names.iter().enumerate() {
        let prior_dist = set.entry(name)?.dist()?;
        let trio = [prior_dist, mle.marginals[j], posterior.marginals[j]];
        let grid = eval::density_grid(&trio, 512);
        let densities =
            |d: &GaussianDist| grid.iter().map(|&x| d.pdf(x)).collect::<Vec<f64>>();
        per_coef.insert(
            name.clone(),
            json!({
                "grid": grid,
                "prior": densities(&trio[0]),
                "mle": densities(&trio[1]),
                "posterior": densities(&trio[2]),
            }),
        );
    }
    let out_json = json!({
        "prior_label": set.label,
        "method": posterior.method,
        "coefficients": per_coef,
    });
    let path = args
        .out
        .join(format!("posterior_curves_{}.json", sanitize_label(&set.label)));
    write_json(&path, &out_json)?;
    println!("wrote {}", path.display());
    Ok(())
}
