//! Elicit per-coefficient Gaussian priors for Bayesian GLMs from LLM chat
//! endpoints, and gauge their quality against the data.
//!
//! The pipeline: bind a CSV dataset to a [`dataset::ModelSpec`]; fit the
//! frequentist MLE with its Gaussian sampling-distribution approximation
//! ([`glm`]); elicit prior sets from a chat endpoint ([`elicit`]) or load a
//! hand-written catalog ([`priors`]); score each prior against the MLE
//! distribution with closed-form KL divergence ([`eval`]); compute
//! posteriors ([`bayes`]); and compare predictive performance under
//! cross-validation with corrected paired t-tests ([`cv`]).

pub mod bayes;
pub mod cv;
pub mod dataset;
pub mod elicit;
pub mod error;
pub mod eval;
pub mod glm;
pub mod priors;
pub mod seeding;

pub use error::{Error, ErrorClass, Result};
pub use glm::GaussianDist;

/// Name under which the intercept coefficient appears in prior sets,
/// reports, and prompts.
pub const INTERCEPT_NAME: &str = "intercept";
