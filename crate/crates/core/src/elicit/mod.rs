//! Prior elicitation against chat-completion LLM endpoints: prompt
//! construction from a model spec, a blocking HTTP client with retries,
//! and structured parsing of the response into prior sets.

mod client;
mod parse;
mod prompt;

pub use client::{call_llm, EndpointConfig, LlmResponse};
pub use parse::parse_response;
pub use prompt::{build_prompt, Likelihood, PromptTemplate};

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::error::ErrorClass;
use crate::priors::PriorSet;

#[derive(Debug, Error)]
pub enum ElicitError {
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("API key environment variable `{0}` is not set")]
    MissingApiKey(String),
    #[error("endpoint rejected credentials (HTTP {status}): {detail}")]
    Auth { status: u16, detail: String },
    #[error("transport failure after {attempts} attempts: {detail}")]
    Transport { attempts: usize, detail: String },
    #[error("endpoint returned HTTP {status}: {detail}")]
    HttpStatus { status: u16, detail: String },
    #[error("endpoint returned an empty response body")]
    EmptyResponse,
    #[error("could not parse prior sets from the response: {detail}")]
    Parse {
        detail: String,
        /// Full response text, preserved for manual entry.
        raw: String,
    },
    #[error("endpoint config error in `{path}`: {detail}")]
    Config { path: String, detail: String },
    #[error("failed to access `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ElicitError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ElicitError::Auth { .. }
            | ElicitError::Transport { .. }
            | ElicitError::HttpStatus { .. }
            | ElicitError::EmptyResponse => ErrorClass::Transport,
            ElicitError::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }
}

/// Audit record of one elicitation round trip.
#[derive(Debug, Clone, Serialize)]
pub struct ElicitationRecord {
    pub prompt_text: String,
    pub raw_response: String,
    pub parsed_sets: Vec<PriorSet>,
    pub provider: String,
    pub model_name: String,
    pub timestamp: DateTime<Utc>,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    /// Set when the response could not be parsed into valid prior sets.
    pub parse_failed: bool,
}

impl ElicitationRecord {
    /// Stamps a record with the current UTC time.
    pub fn new(
        prompt_text: String,
        response: &LlmResponse,
        parsed_sets: Vec<PriorSet>,
        endpoint: &EndpointConfig,
        parse_failed: bool,
    ) -> ElicitationRecord {
        ElicitationRecord {
            prompt_text,
            raw_response: response.text.clone(),
            parsed_sets,
            provider: endpoint.provider.clone(),
            model_name: endpoint.model.clone(),
            timestamp: Utc::now(),
            prompt_tokens: response.prompt_tokens,
            completion_tokens: response.completion_tokens,
            parse_failed,
        }
    }
}

/// Appends one record to a JSON-lines audit file (one write per record).
pub fn append_record(path: impl AsRef<Path>, record: &ElicitationRecord) -> Result<(), ElicitError> {
    let path = path.as_ref();
    let mut line = serde_json::to_string(record).expect("record serialization cannot fail");
    line.push('\n');
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| ElicitError::Io {
            path: path.display().to_string(),
            source,
        })?;
    file.write_all(line.as_bytes())
        .map_err(|source| ElicitError::Io {
            path: path.display().to_string(),
            source,
        })
}
