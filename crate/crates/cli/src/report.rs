use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use translab::{BaseChart, Error, Metadata};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if is_config_error(e) => 2,
            CliError::Core(_) => 1,
        }
    }
}

/// Errors caused by the inputs rather than by a failed numerical check.
pub fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::Domain(_))
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub check: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

impl Failure {
    pub fn new(check: &str, message: impl Into<String>) -> Self {
        Failure { check: check.into(), message: message.into(), value: None, bound: None }
    }

    pub fn bounded(check: &str, message: impl Into<String>, value: f64, bound: f64) -> Self {
        Failure { value: Some(value), bound: Some(bound), ..Failure::new(check, message) }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.check, self.message)?;
        if let (Some(v), Some(b)) = (self.value, self.bound) {
            write!(f, " (value {v:e}, bound {b:e})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub failures: Vec<Failure>,
}

#[derive(Serialize)]
struct FailureReport<'a> {
    metadata: &'a Metadata,
    failures: &'a [Failure],
}

pub fn failure_report_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".failures.json");
    PathBuf::from(name)
}

/// Writes `<out>.failures.json` when anything failed, and removes a stale one
/// otherwise.
pub fn finish(out: &Path, metadata: &Metadata, failures: Vec<Failure>) -> Result<Outcome, CliError> {
    let path = failure_report_path(out);
    if failures.is_empty() {
        if path.exists() {
            fs::remove_file(&path).map_err(Error::from)?;
        }
    } else {
        let body = serde_json::to_string_pretty(&FailureReport { metadata, failures: &failures })
            .map_err(Error::from)?;
        fs::write(&path, body + "\n").map_err(Error::from)?;
    }
    Ok(Outcome { failures })
}

/// SHA-256 over the parsed command line and the bytes of every input file.
pub fn config_hash<T: Serialize>(config: &T, inputs: &[&Path]) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config).map_err(Error::from)?);
    for path in inputs {
        let bytes = fs::read(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// `--base` takes a chart document inline or from a file.
pub fn parse_chart(doc: &str) -> Result<BaseChart, CliError> {
    let text = if doc.trim_start().starts_with('{') {
        doc.to_string()
    } else {
        fs::read_to_string(doc).map_err(|e| CliError::Usage(format!("--base: cannot read {doc}: {e}")))?
    };
    let chart: BaseChart =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("--base: {e}")))?;
    chart.validate().map_err(|e| CliError::Usage(format!("--base: {e}")))?;
    Ok(chart)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, body + "\n").map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}
