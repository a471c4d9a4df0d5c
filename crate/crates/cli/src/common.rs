use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use graphecon_core::io::{declared_mode, economy_from_json, parse_json, read_text, to_pretty, IoError};
use graphecon_core::{Economy, NumericMode, Scalar};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

pub const MODE_ENV: &str = "GRAPHECON_NUMERIC_MODE";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Guard(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Guard(_) => 3,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn parse_mode(s: &str) -> Result<NumericMode, String> {
    s.parse().map_err(|e: graphecon_core::scalar::ScalarError| e.to_string())
}

/// `--mode`, then the environment, then the file, then exact.
pub fn resolve_mode(flag: Option<NumericMode>, doc: Option<&Value>) -> Result<NumericMode, CliError> {
    if let Some(m) = flag {
        return Ok(m);
    }
    if let Ok(v) = std::env::var(MODE_ENV) {
        if !v.trim().is_empty() {
            return v.parse().map_err(|e| CliError::Usage(format!("{MODE_ENV}: {e}")));
        }
    }
    if let Some(doc) = doc {
        if let Some(m) = declared_mode(doc)? {
            return Ok(m);
        }
    }
    Ok(NumericMode::Exact)
}

pub fn load_doc(path: &Path) -> Result<Value, CliError> {
    let text = read_text(path)?;
    parse_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn economy<S: Scalar>(doc: &Value) -> Result<Economy<S>, CliError> {
    Ok(economy_from_json(doc)?)
}

/// Parses a number such as `1/10` or `0.05`; exact mode keeps it exact.
pub fn scalar_arg<S: Scalar>(name: &str, text: &str) -> Result<S, CliError> {
    S::parse_literal(text).map_err(|e| CliError::Usage(format!("--{name}: {e}")))
}

pub fn positive_arg<S: Scalar>(name: &str, text: &str) -> Result<S, CliError> {
    let v: S = scalar_arg(name, text)?;
    if v <= S::zero() {
        return Err(CliError::Usage(format!("--{name} must be positive, got {text}")));
    }
    Ok(v)
}

pub fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => create(p)?.write_all(text.as_bytes()).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Failed(e.to_string()))?;
    write_text(path, &to_pretty(&v))
}

pub fn pass_or_fail(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
