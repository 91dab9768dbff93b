// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },
    #[error("{file}:{line}: {field}: {reason}")]
    Parse { file: String, line: usize, field: String, reason: String },
    #[error("simulation fault at step {step}: {diagnostic}")]
    SimulationFault { step: u64, diagnostic: String },
    #[error("degenerate frame: normal and tangent are parallel")]
    DegenerateFrame,
    #[error("orientation error angle {angle} rad is too close to pi; rotation axis is ambiguous")]
    AmbiguousAxis { angle: f64 },
    #[error("no normal: {0}")]
    NoNormal(&'static str),
    #[error("click {index} at ({u}, {v}) has no valid cloud point within {radius} px")]
    RejectedClick { index: usize, u: f64, v: f64, radius: usize },
    #[error("inverse kinematics failed at sample {sample}: residual {residual:.3e}, q = {q:?}")]
    IkFailure { sample: usize, residual: f64, q: Vec<f64> },
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { what: what.into(), reason: reason.into() }
    }

    pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::Dimension { what, expected, got })
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Translate a byte offset in `src` into a 1-based line number.
pub(crate) fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Wrap a `toml` deserialization error with the file name, line and field path.
pub(crate) fn toml_error(file: &str, src: &str, err: toml::de::Error) -> Error {
    let line = err.span().map(|s| line_of(src, s.start)).unwrap_or(0);
    let msg = err.message().to_string();
    // toml reports missing/unknown fields as "missing field `mass`"; pull out the name.
    // Otherwise use the key on the offending line.
    let key_on_line = || {
        let text = src.lines().nth(line.checked_sub(1)?)?;
        let (key, _) = text.split_once('=')?;
        Some(key.trim().to_string()).filter(|k| !k.is_empty())
    };
    let field = msg.split('`').nth(1).map(str::to_string).or_else(key_on_line).unwrap_or_else(|| "<document>".to_string());
    Error::Parse { file: file.to_string(), line, field, reason: msg }
}
