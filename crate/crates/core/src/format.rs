//! Versioned JSON documents shared by every on-disk artifact.
//!
//! Each document carries a `"format"` tag (`chord-seq/v1`, `chroma-matrix/v1`,
//! `beat-grid/v1`, `genreq/v1`). The tag is checked before the body is
//! decoded so a version mismatch is reported as such rather than as a
//! missing field.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported format tag {found:?} (expected {expected:?})")]
    Version {
        expected: &'static str,
        found: String,
    },
    #[error("invalid document: {0}")]
    Invalid(String),
}

impl FormatError {
    pub fn is_io(&self) -> bool {
        matches!(self, FormatError::Io { .. })
    }
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, FormatError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Decodes a tagged document from text, rejecting any other tag.
pub fn from_json_str<T: DeserializeOwned>(
    text: &str,
    expected: &'static str,
) -> Result<T, FormatError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    from_json_value(value, expected)
}

pub(crate) fn from_json_value<T: DeserializeOwned>(
    value: serde_json::Value,
    expected: &'static str,
) -> Result<T, FormatError> {
    match value.get("format").and_then(|f| f.as_str()) {
        Some(tag) if tag == expected => {}
        Some(tag) => {
            return Err(FormatError::Version {
                expected,
                found: tag.to_string(),
            })
        }
        None => return Err(FormatError::Invalid("missing \"format\" tag".into())),
    }
    Ok(serde_json::from_value(value)?)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let text = to_json_string(value)?;
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(
    path: impl AsRef<Path>,
    expected: &'static str,
) -> Result<T, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json_str(&text, expected)
}
