use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{LinearModel, LookupTableModel, NaiveBayesModel};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("model file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format version {found} (expected {MODEL_FORMAT_VERSION})")]
    FormatVersionMismatch { found: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "snake_case")]
pub enum Model<C> {
    NaiveBayes(NaiveBayesModel<C>),
    Lookup(LookupTableModel),
    Linear(LinearModel),
}

/// The on-disk model file: `{"format_version":1,"model_kind":...,...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument<C> {
    pub format_version: u32,
    #[serde(flatten)]
    pub model: Model<C>,
}

impl<C> ModelDocument<C> {
    pub fn new(model: Model<C>) -> Self {
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            model,
        }
    }
}

impl<C: Serialize + DeserializeOwned> ModelDocument<C> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        if v.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::FormatVersionMismatch {
                found: v.format_version,
            });
        }
        Ok(serde_json::from_str(text)?)
    }
}

/// Atomic write: temp file in the same directory, then rename.
pub fn save_model<C: Serialize + DeserializeOwned>(doc: &ModelDocument<C>, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(doc.to_json().as_bytes())?;
    tmp.write_all(b"\n")?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn load_model<C: Serialize + DeserializeOwned>(path: impl AsRef<Path>) -> Result<ModelDocument<C>, ModelError> {
    ModelDocument::from_json(&std::fs::read_to_string(path)?)
}
