//! Documents and JSONL dataset ingestion.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: invalid document: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: document text is empty")]
    EmptyText { path: String, line: usize },
    #[error("{path}:{line}: duplicate document id {id:?}")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },
}

/// One classified text instance, the unit of explanation.
///
/// For NLI-style tasks `text` holds the premise (the side counterfactual
/// edits target) and `text_pair` the hypothesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_pair: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            text_pair: None,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_text_pair(mut self, pair: impl Into<String>) -> Self {
        self.text_pair = Some(pair.into());
        self
    }
}

/// Reads documents from a JSONL file, one `{"id", "text", "text_pair", "label"}`
/// object per line. Blank lines are skipped.
///
/// Enforces unique ids and non-empty text.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Document>, DatasetError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: display.clone(),
        source,
    })?;
    let mut docs = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(&line).map_err(|source| DatasetError::Parse {
                path: display.clone(),
                line: idx + 1,
                source,
            })?;
        if doc.text.trim().is_empty() {
            return Err(DatasetError::EmptyText {
                path: display.clone(),
                line: idx + 1,
            });
        }
        if !seen.insert(doc.id.clone()) {
            return Err(DatasetError::DuplicateId {
                path: display.clone(),
                line: idx + 1,
                id: doc.id,
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

/// Writes documents as JSONL, one object per line.
pub fn write_jsonl(path: impl AsRef<Path>, docs: &[Document]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let io_err = |source| DatasetError::Io {
        path: display.clone(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for doc in docs {
        let line = serde_json::to_string(doc).expect("document serializes");
        writeln!(out, "{line}").map_err(|source| DatasetError::Io {
            path: display.clone(),
            source,
        })?;
    }
    out.flush().map_err(|source| DatasetError::Io {
        path: display.clone(),
        source,
    })
}
