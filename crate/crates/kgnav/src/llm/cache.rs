//! Append-only JSON Lines response cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheRecord {
    pub fingerprint: String,
    pub backend: String,
    pub model: String,
    pub response_text: String,
    pub created_at: String,
}

/// In-memory fingerprint -> response map, optionally persisted to an
/// append-only JSONL file. Later records win on duplicate fingerprints.
pub struct Cache {
    entries: HashMap<String, String>,
    file: Option<(PathBuf, File)>,
}

impl Cache {
    pub fn in_memory() -> Self {
        Self {
            entries: HashMap::new(),
            file: None,
        }
    }

    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let mut entries = HashMap::new();
        if path.exists() {
            for record in read_records(path)? {
                entries.insert(record.fingerprint, record.response_text);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
        Ok(Self {
            entries,
            file: Some((path.to_owned(), file)),
        })
    }

    pub fn get(&self, fingerprint: &str) -> Option<&str> {
        self.entries.get(fingerprint).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn put(
        &mut self,
        fingerprint: &str,
        backend: &str,
        model: &str,
        text: &str,
    ) -> Result<(), LlmError> {
        self.entries.insert(fingerprint.to_owned(), text.to_owned());
        if let Some((path, file)) = &mut self.file {
            let record = CacheRecord {
                fingerprint: fingerprint.to_owned(),
                backend: backend.to_owned(),
                model: model.to_owned(),
                response_text: text.to_owned(),
                created_at: chrono::Utc::now().to_rfc3339(),
            };
            let line =
                serde_json::to_string(&record).map_err(|e| LlmError::Cache(e.to_string()))?;
            writeln!(file, "{line}")
                .map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

pub fn read_records(path: &Path) -> Result<Vec<CacheRecord>, LlmError> {
    let file = File::open(path).map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LlmError::Cache(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CacheRecord = serde_json::from_str(&line)
            .map_err(|e| LlmError::Cache(format!("{} line {}: {e}", path.display(), i + 1)))?;
        records.push(record);
    }
    Ok(records)
}
