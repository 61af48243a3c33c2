use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::{ChoiceScore, GatewayError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheValue {
    Text(String),
    Scores(Vec<ChoiceScore>),
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    value: CacheValue,
}

type Slot = Arc<Mutex<Option<CacheValue>>>;

/// Response cache keyed by content digest, optionally persisted as an
/// append-only JSONL file. Concurrent requests for one key wait for a single
/// computation; failed computations are not cached.
pub struct ResponseCache {
    slots: Mutex<HashMap<String, Slot>>,
    sidecar: Option<Mutex<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            slots: Mutex::new(HashMap::new()),
            sidecar: None,
        }
    }

    /// Load `path` if it exists and append new entries to it. A truncated
    /// final line (from an interrupted write) is ignored; later entries for a
    /// key win.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let mut slots = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if let Ok(entry) = serde_json::from_str::<Entry>(&line) {
                    slots.insert(entry.key, Arc::new(Mutex::new(Some(entry.value))));
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let bytes = std::fs::read(path)?;
        if bytes.last().is_some_and(|&b| b != b'\n') {
            file.write_all(b"\n")?;
        }
        Ok(Self {
            slots: Mutex::new(slots),
            sidecar: Some(Mutex::new(file)),
        })
    }

    pub fn len(&self) -> usize {
        self.slots
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .filter(|s| s.lock().map(|v| v.is_some()).unwrap_or(false))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<CacheValue> {
        let slot = self.slots.lock().unwrap_or_else(|e| e.into_inner()).get(key).cloned()?;
        let value = slot.lock().unwrap_or_else(|e| e.into_inner()).clone();
        value
    }

    pub(crate) fn get_or_compute(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<CacheValue, GatewayError>,
    ) -> Result<CacheValue, GatewayError> {
        let slot = self
            .slots
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(key.to_owned())
            .or_default()
            .clone();
        let mut guard = slot.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(v) = guard.as_ref() {
            return Ok(v.clone());
        }
        let value = compute()?;
        if let Some(file) = &self.sidecar {
            let line = serde_json::to_string(&Entry {
                key: key.to_owned(),
                value: value.clone(),
            })
            .expect("cache entry serializes");
            let mut f = file.lock().unwrap_or_else(|e| e.into_inner());
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        *guard = Some(value.clone());
        Ok(value)
    }
}
