//! Per-answer method outputs and their JSONL files.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::DatasetError;

/// One evaluation method's value for one answer.
///
/// A method that rates both questions separately writes two ids, `<id>:fi`
/// and `<id>:hw`; a plain `<id>` is used for both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub answer_id: String,
    pub method_id: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<Value>,
}

impl MethodScore {
    pub fn new(answer_id: impl Into<String>, method_id: impl Into<String>, value: f64) -> Self {
        Self {
            answer_id: answer_id.into(),
            method_id: method_id.into(),
            value,
            aux: None,
        }
    }

    pub fn with_aux(mut self, aux: Value) -> Self {
        self.aux = Some(aux);
        self
    }
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<MethodScore>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let score: MethodScore = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if !score.value.is_finite() {
            return Err(DatasetError::Parse {
                line: idx + 1,
                message: format!("non-finite value for '{}'", score.answer_id),
            });
        }
        out.push(score);
    }
    Ok(out)
}

/// Read a score file that may not exist yet (resumable runs).
pub fn read_scores_if_exists(path: impl AsRef<Path>) -> Result<Vec<MethodScore>, DatasetError> {
    match read_scores(&path) {
        Err(DatasetError::Io(e)) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        other => other,
    }
}

/// Appends score lines to a JSONL file, flushing after every batch.
pub struct ScoreWriter {
    file: File,
    seen: HashSet<(String, String)>,
}

impl ScoreWriter {
    /// Open `path` for appending. Existing (answer, method) keys are loaded
    /// so that [`ScoreWriter::contains`] can skip finished work. A trailing
    /// partial line left by an interrupted run is cut off first.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        if let Ok(bytes) = std::fs::read(path) {
            let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            if complete < bytes.len() {
                OpenOptions::new().write(true).open(path)?.set_len(complete as u64)?;
            }
        }
        let existing = read_scores_if_exists(path)?;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            file,
            seen: existing
                .into_iter()
                .map(|s| (s.answer_id, s.method_id))
                .collect(),
        })
    }

    pub fn contains(&self, answer_id: &str, method_id: &str) -> bool {
        self.seen
            .contains(&(answer_id.to_owned(), method_id.to_owned()))
    }

    /// Append scores whose key is not present yet; returns how many were written.
    pub fn append(&mut self, scores: &[MethodScore]) -> Result<usize, DatasetError> {
        let mut buf = Vec::new();
        let mut written = 0;
        for s in scores {
            if !self.seen.insert((s.answer_id.clone(), s.method_id.clone())) {
                continue;
            }
            serde_json::to_writer(&mut buf, s).map_err(io::Error::other)?;
            buf.push(b'\n');
            written += 1;
        }
        self.file.write_all(&buf)?;
        self.file.flush()?;
        Ok(written)
    }
}

/// method_id → answer_id → value. Later duplicates overwrite earlier ones.
pub type ScoreTable = BTreeMap<String, BTreeMap<String, f64>>;

pub fn score_table<'a>(scores: impl IntoIterator<Item = &'a MethodScore>) -> ScoreTable {
    let mut table = ScoreTable::new();
    for s in scores {
        table
            .entry(s.method_id.clone())
            .or_default()
            .insert(s.answer_id.clone(), s.value);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writer_skips_existing_keys_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let a = MethodScore::new("a1", "word_count", 3.0);
        let b = MethodScore::new("a2", "word_count", 5.0);
        {
            let mut w = ScoreWriter::open(&path).unwrap();
            assert_eq!(w.append(std::slice::from_ref(&a)).unwrap(), 1);
        }
        let mut w = ScoreWriter::open(&path).unwrap();
        assert!(w.contains("a1", "word_count"));
        assert_eq!(w.append(&[a.clone(), b.clone()]).unwrap(), 1);
        assert_eq!(read_scores(&path).unwrap(), vec![a, b]);
    }

    #[test]
    fn writer_drops_partial_last_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        std::fs::write(&path, "{\"answer_id\":\"a1\",\"method_id\":\"m\",\"value\":1.0}\n{\"answer_id\":\"a2\",\"met").unwrap();
        let mut w = ScoreWriter::open(&path).unwrap();
        assert!(w.contains("a1", "m"));
        assert!(!w.contains("a2", "m"));
        w.append(&[MethodScore::new("a2", "m", 2.0)]).unwrap();
        assert_eq!(read_scores(&path).unwrap().len(), 2);
    }

    #[test]
    fn missing_file_reads_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_scores_if_exists(dir.path().join("none.jsonl"))
            .unwrap()
            .is_empty());
    }
}
