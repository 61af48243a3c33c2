//! Domain records and JSONL persistence.
//!
//! A dataset file holds one JSON object per line. Every object carries a
//! `"kind"` discriminator (`provenance`, `document`, `instruction`, `answer`,
//! `rating`). Records may appear in any order; links are resolved after the
//! whole file has been read.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{kind} '{id}' referenced by {referrer} does not exist")]
    MissingReference {
        kind: &'static str,
        id: String,
        referrer: String,
    },
    #[error("duplicate {kind} '{id}'")]
    Duplicate { kind: &'static str, id: String },
    #[error("invalid {kind} '{id}': {reason}")]
    Invalid {
        kind: &'static str,
        id: String,
        reason: String,
    },
    #[error("insufficient eligible texts: need {needed}, found {eligible}")]
    InsufficientEligible { needed: usize, eligible: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub source_corpus: String,
    pub text: String,
    pub word_count: usize,
}

impl Document {
    /// Build a document whose id is derived from its source tag and text.
    pub fn new(source_corpus: impl Into<String>, text: impl Into<String>) -> Self {
        let source_corpus = source_corpus.into();
        let text = text.into();
        let id = content_id("doc", &[&source_corpus, &text]);
        Self::with_id(id, source_corpus, text)
    }

    pub fn with_id(
        id: impl Into<String>,
        source_corpus: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        let text = text.into();
        Self {
            id: id.into(),
            source_corpus: source_corpus.into(),
            word_count: text::word_count(&text),
            text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: String,
    pub document_id: String,
    pub text: String,
    pub generator_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub id: String,
    pub document_id: String,
    pub instruction_id: String,
    pub text: String,
    pub generator_id: String,
    pub lm_family: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanRating {
    pub answer_id: String,
    pub annotator_id: String,
    /// 1 when the annotator said the answer follows the instruction.
    pub follows_instruction: u8,
    /// 1 (not at all) to 5 (strictly).
    pub how_well: u8,
    pub timestamp: DateTime<Utc>,
}

impl HumanRating {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| DatasetError::Invalid {
            kind: "rating",
            id: format!("{}/{}", self.answer_id, self.annotator_id),
            reason,
        };
        if self.follows_instruction > 1 {
            return Err(invalid(format!(
                "follows_instruction must be 0 or 1, got {}",
                self.follows_instruction
            )));
        }
        if !(1..=5).contains(&self.how_well) {
            return Err(invalid(format!(
                "how_well must be within 1..=5, got {}",
                self.how_well
            )));
        }
        if self.annotator_id.is_empty() {
            return Err(invalid("empty annotator_id".into()));
        }
        Ok(())
    }
}

/// One line of a dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Provenance { metadata: BTreeMap<String, Value> },
    Document(Document),
    Instruction(Instruction),
    Answer(Answer),
    Rating(HumanRating),
}

/// Short stable id built from a SHA-256 digest of `parts`.
pub fn content_id(prefix: &str, parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    format!("{prefix}-{}", &hex::encode(digest)[..16])
}

/// An immutable, validated collection of documents, instructions, answers
/// and human ratings. Use [`DatasetBuilder`] to construct or extend one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    provenance: BTreeMap<String, Value>,
    documents: BTreeMap<String, Document>,
    instructions: BTreeMap<String, Instruction>,
    answers: BTreeMap<String, Answer>,
    ratings: BTreeMap<(String, String), HumanRating>,
}

impl Dataset {
    pub fn builder() -> DatasetBuilder {
        DatasetBuilder::default()
    }

    /// A builder pre-filled with this dataset's records.
    pub fn to_builder(&self) -> DatasetBuilder {
        DatasetBuilder {
            provenance: self.provenance.clone(),
            documents: self.documents.values().cloned().collect(),
            instructions: self.instructions.values().cloned().collect(),
            answers: self.answers.values().cloned().collect(),
            ratings: self.ratings.values().cloned().collect(),
        }
    }

    pub fn provenance(&self) -> &BTreeMap<String, Value> {
        &self.provenance
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.documents.values()
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.instructions.values()
    }

    pub fn answers(&self) -> impl Iterator<Item = &Answer> {
        self.answers.values()
    }

    pub fn ratings(&self) -> impl Iterator<Item = &HumanRating> {
        self.ratings.values()
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.documents.get(id)
    }

    pub fn instruction(&self, id: &str) -> Option<&Instruction> {
        self.instructions.get(id)
    }

    pub fn answer(&self, id: &str) -> Option<&Answer> {
        self.answers.get(id)
    }

    /// Ratings of one answer, ordered by annotator id.
    pub fn ratings_for<'a>(&'a self, answer_id: &str) -> impl Iterator<Item = &'a HumanRating> {
        let start = (answer_id.to_owned(), String::new());
        let owned = answer_id.to_owned();
        self.ratings
            .range(start..)
            .take_while(move |((a, _), _)| *a == owned)
            .map(|(_, r)| r)
    }

    /// Counts of (documents, instructions, answers, ratings).
    pub fn counts(&self) -> (usize, usize, usize, usize) {
        (
            self.documents.len(),
            self.instructions.len(),
            self.answers.len(),
            self.ratings.len(),
        )
    }

    /// Answers grouped by (document_id, instruction_id), each group ordered by
    /// answer id.
    pub fn answers_by_pair(&self) -> BTreeMap<(String, String), Vec<&Answer>> {
        let mut pairs: BTreeMap<(String, String), Vec<&Answer>> = BTreeMap::new();
        for answer in self.answers.values() {
            pairs
                .entry((answer.document_id.clone(), answer.instruction_id.clone()))
                .or_default()
                .push(answer);
        }
        pairs
    }

    /// Records in canonical file order.
    pub fn records(&self) -> Vec<Record> {
        let mut out = Vec::new();
        if !self.provenance.is_empty() {
            out.push(Record::Provenance {
                metadata: self.provenance.clone(),
            });
        }
        out.extend(self.documents.values().cloned().map(Record::Document));
        out.extend(self.instructions.values().cloned().map(Record::Instruction));
        out.extend(self.answers.values().cloned().map(Record::Answer));
        out.extend(self.ratings.values().cloned().map(Record::Rating));
        out
    }
}

/// Accumulates records in any order and validates them on [`build`](Self::build).
#[derive(Debug, Clone, Default)]
pub struct DatasetBuilder {
    provenance: BTreeMap<String, Value>,
    documents: Vec<Document>,
    instructions: Vec<Instruction>,
    answers: Vec<Answer>,
    ratings: Vec<HumanRating>,
}

impl DatasetBuilder {
    pub fn provenance(mut self, key: impl Into<String>, value: Value) -> Self {
        self.provenance.insert(key.into(), value);
        self
    }

    pub fn document(mut self, d: Document) -> Self {
        self.documents.push(d);
        self
    }

    pub fn instruction(mut self, i: Instruction) -> Self {
        self.instructions.push(i);
        self
    }

    pub fn answer(mut self, a: Answer) -> Self {
        self.answers.push(a);
        self
    }

    pub fn rating(mut self, r: HumanRating) -> Self {
        self.ratings.push(r);
        self
    }

    pub fn documents(mut self, ds: impl IntoIterator<Item = Document>) -> Self {
        self.documents.extend(ds);
        self
    }

    pub fn instructions(mut self, is: impl IntoIterator<Item = Instruction>) -> Self {
        self.instructions.extend(is);
        self
    }

    pub fn answers(mut self, as_: impl IntoIterator<Item = Answer>) -> Self {
        self.answers.extend(as_);
        self
    }

    pub fn ratings(mut self, rs: impl IntoIterator<Item = HumanRating>) -> Self {
        self.ratings.extend(rs);
        self
    }

    fn push(&mut self, record: Record) {
        match record {
            Record::Provenance { metadata } => self.provenance.extend(metadata),
            Record::Document(d) => self.documents.push(d),
            Record::Instruction(i) => self.instructions.push(i),
            Record::Answer(a) => self.answers.push(a),
            Record::Rating(r) => self.ratings.push(r),
        }
    }

    pub fn build(self) -> Result<Dataset> {
        let mut documents = BTreeMap::new();
        for d in self.documents {
            let expected = text::word_count(&d.text);
            if d.word_count != expected {
                return Err(DatasetError::Invalid {
                    kind: "document",
                    id: d.id,
                    reason: format!(
                        "word_count {} does not match text ({expected})",
                        d.word_count
                    ),
                });
            }
            if d.id.is_empty() {
                return Err(invalid("document", &d.id, "empty id"));
            }
            if documents.contains_key(&d.id) {
                return Err(DatasetError::Duplicate {
                    kind: "document",
                    id: d.id,
                });
            }
            documents.insert(d.id.clone(), d);
        }

        let mut instructions = BTreeMap::new();
        for i in self.instructions {
            if i.text.trim().is_empty() {
                return Err(invalid("instruction", &i.id, "empty text"));
            }
            if i.text.contains('\n') || i.text.contains('\r') {
                return Err(invalid("instruction", &i.id, "text spans several lines"));
            }
            if !documents.contains_key(&i.document_id) {
                return Err(DatasetError::MissingReference {
                    kind: "document",
                    id: i.document_id,
                    referrer: format!("instruction '{}'", i.id),
                });
            }
            if instructions.contains_key(&i.id) {
                return Err(DatasetError::Duplicate {
                    kind: "instruction",
                    id: i.id,
                });
            }
            instructions.insert(i.id.clone(), i);
        }

        let mut answers = BTreeMap::new();
        let mut triples = HashMap::new();
        for a in self.answers {
            if !documents.contains_key(&a.document_id) {
                return Err(DatasetError::MissingReference {
                    kind: "document",
                    id: a.document_id,
                    referrer: format!("answer '{}'", a.id),
                });
            }
            let Some(instr) = instructions.get(&a.instruction_id) else {
                return Err(DatasetError::MissingReference {
                    kind: "instruction",
                    id: a.instruction_id,
                    referrer: format!("answer '{}'", a.id),
                });
            };
            if instr.document_id != a.document_id {
                return Err(invalid(
                    "answer",
                    &a.id,
                    "instruction belongs to a different document",
                ));
            }
            let triple = (
                a.document_id.clone(),
                a.instruction_id.clone(),
                a.generator_id.clone(),
            );
            if let Some(other) = triples.insert(triple, a.id.clone()) {
                return Err(invalid(
                    "answer",
                    &a.id,
                    &format!("same document, instruction and generator as '{other}'"),
                ));
            }
            if answers.contains_key(&a.id) {
                return Err(DatasetError::Duplicate {
                    kind: "answer",
                    id: a.id,
                });
            }
            answers.insert(a.id.clone(), a);
        }

        let mut ratings = BTreeMap::new();
        for r in self.ratings {
            r.validate()?;
            if !answers.contains_key(&r.answer_id) {
                return Err(DatasetError::MissingReference {
                    kind: "answer",
                    id: r.answer_id,
                    referrer: format!("rating by '{}'", r.annotator_id),
                });
            }
            let key = (r.answer_id.clone(), r.annotator_id.clone());
            if ratings.contains_key(&key) {
                return Err(DatasetError::Duplicate {
                    kind: "rating",
                    id: format!("{}/{}", key.0, key.1),
                });
            }
            ratings.insert(key, r);
        }

        Ok(Dataset {
            provenance: self.provenance,
            documents,
            instructions,
            answers,
            ratings,
        })
    }
}

fn invalid(kind: &'static str, id: &str, reason: &str) -> DatasetError {
    DatasetError::Invalid {
        kind,
        id: id.to_owned(),
        reason: reason.to_owned(),
    }
}

/// Parse JSONL records, reporting 1-based line numbers on failure. Blank
/// lines are skipped.
pub fn read_records(reader: impl BufRead) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn parse_dataset(reader: impl BufRead) -> Result<Dataset> {
    let mut builder = DatasetBuilder::default();
    for record in read_records(reader)? {
        builder.push(record);
    }
    builder.build()
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path)?;
    parse_dataset(BufReader::new(file))
}

pub fn write_dataset(dataset: &Dataset, mut writer: impl Write) -> Result<()> {
    for record in dataset.records() {
        let line = serde_json::to_string(&record).map_err(io::Error::other)?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_dataset(dataset, BufWriter::new(file))
}

/// A raw text offered for sampling, tagged with its source corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusText {
    pub source: String,
    pub text: String,
}

/// Draw `n` documents uniformly without replacement from the texts whose
/// word count lies in `[min_words, max_words]`. Output follows corpus order.
pub fn sample_documents(
    corpus: &[CorpusText],
    n: usize,
    min_words: usize,
    max_words: usize,
    seed: u64,
) -> Result<Vec<Document>> {
    let eligible: Vec<&CorpusText> = corpus
        .iter()
        .filter(|t| (min_words..=max_words).contains(&text::word_count(&t.text)))
        .collect();
    if eligible.len() < n {
        return Err(DatasetError::InsufficientEligible {
            needed: n,
            eligible: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, eligible.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| Document::new(&eligible[i].source, &eligible[i].text))
        .collect())
}
