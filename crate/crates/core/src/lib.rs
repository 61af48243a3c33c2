//! Core of the instruction-following evaluation toolkit: domain records and
//! their JSONL persistence, tokenization, reference-based and length
//! metrics, and the statistics that compare evaluation methods with human
//! ratings.

pub mod dataset;
pub mod meta;
pub mod rouge;
pub mod score;
pub mod stats;
pub mod text;

pub use dataset::{
    load_dataset, sample_documents, save_dataset, Answer, CorpusText, Dataset, DatasetBuilder,
    DatasetError, Document, HumanRating, Instruction,
};
pub use score::MethodScore;

use serde::{Deserialize, Serialize};

/// The two questions put to annotators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Question {
    /// "Does the output follow the instruction?" (0 = no, 1 = yes)
    Fi,
    /// "How well?" on a 1–5 scale.
    Hw,
}

impl Question {
    /// Admissible rating values, ascending.
    pub fn values(self) -> &'static [u8] {
        match self {
            Question::Fi => &[0, 1],
            Question::Hw => &[1, 2, 3, 4, 5],
        }
    }

    pub fn rating_of(self, rating: &HumanRating) -> f64 {
        match self {
            Question::Fi => f64::from(rating.follows_instruction),
            Question::Hw => f64::from(rating.how_well),
        }
    }

    /// Map a rating onto 0–1.
    pub fn normalize(self, value: f64) -> f64 {
        match self {
            Question::Fi => value,
            Question::Hw => (value - 1.0) / 4.0,
        }
    }

    /// Krippendorff distance used for this question's agreement.
    pub fn alpha_distance(self) -> stats::Distance {
        match self {
            Question::Fi => stats::Distance::Nominal,
            Question::Hw => stats::Distance::Interval,
        }
    }
}

/// Word and sentence counts of an answer as two method scores.
pub fn length_scores(answer: &Answer) -> [MethodScore; 2] {
    [
        MethodScore::new(&answer.id, "word_count", text::word_count(&answer.text) as f64),
        MethodScore::new(
            &answer.id,
            "sentence_count",
            text::sentence_count(&answer.text) as f64,
        ),
    ]
}
