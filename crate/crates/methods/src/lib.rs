//! Generation of instructions and answers, and the LLM-based rating
//! methods: constrained softmax, self-agreement and multi-LLM consensus.

pub mod consensus;
pub mod generate;
pub mod parse;
pub mod self_agreement;
pub mod softmax;
pub mod templates;

use ifjudge_core::{Answer, Dataset};
use ifjudge_gateway::GatewayError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use consensus::{classify_ratings, multi_llm_agreement, multi_llm_repeat, ConsensusOutcome, ConsensusTranscript};
pub use generate::{generate_answers, generate_instructions, parse_instruction_lines, GenerationDefaults};
pub use parse::{rating_parse, rationale_of};
pub use self_agreement::self_agreement_rate;
pub use softmax::{constrained_softmax_rate, constrained_softmax_score, softmax, RatingDistribution};
pub use templates::{PromptTemplate, TemplateError, Templates};

#[derive(Debug, Error)]
pub enum MethodError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("malformed model output after retry: {raw:?}")]
    Malformed { raw: Vec<String> },
    #[error("no parseable rating in any of {} samples: {raw:?}", raw.len())]
    Unparseable { raw: Vec<String> },
    #[error("need {needed} few-shot examples, {available} available")]
    NotEnoughExamples { needed: usize, available: usize },
    #[error("round {round}: only {parsed} agent rating(s) parsed")]
    TooFewRatings { round: usize, parsed: usize },
    #[error("non-finite log-likelihood for choice {0:?}")]
    NonFinite(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset has no {kind} '{id}'")]
    Missing { kind: &'static str, id: String },
}

/// The text of one answer to rate, with its context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingItem<'a> {
    pub answer_id: &'a str,
    pub document_id: &'a str,
    pub document: &'a str,
    pub instruction: &'a str,
    pub answer: &'a str,
}

impl<'a> RatingItem<'a> {
    pub fn from_dataset(dataset: &'a Dataset, answer: &'a Answer) -> Result<Self, MethodError> {
        let document = dataset.document(&answer.document_id).ok_or_else(|| MethodError::Missing {
            kind: "document",
            id: answer.document_id.clone(),
        })?;
        let instruction = dataset
            .instruction(&answer.instruction_id)
            .ok_or_else(|| MethodError::Missing {
                kind: "instruction",
                id: answer.instruction_id.clone(),
            })?;
        Ok(Self {
            answer_id: &answer.id,
            document_id: &answer.document_id,
            document: &document.text,
            instruction: &instruction.text,
            answer: &answer.text,
        })
    }
}

/// A rated document-instruction-answer tuple used as a prompt example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotExample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document_id: Option<String>,
    pub document: String,
    pub instruction: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fi: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hw: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

impl FewShotExample {
    pub fn rating(&self, question: ifjudge_core::Question) -> Option<u8> {
        match question {
            ifjudge_core::Question::Fi => self.fi,
            ifjudge_core::Question::Hw => self.hw,
        }
    }

    /// Examples built from the dataset: one per answer with ratings, using the
    /// rounded mean HW and majority FI (ties count as "yes").
    pub fn from_dataset(dataset: &Dataset) -> Vec<FewShotExample> {
        dataset
            .answers()
            .filter_map(|a| {
                let ratings: Vec<_> = dataset.ratings_for(&a.id).collect();
                if ratings.is_empty() {
                    return None;
                }
                let n = ratings.len() as f64;
                let hw = ratings.iter().map(|r| f64::from(r.how_well)).sum::<f64>() / n;
                let yes = ratings.iter().filter(|r| r.follows_instruction == 1).count() as f64;
                let item = RatingItem::from_dataset(dataset, a).ok()?;
                Some(FewShotExample {
                    document_id: Some(a.document_id.clone()),
                    document: item.document.to_owned(),
                    instruction: item.instruction.to_owned(),
                    answer: item.answer.to_owned(),
                    fi: Some(u8::from(2.0 * yes >= n)),
                    hw: Some(hw.round() as u8),
                    rationale: None,
                })
            })
            .collect()
    }
}

/// Hand-written examples used when no others are supplied. They were written
/// for this tool and are not taken from any published evaluation set.
pub fn builtin_examples() -> Vec<FewShotExample> {
    let ex = |document: &str, instruction: &str, answer: &str, fi: u8, hw: u8, rationale: &str| FewShotExample {
        document_id: None,
        document: document.into(),
        instruction: instruction.into(),
        answer: answer.into(),
        fi: Some(fi),
        hw: Some(hw),
        rationale: Some(rationale.into()),
    };
    vec![
        ex(
            "The city council voted 7-2 on Tuesday to extend the downtown bike lane network by four miles. \
             Construction starts in March and is funded by a state transportation grant. Two council members \
             objected that the plan removes 120 parking spaces.",
            "Summarize the decision and the main objection in one sentence.",
            "The council approved a four-mile bike lane extension funded by a state grant, over objections that it removes 120 parking spaces.",
            1,
            5,
            "One sentence that states both the decision and the objection with the key figures.",
        ),
        ex(
            "Our quarterly survey of 2,000 customers found satisfaction rose from 71% to 78%. The largest gains came \
             from faster delivery times. Complaints about the mobile app doubled after the redesign in May.",
            "List the key findings as three bullet points.",
            "Customer satisfaction went up this quarter, mostly thanks to faster delivery, although some people did not like the new app.",
            0,
            2,
            "The content is roughly right but it ignores the bullet-point format and drops the figures.",
        ),
        ex(
            "Hi Dana, the vendor moved the server migration to Saturday 6am. Please confirm the backup finished \
             Friday night and tell the support team to expect two hours of downtime. Thanks, Lee",
            "What does Lee ask Dana to do? Answer in under 20 words.",
            "Confirm Friday's backup completed and warn support about two hours of downtime on Saturday.",
            1,
            4,
            "Short and accurate; it omits that the vendor moved the date, which is minor context.",
        ),
        ex(
            "The study tracked 300 patients for two years and found that a daily 20-minute walk reduced blood \
             pressure by an average of 5 mmHg. The effect was strongest in patients over 60.",
            "Explain the main novelty of the study for a general audience.",
            "Exercise is good for you and doctors recommend it.",
            0,
            1,
            "Generic statement that mentions none of the study's findings.",
        ),
    ]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variants {
    /// Omit the task description and rely on the examples alone.
    #[serde(default)]
    pub no_intro: bool,
    /// Append each example's rationale before its rating.
    #[serde(default)]
    pub rationale: bool,
    /// Draw examples at random from other documents instead of the
    /// hand-written pool.
    #[serde(default)]
    pub random_examples: bool,
}

/// Settings shared by the LLM-based methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    /// Few-shot examples for constrained softmax.
    pub shots: usize,
    /// Self-agreement draws.
    pub n_samples: usize,
    /// Self-agreement examples per prompt.
    pub k_examples: usize,
    pub sample_temperature: f64,
    pub softmax_temperature: f64,
    pub max_tokens: u32,
    pub variants: Variants,
    /// Multi-LLM repetitions of the whole discussion.
    pub repeats: usize,
    pub agents: usize,
    pub max_rounds: usize,
    /// A 1–5 rating at or above this counts as "follows the instruction".
    pub fi_threshold: f64,
    pub seed: u64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            shots: 0,
            n_samples: 7,
            k_examples: 3,
            sample_temperature: 0.1,
            softmax_temperature: 1.0,
            max_tokens: 256,
            variants: Variants::default(),
            repeats: 3,
            agents: 3,
            max_rounds: 3,
            fi_threshold: 3.0,
            seed: 0,
        }
    }
}

/// Generator seeded from `seed` and a string key.
pub(crate) fn keyed_rng(seed: u64, key: &str) -> ChaCha8Rng {
    // FNV-1a folds the key into the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(h)
}
