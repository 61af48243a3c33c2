//! Deterministic backends for tests and offline runs.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Backend, ChoiceScore, GatewayError, GenerationParams, Prompt};

/// One line of a mock script. The first rule whose substring occurs in the
/// prompt and that supports the requested operation answers it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    /// Empty matches every prompt.
    #[serde(default)]
    pub prompt_substring_match: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    /// Returned in turn, cycling, on successive calls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responses: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice_logprobs: Option<BTreeMap<String, f64>>,
    /// Fail generation with this refusal message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScriptRule {
    pub fn respond(substring: &str, response: &str) -> Self {
        Self::cycle(substring, &[response])
    }

    pub fn cycle(substring: &str, responses: &[&str]) -> Self {
        Self {
            prompt_substring_match: substring.into(),
            response: None,
            responses: Some(responses.iter().map(|r| r.to_string()).collect()),
            choice_logprobs: None,
            error: None,
        }
    }

    pub fn logprobs(substring: &str, logprobs: &[(&str, f64)]) -> Self {
        Self {
            prompt_substring_match: substring.into(),
            response: None,
            responses: None,
            choice_logprobs: Some(logprobs.iter().map(|(c, l)| (c.to_string(), *l)).collect()),
            error: None,
        }
    }

    pub fn fail(substring: &str, message: &str) -> Self {
        Self {
            prompt_substring_match: substring.into(),
            response: None,
            responses: None,
            choice_logprobs: None,
            error: Some(message.into()),
        }
    }

    fn generates(&self) -> bool {
        self.response.is_some() || self.responses.is_some() || self.error.is_some()
    }
}

/// Parse a JSONL script file's contents.
pub fn parse_script(jsonl: &str) -> Result<Vec<ScriptRule>, GatewayError> {
    jsonl
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| GatewayError::Config(format!("script line {}: {e}", i + 1)))
        })
        .collect()
}

pub struct ScriptedBackend {
    id: String,
    rules: Vec<ScriptRule>,
    cursors: Vec<AtomicUsize>,
}

impl ScriptedBackend {
    pub fn new(id: &str, rules: Vec<ScriptRule>) -> Self {
        let cursors = rules.iter().map(|_| AtomicUsize::new(0)).collect();
        Self {
            id: id.into(),
            rules,
            cursors,
        }
    }

    fn no_rule(&self, prompt: &Prompt) -> GatewayError {
        let head: String = prompt.text.chars().take(60).collect();
        GatewayError::Refusal(format!("script of '{}' has no rule for prompt starting {head:?}", self.id))
    }
}

impl Backend for ScriptedBackend {
    fn generate(&self, prompt: &Prompt, _params: &GenerationParams) -> Result<String, GatewayError> {
        let (i, rule) = self
            .rules
            .iter()
            .enumerate()
            .find(|(_, r)| r.generates() && prompt.text.contains(&r.prompt_substring_match))
            .ok_or_else(|| self.no_rule(prompt))?;
        if let Some(message) = &rule.error {
            return Err(GatewayError::Refusal(message.clone()));
        }
        if let Some(list) = rule.responses.as_ref().filter(|l| !l.is_empty()) {
            let k = self.cursors[i].fetch_add(1, Ordering::SeqCst);
            return Ok(list[k % list.len()].clone());
        }
        Ok(rule.response.clone().unwrap_or_default())
    }

    fn score_choices(&self, prompt: &Prompt, choices: &[String]) -> Result<Vec<ChoiceScore>, GatewayError> {
        if self.rules.iter().all(|r| r.choice_logprobs.is_none()) {
            return Err(GatewayError::Capability(self.id.clone()));
        }
        let table = self
            .rules
            .iter()
            .filter(|r| prompt.text.contains(&r.prompt_substring_match))
            .find_map(|r| r.choice_logprobs.as_ref())
            .ok_or_else(|| self.no_rule(prompt))?;
        choices
            .iter()
            .map(|c| {
                table
                    .get(c)
                    .map(|&l| ChoiceScore {
                        choice: c.clone(),
                        log_likelihood: l,
                    })
                    .ok_or_else(|| GatewayError::Protocol(format!("script has no log-probability for {c:?}")))
            })
            .collect()
    }
}

/// Backend whose every output is a pure function of its seed, the prompt
/// digest and the request. Generated text is 3–5 lines made of prompt words;
/// the last line ends with ` Rating: k.` for some k in 1..=5.
pub struct SeededBackend {
    seed: u64,
}

impl SeededBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn rng(&self, parts: &[&[u8]]) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

impl Backend for SeededBackend {
    fn generate(&self, prompt: &Prompt, params: &GenerationParams) -> Result<String, GatewayError> {
        let params_json = serde_json::to_vec(params).expect("params serialize");
        let mut rng = self.rng(&[prompt.digest().as_bytes(), &params_json]);
        let mut words: Vec<String> = prompt
            .text
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .filter(|w| !w.is_empty() && w != "rating")
            .collect();
        if words.is_empty() {
            words.push("answer".into());
        }
        let lines = rng.random_range(3..=5);
        let mut out = Vec::with_capacity(lines);
        for _ in 0..lines {
            let n = rng.random_range(4..=10);
            let mut line: Vec<String> = (0..n).map(|_| words[rng.random_range(0..words.len())].clone()).collect();
            line[0] = capitalize(&line[0]);
            out.push(format!("{}.", line.join(" ")));
        }
        let rating = rng.random_range(1..=5);
        if let Some(last) = out.last_mut() {
            last.push_str(&format!(" Rating: {rating}."));
        }
        Ok(out.join("\n"))
    }

    fn score_choices(&self, prompt: &Prompt, choices: &[String]) -> Result<Vec<ChoiceScore>, GatewayError> {
        let digest = prompt.digest();
        Ok(choices
            .iter()
            .map(|c| {
                let mut rng = self.rng(&[digest.as_bytes(), c.as_bytes()]);
                ChoiceScore {
                    choice: c.clone(),
                    log_likelihood: -rng.random_range(0.1..5.0),
                }
            })
            .collect())
    }
}
