//! Instruction and answer generation.

use std::sync::{Arc, OnceLock};

use ifjudge_core::{Answer, Document, Instruction};
use ifjudge_gateway::{Gateway, GatewayError, GenerationParams, Prompt};
use regex::Regex;

use crate::{MethodError, Templates};

/// Defaults for the two generation steps. Both temperatures are unvalidated
/// guesses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationDefaults {
    pub instruction_params: GenerationParams,
    pub answer_params: GenerationParams,
}

impl Default for GenerationDefaults {
    fn default() -> Self {
        Self {
            instruction_params: GenerationParams::new(0.7, 512),
            answer_params: GenerationParams::new(0.3, 512),
        }
    }
}

fn list_prefix() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\d+[.)]|[-•*])\s*").expect("valid regex"))
}

/// One instruction per non-empty line, with list numbering or bullets
/// removed. `None` unless there are 3–5 of them.
pub fn parse_instruction_lines(text: &str) -> Option<Vec<String>> {
    let lines: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| list_prefix().replace(l, "").trim().to_owned())
        .filter(|l| !l.is_empty())
        .collect();
    (3..=5).contains(&lines.len()).then_some(lines)
}

/// Ask `gateway` for 3–5 instructions about `document`. A malformed list is
/// retried once with the next sample index.
pub fn generate_instructions(
    document: &Document,
    gateway: &Gateway,
    templates: &Templates,
    params: &GenerationParams,
) -> Result<Vec<Instruction>, MethodError> {
    let prompt = Prompt::new(templates.render("instruction_generation", &[("document", &document.text)])?);
    let mut raw = Vec::new();
    for attempt in 0..2 {
        let text = gateway.generate(&prompt, &params.with_sample(params.sample_index + attempt))?;
        if let Some(lines) = parse_instruction_lines(&text) {
            return Ok(lines
                .into_iter()
                .enumerate()
                .map(|(n, line)| Instruction {
                    id: format!("{}:i{}", document.id, n + 1),
                    document_id: document.id.clone(),
                    text: line,
                    generator_id: gateway.backend_id().to_owned(),
                })
                .collect());
        }
        raw.push(text);
    }
    Err(MethodError::Malformed { raw })
}

/// Answers from each backend, generated concurrently. Failing backends are
/// reported alongside the answers of the others.
pub fn generate_answers(
    document: &Document,
    instruction: &Instruction,
    gateways: &[Arc<Gateway>],
    templates: &Templates,
    params: &GenerationParams,
) -> Result<(Vec<Answer>, Vec<(String, GatewayError)>), MethodError> {
    if gateways.is_empty() {
        return Err(MethodError::Config("answer generation needs at least one backend".into()));
    }
    let prompt = Prompt::new(templates.render(
        "answer_generation",
        &[("document", &document.text), ("instruction", &instruction.text)],
    )?);
    let results: Vec<Result<String, GatewayError>> = std::thread::scope(|s| {
        let handles: Vec<_> = gateways
            .iter()
            .map(|g| {
                let prompt = &prompt;
                s.spawn(move || g.generate(prompt, params))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("generation thread")).collect()
    });
    let mut answers = Vec::new();
    let mut errors = Vec::new();
    for (g, result) in gateways.iter().zip(results) {
        match result {
            Ok(text) => answers.push(Answer {
                id: format!("{}:{}", instruction.id, g.backend_id()),
                document_id: document.id.clone(),
                instruction_id: instruction.id.clone(),
                text: text.trim().to_owned(),
                generator_id: g.backend_id().to_owned(),
                lm_family: g.lm_family().to_owned(),
            }),
            Err(e) => errors.push((g.backend_id().to_owned(), e)),
        }
    }
    Ok((answers, errors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefixes_are_stripped() {
        let lines = parse_instruction_lines("1. Summarize.\n\n- List the risks.\n• Name the parties.\n* Be brief.\n2) Done").unwrap();
        assert_eq!(
            lines,
            vec!["Summarize.", "List the risks.", "Name the parties.", "Be brief.", "Done"]
        );
        assert!(parse_instruction_lines("a\nb").is_none());
        assert!(parse_instruction_lines("a\nb\nc\nd\ne\nf").is_none());
    }
}
