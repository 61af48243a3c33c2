//! Prompt templates with `{name}` placeholders.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template '{template}' has no value for placeholder {{{name}}}")]
    Unresolved { template: String, name: String },
    #[error("unknown template '{0}'")]
    Unknown(String),
    #[error("cannot read template override {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: String,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(template_id: &str, body: &str) -> Self {
        Self {
            template_id: template_id.into(),
            body: body.into(),
        }
    }

    /// Substitute every `{name}` (lowercase letters and underscores) with
    /// its value. Values are inserted verbatim and never rescanned; other
    /// braces are left alone.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let body = &self.body;
        let mut out = String::with_capacity(body.len());
        let mut rest = body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let name_len = after
                .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
                .unwrap_or(after.len());
            if name_len > 0 && after[name_len..].starts_with('}') {
                let name = &after[..name_len];
                let value = vars.iter().find(|(k, _)| *k == name).map(|(_, v)| *v).ok_or_else(|| {
                    TemplateError::Unresolved {
                        template: self.template_id.clone(),
                        name: name.into(),
                    }
                })?;
                out.push_str(value);
                rest = &after[name_len + 1..];
            } else {
                out.push('{');
                rest = after;
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

const BUILTIN: [(&str, &str); 8] = [
    ("instruction_generation", include_str!("../templates/instruction_generation.txt")),
    ("answer_generation", include_str!("../templates/answer_generation.txt")),
    ("self_agreement_intro", include_str!("../templates/self_agreement_intro.txt")),
    ("self_agreement_example", include_str!("../templates/self_agreement_example.txt")),
    ("consensus", include_str!("../templates/consensus.txt")),
    ("consensus_turn", include_str!("../templates/consensus_turn.txt")),
    ("softmax_fi", include_str!("../templates/softmax_fi.txt")),
    ("softmax_hw", include_str!("../templates/softmax_hw.txt")),
];

/// The template set used by all methods.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    by_id: BTreeMap<String, PromptTemplate>,
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Templates {
    pub fn builtin() -> Self {
        Self {
            by_id: BUILTIN
                .iter()
                .map(|(id, body)| (id.to_string(), PromptTemplate::new(id, body)))
                .collect(),
        }
    }

    pub fn ids() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(id, _)| *id)
    }

    /// Built-ins, with any `<template_id>.txt` found in `dir` replacing the
    /// template of that id.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut t = Self::builtin();
        for id in Self::ids() {
            let path = dir.join(format!("{id}.txt"));
            if path.exists() {
                let body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                t.by_id.insert(id.into(), PromptTemplate::new(id, &body));
            }
        }
        Ok(t)
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, TemplateError> {
        self.by_id.get(id).ok_or_else(|| TemplateError::Unknown(id.into()))
    }

    pub fn render(&self, id: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        self.get(id)?.render(vars)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_without_rescanning() {
        let t = PromptTemplate::new("t", "A {document} B {answer} {not a slot} {}");
        let out = t.render(&[("document", "{answer}"), ("answer", "x")]).unwrap();
        assert_eq!(out, "A {answer} B x {not a slot} {}");
        assert_eq!(
            t.render(&[("document", "d")]),
            Err(TemplateError::Unresolved {
                template: "t".into(),
                name: "answer".into()
            })
        );
    }

    #[test]
    fn builtins_render_with_expected_slots() {
        let t = Templates::builtin();
        let vars = [("document", "D"), ("instruction", "I"), ("answer", "A"), ("aid", "2")];
        for id in Templates::ids() {
            let out = t.render(id, &vars).unwrap();
            assert!(!out.contains("{document}"), "{id}");
        }
        let hw = t.render("softmax_hw", &vars).unwrap();
        assert!(hw.starts_with("Rate the output on a scale of 1 to 5."));
        assert!(hw.ends_with("Output:\nA\n\nRating:"));
        let fi = t.render("softmax_fi", &vars).unwrap();
        assert!(fi.starts_with("Does the output follow the instruction? Rate \"Yes\""));
        assert_eq!(
            t.render("answer_generation", &vars).unwrap(),
            "D\n\nInstruction: I\n\nAnswer:"
        );
        assert_eq!(
            t.render("consensus_turn", &vars).unwrap(),
            "\n(User: Agent 2, please share your response.)\nAgent 2:"
        );
    }

    #[test]
    fn overrides_replace_by_file_name() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("answer_generation.txt"), "Q: {instruction}\nA:").unwrap();
        let t = Templates::with_overrides(dir.path()).unwrap();
        assert_eq!(t.render("answer_generation", &[("instruction", "go")]).unwrap(), "Q: go\nA:");
        assert_eq!(t.get("softmax_hw").unwrap(), Templates::builtin().get("softmax_hw").unwrap());
        assert!(matches!(t.get("nope"), Err(TemplateError::Unknown(_))));
    }
}
