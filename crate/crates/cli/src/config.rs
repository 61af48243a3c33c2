//! Run configuration: a JSON file whose values are overridden by flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ifjudge_core::meta::HumanAggregation;
use ifjudge_gateway::BackendDescriptor;
use ifjudge_methods::JudgeConfig;
use serde::Deserialize;

use crate::CliError;

/// Where an external scorer takes its context from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerContext {
    /// The source document (reference-free scorers).
    Document,
    /// Each reference answer; the maximum is kept.
    References,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerSpec {
    pub id: String,
    pub context: ScorerContext,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    pub endpoint: String,
    pub scorers: Vec<ScorerSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaSettings {
    pub human_aggregation: HumanAggregation,
    pub bootstrap_resamples: usize,
    /// Method id → LM family. Methods run on a backend (`name@backend`) get
    /// the backend's family unless listed here.
    pub method_families: BTreeMap<String, String>,
}

impl Default for MetaSettings {
    fn default() -> Self {
        Self {
            human_aggregation: HumanAggregation::Mean,
            bootstrap_resamples: 1000,
            method_families: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Response cache sidecar shared by all backends.
    pub cache: Option<PathBuf>,
    /// Directory of `<template_id>.txt` overrides.
    pub templates: Option<PathBuf>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub runs: Option<usize>,
    pub backends: Vec<BackendDescriptor>,
    pub methods: Vec<String>,
    pub judge: JudgeConfig,
    /// JSONL of few-shot examples; the built-in ones otherwise.
    pub examples: Option<PathBuf>,
    /// JSONL of reference answers.
    pub references: Option<PathBuf>,
    /// Answers of these generators also serve as references.
    pub reference_generators: Vec<String>,
    pub external: Option<ExternalConfig>,
    pub meta: MetaSettings,
}

impl RunConfig {
    /// Read a config file. Relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.dataset,
            &mut config.out,
            &mut config.cache,
            &mut config.templates,
            &mut config.examples,
            &mut config.references,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Backends named by `selection`, or all configured ones when empty.
    pub fn select_backends(&self, selection: &[String]) -> Result<Vec<BackendDescriptor>, CliError> {
        if selection.is_empty() {
            return Ok(self.backends.clone());
        }
        selection
            .iter()
            .map(|id| {
                self.backends
                    .iter()
                    .find(|b| &b.backend_id == id)
                    .cloned()
                    .ok_or_else(|| CliError::Usage(format!("backend '{id}' is not defined in the config")))
            })
            .collect()
    }
}
