//! The `score` subcommand: method selection and resumable, ordered scoring.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use ifjudge_core::rouge::{rouge_avg, RougeConfig};
use ifjudge_core::score::ScoreWriter;
use ifjudge_core::{length_scores, Answer, Dataset, MethodScore, Question};
use ifjudge_gateway::{ExternalScorer, Gateway};
use ifjudge_methods::consensus::multi_llm_agreement;
use ifjudge_methods::self_agreement::{method_id as self_agreement_id, self_agreement_rate};
use ifjudge_methods::{
    builtin_examples, constrained_softmax_score, FewShotExample, JudgeConfig, RatingItem, Templates, Variants,
};
use rayon::prelude::*;
use serde::Deserialize;

use crate::config::{ScorerContext, ScorerSpec};

/// One reference answer for an instruction.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Reference {
    pub document_id: String,
    pub instruction_id: String,
    #[serde(default)]
    pub generator_id: String,
    pub text: String,
}

/// Instruction id → references.
pub type ReferenceSet = BTreeMap<String, Vec<Reference>>;

pub fn load_references(path: Option<&Path>, dataset: &Dataset, generators: &[String]) -> Result<ReferenceSet> {
    let mut set = ReferenceSet::new();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: Reference =
                serde_json::from_str(line).with_context(|| format!("{}: line {}", path.display(), i + 1))?;
            set.entry(r.instruction_id.clone()).or_default().push(r);
        }
    }
    for a in dataset.answers().filter(|a| generators.contains(&a.generator_id)) {
        set.entry(a.instruction_id.clone()).or_default().push(Reference {
            document_id: a.document_id.clone(),
            instruction_id: a.instruction_id.clone(),
            generator_id: a.generator_id.clone(),
            text: a.text.clone(),
        });
    }
    Ok(set)
}

fn references_for<'r>(refs: &'r ReferenceSet, answer: &Answer) -> Result<Vec<&'r str>> {
    let texts: Vec<&str> = refs
        .get(&answer.instruction_id)
        .into_iter()
        .flatten()
        .filter(|r| r.generator_id.is_empty() || r.generator_id != answer.generator_id)
        .map(|r| r.text.as_str())
        .collect();
    if texts.is_empty() {
        bail!("no reference answers for instruction '{}'", answer.instruction_id);
    }
    Ok(texts)
}

pub fn load_examples(path: Option<&Path>) -> Result<Vec<FewShotExample>> {
    let Some(path) = path else {
        return Ok(builtin_examples());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}: line {}", path.display(), i + 1)))
        .collect()
}

pub enum Method {
    WordCount,
    SentenceCount,
    Rouge,
    External(ScorerSpec),
    Softmax(Arc<Gateway>),
    SelfAgreement(Arc<Gateway>, Variants),
    MultiLlm(Arc<Gateway>),
}

/// `self_agreement` followed by any of `_no_intro`, `_rationale`, `_random`.
fn parse_variants(name: &str) -> Option<Variants> {
    let mut rest = name.strip_prefix("self_agreement")?;
    let mut v = Variants::default();
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix("_no_intro") {
            v.no_intro = true;
            rest = r;
        } else if let Some(r) = rest.strip_prefix("_rationale") {
            v.rationale = true;
            rest = r;
        } else if let Some(r) = rest.strip_prefix("_random") {
            v.random_examples = true;
            rest = r;
        } else {
            return None;
        }
    }
    Some(v)
}

/// Expand method names into runnable methods. LLM methods run once per
/// backend.
pub fn parse_methods(
    names: &[String],
    gateways: &[Arc<Gateway>],
    scorers: &[ScorerSpec],
) -> Result<Vec<Method>, String> {
    let mut out = Vec::new();
    let need_backends = |name: &str| {
        if gateways.is_empty() {
            Err(format!("method '{name}' needs at least one backend"))
        } else {
            Ok(())
        }
    };
    for name in names {
        match name.as_str() {
            "word_count" => out.push(Method::WordCount),
            "sentence_count" => out.push(Method::SentenceCount),
            "rouge_avg" => out.push(Method::Rouge),
            "constrained_softmax" => {
                need_backends(name)?;
                out.extend(gateways.iter().cloned().map(Method::Softmax));
            }
            "multi_llm" => {
                need_backends(name)?;
                out.extend(gateways.iter().cloned().map(Method::MultiLlm));
            }
            other => {
                if let Some(id) = other.strip_prefix("external:") {
                    let spec = scorers
                        .iter()
                        .find(|s| s.id == id)
                        .ok_or_else(|| format!("external scorer '{id}' is not configured"))?;
                    out.push(Method::External(spec.clone()));
                } else if let Some(v) = parse_variants(other) {
                    need_backends(name)?;
                    out.extend(gateways.iter().map(|g| Method::SelfAgreement(g.clone(), v)));
                } else {
                    return Err(format!(
                        "unknown method '{other}' (expected word_count, sentence_count, rouge_avg, external:<id>, \
                         constrained_softmax, self_agreement[_no_intro][_rationale][_random] or multi_llm)"
                    ));
                }
            }
        }
    }
    if out.is_empty() {
        return Err("no method selected; pass --method".into());
    }
    Ok(out)
}

fn tagged(base: &str, gateway: &Gateway, question: &str) -> String {
    format!("{base}@{}:{question}", gateway.backend_id())
}

/// Insert `@backend` between a method's base id and its question suffix.
fn retag(mut score: MethodScore, gateway: &Gateway) -> MethodScore {
    score.method_id = match score.method_id.rsplit_once(':') {
        Some((base, q)) => tagged(base, gateway, q),
        None => format!("{}@{}", score.method_id, gateway.backend_id()),
    };
    score
}

pub struct Scorer<'a> {
    pub dataset: &'a Dataset,
    pub templates: &'a Templates,
    pub judge: &'a JudgeConfig,
    pub examples: &'a [FewShotExample],
    /// Examples drawn from the dataset's rated answers.
    pub dataset_examples: &'a [FewShotExample],
    pub references: &'a ReferenceSet,
    pub external: Option<&'a ExternalScorer>,
}

impl Scorer<'_> {
    fn judge_with(&self, variants: Variants) -> JudgeConfig {
        JudgeConfig {
            variants,
            ..self.judge.clone()
        }
    }

    /// Method ids `method` writes for every answer.
    pub fn ids(&self, method: &Method) -> Vec<String> {
        match method {
            Method::WordCount => vec!["word_count".into()],
            Method::SentenceCount => vec!["sentence_count".into()],
            Method::Rouge => vec!["rouge_avg".into()],
            Method::External(spec) => vec![spec.id.clone()],
            Method::Softmax(g) => vec![tagged("constrained_softmax", g, "fi"), tagged("constrained_softmax", g, "hw")],
            Method::SelfAgreement(g, v) => {
                let base = self_agreement_id(&self.judge_with(*v));
                vec![tagged(&base, g, "hw"), tagged(&base, g, "fi")]
            }
            Method::MultiLlm(g) => vec![tagged("multi_llm", g, "hw"), tagged("multi_llm", g, "fi")],
        }
    }

    pub fn score(&self, method: &Method, answer: &Answer) -> Result<Vec<MethodScore>> {
        let item = RatingItem::from_dataset(self.dataset, answer)?;
        Ok(match method {
            Method::WordCount => vec![length_scores(answer)[0].clone()],
            Method::SentenceCount => vec![length_scores(answer)[1].clone()],
            Method::Rouge => {
                let refs = references_for(self.references, answer)?;
                let v = rouge_avg(&answer.text, &refs, &RougeConfig::default())?;
                vec![MethodScore::new(&answer.id, "rouge_avg", v)]
            }
            Method::External(spec) => {
                let ext = self
                    .external
                    .ok_or_else(|| anyhow!("no external scoring endpoint configured"))?;
                let contexts: Vec<String> = match spec.context {
                    ScorerContext::Document => vec![item.document.to_owned()],
                    ScorerContext::References => references_for(self.references, answer)?
                        .into_iter()
                        .map(str::to_owned)
                        .collect(),
                };
                let v = ext.score_max(&spec.id, &answer.text, &contexts)?;
                vec![MethodScore::new(&answer.id, spec.id.as_str(), v)]
            }
            Method::Softmax(g) => [Question::Fi, Question::Hw]
                .into_iter()
                .map(|q| {
                    let base = format!("constrained_softmax@{}", g.backend_id());
                    constrained_softmax_score(
                        &base,
                        &item,
                        q,
                        g,
                        self.templates,
                        self.judge.shots,
                        self.examples,
                        self.judge.softmax_temperature,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?,
            Method::SelfAgreement(g, v) => {
                let config = self.judge_with(*v);
                let pool = if v.random_examples {
                    self.dataset_examples
                } else {
                    self.examples
                };
                self_agreement_rate(&item, g, self.templates, &config, pool)?
                    .into_iter()
                    .map(|s| retag(s, g))
                    .collect()
            }
            Method::MultiLlm(g) => {
                let agents = vec![g.clone(); self.judge.agents];
                let (scores, _) = multi_llm_agreement(&item, &agents, self.templates, self.judge)?;
                scores.into_iter().map(|s| retag(s, g)).collect()
            }
        })
    }
}

/// Outcome of a scoring run.
#[derive(Debug, Default)]
pub struct ScoreSummary {
    pub written: usize,
    pub skipped: usize,
    pub failures: Vec<String>,
}

/// Score every (answer, method) combination missing from `writer`. Work is
/// spread over `pool` in chunks and each chunk is written in answer order.
pub fn run_scoring(
    scorer: &Scorer<'_>,
    methods: &[Method],
    writer: &mut ScoreWriter,
    pool: &rayon::ThreadPool,
) -> Result<ScoreSummary> {
    let mut summary = ScoreSummary::default();
    let mut pending: Vec<(&Answer, &Method)> = Vec::new();
    for answer in scorer.dataset.answers() {
        for method in methods {
            if scorer.ids(method).iter().all(|id| writer.contains(&answer.id, id)) {
                summary.skipped += 1;
            } else {
                pending.push((answer, method));
            }
        }
    }
    let chunk = pool.current_num_threads().max(1) * 4;
    for batch in pending.chunks(chunk) {
        let results: Vec<Result<Vec<MethodScore>>> =
            pool.install(|| batch.par_iter().map(|(a, m)| scorer.score(m, a)).collect());
        for ((answer, method), result) in batch.iter().zip(results) {
            match result {
                Ok(scores) => summary.written += writer.append(&scores)?,
                Err(e) => summary.failures.push(format!(
                    "answer '{}', method {}: {e:#}",
                    answer.id,
                    scorer.ids(method).join("/")
                )),
            }
        }
    }
    Ok(summary)
}
