//! Dataset-level meta-evaluation: how well each method's scores track the
//! human ratings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::score::{score_table, MethodScore};
use crate::stats::{
    self, aggregate_with_rng, auc_roc_macro_with_se, kendall_tau_b_distance, krippendorff_alpha,
    monte_carlo_model_table, AggregationMode, AgreementBreakdown, MeanSe, ModelTable, PairScores,
    Stat, Undefined,
};
use crate::Question;

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("no document-instruction pair has a defined {0}")]
    NoDefinedPairs(&'static str),
    #[error("method '{0}' has no scores for rated answers")]
    NoScores(String),
    #[error(transparent)]
    Agreement(#[from] stats::AgreementError),
}

/// How the human side of the rank and value statistics is aggregated per
/// answer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanAggregation {
    #[default]
    Mean,
    Majority,
    /// Pooled raw ratings; per answer this equals the mean.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEvalConfig {
    pub seed: u64,
    pub bootstrap_resamples: usize,
    pub human_aggregation: HumanAggregation,
    /// method id → LM family, for the winner-set analysis.
    #[serde(default)]
    pub method_families: BTreeMap<String, String>,
    /// Monte Carlo runs for the model table; 0 skips it.
    #[serde(default)]
    pub model_table_runs: usize,
}

impl Default for MetaEvalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            bootstrap_resamples: 1000,
            human_aggregation: HumanAggregation::Mean,
            method_families: BTreeMap::new(),
            model_table_runs: 0,
        }
    }
}

/// `(unit, annotator, value)` observations for one question, with answers as
/// units.
pub fn rating_observations<'a>(
    dataset: &'a Dataset,
    answer_ids: impl IntoIterator<Item = &'a str>,
    question: Question,
) -> Vec<(&'a str, &'a str, f64)> {
    answer_ids
        .into_iter()
        .flat_map(|id| {
            dataset
                .ratings_for(id)
                .map(move |r| (id, r.annotator_id.as_str(), question.rating_of(r)))
        })
        .collect()
}

/// Krippendorff's α over all answers of the dataset.
pub fn global_alpha(dataset: &Dataset, question: Question) -> Stat {
    let obs = rating_observations(dataset, dataset.answers().map(|a| a.id.as_str()), question);
    krippendorff_alpha(&obs, question.alpha_distance())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAlpha {
    pub document_id: String,
    pub instruction_id: String,
    pub alpha: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalAlphaSummary {
    pub question: Question,
    pub pairs: Vec<PairAlpha>,
    pub alpha: MeanSe,
    /// Percentage of defined pairs with α ≥ 0.5.
    pub pct_ge_half: f64,
    pub omitted: usize,
}

/// α computed separately for every document-instruction pair (answers as
/// units), then averaged over the pairs where it is defined.
pub fn local_alpha_summary(dataset: &Dataset, question: Question) -> Result<LocalAlphaSummary, MetaError> {
    let mut pairs = Vec::new();
    let mut defined = Vec::new();
    for ((doc, instr), answers) in dataset.answers_by_pair() {
        let obs = rating_observations(dataset, answers.iter().map(|a| a.id.as_str()), question);
        let alpha = krippendorff_alpha(&obs, question.alpha_distance());
        if let Some(v) = alpha.value() {
            defined.push(v);
        }
        pairs.push(PairAlpha {
            document_id: doc,
            instruction_id: instr,
            alpha,
        });
    }
    let summary = MeanSe::of(&defined).ok_or(MetaError::NoDefinedPairs("alpha"))?;
    let ge = defined.iter().filter(|&&a| a >= 0.5).count();
    Ok(LocalAlphaSummary {
        question,
        omitted: pairs.len() - defined.len(),
        pct_ge_half: 100.0 * ge as f64 / defined.len() as f64,
        alpha: summary,
        pairs,
    })
}

/// Per-answer human value for `question` under `aggregation`. Majority ties
/// are broken by draws from `rng` in answer-id order. Answers without
/// ratings are absent.
pub fn human_values<R: Rng + ?Sized>(
    dataset: &Dataset,
    question: Question,
    aggregation: HumanAggregation,
    rng: &mut R,
) -> BTreeMap<String, f64> {
    let mode = match aggregation {
        HumanAggregation::Majority => AggregationMode::MajorityRandomTies { seed: 0 },
        HumanAggregation::Mean | HumanAggregation::None => AggregationMode::Mean,
    };
    dataset
        .answers()
        .filter_map(|a| {
            let values: Vec<f64> = dataset.ratings_for(&a.id).map(|r| question.rating_of(r)).collect();
            aggregate_with_rng(&values, &mode, rng)
                .ok()
                .map(|v| (a.id.clone(), v))
        })
        .collect()
}

/// Majority-vote FI labels (ties broken with a seeded draw).
pub fn majority_labels(dataset: &Dataset, seed: u64) -> BTreeMap<String, u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    human_values(dataset, Question::Fi, HumanAggregation::Majority, &mut rng)
        .into_iter()
        .map(|(k, v)| (k, u8::from(v >= 0.5)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDistanceSummary {
    pub distance: Option<MeanSe>,
    /// Pairs whose human values are constant.
    pub human_undefined: usize,
    /// Pairs whose method scores are constant.
    pub method_undefined: usize,
    /// Pairs with an answer lacking a method score or human ratings.
    pub incomplete: usize,
}

/// Mean Kendall τb rank distance between method scores and human values
/// over document-instruction pairs.
pub fn mean_rank_distance(
    dataset: &Dataset,
    method_scores: &BTreeMap<String, f64>,
    human: &BTreeMap<String, f64>,
) -> RankDistanceSummary {
    let mut distances = Vec::new();
    let (mut human_undefined, mut method_undefined, mut incomplete) = (0, 0, 0);
    for answers in dataset.answers_by_pair().values() {
        let mut h = Vec::new();
        let mut m = Vec::new();
        for a in answers {
            if let (Some(hv), Some(mv)) = (human.get(&a.id), method_scores.get(&a.id)) {
                h.push(*hv);
                m.push(*mv);
            }
        }
        if h.len() != answers.len() {
            incomplete += 1;
            continue;
        }
        let human_constant = h.windows(2).all(|w| w[0] == w[1]);
        if human_constant {
            human_undefined += 1;
            continue;
        }
        match kendall_tau_b_distance(&h, &m).expect("equal lengths") {
            Stat::Value(d) => distances.push(d),
            Stat::Undefined(_) => method_undefined += 1,
        }
    }
    RankDistanceSummary {
        distance: MeanSe::of(&distances),
        human_undefined,
        method_undefined,
        incomplete,
    }
}

/// Pearson distance with a bootstrap standard error over answers.
pub fn pearson_distance_with_se(
    method: &[f64],
    human: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<MeanSe, Undefined> {
    let point = match stats::pearson_distance(method, human).expect("equal lengths") {
        Stat::Value(v) => v,
        Stat::Undefined(u) => return Err(u),
    };
    let n = method.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boot = Vec::with_capacity(resamples);
    let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..resamples {
        for k in 0..n {
            let i = rng.random_range(0..n);
            x[k] = method[i];
            y[k] = human[i];
        }
        if let Stat::Value(v) = stats::pearson_distance(&x, &y).expect("equal lengths") {
            boot.push(v);
        }
    }
    let se = MeanSe::of(&boot).map_or(0.0, |b| b.se * (b.n as f64).sqrt());
    Ok(MeanSe { mean: point, se, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method_id: String,
    pub auc_roc: Option<MeanSe>,
    pub auc_note: Option<String>,
    pub rank_distance: RankDistanceSummary,
    pub pearson_distance: Option<MeanSe>,
    pub pearson_undefined: Option<Undefined>,
    /// Rated answers without a score for this method.
    pub unscored_answers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<AgreementBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanAgreement {
    pub global_alpha_fi: Stat,
    pub global_alpha_hw: Stat,
    pub local_alpha_fi: Option<LocalAlphaSummary>,
    pub local_alpha_hw: Option<LocalAlphaSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEvalReport {
    pub answers: usize,
    pub rated_answers: usize,
    pub pairs: usize,
    pub config: MetaEvalConfig,
    pub human: HumanAgreement,
    pub methods: Vec<MethodReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_table: Option<ModelTable>,
}

/// Base method ids with the score tables used for FI and HW.
fn method_sources(table: &BTreeMap<String, BTreeMap<String, f64>>) -> Vec<(String, String, String)> {
    let mut bases: BTreeMap<String, (Option<String>, Option<String>, Option<String>)> = BTreeMap::new();
    for id in table.keys() {
        let (base, slot) = match id.rsplit_once(':') {
            Some((b, "fi")) => (b.to_owned(), 0),
            Some((b, "hw")) => (b.to_owned(), 1),
            _ => (id.clone(), 2),
        };
        let entry = bases.entry(base).or_default();
        match slot {
            0 => entry.0 = Some(id.clone()),
            1 => entry.1 = Some(id.clone()),
            _ => entry.2 = Some(id.clone()),
        }
    }
    bases
        .into_iter()
        .filter_map(|(base, (fi, hw, plain))| {
            let fi = fi.or_else(|| plain.clone()).or_else(|| hw.clone())?;
            let hw = hw.or(plain).unwrap_or_else(|| fi.clone());
            Some((base, fi, hw))
        })
        .collect()
}

/// Meta-evaluate every method found in `scores` against the dataset's human
/// ratings.
pub fn meta_evaluate(
    dataset: &Dataset,
    scores: &[MethodScore],
    config: &MetaEvalConfig,
) -> Result<MetaEvalReport, MetaError> {
    let table = score_table(scores);
    let labels = majority_labels(dataset, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let human_hw = human_values(dataset, Question::Hw, config.human_aggregation, &mut rng);
    let pairs = dataset.answers_by_pair();

    let mut methods = Vec::new();
    for (base, fi_id, hw_id) in method_sources(&table) {
        let fi_scores = &table[&fi_id];
        let hw_scores = &table[&hw_id];

        let (mut s, mut l) = (Vec::new(), Vec::new());
        for (answer, label) in &labels {
            if let Some(v) = fi_scores.get(answer) {
                s.push(*v);
                l.push(*label);
            }
        }
        if s.is_empty() {
            return Err(MetaError::NoScores(base));
        }
        let unscored = labels.len() - s.len();
        let (auc_roc, auc_note) =
            match auc_roc_macro_with_se(&s, &l, config.bootstrap_resamples, config.seed) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            };

        let rank_distance = mean_rank_distance(dataset, hw_scores, &human_hw);

        let (mut mx, mut hy) = (Vec::new(), Vec::new());
        for (answer, h) in &human_hw {
            if let Some(v) = hw_scores.get(answer) {
                mx.push(*v);
                hy.push(*h);
            }
        }
        let (pearson_distance, pearson_undefined) =
            match pearson_distance_with_se(&mx, &hy, config.bootstrap_resamples, config.seed) {
                Ok(v) => (Some(v), None),
                Err(u) => (None, Some(u)),
            };

        let agreement = match config.method_families.get(&base) {
            Some(family) => {
                let pair_scores: Vec<PairScores> = pairs
                    .iter()
                    .filter(|(_, answers)| answers.iter().all(|a| human_hw.contains_key(&a.id)))
                    .map(|((d, i), answers)| PairScores {
                        pair: format!("{d}/{i}"),
                        answers: answers
                            .iter()
                            .map(|a| {
                                (
                                    a.id.clone(),
                                    a.lm_family.clone(),
                                    human_hw[&a.id],
                                    hw_scores.get(&a.id).copied(),
                                )
                            })
                            .collect(),
                    })
                    .collect();
                Some(stats::agreement_analysis(&pair_scores, family)?)
            }
            None => None,
        };

        methods.push(MethodReport {
            method_id: base,
            auc_roc,
            auc_note,
            rank_distance,
            pearson_distance,
            pearson_undefined,
            unscored_answers: unscored,
            agreement,
        });
    }

    let human = HumanAgreement {
        global_alpha_fi: global_alpha(dataset, Question::Fi),
        global_alpha_hw: global_alpha(dataset, Question::Hw),
        local_alpha_fi: local_alpha_summary(dataset, Question::Fi).ok(),
        local_alpha_hw: local_alpha_summary(dataset, Question::Hw).ok(),
    };
    let model_table = (config.model_table_runs > 0)
        .then(|| monte_carlo_model_table(dataset, config.model_table_runs, config.seed));

    Ok(MetaEvalReport {
        answers: dataset.counts().2,
        rated_answers: labels.len(),
        pairs: pairs.len(),
        config: config.clone(),
        human,
        methods,
        model_table,
    })
}

fn pct(m: &Option<MeanSe>) -> String {
    match m {
        Some(v) => format!("{:.1} ± {:.1}", 100.0 * v.mean, 100.0 * v.se),
        None => "undefined".to_owned(),
    }
}

fn stat_pct(s: Stat) -> String {
    match s {
        Stat::Value(v) => format!("{:.1}", 100.0 * v),
        Stat::Undefined(u) => format!("undefined ({u:?})"),
    }
}

/// Output layout for [`render_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Markdown,
}

/// Render the method table (AUC ROC, d_τb, d_|r|, all in %) followed by the
/// human agreement summary.
pub fn render_report(report: &MetaEvalReport, format: ReportFormat) -> String {
    let header = ["Method", "AUC ROC % ↑", "d_τb % ↓", "d_|r| % ↓"];
    let rows: Vec<[String; 4]> = report
        .methods
        .iter()
        .map(|m| {
            [
                m.method_id.clone(),
                pct(&m.auc_roc),
                pct(&m.rank_distance.distance),
                pct(&m.pearson_distance),
            ]
        })
        .collect();
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|---|---:|---:|---:|");
            for r in &rows {
                let _ = writeln!(out, "| {} |", r.join(" | "));
            }
        }
        ReportFormat::Text => {
            let mut widths = header.map(|h| h.chars().count());
            for r in &rows {
                for (w, cell) in widths.iter_mut().zip(r) {
                    *w = (*w).max(cell.chars().count());
                }
            }
            let line = |cells: [&str; 4]| {
                let mut s = String::new();
                for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
                    let pad = w - cell.chars().count();
                    if i == 0 {
                        s.push_str(cell);
                        s.push_str(&" ".repeat(pad));
                    } else {
                        s.push_str("  ");
                        s.push_str(&" ".repeat(pad));
                        s.push_str(cell);
                    }
                }
                s
            };
            let _ = writeln!(out, "{}", line(header));
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 6));
            for r in &rows {
                let _ = writeln!(out, "{}", line([&r[0], &r[1], &r[2], &r[3]].map(String::as_str)));
            }
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "answers: {} (rated {}), pairs: {}",
        report.answers, report.rated_answers, report.pairs
    );
    for m in &report.methods {
        let rd = &m.rank_distance;
        let mut notes = Vec::new();
        if rd.human_undefined + rd.method_undefined + rd.incomplete > 0 {
            notes.push(format!(
                "d_τb excluded pairs: {} human-constant, {} method-constant, {} incomplete",
                rd.human_undefined, rd.method_undefined, rd.incomplete
            ));
        }
        if m.unscored_answers > 0 {
            notes.push(format!("{} unscored answers", m.unscored_answers));
        }
        if let Some(note) = &m.auc_note {
            notes.push(format!("AUC: {note}"));
        }
        if let Some(a) = &m.agreement {
            notes.push(format!(
                "winners: perfect {:.1}%, disagreement {:.1}%, prefers own family {}",
                a.perfect_agreement_pct,
                a.disagreement_pct,
                a.prefers_own_family_pct
                    .map_or("n/a".to_owned(), |p| format!("{p:.1}%"))
            ));
        }
        if !notes.is_empty() {
            let _ = writeln!(out, "{}: {}", m.method_id, notes.join("; "));
        }
    }
    let h = &report.human;
    let _ = writeln!(
        out,
        "human α (global): FI {}%, HW {}%",
        stat_pct(h.global_alpha_fi),
        stat_pct(h.global_alpha_hw)
    );
    for local in [&h.local_alpha_fi, &h.local_alpha_hw].into_iter().flatten() {
        let _ = writeln!(
            out,
            "human α (local, {:?}): {:.1} ± {:.1}%, ≥50%: {:.1}% of pairs, {} omitted",
            local.question,
            100.0 * local.alpha.mean,
            100.0 * local.alpha.se,
            local.pct_ge_half,
            local.omitted
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_sources_pairs_suffixes() {
        let mut t: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for id in ["cs:fi", "cs:hw", "word_count", "sa:hw"] {
            t.insert(id.into(), BTreeMap::new());
        }
        let s = method_sources(&t);
        assert_eq!(
            s,
            vec![
                ("cs".into(), "cs:fi".into(), "cs:hw".into()),
                ("sa".into(), "sa:hw".into(), "sa:hw".into()),
                ("word_count".into(), "word_count".into(), "word_count".into()),
            ]
        );
    }
}
