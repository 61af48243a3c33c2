//! Per-answer aggregation of human ratings and the Monte Carlo model table.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{sample_sd, MeanSe, RunningMean};
use crate::dataset::Dataset;
use crate::Question;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("no ratings to aggregate")]
    Empty,
    #[error("mode `none` keeps raw ratings; iterate them instead of aggregating")]
    Unaggregated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum AggregationMode {
    Mean,
    MajorityRandomTies { seed: u64 },
    None,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Distinct values sharing the highest count, ascending.
fn modes(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = Vec::new();
    let mut best_count = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let count = j - i;
        if count > best_count {
            best_count = count;
            best.clear();
        }
        if count == best_count {
            best.push(sorted[i]);
        }
        i = j;
    }
    best
}

/// Aggregate one answer's ratings, drawing tie-breaks from `rng`.
pub fn aggregate_with_rng<R: Rng + ?Sized>(
    values: &[f64],
    mode: &AggregationMode,
    rng: &mut R,
) -> Result<f64, AggregateError> {
    if values.is_empty() {
        return Err(AggregateError::Empty);
    }
    match mode {
        AggregationMode::Mean => Ok(mean(values)),
        AggregationMode::MajorityRandomTies { .. } => {
            let candidates = modes(values);
            Ok(if candidates.len() == 1 {
                candidates[0]
            } else {
                candidates[rng.random_range(0..candidates.len())]
            })
        }
        AggregationMode::None => Err(AggregateError::Unaggregated),
    }
}

/// Aggregate one answer's ratings. Majority ties are broken by a draw from
/// the mode's seed.
pub fn aggregate_ratings(values: &[f64], mode: &AggregationMode) -> Result<f64, AggregateError> {
    let seed = match mode {
        AggregationMode::MajorityRandomTies { seed } => *seed,
        _ => 0,
    };
    aggregate_with_rng(values, mode, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Aggregation column of the model table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableAggregation {
    Mean,
    Majority,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTableRow {
    pub model: String,
    pub question: Question,
    pub aggregation: TableAggregation,
    /// Mean normalized rating (0–1) of the model's answers.
    pub quality: MeanSe,
    /// Mean rank (1 = best) of the model within each document-instruction pair.
    pub rank: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTable {
    pub runs: usize,
    pub seed: u64,
    pub rows: Vec<ModelTableRow>,
}

struct AnswerRatings {
    model: usize,
    raw: Vec<f64>,
    mean: f64,
    modes: Vec<f64>,
}

/// Ranks (1 = highest value) with ties broken by a uniform random order.
fn random_ranks<R: Rng + ?Sized>(values: &[f64], rng: &mut R, scratch: &mut Vec<usize>) -> Vec<f64> {
    scratch.clear();
    scratch.extend(0..values.len());
    scratch.shuffle(rng);
    scratch.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    for (pos, &i) in scratch.iter().enumerate() {
        ranks[i] = (pos + 1) as f64;
    }
    ranks
}

fn has_ties(values: &[f64]) -> bool {
    (0..values.len()).any(|i| ((i + 1)..values.len()).any(|j| values[i] == values[j]))
}

/// Per-model quality and within-pair rank, averaged over `runs` repetitions
/// of random tie-breaking.
///
/// Ratings are normalized to 0–1 (FI as is, HW as `(v - 1) / 4`). `mean` and
/// `majority` aggregate each answer's ratings; `none` pools individual
/// ratings for quality and ranks by their mean. Standard errors are
/// `sd / sqrt(n)` over answers (or ratings, or pairs for ranks), averaged over
/// runs. Answers without ratings are skipped.
pub fn monte_carlo_model_table(dataset: &Dataset, runs: usize, seed: u64) -> ModelTable {
    let mut model_index: BTreeMap<&str, usize> = BTreeMap::new();
    for a in dataset.answers() {
        let next = model_index.len();
        model_index.entry(a.generator_id.as_str()).or_insert(next);
    }
    // stable model order: by name
    let names: Vec<&str> = model_index.keys().copied().collect();
    for (i, name) in names.iter().enumerate() {
        model_index.insert(name, i);
    }
    let n_models = names.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();

    for question in [Question::Fi, Question::Hw] {
        let mut answers = Vec::new();
        let mut pairs: Vec<Vec<usize>> = Vec::new();
        for group in dataset.answers_by_pair().values() {
            let mut members = Vec::new();
            for a in group {
                let raw: Vec<f64> = dataset
                    .ratings_for(&a.id)
                    .map(|r| question.normalize(question.rating_of(r)))
                    .collect();
                if raw.is_empty() {
                    continue;
                }
                members.push(answers.len());
                answers.push(AnswerRatings {
                    model: model_index[a.generator_id.as_str()],
                    mean: mean(&raw),
                    modes: modes(&raw),
                    raw,
                });
            }
            if !members.is_empty() {
                pairs.push(members);
            }
        }

        for aggregation in [TableAggregation::Mean, TableAggregation::Majority, TableAggregation::None] {
            let mut quality_mean = vec![RunningMean::default(); n_models];
            let mut quality_se = vec![RunningMean::default(); n_models];
            let mut quality_n = vec![0usize; n_models];
            let mut rank_mean = vec![RunningMean::default(); n_models];
            let mut rank_se = vec![RunningMean::default(); n_models];
            let mut rank_n = vec![0usize; n_models];

            let mut values = vec![0.0; answers.len()];
            let mut per_model: Vec<Vec<f64>> = vec![Vec::new(); n_models];
            let mut ranks_per_model: Vec<Vec<f64>> = vec![Vec::new(); n_models];
            let mut scratch = Vec::new();
            let mut pair_values = Vec::new();

            for _ in 0..runs.max(1) {
                for (slot, a) in values.iter_mut().zip(&answers) {
                    *slot = match aggregation {
                        TableAggregation::Majority if a.modes.len() > 1 => {
                            a.modes[rng.random_range(0..a.modes.len())]
                        }
                        TableAggregation::Majority => a.modes[0],
                        TableAggregation::Mean | TableAggregation::None => a.mean,
                    };
                }

                per_model.iter_mut().for_each(Vec::clear);
                for (a, &v) in answers.iter().zip(&values) {
                    match aggregation {
                        TableAggregation::None => per_model[a.model].extend_from_slice(&a.raw),
                        _ => per_model[a.model].push(v),
                    }
                }
                for (m, vals) in per_model.iter().enumerate() {
                    if let Some(ms) = MeanSe::of(vals) {
                        quality_mean[m].push(ms.mean);
                        quality_se[m].push(ms.se);
                        quality_n[m] = ms.n;
                    }
                }

                ranks_per_model.iter_mut().for_each(Vec::clear);
                for members in &pairs {
                    pair_values.clear();
                    pair_values.extend(members.iter().map(|&i| values[i]));
                    let ranks = if has_ties(&pair_values) {
                        random_ranks(&pair_values, &mut rng, &mut scratch)
                    } else {
                        pair_values
                            .iter()
                            .map(|v| 1.0 + pair_values.iter().filter(|w| *w > v).count() as f64)
                            .collect()
                    };
                    for (&i, r) in members.iter().zip(ranks) {
                        ranks_per_model[answers[i].model].push(r);
                    }
                }
                for (m, rs) in ranks_per_model.iter().enumerate() {
                    if rs.is_empty() {
                        continue;
                    }
                    let mu = rs.iter().sum::<f64>() / rs.len() as f64;
                    rank_mean[m].push(mu);
                    rank_se[m].push(sample_sd(rs, mu) / (rs.len() as f64).sqrt());
                    rank_n[m] = rs.len();
                }
            }

            for (m, name) in names.iter().enumerate() {
                if quality_n[m] == 0 {
                    continue;
                }
                rows.push(ModelTableRow {
                    model: (*name).to_owned(),
                    question,
                    aggregation,
                    quality: MeanSe {
                        mean: quality_mean[m].get(),
                        se: quality_se[m].get(),
                        n: quality_n[m],
                    },
                    rank: MeanSe {
                        mean: rank_mean[m].get(),
                        se: rank_se[m].get(),
                        n: rank_n[m],
                    },
                });
            }
        }
    }
    ModelTable { runs, seed, rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_and_mean() {
        let maj = AggregationMode::MajorityRandomTies { seed: 1 };
        assert_eq!(aggregate_ratings(&[1.0, 1.0, 0.0], &maj).unwrap(), 1.0);
        assert_eq!(aggregate_ratings(&[2.0, 4.0], &AggregationMode::Mean).unwrap(), 3.0);
        assert_eq!(aggregate_ratings(&[], &AggregationMode::Mean), Err(AggregateError::Empty));
        assert_eq!(
            aggregate_ratings(&[1.0], &AggregationMode::None),
            Err(AggregateError::Unaggregated)
        );
    }

    #[test]
    fn fair_tie_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mode = AggregationMode::MajorityRandomTies { seed: 42 };
        let runs = 100_000;
        let total: f64 = (0..runs)
            .map(|_| aggregate_with_rng(&[1.0, 0.0], &mode, &mut rng).unwrap())
            .sum();
        assert!((total / runs as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn modes_are_sorted_and_complete() {
        assert_eq!(modes(&[3.0, 1.0, 3.0, 1.0, 2.0]), vec![1.0, 3.0]);
        assert_eq!(modes(&[5.0]), vec![5.0]);
    }

    #[test]
    fn random_ranks_respect_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut scratch = Vec::new();
        let r = random_ranks(&[0.2, 0.9, 0.5], &mut rng, &mut scratch);
        assert_eq!(r, vec![3.0, 1.0, 2.0]);
    }
}
