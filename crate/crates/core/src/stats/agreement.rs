//! Winner-set agreement between human and metric preferences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgreementError {
    #[error("pair {pair} has no metric score for answer '{answer}'")]
    MissingScore { pair: String, answer: String },
    #[error("no pairs to analyse")]
    NoPairs,
}

/// One document-instruction pair: per answer, its LM family, mean human
/// rating and metric score (`None` when missing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub pair: String,
    pub answers: Vec<(String, String, f64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementBreakdown {
    pub pairs: usize,
    pub perfect_agreement_pct: f64,
    pub disagreement_pct: f64,
    /// Share of disagreement pairs whose metric winners include an answer of
    /// the metric's own LM family. `None` without disagreement pairs.
    pub prefers_own_family_pct: Option<f64>,
}

/// Indices of the maximal values (exact equality).
pub fn winner_set(values: &[f64]) -> Vec<usize> {
    let Some(best) = values.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    (0..values.len()).filter(|&i| values[i] == best).collect()
}

pub fn agreement_analysis(
    pairs: &[PairScores],
    family_of_method: &str,
) -> Result<AgreementBreakdown, AgreementError> {
    if pairs.is_empty() {
        return Err(AgreementError::NoPairs);
    }
    let (mut perfect, mut disagree, mut own) = (0usize, 0usize, 0usize);
    for p in pairs {
        let mut metric = Vec::with_capacity(p.answers.len());
        for (answer, _, _, score) in &p.answers {
            match score {
                Some(s) => metric.push(*s),
                None => {
                    return Err(AgreementError::MissingScore {
                        pair: p.pair.clone(),
                        answer: answer.clone(),
                    })
                }
            }
        }
        let human: Vec<f64> = p.answers.iter().map(|a| a.2).collect();
        let human_winners = winner_set(&human);
        let metric_winners = winner_set(&metric);
        if human_winners == metric_winners {
            perfect += 1;
        } else if !metric_winners.iter().any(|w| human_winners.contains(w)) {
            disagree += 1;
            if metric_winners
                .iter()
                .any(|&w| p.answers[w].1 == family_of_method)
            {
                own += 1;
            }
        }
    }
    let pct = |k: usize, of: usize| 100.0 * k as f64 / of as f64;
    Ok(AgreementBreakdown {
        pairs: pairs.len(),
        perfect_agreement_pct: pct(perfect, pairs.len()),
        disagreement_pct: pct(disagree, pairs.len()),
        prefers_own_family_pct: (disagree > 0).then(|| pct(own, disagree)),
    })
}
