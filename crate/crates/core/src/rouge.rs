//! ROUGE-1/2, summary-level ROUGE-Lsum and their geometric mean.
//!
//! Tokens are lowercased with punctuation stripped; no stemming and no
//! stopword removal.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{normalized_tokens, split_sentences};

#[derive(Debug, Error, PartialEq)]
pub enum RougeError {
    #[error("reference set is empty")]
    NoReferences,
    #[error("n-gram order must be 1 or 2, got {0}")]
    UnsupportedOrder(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub fmeasure: f64,
}

impl PrecisionRecall {
    fn from_hits(hits: usize, candidate_total: usize, reference_total: usize) -> Self {
        if hits == 0 || candidate_total == 0 || reference_total == 0 {
            return Self::default();
        }
        let precision = hits as f64 / candidate_total as f64;
        let recall = hits as f64 / reference_total as f64;
        Self {
            precision,
            recall,
            fmeasure: 2.0 * precision * recall / (precision + recall),
        }
    }

    pub fn select(&self, measure: RougeMeasure) -> f64 {
        match measure {
            RougeMeasure::F1 => self.fmeasure,
            RougeMeasure::Recall => self.recall,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RougeMeasure {
    #[default]
    F1,
    Recall,
}

/// Settings for [`rouge_avg`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeConfig {
    pub measure: RougeMeasure,
    /// Components below this value are raised to it before the geometric
    /// mean. Zero disables smoothing.
    #[serde(default)]
    pub zero_epsilon: f64,
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

pub fn rouge_n_scores(candidate: &str, reference: &str, n: usize) -> Result<PrecisionRecall, RougeError> {
    if !(1..=2).contains(&n) {
        return Err(RougeError::UnsupportedOrder(n));
    }
    let cand = normalized_tokens(candidate);
    let refs = normalized_tokens(reference);
    let c = ngrams(&cand, n);
    let r = ngrams(&refs, n);
    let hits: usize = c
        .iter()
        .map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    Ok(PrecisionRecall::from_hits(
        hits,
        c.values().sum(),
        r.values().sum(),
    ))
}

/// ROUGE-N F-measure for `n` in {1, 2}.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<f64, RougeError> {
    rouge_n_scores(candidate, reference, n).map(|s| s.fmeasure)
}

fn sentence_tokens(text: &str) -> Vec<Vec<String>> {
    split_sentences(text)
        .into_iter()
        .map(normalized_tokens)
        .filter(|t| !t.is_empty())
        .collect()
}

/// Positions in `reference` of one longest common subsequence with
/// `candidate`. Among all LCSs, the one whose sorted position list is
/// lexicographically smallest is returned.
pub fn lcs_positions(reference: &[String], candidate: &[String]) -> Vec<usize> {
    let (m, n) = (reference.len(), candidate.len());
    // suffix[i][j] = LCS length of reference[i..] and candidate[j..]
    let mut suffix = vec![vec![0usize; n + 1]; m + 1];
    for i in (0..m).rev() {
        for j in (0..n).rev() {
            suffix[i][j] = if reference[i] == candidate[j] {
                1 + suffix[i + 1][j + 1]
            } else {
                suffix[i + 1][j].max(suffix[i][j + 1])
            };
        }
    }
    let mut need = suffix[0][0];
    let mut out = Vec::with_capacity(need);
    let (mut i, mut j) = (0, 0);
    while need > 0 {
        'scan: for ii in i..m {
            for jj in j..n {
                if reference[ii] == candidate[jj] {
                    if 1 + suffix[ii + 1][jj + 1] == need {
                        out.push(ii);
                        i = ii + 1;
                        j = jj + 1;
                        need -= 1;
                        break 'scan;
                    }
                    // later matches of the same token cannot do better
                    break;
                }
            }
        }
    }
    out
}

pub fn rouge_lsum_scores(candidate: &str, reference: &str) -> PrecisionRecall {
    let cand = sentence_tokens(candidate);
    let refs = sentence_tokens(reference);
    let cand_total: usize = cand.iter().map(Vec::len).sum();
    let ref_total: usize = refs.iter().map(Vec::len).sum();
    if cand_total == 0 || ref_total == 0 {
        return PrecisionRecall::default();
    }

    let mut cand_counts: HashMap<&str, usize> = HashMap::new();
    for t in cand.iter().flatten() {
        *cand_counts.entry(t).or_insert(0) += 1;
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for t in refs.iter().flatten() {
        *ref_counts.entry(t).or_insert(0) += 1;
    }

    let mut hits = 0;
    for sentence in &refs {
        let union: BTreeSet<usize> = cand
            .iter()
            .flat_map(|c| lcs_positions(sentence, c))
            .collect();
        for idx in union {
            let token = sentence[idx].as_str();
            let (Some(c), Some(r)) = (cand_counts.get_mut(token), ref_counts.get_mut(token)) else {
                continue;
            };
            if *c > 0 && *r > 0 {
                *c -= 1;
                *r -= 1;
                hits += 1;
            }
        }
    }
    PrecisionRecall::from_hits(hits, cand_total, ref_total)
}

/// Summary-level ROUGE-L (union LCS over sentences), F-measure.
pub fn rouge_lsum(candidate: &str, reference: &str) -> f64 {
    rouge_lsum_scores(candidate, reference).fmeasure
}

/// Geometric mean of three components; zero if any component is zero.
pub fn geometric_mean3(components: [f64; 3]) -> f64 {
    if components.iter().any(|&c| c <= 0.0) {
        return 0.0;
    }
    (components.iter().map(|c| c.ln()).sum::<f64>() / 3.0).exp()
}

/// ROUGE-1, ROUGE-2 and ROUGE-Lsum of one candidate/reference pair.
pub fn rouge_components(candidate: &str, reference: &str, measure: RougeMeasure) -> [f64; 3] {
    let r1 = rouge_n_scores(candidate, reference, 1).unwrap_or_default();
    let r2 = rouge_n_scores(candidate, reference, 2).unwrap_or_default();
    let rl = rouge_lsum_scores(candidate, reference);
    [r1.select(measure), r2.select(measure), rl.select(measure)]
}

/// Maximum over references of the geometric mean of ROUGE-1, ROUGE-2 and
/// ROUGE-Lsum.
pub fn rouge_avg<S: AsRef<str>>(
    candidate: &str,
    references: &[S],
    config: &RougeConfig,
) -> Result<f64, RougeError> {
    if references.is_empty() {
        return Err(RougeError::NoReferences);
    }
    Ok(references
        .iter()
        .map(|r| {
            let comps = rouge_components(candidate, r.as_ref(), config.measure)
                .map(|c| c.max(config.zero_epsilon));
            geometric_mean3(comps)
        })
        .fold(0.0, f64::max))
}
