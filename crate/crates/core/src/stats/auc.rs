use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{sample_sd, MeanSe};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AucError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("label {0} has no score column")]
    UnknownClass(usize),
}

/// AUC of `scores` for separating `positive` items from the rest, via the
/// Mann–Whitney rank sum with mid-ranks for ties (a tied positive/negative
/// pair counts ½). `None` if either group is empty.
pub fn auc_one_vs_rest(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n = scores.len();
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their average
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| positive[i]).count();
        rank_sum_pos += mid_rank * pos_in_group as f64;
        start = end;
    }
    let p = n_pos as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Some(u / (p * n_neg as f64))
}

/// Unweighted mean over classes of one-vs-rest AUCs. `class_scores[c][i]` is
/// item `i`'s score for class `c`; classes absent from `labels` are skipped.
pub fn macro_auc(class_scores: &[Vec<f64>], labels: &[usize]) -> Result<f64, AucError> {
    let mut aucs = Vec::new();
    for (class, scores) in class_scores.iter().enumerate() {
        if scores.len() != labels.len() {
            return Err(AucError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        let positive: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        if let Some(a) = auc_one_vs_rest(scores, &positive) {
            aucs.push(a);
        }
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_scores.len()) {
        return Err(AucError::UnknownClass(bad));
    }
    if aucs.len() < 2 {
        return Err(AucError::SingleClass);
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

/// Macro AUC for a binary task where higher scores mean label 1. Class 0 is
/// scored with the negated values.
pub fn auc_roc_macro(scores: &[f64], labels: &[u8]) -> Result<f64, AucError> {
    if scores.len() != labels.len() {
        return Err(AucError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| usize::from(l != 0)).collect();
    macro_auc(&[negated, scores.to_vec()], &labels)
}

/// [`auc_roc_macro`] with a bootstrap standard error over items.
/// Resamples that contain a single class are redrawn.
pub fn auc_roc_macro_with_se(
    scores: &[f64],
    labels: &[u8],
    resamples: usize,
    seed: u64,
) -> Result<MeanSe, AucError> {
    let point = auc_roc_macro(scores, labels)?;
    let n = scores.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boot = Vec::with_capacity(resamples);
    let mut s = vec![0.0; n];
    let mut l = vec![0u8; n];
    while boot.len() < resamples {
        for k in 0..n {
            let i = rng.random_range(0..n);
            s[k] = scores[i];
            l[k] = labels[i];
        }
        if let Ok(a) = auc_roc_macro(&s, &l) {
            boot.push(a);
        }
    }
    let boot_mean = if boot.is_empty() {
        point
    } else {
        boot.iter().sum::<f64>() / boot.len() as f64
    };
    Ok(MeanSe {
        mean: point,
        se: sample_sd(&boot, boot_mean),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking_and_all_ties() {
        let labels = [0, 0, 1, 1, 1];
        assert_eq!(auc_roc_macro(&[0.1, 0.2, 0.5, 0.7, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(auc_roc_macro(&[0.3; 5], &labels).unwrap(), 0.5);
        assert_eq!(auc_roc_macro(&[0.9, 0.8, 0.5, 0.2, 0.1], &labels).unwrap(), 0.0);
    }

    #[test]
    fn single_class_rejected() {
        assert_eq!(auc_roc_macro(&[0.1, 0.2], &[1, 1]), Err(AucError::SingleClass));
    }

    #[test]
    fn known_value_with_rank_sum() {
        // pos = {3, 5}, neg = {1, 2, 4}: U = 5, AUC = 5/6
        let a = auc_one_vs_rest(&[3.0, 5.0, 1.0, 2.0, 4.0], &[true, true, false, false, false]).unwrap();
        assert!((a - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn binary_per_class_aucs_coincide() {
        let scores = [0.2, 0.4, 0.4, 0.9, 0.1, 0.6, 0.6];
        let labels = [0u8, 1, 0, 1, 0, 1, 1];
        let pos: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        let neg: Vec<bool> = pos.iter().map(|p| !p).collect();
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a1 = auc_one_vs_rest(&scores, &pos).unwrap();
        let a0 = auc_one_vs_rest(&negated, &neg).unwrap();
        assert!((a1 - a0).abs() < 1e-15);
        assert!((auc_roc_macro(&scores, &labels).unwrap() - a1).abs() < 1e-15);
    }

    #[test]
    fn three_class_macro() {
        // each class column separates its own items perfectly
        let labels = [0usize, 1, 2];
        let cols = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(macro_auc(&cols, &labels).unwrap(), 1.0);
        assert_eq!(macro_auc(&cols[..2], &labels), Err(AucError::UnknownClass(2)));
    }

    #[test]
    fn bootstrap_se_is_seeded() {
        let scores: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64).collect();
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
        let a = auc_roc_macro_with_se(&scores, &labels, 200, 9).unwrap();
        let b = auc_roc_macro_with_se(&scores, &labels, 200, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.se > 0.0 && a.se < 0.5);
        assert_eq!(a.mean, auc_roc_macro(&scores, &labels).unwrap());
    }
}
