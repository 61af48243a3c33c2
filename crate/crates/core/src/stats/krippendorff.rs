use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Stat, Undefined};

/// Disagreement function between two values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    /// 0 for equal values, 1 otherwise.
    Nominal,
    /// Squared difference.
    Interval,
}

impl Distance {
    pub fn delta(self, a: f64, b: f64) -> f64 {
        match self {
            Distance::Nominal => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
            Distance::Interval => (a - b).powi(2),
        }
    }
}

/// Krippendorff's α over `(unit, annotator, value)` observations, computed
/// from the coincidence matrix.
///
/// Repeated (unit, annotator) observations keep the first value. Units with
/// a single value are not pairable and are ignored. Undefined when no unit is
/// pairable or when all pairable values are identical.
pub fn krippendorff_alpha<U: Ord, A: Ord>(observations: &[(U, A, f64)], distance: Distance) -> Stat {
    let mut seen = BTreeSet::new();
    let mut units: BTreeMap<&U, Vec<f64>> = BTreeMap::new();
    for (unit, annotator, value) in observations {
        if seen.insert((unit, annotator)) {
            units.entry(unit).or_default().push(*value);
        }
    }

    let mut values: Vec<f64> = units
        .values()
        .filter(|v| v.len() >= 2)
        .flatten()
        .copied()
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.is_empty() {
        return Stat::Undefined(Undefined::NoOverlap);
    }
    let index_of = |v: f64| {
        values
            .binary_search_by(|probe| probe.total_cmp(&v))
            .expect("value collected above")
    };

    let k = values.len();
    let mut coincidence = vec![vec![0.0f64; k]; k];
    for unit_values in units.values().filter(|v| v.len() >= 2) {
        let m = unit_values.len() as f64;
        let mut counts = vec![0.0f64; k];
        for &v in unit_values {
            counts[index_of(v)] += 1.0;
        }
        for c in 0..k {
            if counts[c] == 0.0 {
                continue;
            }
            for kk in 0..k {
                let pairs = if c == kk {
                    counts[c] * (counts[c] - 1.0)
                } else {
                    counts[c] * counts[kk]
                };
                coincidence[c][kk] += pairs / (m - 1.0);
            }
        }
    }

    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let total: f64 = marginals.iter().sum();

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for kk in 0..k {
            let d = distance.delta(values[c], values[kk]);
            observed += coincidence[c][kk] * d;
            expected += marginals[c] * marginals[kk] * d;
        }
    }
    if expected.partial_cmp(&0.0) != Some(Ordering::Greater) {
        return Stat::Undefined(Undefined::NoExpectedDisagreement);
    }
    if observed == 0.0 {
        return Stat::Value(1.0);
    }
    Stat::Value(1.0 - (total - 1.0) * observed / expected)
}
