//! Agreement and meta-evaluation statistics.
//!
//! Statistics that can be undefined for a given input return [`Stat`]
//! rather than an error or a sentinel number.

mod aggregate;
mod agreement;
mod auc;
mod kendall;
mod krippendorff;
mod pearson;

pub use aggregate::{
    aggregate_ratings, aggregate_with_rng, monte_carlo_model_table, AggregateError,
    AggregationMode, ModelTable, ModelTableRow, TableAggregation,
};
pub use agreement::{agreement_analysis, winner_set, AgreementBreakdown, AgreementError, PairScores};
pub use auc::{auc_one_vs_rest, auc_roc_macro, auc_roc_macro_with_se, macro_auc, AucError};
pub use kendall::{kendall_tau_b, kendall_tau_b_distance};
pub use krippendorff::{krippendorff_alpha, Distance};
pub use pearson::{pearson_distance, pearson_r};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Why a statistic has no value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Undefined {
    /// No unit carries two or more values.
    NoOverlap,
    /// Only one distinct value occurs, so chance disagreement is zero.
    NoExpectedDisagreement,
    /// One of the inputs is constant.
    ConstantInput,
    /// Fewer than two observations.
    TooFewPoints,
}

/// A statistic that is either a finite value or undefined with a cause.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Value(f64),
    Undefined(Undefined),
}

impl Stat {
    pub fn value(self) -> Option<f64> {
        match self {
            Stat::Value(v) => Some(v),
            Stat::Undefined(_) => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Stat::Value(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("length mismatch: {left} vs {right}")]
pub struct LengthMismatch {
    pub left: usize,
    pub right: usize,
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    /// Mean and `sd / sqrt(n)` with the sample (n-1) standard deviation.
    /// The standard error is 0 for fewer than two values.
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        Some(Self {
            mean,
            se: sample_sd(values, mean) / (n as f64).sqrt(),
            n,
        })
    }
}

pub(crate) fn sample_sd(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Running mean that stays bit-identical when fed a constant.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct RunningMean {
    mean: f64,
    count: u64,
}

impl RunningMean {
    pub(crate) fn push(&mut self, x: f64) {
        self.count += 1;
        if self.count == 1 {
            self.mean = x;
        } else {
            self.mean += (x - self.mean) / self.count as f64;
        }
    }

    pub(crate) fn get(&self) -> f64 {
        self.mean
    }
}
