//! Adapter for externally hosted neural scorers.

use std::collections::BTreeSet;
use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use crate::http::post_json;
use crate::{GatewayError, MAX_ATTEMPTS};

/// Client for a scoring service speaking
/// `POST {scorer_id, candidate, context} -> {score}`.
pub struct ExternalScorer {
    endpoint: String,
    scorers: BTreeSet<String>,
    base_delay: Duration,
    client: Client,
}

impl ExternalScorer {
    pub fn new(endpoint: impl Into<String>, scorers: impl IntoIterator<Item = String>) -> Result<Self, GatewayError> {
        Ok(Self {
            endpoint: endpoint.into(),
            scorers: scorers.into_iter().collect(),
            base_delay: Duration::from_millis(500),
            client: Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .map_err(|e| GatewayError::Config(e.to_string()))?,
        })
    }

    pub fn with_base_delay(mut self, delay: Duration) -> Self {
        self.base_delay = delay;
        self
    }

    pub fn score(&self, scorer_id: &str, candidate: &str, context: &str) -> Result<f64, GatewayError> {
        if !self.scorers.contains(scorer_id) {
            return Err(GatewayError::Config(format!("unknown scorer '{scorer_id}'")));
        }
        let body = json!({"scorer_id": scorer_id, "candidate": candidate, "context": context});
        let v = post_json(&self.client, &self.endpoint, None, &body, MAX_ATTEMPTS, self.base_delay)?;
        v.get("score")
            .and_then(Value::as_f64)
            .filter(|s| s.is_finite())
            .ok_or_else(|| GatewayError::Protocol(format!("no finite score in {v}")))
    }

    /// Maximum score over several contexts (e.g. reference answers).
    pub fn score_max(&self, scorer_id: &str, candidate: &str, contexts: &[String]) -> Result<f64, GatewayError> {
        if contexts.is_empty() {
            return Err(GatewayError::Precondition("no contexts to score against".into()));
        }
        let mut best = f64::NEG_INFINITY;
        for c in contexts {
            best = best.max(self.score(scorer_id, candidate, c)?);
        }
        Ok(best)
    }
}
