//! OpenAI-compatible completions backend.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use crate::{Backend, ChoiceScore, GatewayError, GenerationParams, Prompt, MAX_ATTEMPTS};

pub struct HttpBackend {
    id: String,
    endpoint: String,
    model: String,
    token: Option<String>,
    supports_scoring: bool,
    max_attempts: u32,
    base_delay: Duration,
    client: Client,
}

impl HttpBackend {
    pub fn new(
        id: &str,
        endpoint: String,
        model: String,
        token: Option<String>,
        supports_scoring: bool,
        max_attempts: u32,
        base_delay: Duration,
    ) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            id: id.into(),
            endpoint,
            model,
            token,
            supports_scoring,
            max_attempts: max_attempts.clamp(1, MAX_ATTEMPTS),
            base_delay,
            client,
        })
    }

    /// POST `body`, retrying transport failures, 429 and 5xx with exponential
    /// backoff. Other non-success statuses are returned as refusals carrying
    /// the response body verbatim.
    pub(crate) fn post(&self, body: &Value) -> Result<Value, GatewayError> {
        post_json(&self.client, &self.endpoint, self.token.as_deref(), body, self.max_attempts, self.base_delay)
    }
}

pub(crate) fn post_json(
    client: &Client,
    url: &str,
    token: Option<&str>,
    body: &Value,
    max_attempts: u32,
    base_delay: Duration,
) -> Result<Value, GatewayError> {
    let max_attempts = max_attempts.clamp(1, MAX_ATTEMPTS);
    let mut last = String::new();
    for attempt in 1..=max_attempts {
        if attempt > 1 {
            std::thread::sleep(base_delay * 2u32.pow(attempt - 2));
        }
        let mut req = client.post(url).json(body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        match req.send() {
            Ok(resp) => {
                let status = resp.status();
                let text = resp.text().unwrap_or_default();
                if status.is_success() {
                    return serde_json::from_str(&text)
                        .map_err(|e| GatewayError::Protocol(format!("invalid JSON response: {e}")));
                }
                if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                    last = format!("HTTP {status}: {text}");
                    continue;
                }
                return Err(GatewayError::Refusal(text));
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(GatewayError::Transport {
        attempts: max_attempts,
        message: last,
    })
}

fn first_choice(v: &Value) -> Result<&Value, GatewayError> {
    v.get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GatewayError::Protocol("response has no choices".into()))
}

impl Backend for HttpBackend {
    fn generate(&self, prompt: &Prompt, params: &GenerationParams) -> Result<String, GatewayError> {
        let body = json!({
            "model": self.model,
            "prompt": prompt.text,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "seed": params.sample_index,
        });
        let v = self.post(&body)?;
        first_choice(&v)?
            .get("text")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| GatewayError::Protocol("choice has no text".into()))
    }

    /// Scores each choice by echoing `prompt + choice` and summing the
    /// log-probabilities of the tokens that start at or after the prompt.
    /// A single space is inserted between the two unless either side already
    /// has whitespace at the seam.
    fn score_choices(&self, prompt: &Prompt, choices: &[String]) -> Result<Vec<ChoiceScore>, GatewayError> {
        if !self.supports_scoring {
            return Err(GatewayError::Capability(self.id.clone()));
        }
        let offset = prompt.text.len() as u64;
        choices
            .iter()
            .map(|choice| {
                let sep = if prompt.text.ends_with(char::is_whitespace) || choice.starts_with(char::is_whitespace) {
                    ""
                } else {
                    " "
                };
                let body = json!({
                    "model": self.model,
                    "prompt": format!("{}{sep}{}", prompt.text, choice),
                    "max_tokens": 0,
                    "echo": true,
                    "logprobs": 1,
                    "temperature": 0.0,
                });
                let v = self.post(&body)?;
                let lp = first_choice(&v)?
                    .get("logprobs")
                    .ok_or_else(|| GatewayError::Capability(self.id.clone()))?;
                let logprobs = lp.get("token_logprobs").and_then(Value::as_array);
                let offsets = lp.get("text_offset").and_then(Value::as_array);
                let (Some(logprobs), Some(offsets)) = (logprobs, offsets) else {
                    return Err(GatewayError::Protocol("logprobs lack token_logprobs/text_offset".into()));
                };
                let mut total = 0.0;
                let mut counted = 0;
                for (lp, off) in logprobs.iter().zip(offsets) {
                    if off.as_u64().is_some_and(|o| o >= offset) {
                        total += lp
                            .as_f64()
                            .ok_or_else(|| GatewayError::Protocol("null log-probability for choice token".into()))?;
                        counted += 1;
                    }
                }
                if counted == 0 {
                    return Err(GatewayError::Protocol(format!("no tokens scored for choice {choice:?}")));
                }
                Ok(ChoiceScore {
                    choice: choice.clone(),
                    log_likelihood: total,
                })
            })
            .collect()
    }
}
