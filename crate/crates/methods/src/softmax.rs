//! Constrained softmax: a rating distribution from the likelihood of each
//! admissible rating token.

use ifjudge_core::{MethodScore, Question};
use ifjudge_gateway::{Gateway, Prompt};
use serde::{Deserialize, Serialize};

use crate::{FewShotExample, MethodError, RatingItem, Templates};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingDistribution {
    pub question: Question,
    pub values: Vec<u8>,
    pub probabilities: Vec<f64>,
    pub expected_value: f64,
}

impl RatingDistribution {
    /// Distribution over `question`'s values from their log-likelihoods
    /// (same order as [`Question::values`]).
    pub fn from_log_likelihoods(question: Question, log_likelihoods: &[f64], temperature: f64) -> Self {
        let values = question.values().to_vec();
        assert_eq!(values.len(), log_likelihoods.len(), "one log-likelihood per rating value");
        let probabilities = softmax(log_likelihoods, temperature);
        let lo = f64::from(values[0]);
        let hi = f64::from(values[values.len() - 1]);
        let expected_value = values
            .iter()
            .zip(&probabilities)
            .map(|(&v, p)| f64::from(v) * p)
            .sum::<f64>()
            .clamp(lo, hi);
        Self {
            question,
            values,
            probabilities,
            expected_value,
        }
    }
}

/// Softmax of `logits / temperature`, computed after subtracting the maximum.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| ((l - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Token scored for each value of `question`.
pub fn choice_tokens(question: Question) -> Vec<String> {
    match question {
        Question::Fi => vec!["No".into(), "Yes".into()],
        Question::Hw => (1..=5).map(|v: u8| v.to_string()).collect(),
    }
}

fn template_id(question: Question) -> &'static str {
    match question {
        Question::Fi => "softmax_fi",
        Question::Hw => "softmax_hw",
    }
}

/// The scoring prompt, preceded by `shots` solved examples.
pub fn softmax_prompt(
    item: &RatingItem<'_>,
    question: Question,
    templates: &Templates,
    shots: usize,
    examples: &[FewShotExample],
) -> Result<String, MethodError> {
    let usable: Vec<&FewShotExample> = examples.iter().filter(|e| e.rating(question).is_some()).collect();
    if usable.len() < shots {
        return Err(MethodError::NotEnoughExamples {
            needed: shots,
            available: usable.len(),
        });
    }
    let tokens = choice_tokens(question);
    let id = template_id(question);
    let mut prompt = String::new();
    for e in &usable[..shots] {
        let rating = e.rating(question).expect("filtered");
        let pos = question
            .values()
            .iter()
            .position(|&v| v == rating)
            .ok_or_else(|| MethodError::Config(format!("example rating {rating} outside the value set")))?;
        prompt.push_str(&templates.render(
            id,
            &[("document", &e.document), ("instruction", &e.instruction), ("answer", &e.answer)],
        )?);
        prompt.push(' ');
        prompt.push_str(&tokens[pos]);
        prompt.push_str("\n\n");
    }
    prompt.push_str(&templates.render(
        id,
        &[("document", item.document), ("instruction", item.instruction), ("answer", item.answer)],
    )?);
    Ok(prompt)
}

pub fn constrained_softmax_rate(
    item: &RatingItem<'_>,
    question: Question,
    gateway: &Gateway,
    templates: &Templates,
    shots: usize,
    examples: &[FewShotExample],
    temperature: f64,
) -> Result<RatingDistribution, MethodError> {
    let prompt = Prompt::new(softmax_prompt(item, question, templates, shots, examples)?);
    let choices = choice_tokens(question);
    let scores = gateway.score_choices(&prompt, &choices)?;
    let logliks: Vec<f64> = scores.iter().map(|s| s.log_likelihood).collect();
    if let Some(bad) = scores.iter().find(|s| !s.log_likelihood.is_finite()) {
        return Err(MethodError::NonFinite(bad.choice.clone()));
    }
    Ok(RatingDistribution::from_log_likelihoods(question, &logliks, temperature))
}

/// [`constrained_softmax_rate`] as a method score `<method_id>:<fi|hw>` with
/// the distribution in `aux`.
pub fn constrained_softmax_score(
    method_id: &str,
    item: &RatingItem<'_>,
    question: Question,
    gateway: &Gateway,
    templates: &Templates,
    shots: usize,
    examples: &[FewShotExample],
    temperature: f64,
) -> Result<MethodScore, MethodError> {
    let d = constrained_softmax_rate(item, question, gateway, templates, shots, examples, temperature)?;
    let suffix = match question {
        Question::Fi => "fi",
        Question::Hw => "hw",
    };
    Ok(MethodScore::new(item.answer_id, format!("{method_id}:{suffix}"), d.expected_value)
        .with_aux(serde_json::to_value(&d).expect("distribution serializes")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_and_uniform() {
        let d = RatingDistribution::from_log_likelihoods(Question::Hw, &[-1e4, -1e4, -1e4, -1e4, 0.0], 1.0);
        assert_eq!(d.probabilities, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(d.expected_value, 5.0);
        let u = RatingDistribution::from_log_likelihoods(Question::Hw, &[-2.0; 5], 1.0);
        assert!((u.expected_value - 3.0).abs() < 1e-12);
        let f = RatingDistribution::from_log_likelihoods(Question::Fi, &[-0.7, -0.7], 1.0);
        assert!((f.expected_value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn known_probabilities() {
        let p = [0.1, 0.1, 0.2, 0.3, 0.3];
        let logs: Vec<f64> = p.iter().map(|x: &f64| x.ln()).collect();
        let d = RatingDistribution::from_log_likelihoods(Question::Hw, &logs, 1.0);
        // 0.1 + 0.2 + 0.6 + 1.2 + 1.5
        assert!((d.expected_value - 3.6).abs() < 1e-12);
    }
}
