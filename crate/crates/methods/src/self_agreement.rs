//! Self-agreement: the mean of several sampled ratings.

use ifjudge_core::{MethodScore, Question};
use ifjudge_gateway::{Gateway, GenerationParams, Prompt};
use rand::seq::index::sample;
use serde_json::json;

use crate::{keyed_rng, rating_parse, FewShotExample, JudgeConfig, MethodError, RatingItem, Templates};

/// Method id for a variant combination, e.g. `self_agreement_no_intro`.
pub fn method_id(config: &JudgeConfig) -> String {
    let mut id = String::from("self_agreement");
    if config.variants.no_intro {
        id.push_str("_no_intro");
    }
    if config.variants.rationale {
        id.push_str("_rationale");
    }
    if config.variants.random_examples {
        id.push_str("_random");
    }
    id
}

/// The `k` examples for `item`. Random-example variants draw per answer from
/// examples of other documents; otherwise one seeded draw from `pool` is
/// shared by all answers.
pub fn select_examples<'p>(
    item: &RatingItem<'_>,
    config: &JudgeConfig,
    pool: &'p [FewShotExample],
) -> Result<Vec<&'p FewShotExample>, MethodError> {
    let candidates: Vec<&FewShotExample> = pool
        .iter()
        .filter(|e| e.hw.is_some())
        .filter(|e| !config.variants.random_examples || e.document_id.as_deref() != Some(item.document_id))
        .collect();
    let k = config.k_examples;
    if candidates.len() < k {
        return Err(MethodError::NotEnoughExamples {
            needed: k,
            available: candidates.len(),
        });
    }
    let mut rng = if config.variants.random_examples {
        keyed_rng(config.seed, item.answer_id)
    } else {
        keyed_rng(config.seed, "")
    };
    let mut picked: Vec<usize> = sample(&mut rng, candidates.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| candidates[i]).collect())
}

pub fn self_agreement_prompt(
    item: &RatingItem<'_>,
    examples: &[&FewShotExample],
    config: &JudgeConfig,
    templates: &Templates,
) -> Result<String, MethodError> {
    let mut prompt = String::new();
    if !config.variants.no_intro {
        prompt.push_str(&templates.render("self_agreement_intro", &[])?);
    }
    for e in examples {
        let hw = e.hw.expect("examples are filtered on hw");
        prompt.push_str(&templates.render(
            "self_agreement_example",
            &[("document", &e.document), ("instruction", &e.instruction), ("answer", &e.answer)],
        )?);
        if config.variants.rationale {
            let rationale = e
                .rationale
                .as_deref()
                .ok_or_else(|| MethodError::Config("rationale variant needs examples with rationales".into()))?;
            prompt.push_str(&format!(" {rationale} Rating: {hw}.\n\n"));
        } else {
            prompt.push_str(&format!(" {hw}\n\n"));
        }
    }
    prompt.push_str(&templates.render(
        "self_agreement_example",
        &[("document", item.document), ("instruction", item.instruction), ("answer", item.answer)],
    )?);
    Ok(prompt)
}

/// Sample `n_samples` ratings and average the parseable ones. Returns the
/// HW score and an FI score (share of samples at or above `fi_threshold`),
/// both with the raw samples in `aux`.
pub fn self_agreement_rate(
    item: &RatingItem<'_>,
    gateway: &Gateway,
    templates: &Templates,
    config: &JudgeConfig,
    pool: &[FewShotExample],
) -> Result<[MethodScore; 2], MethodError> {
    let examples = select_examples(item, config, pool)?;
    let prompt = Prompt::new(self_agreement_prompt(item, &examples, config, templates)?);
    let mut raw = Vec::with_capacity(config.n_samples);
    let mut ratings = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let params = GenerationParams::new(config.sample_temperature, config.max_tokens).with_sample(i as u32);
        let text = gateway.generate(&prompt, &params)?;
        ratings.push(rating_parse(&text, Question::Hw));
        raw.push(text);
    }
    let parsed: Vec<f64> = ratings.iter().flatten().map(|&r| f64::from(r)).collect();
    if parsed.is_empty() {
        return Err(MethodError::Unparseable { raw });
    }
    let n = parsed.len() as f64;
    let hw = parsed.iter().sum::<f64>() / n;
    let fi = parsed.iter().filter(|&&r| r >= config.fi_threshold).count() as f64 / n;
    let aux = json!({
        "samples": ratings,
        "raw": raw,
        "failed": ratings.iter().filter(|r| r.is_none()).count(),
    });
    let id = method_id(config);
    Ok([
        MethodScore::new(item.answer_id, format!("{id}:hw"), hw).with_aux(aux.clone()),
        MethodScore::new(item.answer_id, format!("{id}:fi"), fi).with_aux(aux),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{builtin_examples, Variants};

    fn item() -> RatingItem<'static> {
        RatingItem {
            answer_id: "a1",
            document_id: "d1",
            document: "Doc text.",
            instruction: "Summarize.",
            answer: "Short summary.",
        }
    }

    #[test]
    fn variant_ids() {
        let mut c = JudgeConfig::default();
        assert_eq!(method_id(&c), "self_agreement");
        c.variants = Variants {
            no_intro: true,
            rationale: true,
            random_examples: true,
        };
        assert_eq!(method_id(&c), "self_agreement_no_intro_rationale_random");
    }

    #[test]
    fn prompt_layout() {
        let pool = builtin_examples();
        let c = JudgeConfig::default();
        let t = Templates::builtin();
        let ex = select_examples(&item(), &c, &pool).unwrap();
        assert_eq!(ex.len(), 3);
        let p = self_agreement_prompt(&item(), &ex, &c, &t).unwrap();
        assert!(p.starts_with("You are given a document, an instruction, and a candidate answer."));
        assert_eq!(p.matches("----").count(), 4);
        assert!(p.ends_with("Answer:\nShort summary.\n\nRating:"));

        let no_intro = JudgeConfig {
            variants: Variants {
                no_intro: true,
                rationale: true,
                random_examples: false,
            },
            ..JudgeConfig::default()
        };
        let p = self_agreement_prompt(&item(), &ex, &no_intro, &t).unwrap();
        assert!(p.starts_with("----"));
        assert!(p.contains(ex[0].rationale.as_deref().unwrap()));
    }

    #[test]
    fn random_examples_skip_own_document() {
        let mut pool = builtin_examples();
        for (i, e) in pool.iter_mut().enumerate() {
            e.document_id = Some(if i < 2 { "d1".into() } else { format!("d{i}") });
        }
        let c = JudgeConfig {
            k_examples: 2,
            variants: Variants {
                random_examples: true,
                ..Variants::default()
            },
            ..JudgeConfig::default()
        };
        let ex = select_examples(&item(), &c, &pool).unwrap();
        assert!(ex.iter().all(|e| e.document_id.as_deref() != Some("d1")));
        let c3 = JudgeConfig { k_examples: 3, ..c };
        assert!(matches!(
            select_examples(&item(), &c3, &pool),
            Err(MethodError::NotEnoughExamples { needed: 3, available: 2 })
        ));
    }
}
