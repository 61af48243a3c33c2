//! Multi-LLM agreement: agents discuss a rating over up to a fixed number of
//! rounds, seeing only earlier rounds.

use std::sync::Arc;

use ifjudge_core::{MethodScore, Question};
use ifjudge_gateway::{Gateway, GenerationParams, Prompt};
use serde::{Deserialize, Serialize};

use crate::{rating_parse, rationale_of, JudgeConfig, MethodError, RatingItem, Templates};

pub const METHOD_ID: &str = "multi_llm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusOutcome {
    Unanimous,
    Majority,
    Disagreement,
}

/// Outcome and final rating of one round. All equal: unanimous, that value.
/// A single most frequent value shared by at least two agents: majority,
/// that value. Otherwise disagreement, the mean. `None` for no ratings.
pub fn classify_ratings(ratings: &[u8]) -> Option<(ConsensusOutcome, f64)> {
    let first = *ratings.first()?;
    if ratings.iter().all(|&r| r == first) {
        return Some((ConsensusOutcome::Unanimous, f64::from(first)));
    }
    let mut counts = [0usize; 256];
    for &r in ratings {
        counts[usize::from(r)] += 1;
    }
    let top = *counts.iter().max().expect("non-empty");
    let modes: Vec<usize> = (0..counts.len()).filter(|&v| counts[v] == top).collect();
    if top >= 2 && modes.len() == 1 {
        return Some((ConsensusOutcome::Majority, modes[0] as f64));
    }
    let mean = ratings.iter().map(|&r| f64::from(r)).sum::<f64>() / ratings.len() as f64;
    Some((ConsensusOutcome::Disagreement, mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    /// 1-based agent number.
    pub agent: usize,
    pub prompt: String,
    pub raw: String,
    pub reprompted: bool,
    pub rating: Option<u8>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusTranscript {
    pub rounds: Vec<Vec<AgentTurn>>,
    pub outcome: ConsensusOutcome,
    pub final_rating: f64,
    pub rounds_used: usize,
}

fn turn_header(templates: &Templates, agent: usize) -> Result<String, MethodError> {
    Ok(templates.render("consensus_turn", &[("aid", &agent.to_string())])?)
}

/// Prompt for `agent` given the completed earlier rounds.
pub fn agent_prompt(
    item: &RatingItem<'_>,
    templates: &Templates,
    history: &[Vec<AgentTurn>],
    agent: usize,
) -> Result<String, MethodError> {
    let mut prompt = templates.render(
        "consensus",
        &[("document", item.document), ("instruction", item.instruction), ("answer", item.answer)],
    )?;
    for round in history {
        for turn in round {
            prompt.push_str(&turn_header(templates, turn.agent)?);
            match turn.rating {
                Some(r) if turn.rationale.is_empty() => prompt.push_str(&format!(" Rating: {r}.")),
                Some(r) => prompt.push_str(&format!(" {} Rating: {r}.", turn.rationale)),
                None => prompt.push_str(&format!(" {}", turn.raw.trim())),
            }
        }
    }
    prompt.push_str(&turn_header(templates, agent)?);
    Ok(prompt)
}

fn reminder(agent: usize) -> String {
    format!(
        "\n(User: Agent {agent}, please end your response with 'Rating:' followed by a number from 1 to 5.)\nAgent {agent}:"
    )
}

fn agent_turn(
    item: &RatingItem<'_>,
    gateway: &Gateway,
    templates: &Templates,
    history: &[Vec<AgentTurn>],
    agent: usize,
    params: &GenerationParams,
) -> Result<AgentTurn, MethodError> {
    let prompt = agent_prompt(item, templates, history, agent)?;
    let mut raw = gateway.generate(&Prompt::new(prompt.as_str()), params)?;
    let mut rating = rating_parse(&raw, Question::Hw);
    let mut reprompted = false;
    if rating.is_none() {
        reprompted = true;
        let retry = format!("{prompt} {}{}", raw.trim(), reminder(agent));
        raw = gateway.generate(&Prompt::new(retry), params)?;
        rating = rating_parse(&raw, Question::Hw);
    }
    Ok(AgentTurn {
        agent,
        prompt,
        rationale: rationale_of(&raw).to_owned(),
        raw,
        reprompted,
        rating,
    })
}

/// One discussion. Agent `i` is played by `gateways[i]`; the same gateway may
/// appear several times. Agents of a round run concurrently and the round
/// ends when all have answered.
pub fn multi_llm_repeat(
    item: &RatingItem<'_>,
    gateways: &[Arc<Gateway>],
    templates: &Templates,
    config: &JudgeConfig,
    repeat: usize,
) -> Result<ConsensusTranscript, MethodError> {
    if gateways.len() != config.agents || config.agents < 2 {
        return Err(MethodError::Config(format!(
            "{} agents configured, {} backends given (need at least 2)",
            config.agents,
            gateways.len()
        )));
    }
    if config.max_rounds == 0 {
        return Err(MethodError::Config("max_rounds must be positive".into()));
    }
    let params = GenerationParams::new(config.sample_temperature, config.max_tokens).with_sample(repeat as u32);
    let mut rounds: Vec<Vec<AgentTurn>> = Vec::new();
    loop {
        let history = rounds.as_slice();
        let turns: Vec<Result<AgentTurn, MethodError>> = std::thread::scope(|s| {
            let handles: Vec<_> = gateways
                .iter()
                .enumerate()
                .map(|(i, g)| s.spawn(move || agent_turn(item, g, templates, history, i + 1, &params)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("agent thread")).collect()
        });
        let turns = turns.into_iter().collect::<Result<Vec<_>, _>>()?;
        let parsed: Vec<u8> = turns.iter().filter_map(|t| t.rating).collect();
        if parsed.len() < 2 {
            return Err(MethodError::TooFewRatings {
                round: rounds.len() + 1,
                parsed: parsed.len(),
            });
        }
        let (outcome, final_rating) = classify_ratings(&parsed).expect("non-empty");
        rounds.push(turns);
        if outcome == ConsensusOutcome::Unanimous || rounds.len() == config.max_rounds {
            return Ok(ConsensusTranscript {
                rounds_used: rounds.len(),
                rounds,
                outcome,
                final_rating,
            });
        }
    }
}

/// Mean final rating over `config.repeats` discussions, as HW and FI method
/// scores with the transcripts in `aux`. FI is the share of repeats whose
/// final rating reaches `fi_threshold`.
pub fn multi_llm_agreement(
    item: &RatingItem<'_>,
    gateways: &[Arc<Gateway>],
    templates: &Templates,
    config: &JudgeConfig,
) -> Result<([MethodScore; 2], Vec<ConsensusTranscript>), MethodError> {
    if config.repeats == 0 {
        return Err(MethodError::Config("repeats must be positive".into()));
    }
    let transcripts = (0..config.repeats)
        .map(|r| multi_llm_repeat(item, gateways, templates, config, r))
        .collect::<Result<Vec<_>, _>>()?;
    let n = transcripts.len() as f64;
    let hw = transcripts.iter().map(|t| t.final_rating).sum::<f64>() / n;
    let fi = transcripts.iter().filter(|t| t.final_rating >= config.fi_threshold).count() as f64 / n;
    let aux = serde_json::json!({ "transcripts": transcripts });
    Ok((
        [
            MethodScore::new(item.answer_id, format!("{METHOD_ID}:hw"), hw).with_aux(aux.clone()),
            MethodScore::new(item.answer_id, format!("{METHOD_ID}:fi"), fi).with_aux(aux),
        ],
        transcripts,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_examples() {
        assert_eq!(classify_ratings(&[4, 4, 4]), Some((ConsensusOutcome::Unanimous, 4.0)));
        assert_eq!(classify_ratings(&[4, 4, 2]), Some((ConsensusOutcome::Majority, 4.0)));
        assert_eq!(classify_ratings(&[1, 3, 5]), Some((ConsensusOutcome::Disagreement, 3.0)));
        assert_eq!(classify_ratings(&[2, 4]), Some((ConsensusOutcome::Disagreement, 3.0)));
        assert_eq!(classify_ratings(&[1, 1, 2, 2, 3]).unwrap().0, ConsensusOutcome::Disagreement);
        assert_eq!(classify_ratings(&[]), None);
    }
}
