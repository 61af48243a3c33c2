//! Extracting ratings from free-text model output.

use std::sync::OnceLock;

use ifjudge_core::Question;
use regex::Regex;

fn rating_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)rating:\s*\**\s*(yes|no|[1-5])\b").expect("valid regex"))
}

fn admissible(token: &str, question: Question) -> Option<u8> {
    match question {
        Question::Fi => match token.to_ascii_lowercase().as_str() {
            "yes" => Some(1),
            "no" => Some(0),
            _ => None,
        },
        Question::Hw => match token {
            "1" | "2" | "3" | "4" | "5" => token.parse().ok(),
            _ => None,
        },
    }
}

/// The rating in `text`: the last `Rating:` followed by an admissible value,
/// else the last standalone admissible token. FI ratings are 1 (Yes) or 0
/// (No); HW ratings are 1–5.
pub fn rating_parse(text: &str, question: Question) -> Option<u8> {
    let marked = rating_marker()
        .captures_iter(text)
        .filter_map(|c| admissible(c.get(1)?.as_str(), question))
        .last();
    marked.or_else(|| {
        text.split_whitespace()
            .rev()
            .find_map(|t| admissible(t.trim_matches(|c: char| !c.is_alphanumeric()), question))
    })
}

/// Text before the last `Rating:` marker, trimmed; the whole text if there
/// is none.
pub fn rationale_of(text: &str) -> &str {
    let lower = text.to_ascii_lowercase();
    match lower.rfind("rating:") {
        Some(i) => text[..i].trim(),
        None => text.trim(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marker_and_fallback() {
        assert_eq!(rating_parse("It is concise and accurate. Rating: 4.", Question::Hw), Some(4));
        assert_eq!(rating_parse("4", Question::Hw), Some(4));
        assert_eq!(rating_parse("The answer is adequate.", Question::Hw), None);
        assert_eq!(rating_parse("Rating: 2 ... on reflection Rating: **5**", Question::Hw), Some(5));
        assert_eq!(rating_parse("Rating: 7. I'd say 3 overall", Question::Hw), Some(3));
        assert_eq!(rating_parse("rating: Yes", Question::Fi), Some(1));
        assert_eq!(rating_parse("No.", Question::Fi), Some(0));
        assert_eq!(rating_parse("Rating: 45", Question::Hw), None);
    }

    #[test]
    fn rationale_precedes_last_marker() {
        assert_eq!(rationale_of("Too long. Rating: 2."), "Too long.");
        assert_eq!(rationale_of("no marker"), "no marker");
    }
}
