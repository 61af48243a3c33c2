//! Deterministic, rule-based word and sentence tokenization.
//!
//! Every module that counts words or sentences goes through these functions,
//! so length heuristics, ROUGE sentence splitting and the corpus length
//! filter all agree on what a "word" is.

/// Tokens that end in `.` but do not close a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "etc", "e.g", "i.e", "inc",
    "ltd", "co", "corp", "no", "fig", "al", "approx", "dept", "est", "gen", "gov", "jan", "feb",
    "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "u.s", "u.k", "a.m",
    "p.m",
];

const OPENERS: &[char] = &['"', '\'', '(', '[', '{', '“', '‘', '«'];
const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '”', '’', '»'];
const TERMINATORS: &[char] = &['.', '!', '?'];

fn is_word_token(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

/// Number of whitespace-delimited tokens that contain at least one
/// alphanumeric character. Punctuation-only tokens ("-", "...") are dropped.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().filter(|t| is_word_token(t)).count()
}

/// Number of sentences produced by [`split_sentences`].
pub fn sentence_count(text: &str) -> usize {
    split_sentences(text).len()
}

/// Byte spans of the whitespace-delimited tokens of `text`.
fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                spans.push((s, idx));
            }
        } else if start.is_none() {
            start = Some(idx);
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

fn ends_sentence(token: &str) -> bool {
    let body = token.trim_end_matches(CLOSERS);
    let Some(last) = body.chars().last() else {
        return false;
    };
    if !TERMINATORS.contains(&last) {
        return false;
    }
    if last == '.' {
        let core = body
            .trim_start_matches(OPENERS)
            .trim_end_matches(TERMINATORS)
            .to_lowercase();
        if ABBREVIATIONS.contains(&core.as_str()) {
            return false;
        }
    }
    true
}

fn starts_sentence(token: &str) -> bool {
    token
        .trim_start_matches(OPENERS)
        .chars()
        .next()
        .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit())
}

/// Split `text` into sentences.
///
/// A token ending in `.`, `!` or `?` (optionally followed by closing quotes or
/// brackets) closes a sentence when the next token starts with an uppercase
/// letter or a digit. A period after a known abbreviation never closes a
/// sentence. The text after the last boundary forms the final sentence.
/// Segments without any word token are dropped.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let spans = token_spans(text);
    let mut sentences = Vec::new();
    let mut seg_start: Option<usize> = None;
    for (i, &(s, e)) in spans.iter().enumerate() {
        let start = *seg_start.get_or_insert(s);
        let token = &text[s..e];
        let boundary = match spans.get(i + 1) {
            Some(&(ns, ne)) => ends_sentence(token) && starts_sentence(&text[ns..ne]),
            None => true,
        };
        if boundary {
            let segment = &text[start..e];
            if segment.split_whitespace().any(is_word_token) {
                sentences.push(segment);
            }
            seg_start = None;
        }
    }
    sentences
}

/// Lowercased tokens with every non-alphanumeric character treated as a
/// separator. Used by the n-gram and LCS metrics.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    let lowered: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    lowered.split_whitespace().map(str::to_owned).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text() {
        assert_eq!((word_count(""), sentence_count("")), (0, 0));
        assert_eq!((word_count("  \n\t "), sentence_count("  \n ")), (0, 0));
    }

    #[test]
    fn two_short_sentences() {
        let t = "Hello world. Bye.";
        assert_eq!((word_count(t), sentence_count(t)), (3, 2));
        assert_eq!(split_sentences(t), vec!["Hello world.", "Bye."]);
    }

    #[test]
    fn abbreviation_does_not_split() {
        let t = "Dr. Smith left. He returned.";
        assert_eq!((word_count(t), sentence_count(t)), (5, 2));
        assert_eq!(split_sentences(t), vec!["Dr. Smith left.", "He returned."]);
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(sentence_count("It cost 5 dollars. then it broke."), 1);
        assert_eq!(sentence_count("Version 2. 3 items remain."), 2);
    }

    #[test]
    fn quotes_and_brackets_around_terminators() {
        let t = "He said \"stop.\" Then (\"Go!\") She left.";
        assert_eq!(sentence_count(t), 3);
    }

    #[test]
    fn unterminated_trailing_text_is_a_sentence() {
        assert_eq!(sentence_count("no punctuation here"), 1);
        assert_eq!(sentence_count("One. two"), 1);
        assert_eq!(sentence_count("One. Two"), 2);
    }

    #[test]
    fn punctuation_only_tokens_are_not_words() {
        assert_eq!(word_count("a - b ... c"), 3);
        assert_eq!(sentence_count("... !!!"), 0);
    }

    #[test]
    fn normalized_tokens_strip_punctuation_and_case() {
        assert_eq!(
            normalized_tokens("The CAT, sat-down!"),
            vec!["the", "cat", "sat", "down"]
        );
    }

    proptest! {
        #[test]
        fn word_count_additive_under_concatenation(
            a in "[a-zA-Z .,!?-]{1,40}",
            b in "[a-zA-Z .,!?-]{1,40}",
        ) {
            let joined = format!("{a} {b}");
            prop_assert_eq!(word_count(&joined), word_count(&a) + word_count(&b));
        }
    }
}
