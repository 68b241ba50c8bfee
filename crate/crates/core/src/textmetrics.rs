//! Deterministic surface-form measurements: word tokenization, sentence
//! splitting, syllable estimation, Flesch-Kincaid grade, MTLD lexical
//! diversity, per-dialogue length statistics and error rates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dialogue, Role};

/// TTR threshold at which an MTLD factor is considered complete.
pub const MTLD_TTR_THRESHOLD: f64 = 0.72;

/// Token count below which corpus-level linguistic metrics are flagged unreliable.
pub const MIN_RELIABLE_TOKENS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty-corpus")]
    EmptyCorpus,
    #[error("undefined-mtld")]
    UndefinedMtld,
    #[error("empty-group")]
    EmptyGroup,
}

/// Per-dialogue length statistics over user turns only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthStats {
    pub user_turns: usize,
    pub user_words: usize,
}

/// Corpus-level linguistic measurements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusLinguistics {
    pub fk_grade: f64,
    pub mtld: Option<f64>,
    pub token_count: usize,
    /// False when token_count is below [`MIN_RELIABLE_TOKENS`] or MTLD is undefined.
    pub reliable: bool,
}

/// Maximal runs of letters/digits/apostrophes/internal hyphens. Case preserved.
pub fn tokenize_words(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let is_core = |c: char| c.is_alphanumeric() || c == '\'';
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if is_core(c) {
            cur.push(c);
        } else if c == '-' && !cur.is_empty() && i + 1 < chars.len() && is_core(chars[i + 1]) {
            // internal hyphen only
            cur.push(c);
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
        i += 1;
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    // strip leading/trailing apostrophes left by quoting, e.g. 'word'
    tokens
        .into_iter()
        .map(|t| t.trim_matches('\'').to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

const PROTECTED_ABBREVIATIONS: &[&str] = &[
    "e.g", "i.e", "etc", "vs", "dr", "mr", "mrs", "ms", "prof", "st", "no", "fig", "al", "approx",
    "dept", "est", "jr", "sr", "inc", "ltd", "co", "u.s", "u.k",
];

fn ends_with_abbreviation(buf: &str) -> bool {
    // last word before the terminal '.'
    let trimmed = buf.trim_end_matches('.');
    let last = trimmed
        .rsplit(|c: char| c.is_whitespace())
        .next()
        .unwrap_or("");
    let last = last.trim_start_matches(|c: char| !c.is_alphanumeric() && c != '.');
    PROTECTED_ABBREVIATIONS
        .iter()
        .any(|a| last.eq_ignore_ascii_case(a))
}

/// Rule-based sentence splitter. Splits on `.`/`!`/`?` followed by whitespace
/// and a capital letter or digit (or end of text), protecting common
/// abbreviations. Blank lines always split. Never returns empty sentences.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    for block in text.split("\n\n") {
        let block = block.trim();
        if block.is_empty() {
            continue;
        }
        let chars: Vec<char> = block.chars().collect();
        let mut cur = String::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            cur.push(c);
            if c == '.' || c == '!' || c == '?' {
                // absorb trailing closers like quotes or parens
                let mut j = i + 1;
                while j < chars.len() && (chars[j] == '"' || chars[j] == '\'' || chars[j] == ')') {
                    cur.push(chars[j]);
                    j += 1;
                }
                let at_end = j >= chars.len();
                let followed_by_break = !at_end
                    && chars[j].is_whitespace()
                    && chars[j + 1..]
                        .iter()
                        .find(|ch| !ch.is_whitespace())
                        .map(|ch| ch.is_uppercase() || ch.is_ascii_digit())
                        .unwrap_or(true);
                let protected = c == '.' && ends_with_abbreviation(&cur);
                if (at_end || followed_by_break) && !protected {
                    let s = cur.trim().to_string();
                    if !s.is_empty() {
                        sentences.push(s);
                    }
                    cur.clear();
                    // skip the whitespace run
                    while j < chars.len() && chars[j].is_whitespace() {
                        j += 1;
                    }
                    i = j;
                    continue;
                }
            }
            i += 1;
        }
        let tail = cur.trim().to_string();
        if !tail.is_empty() {
            sentences.push(tail);
        }
    }
    sentences
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel-group heuristic: count maximal vowel runs (a e i o u y), subtract a
/// silent terminal "e" (kept when it forms "-le" after a consonant), floor 1.
pub fn count_syllables(word: &str) -> usize {
    let w: Vec<char> = word
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphabetic())
        .collect();
    if w.is_empty() {
        return 1;
    }
    let mut groups = 0usize;
    let mut in_group = false;
    for &c in &w {
        if is_vowel(c) {
            if !in_group {
                groups += 1;
                in_group = true;
            }
        } else {
            in_group = false;
        }
    }
    let n = w.len();
    if n >= 2 && w[n - 1] == 'e' && !is_vowel(w[n - 2]) {
        let le_rule = n >= 3 && w[n - 1] == 'e' && w[n - 2] == 'l' && !is_vowel(w[n - 3]);
        if !le_rule && groups > 1 {
            groups -= 1;
        }
    }
    groups.max(1)
}

/// Flesch-Kincaid grade: 0.39·(words/sentences) + 11.8·(syllables/words) − 15.59.
pub fn flesch_kincaid_grade(corpus: &str) -> Result<f64, MetricsError> {
    let sentences = split_sentences(corpus);
    let words: Vec<String> = tokenize_words(corpus);
    if sentences.is_empty() || words.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let syllables: usize = words.iter().map(|w| count_syllables(w)).sum();
    Ok(0.39 * (words.len() as f64 / sentences.len() as f64)
        + 11.8 * (syllables as f64 / words.len() as f64)
        - 15.59)
}

fn mtld_one_direction(tokens: &[String]) -> Result<f64, MetricsError> {
    let mut factors = 0.0f64;
    let mut types: std::collections::HashSet<&str> = std::collections::HashSet::new();
    let mut count = 0usize;
    for t in tokens {
        count += 1;
        types.insert(t.as_str());
        let ttr = types.len() as f64 / count as f64;
        if ttr < MTLD_TTR_THRESHOLD {
            factors += 1.0;
            types.clear();
            count = 0;
        }
    }
    if count > 0 {
        let ttr = types.len() as f64 / count as f64;
        factors += (1.0 - ttr) / (1.0 - MTLD_TTR_THRESHOLD);
    }
    if factors == 0.0 {
        return Err(MetricsError::UndefinedMtld);
    }
    Ok(tokens.len() as f64 / factors)
}

/// Bidirectional MTLD at TTR threshold 0.72: mean of the forward and backward
/// pass values. Callers fold case before calling (types are case-insensitive).
pub fn mtld(tokens: &[String]) -> Result<f64, MetricsError> {
    if tokens.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let fwd = mtld_one_direction(tokens)?;
    let reversed: Vec<String> = tokens.iter().rev().cloned().collect();
    let bwd = mtld_one_direction(&reversed)?;
    Ok((fwd + bwd) / 2.0)
}

/// Corpus-level readability and lexical diversity over one body of text.
pub fn corpus_linguistics(corpus: &str) -> Result<CorpusLinguistics, MetricsError> {
    let fk = flesch_kincaid_grade(corpus)?;
    let tokens: Vec<String> = tokenize_words(corpus)
        .into_iter()
        .map(|t| t.to_lowercase())
        .collect();
    let token_count = tokens.len();
    let mtld_val = match mtld(&tokens) {
        Ok(v) => Some(v),
        Err(MetricsError::UndefinedMtld) => None,
        Err(e) => return Err(e),
    };
    let reliable = token_count >= MIN_RELIABLE_TOKENS && mtld_val.is_some();
    Ok(CorpusLinguistics {
        fk_grade: fk,
        mtld: mtld_val,
        token_count,
        reliable,
    })
}

/// User-turn and user-word counts for one dialogue.
pub fn length_stats(d: &Dialogue) -> LengthStats {
    let mut turns = 0;
    let mut words = 0;
    for t in &d.turns {
        if t.role == Role::User {
            turns += 1;
            words += tokenize_words(&t.text).len();
        }
    }
    LengthStats {
        user_turns: turns,
        user_words: words,
    }
}

/// Errors per 1000 user words across a group of dialogues.
pub fn error_rate(group: &[(LengthStats, usize)]) -> Result<f64, MetricsError> {
    let words: usize = group.iter().map(|(s, _)| s.user_words).sum();
    if words == 0 {
        return Err(MetricsError::EmptyGroup);
    }
    let errors: usize = group.iter().map(|(_, e)| *e).sum();
    Ok(1000.0 * errors as f64 / words as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_basic() {
        assert_eq!(tokenize_words("I can't stop"), vec!["I", "can't", "stop"]);
        assert_eq!(tokenize_words(""), Vec::<String>::new());
        assert_eq!(tokenize_words("state-of-the-art!!"), vec!["state-of-the-art"]);
    }

    #[test]
    fn tokenize_trailing_hyphen_not_internal() {
        assert_eq!(tokenize_words("well- said"), vec!["well", "said"]);
    }

    #[test]
    fn sentences_basic() {
        assert_eq!(split_sentences("Hi. How are you?"), vec!["Hi.", "How are you?"]);
        assert_eq!(split_sentences("I met Dr. Smith today.").len(), 1);
        assert_eq!(split_sentences("thanks"), vec!["thanks"]);
    }

    #[test]
    fn sentences_never_empty() {
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("  \n\n  ").is_empty());
        for s in split_sentences("One. Two! Three? Four") {
            assert!(!s.trim().is_empty());
        }
    }

    #[test]
    fn sentences_blank_line_split() {
        let got = split_sentences("first part\n\nsecond part");
        assert_eq!(got, vec!["first part", "second part"]);
    }

    #[test]
    fn syllables_examples() {
        assert_eq!(count_syllables("cat"), 1);
        assert_eq!(count_syllables("table"), 2);
        assert_eq!(count_syllables("queue"), 1);
        assert_eq!(count_syllables("the"), 1);
        assert_eq!(count_syllables("syllable"), 3);
    }

    #[test]
    fn syllable_floor() {
        for w in ["b", "tsk", "hmm", "x"] {
            assert!(count_syllables(w) >= 1);
        }
    }

    #[test]
    fn fk_hand_example() {
        let g = flesch_kincaid_grade("The cat sat on the mat.").unwrap();
        assert!((g - (-1.45)).abs() < 0.01, "got {g}");
    }

    #[test]
    fn fk_scale_invariance() {
        let one = flesch_kincaid_grade("The cat sat on the mat.").unwrap();
        let two = flesch_kincaid_grade("The cat sat on the mat. The cat sat on the mat.").unwrap();
        assert!((one - two).abs() < 1e-12);
    }

    #[test]
    fn fk_monotonic_probe() {
        let short = "The cat sat.";
        let longer = format!(
            "{short} Extraordinarily complicated considerations invariably necessitate \
             comprehensive deliberation throughout interminable organizational negotiations."
        );
        assert!(flesch_kincaid_grade(&longer).unwrap() > flesch_kincaid_grade(short).unwrap());
    }

    #[test]
    fn fk_empty() {
        assert_eq!(flesch_kincaid_grade(""), Err(MetricsError::EmptyCorpus));
    }

    #[test]
    fn mtld_all_identical_low() {
        let toks: Vec<String> = std::iter::repeat("a".to_string()).take(100).collect();
        let v = mtld(&toks).unwrap();
        assert!(v < 5.0, "got {v}");
    }

    #[test]
    fn mtld_undefined_on_all_unique() {
        let toks: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
        assert_eq!(mtld(&toks), Err(MetricsError::UndefinedMtld));
    }

    #[test]
    fn error_rate_definition() {
        let g = vec![(LengthStats { user_turns: 1, user_words: 1000 }, 3)];
        assert_eq!(error_rate(&g).unwrap(), 3.0);
        let z = vec![(LengthStats { user_turns: 1, user_words: 500 }, 0)];
        assert_eq!(error_rate(&z).unwrap(), 0.0);
        assert_eq!(error_rate(&[]), Err(MetricsError::EmptyGroup));
    }
}
