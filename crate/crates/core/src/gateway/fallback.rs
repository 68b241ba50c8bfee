//! Built-in offline grammar mini-ruleset. Not equivalent to the full
//! rule-based checker endpoint; intended for tests and endpoint-free runs.
//! Rules: double space, repeated word, sentence-initial lowercase, missing
//! terminal punctuation.

use super::GrammarMatch;

/// Identifier recorded in reports when this ruleset produced the error counts.
pub const FALLBACK_RULESET_ID: &str = "builtin-mini-v1";

pub fn fallback_grammar_check(text: &str) -> Vec<GrammarMatch> {
    let mut matches = Vec::new();
    double_space(text, &mut matches);
    repeated_word(text, &mut matches);
    sentence_initial_lowercase(text, &mut matches);
    missing_terminal_punctuation(text, &mut matches);
    matches.sort_by_key(|m| (m.offset, m.length));
    matches
}

fn double_space(text: &str, out: &mut Vec<GrammarMatch>) {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i + 1 < bytes.len() {
        if bytes[i] == b' ' && bytes[i + 1] == b' ' {
            let start = i;
            while i < bytes.len() && bytes[i] == b' ' {
                i += 1;
            }
            out.push(GrammarMatch {
                offset: start,
                length: i - start,
                rule_id: "DOUBLE_SPACE".into(),
                category: "whitespace".into(),
            });
        } else {
            i += 1;
        }
    }
}

fn words_with_offsets(text: &str) -> Vec<(usize, usize, String)> {
    let mut words = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() || c == '\'' {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            words.push((s, i - s, text[s..i].to_lowercase()));
        }
    }
    if let Some(s) = start {
        words.push((s, text.len() - s, text[s..].to_lowercase()));
    }
    words
}

fn repeated_word(text: &str, out: &mut Vec<GrammarMatch>) {
    let words = words_with_offsets(text);
    for pair in words.windows(2) {
        let (_, _, ref a) = pair[0];
        let (off, len, ref b) = pair[1];
        if a == b && !a.chars().all(|c| c.is_ascii_digit()) {
            out.push(GrammarMatch {
                offset: off,
                length: len,
                rule_id: "REPEATED_WORD".into(),
                category: "duplication".into(),
            });
        }
    }
}

fn sentence_initial_lowercase(text: &str, out: &mut Vec<GrammarMatch>) {
    let mut at_sentence_start = true;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            continue;
        }
        if at_sentence_start && c.is_alphabetic() {
            if c.is_lowercase() {
                out.push(GrammarMatch {
                    offset: i,
                    length: c.len_utf8(),
                    rule_id: "SENTENCE_INITIAL_LOWERCASE".into(),
                    category: "casing".into(),
                });
            }
            at_sentence_start = false;
        } else if matches!(c, '.' | '!' | '?') {
            at_sentence_start = true;
        } else {
            at_sentence_start = false;
        }
    }
}

fn missing_terminal_punctuation(text: &str, out: &mut Vec<GrammarMatch>) {
    let trimmed = text.trim_end();
    if trimmed.is_empty() {
        return;
    }
    let last = trimmed.chars().last().unwrap();
    if last.is_alphanumeric() {
        let offset = trimmed.len() - last.len_utf8();
        out.push(GrammarMatch {
            offset,
            length: last.len_utf8(),
            rule_id: "MISSING_TERMINAL_PUNCT".into(),
            category: "punctuation".into(),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule_ids(text: &str) -> Vec<String> {
        fallback_grammar_check(text)
            .iter()
            .map(|m| m.rule_id.clone())
            .collect()
    }

    #[test]
    fn clean_text_no_matches() {
        assert!(fallback_grammar_check("This is fine.").is_empty());
        assert!(fallback_grammar_check("").is_empty());
    }

    #[test]
    fn each_rule_fires() {
        assert!(rule_ids("A  b.").contains(&"DOUBLE_SPACE".to_string()));
        assert!(rule_ids("The the cat.").contains(&"REPEATED_WORD".to_string()));
        assert!(rule_ids("hello there.").contains(&"SENTENCE_INITIAL_LOWERCASE".to_string()));
        assert!(rule_ids("No period here").contains(&"MISSING_TERMINAL_PUNCT".to_string()));
    }

    #[test]
    fn spans_within_text() {
        for text in ["a  b", "word word", "x. y. zz", "tail"] {
            for m in fallback_grammar_check(text) {
                assert!(m.offset + m.length <= text.len());
            }
        }
    }

    #[test]
    fn deterministic() {
        let t = "the the  dog ran";
        assert_eq!(fallback_grammar_check(t), fallback_grammar_check(t));
    }
}
