//! Parsing of the bullet + `{reference}` summary format.

use super::AnnotatorError;

pub const MAX_SUMMARY_WORDS: usize = 12;

pub const FORMAT_REMINDER: &str = "Your previous answer did not follow the required format. Output only bullet points, each a summary followed by the exact original text it summarizes inside {}.";
pub const LENGTH_REMINDER: &str = "Some summaries were longer than 12 words. Rewrite every bullet so its summary has at most 12 words, keeping each {} reference unchanged.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryPair {
    pub summary_text: String,
    pub reference_text: String,
}

pub fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

pub fn truncate_words(s: &str, n: usize) -> String {
    s.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

fn strip_bullet(s: &str) -> &str {
    let s = s.trim();
    for marker in ["- ", "* ", "• ", "-", "*", "•"] {
        if let Some(rest) = s.strip_prefix(marker) {
            return rest.trim_start();
        }
    }
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        if let Some(rest) = s[digits..].strip_prefix(['.', ')']) {
            return rest.trim_start();
        }
    }
    s
}

/// The reference closes at the first `}` followed by end of line or input.
fn closing_brace(text: &str, from: usize) -> Option<usize> {
    text[from..].match_indices('}').map(|(i, _)| from + i).find(|&j| {
        let rest = text[j + 1..].trim_start_matches([' ', '\t', '\r']);
        rest.is_empty() || rest.starts_with('\n')
    })
}

pub fn parse_summary_completion(raw: &str) -> Result<Vec<SummaryPair>, AnnotatorError> {
    if raw.trim().is_empty() {
        return Err(AnnotatorError::EmptyResult);
    }
    let unparseable = |reason: &str| AnnotatorError::UnparseableCompletion(reason.to_string());
    let mut pairs = Vec::new();
    let mut pos = 0;
    while let Some(rel) = raw[pos..].find('{') {
        let open = pos + rel;
        let close = closing_brace(raw, open + 1).ok_or_else(|| unparseable("unterminated reference"))?;
        let summary = strip_bullet(&raw[pos..open]).trim().trim_end_matches(':').trim();
        let reference = &raw[open + 1..close];
        if summary.is_empty() {
            return Err(unparseable("bullet without a summary"));
        }
        if !reference.trim().is_empty() {
            pairs.push(SummaryPair {
                summary_text: summary.to_string(),
                reference_text: reference.to_string(),
            });
        }
        pos = close + 1;
    }
    if pairs.is_empty() {
        return Err(if raw[pos..].trim().is_empty() {
            AnnotatorError::EmptyResult
        } else {
            unparseable("no {reference} found")
        });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_bullets_with_multiline_references() {
        let raw = "- You keep ownership {You own your content.}\n* We can use it {We may use it.\nWorldwide.}\n";
        let pairs = parse_summary_completion(raw).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].summary_text, "You keep ownership");
        assert_eq!(pairs[1].reference_text, "We may use it.\nWorldwide.");
    }

    #[test]
    fn braces_inside_a_reference_do_not_end_it() {
        let pairs = parse_summary_completion("1. Fees {Pay {x} now.}").unwrap();
        assert_eq!(pairs[0].reference_text, "Pay {x} now.");
    }

    #[test]
    fn format_violations() {
        assert!(matches!(
            parse_summary_completion("- no braces at all"),
            Err(AnnotatorError::UnparseableCompletion(_))
        ));
        assert!(matches!(
            parse_summary_completion("- open {never closed"),
            Err(AnnotatorError::UnparseableCompletion(_))
        ));
        assert!(matches!(parse_summary_completion("  \n"), Err(AnnotatorError::EmptyResult)));
    }

    #[test]
    fn word_helpers() {
        let s = "one two  three\nfour";
        assert_eq!(word_count(s), 4);
        assert_eq!(truncate_words(s, 3), "one two three");
    }
}
