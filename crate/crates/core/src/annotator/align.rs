//! Anchoring model-echoed reference text back onto the chunk.
//!
//! Three stages, first hit wins: exact substring, whitespace-collapsed
//! substring, then longest common substring accepted at 90% of the
//! reference length.

use serde::{Deserialize, Serialize};

use super::AnnotatorError;
use crate::corpus::Span;

pub const LCS_ACCEPT_RATIO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignStage {
    Exact,
    Whitespace,
    Fuzzy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub span: Span,
    pub stage: AlignStage,
}

/// Whitespace-collapsed view of a string with a map back to the original.
struct Collapsed {
    text: String,
    /// Per collapsed char: (byte offset in `text`, original start, original end).
    map: Vec<(usize, usize, usize)>,
}

impl Collapsed {
    fn new(s: &str) -> Self {
        let mut text = String::with_capacity(s.len());
        let mut map: Vec<(usize, usize, usize)> = Vec::new();
        let mut in_space = false;
        for (i, c) in s.char_indices() {
            let end = i + c.len_utf8();
            if c.is_whitespace() {
                if in_space {
                    map.last_mut().expect("run has a head").2 = end;
                    continue;
                }
                in_space = true;
                map.push((text.len(), i, end));
                text.push(' ');
            } else {
                in_space = false;
                map.push((text.len(), i, end));
                text.push(c);
            }
        }
        Self { text, map }
    }

    fn char_index(&self, byte: usize) -> usize {
        self.map
            .binary_search_by_key(&byte, |m| m.0)
            .expect("offset on a char boundary")
    }

    /// Original byte span for collapsed chars `[a, b)`.
    fn original(&self, a: usize, b: usize) -> Span {
        Span::new(self.map[a].1, self.map[b - 1].2)
    }
}

fn collapse_ref(reference: &str) -> String {
    reference.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Leftmost occurrence at or after `min_start`, else leftmost overall.
fn find_preferring(hay: &str, needle: &str, min_start: usize) -> Option<usize> {
    let mut first = None;
    for (i, _) in hay.match_indices(needle) {
        if i >= min_start {
            return Some(i);
        }
        first.get_or_insert(i);
    }
    first
}

pub fn align_reference(chunk: &str, reference: &str) -> Result<Alignment, AnnotatorError> {
    align_reference_from(chunk, reference, 0)
}

/// As [`align_reference`], but an exact or collapsed match starting at or
/// after `min_start` is preferred to an earlier one. Annotation passes the
/// end of the previous snippet so repeated sentences anchor in order.
pub fn align_reference_from(
    chunk: &str,
    reference: &str,
    min_start: usize,
) -> Result<Alignment, AnnotatorError> {
    if reference.trim().is_empty() {
        return Err(AnnotatorError::EmptyInput("reference"));
    }
    if let Some(i) = find_preferring(chunk, reference, min_start) {
        return Ok(Alignment {
            span: Span::new(i, i + reference.len()),
            stage: AlignStage::Exact,
        });
    }

    let hay = Collapsed::new(chunk);
    let needle = collapse_ref(reference);
    let min_collapsed = hay.map.iter().position(|m| m.1 >= min_start).map_or(hay.text.len(), |p| hay.map[p].0);
    if let Some(b) = find_preferring(&hay.text, &needle, min_collapsed) {
        let a = hay.char_index(b);
        let n = needle.chars().count();
        return Ok(Alignment {
            span: hay.original(a, a + n),
            stage: AlignStage::Whitespace,
        });
    }

    let hay_chars: Vec<char> = hay.text.chars().collect();
    let ref_chars: Vec<char> = needle.chars().collect();
    let (len, hay_end, ref_end) = longest_common_substring(&hay_chars, &ref_chars);
    if (len as f64) < LCS_ACCEPT_RATIO * ref_chars.len() as f64 || len == 0 {
        return Err(AnnotatorError::AlignmentFailed {
            matched: len,
            needed: ref_chars.len(),
        });
    }
    // Widen by the reference's unmatched head and tail.
    let head = ref_end - len;
    let tail = ref_chars.len() - ref_end;
    let mut a = (hay_end - len).saturating_sub(head);
    let mut b = (hay_end + tail).min(hay_chars.len());
    while a < b && hay_chars[a] == ' ' {
        a += 1;
    }
    while b > a && hay_chars[b - 1] == ' ' {
        b -= 1;
    }
    Ok(Alignment {
        span: hay.original(a, b),
        stage: AlignStage::Fuzzy,
    })
}

/// Returns (length, end in `a`, end in `b`) of the leftmost longest common
/// substring. Rolling-row dynamic programming, O(|a|·|b|) time.
pub fn longest_common_substring(a: &[char], b: &[char]) -> (usize, usize, usize) {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = (0, 0, 0);
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            cur[j] = if a[i - 1] == b[j - 1] { prev[j - 1] + 1 } else { 0 };
            if cur[j] > best.0 {
                best = (cur[j], i, j);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_lcs(a: &[char], b: &[char]) -> usize {
        let mut best = 0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                let mut k = 0;
                while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                    k += 1;
                }
                best = best.max(k);
            }
        }
        best
    }

    #[test]
    fn exact_match() {
        let a = align_reference("Alpha. Beta. Gamma.", "Beta.").unwrap();
        assert_eq!((a.span, a.stage), (Span::new(7, 12), AlignStage::Exact));
    }

    #[test]
    fn whitespace_collapsed_match() {
        let chunk = "Alpha. Beta. Gamma.";
        let a = align_reference(chunk, "Beta.\n").unwrap();
        assert_eq!(a.span, Span::new(7, 12));
        assert_eq!(a.stage, AlignStage::Whitespace);
        let chunk = "One  two\n\nthree four";
        let a = align_reference(chunk, "two three").unwrap();
        assert_eq!(a.span.slice(chunk), "two\n\nthree");
    }

    #[test]
    fn repeated_sentences_prefer_after_min_start() {
        let chunk = "Fees apply. Refunds vary. Fees apply.";
        assert_eq!(align_reference(chunk, "Fees apply.").unwrap().span.start, 0);
        assert_eq!(align_reference_from(chunk, "Fees apply.", 11).unwrap().span.start, 26);
        assert_eq!(align_reference_from(chunk, "Refunds vary.", 30).unwrap().span.start, 12);
    }

    #[test]
    fn fuzzy_match_recovers_small_edits() {
        let chunk = "You grant us a worldwide, royalty-free license to use your content.";
        let a = align_reference(chunk, "You grant us a worldwide, royalty-free license to use your contnt.").unwrap();
        assert_eq!(a.stage, AlignStage::Fuzzy);
        assert_eq!(a.span.slice(chunk), &chunk[..chunk.len() - 1]);
        // One edit in the middle halves the common run: rejected.
        assert!(align_reference(chunk, "You grant us a worldwide, royalty free license to use your content.").is_err());
    }

    #[test]
    fn half_shared_reference_fails() {
        let chunk = "abcdefghijklmnopqrst";
        let reference = "abcdefghij0123456789";
        let hay: Vec<char> = chunk.chars().collect();
        let r: Vec<char> = reference.chars().collect();
        assert_eq!(brute_lcs(&hay, &r), 10);
        assert!(matches!(
            align_reference(chunk, reference),
            Err(AnnotatorError::AlignmentFailed { matched: 10, needed: 20 })
        ));
    }

    #[test]
    fn multibyte_offsets_stay_on_boundaries() {
        let chunk = "Prix : 10 €.  Café   inclus.";
        let a = align_reference(chunk, "Café inclus.").unwrap();
        assert_eq!(a.span.slice(chunk), "Café   inclus.");
    }

    proptest! {
        #[test]
        fn lcs_matches_brute_force(a in "[ab ]{0,24}", b in "[ab ]{0,24}") {
            let a: Vec<char> = a.chars().collect();
            let b: Vec<char> = b.chars().collect();
            let (len, ea, eb) = longest_common_substring(&a, &b);
            prop_assert_eq!(len, brute_lcs(&a, &b));
            prop_assert_eq!(&a[ea - len..ea], &b[eb - len..eb]);
        }
    }
}
