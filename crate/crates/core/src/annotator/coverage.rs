//! Turning aligned spans into a gap-free partition of the chunk.

use super::InformationSnippet;
use crate::corpus::{Chunk, Span};

/// Gaps at least this many characters long that contain text become their
/// own unsummarized snippets; shorter gaps are absorbed.
pub const GAP_THRESHOLD_CHARS: usize = 40;

/// One output piece. `source` indexes the input span it came from; gap
/// pieces have none.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Piece {
    pub span: Span,
    pub source: Option<usize>,
}

fn absorbable(gap: &str) -> bool {
    gap.trim().is_empty() || gap.chars().count() < GAP_THRESHOLD_CHARS
}

/// Resolves overlaps (the later span starts where the earlier ends), then
/// absorbs small or blank gaps into the preceding piece (a leading gap into
/// the following one). The result partitions `[0, text.len())`.
pub fn repair_spans(text: &str, spans: &[Span]) -> Vec<Piece> {
    let mut order: Vec<usize> = (0..spans.len()).filter(|&i| !spans[i].is_empty()).collect();
    order.sort_by_key(|&i| (spans[i].start, spans[i].end));

    let mut kept: Vec<Piece> = Vec::new();
    for i in order {
        let s = spans[i];
        let start = kept.last().map_or(s.start, |p| s.start.max(p.span.end));
        if start < s.end {
            kept.push(Piece {
                span: Span::new(start, s.end),
                source: Some(i),
            });
        }
    }

    let mut out: Vec<Piece> = Vec::with_capacity(kept.len() * 2 + 1);
    let mut cursor = 0;
    for piece in kept {
        let gap = &text[cursor..piece.span.start];
        let mut piece = piece;
        if !gap.is_empty() {
            if !absorbable(gap) {
                out.push(Piece {
                    span: Span::new(cursor, piece.span.start),
                    source: None,
                });
            } else if let Some(prev) = out.last_mut() {
                prev.span.end = piece.span.start;
            } else {
                piece.span.start = 0;
            }
        }
        cursor = piece.span.end;
        out.push(piece);
    }
    let tail = &text[cursor..];
    if !tail.is_empty() {
        match out.last_mut() {
            Some(prev) if absorbable(tail) => prev.span.end = text.len(),
            _ => out.push(Piece {
                span: Span::new(cursor, text.len()),
                source: None,
            }),
        }
    }
    out
}

pub fn snippet_id(chunk_id: &str, n: usize) -> String {
    format!("{chunk_id}-s{n}")
}

pub fn repair_coverage(chunk: &Chunk, spans: &[Span]) -> Vec<InformationSnippet> {
    pieces_to_snippets(chunk, &repair_spans(&chunk.text, spans))
}

pub(crate) fn pieces_to_snippets(chunk: &Chunk, pieces: &[Piece]) -> Vec<InformationSnippet> {
    pieces
        .iter()
        .enumerate()
        .map(|(n, p)| InformationSnippet {
            snippet_id: snippet_id(&chunk.chunk_id, n + 1),
            chunk_id: chunk.chunk_id.clone(),
            span: p.span,
            text: p.span.slice(&chunk.text).to_string(),
            oversized_gap: p.source.is_none() && p.span.slice(&chunk.text).chars().count() >= GAP_THRESHOLD_CHARS,
            unsummarized: p.source.is_none(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent check: mark every covered byte, require no double cover
    /// and that every uncovered byte is whitespace.
    fn covers(text: &str, spans: &[Span]) -> bool {
        let mut hits = vec![0u8; text.len()];
        for s in spans {
            for h in &mut hits[s.start..s.end] {
                *h += 1;
            }
        }
        let sorted = spans.windows(2).all(|w| w[0].end <= w[1].start);
        sorted
            && hits.iter().all(|&h| h <= 1)
            && text
                .char_indices()
                .all(|(i, c)| hits[i] == 1 || c.is_whitespace())
    }

    fn spans(p: &[Piece]) -> Vec<(usize, usize)> {
        p.iter().map(|p| (p.span.start, p.span.end)).collect()
    }

    #[test]
    fn exact_cover_is_unchanged() {
        let text = "a".repeat(100);
        let p = repair_spans(&text, &[Span::new(0, 60), Span::new(60, 100)]);
        assert_eq!(spans(&p), vec![(0, 60), (60, 100)]);
    }

    #[test]
    fn overlap_truncates_later_span() {
        let text = "a".repeat(100);
        let p = repair_spans(&text, &[Span::new(0, 50), Span::new(40, 100)]);
        assert_eq!(spans(&p), vec![(0, 50), (50, 100)]);
        assert_eq!(p[1].source, Some(1));
    }

    #[test]
    fn large_gap_becomes_unsummarized() {
        let text = "x".repeat(200);
        let p = repair_spans(&text, &[Span::new(0, 50), Span::new(120, 200)]);
        assert_eq!(spans(&p), vec![(0, 50), (50, 120), (120, 200)]);
        assert_eq!(p[1].source, None);
    }

    #[test]
    fn small_and_leading_gaps_are_absorbed() {
        let text = "y".repeat(100);
        let p = repair_spans(&text, &[Span::new(10, 50), Span::new(60, 90)]);
        assert_eq!(spans(&p), vec![(0, 60), (60, 100)]);
        let blank = format!("{}{}{}", "a".repeat(10), " ".repeat(80), "b".repeat(10));
        let p = repair_spans(&blank, &[Span::new(0, 10), Span::new(90, 100)]);
        assert_eq!(spans(&p), vec![(0, 90), (90, 100)]);
    }

    #[test]
    fn contained_spans_are_dropped_and_no_spans_cover_all() {
        let text = "z".repeat(30);
        let p = repair_spans(&text, &[Span::new(0, 30), Span::new(5, 10)]);
        assert_eq!(spans(&p), vec![(0, 30)]);
        let p = repair_spans(&text, &[]);
        assert_eq!(spans(&p), vec![(0, 30)]);
        assert_eq!(p[0].source, None);
        assert!(repair_spans("", &[]).is_empty());
    }

    proptest! {
        #[test]
        fn repaired_spans_partition_the_text(
            text in "[a-c \n]{0,300}",
            raw in proptest::collection::vec((0usize..320, 0usize..320), 0..8),
        ) {
            let n = text.len();
            let input: Vec<Span> = raw
                .into_iter()
                .map(|(a, b)| { let (a, b) = (a.min(n), b.min(n)); Span::new(a.min(b), a.max(b)) })
                .collect();
            let out: Vec<Span> = repair_spans(&text, &input).into_iter().map(|p| p.span).collect();
            prop_assert!(covers(&text, &out));
            let total: usize = out.iter().map(Span::len).sum();
            prop_assert_eq!(total, n);
        }
    }
}
