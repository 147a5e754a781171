use super::{Chunk, Heading, NormalizedPolicy, Section, Span};

/// Splits a normalized policy at its headings. Text before the first heading
/// becomes a preamble section with an empty heading path. A heading with no
/// body text of its own yields an empty section (`start == end`).
pub fn segment_sections(np: &NormalizedPolicy) -> Vec<Section> {
    let text = &np.text;
    let mut sections = Vec::new();
    let mut push = |heading_path: Vec<Heading>, range: Span| {
        sections.push(Section {
            section_id: format!("{}#s{}", np.policy_id, sections.len()),
            policy_id: np.policy_id.clone(),
            heading_path,
            body_text: range.slice(text).to_string(),
            char_range: range,
        });
    };

    let first_offset = np.headings.first().map_or(text.len(), |h| h.offset);
    if first_offset > 0 {
        let end = if np.headings.is_empty() {
            text.len()
        } else {
            first_offset - 1
        };
        push(Vec::new(), Span::new(0, end));
    }

    let mut path: Vec<Heading> = Vec::new();
    for (i, mark) in np.headings.iter().enumerate() {
        while path.last().is_some_and(|h| h.level >= mark.level) {
            path.pop();
        }
        path.push(Heading {
            level: mark.level,
            text: mark.text.clone(),
        });
        let start = mark.offset.min(text.len());
        let end = match np.headings.get(i + 1) {
            Some(next) if next.offset > start => next.offset - 1,
            Some(_) => start,
            None => text.len(),
        };
        push(path.clone(), Span::new(start, end));
    }
    sections
}

/// Rebuilds the normalized policy text from its chunks, restoring the `\n`
/// separator between consecutive chunks and between non-empty sections.
pub fn reconstruct_policy_text(sections: &[Section], chunks: &[Chunk]) -> String {
    let mut out = String::new();
    let mut first = true;
    for section in sections {
        let mut body = String::new();
        for (i, chunk) in chunks
            .iter()
            .filter(|c| c.section_ref == section.section_id)
            .enumerate()
        {
            if i > 0 {
                body.push('\n');
            }
            body.push_str(&chunk.text);
        }
        if body.is_empty() {
            continue;
        }
        if !first {
            out.push('\n');
        }
        out.push_str(&body);
        first = false;
    }
    out
}
