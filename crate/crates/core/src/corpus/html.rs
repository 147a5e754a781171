//! Minimal HTML linearizer: block elements become paragraphs, `h1`–`h4`
//! become heading marks, inline markup is dropped, entities are decoded.
//!
//! Unlike a browser parser it refuses input it cannot make sense of
//! (unterminated tags or comments, unclosed headings), which is what lets
//! ingest report malformed sources instead of silently guessing.

use super::TextBuilder;

const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "body", "br", "caption", "dd", "details", "div",
    "dl", "dt", "fieldset", "figcaption", "figure", "footer", "form", "h5", "h6", "header", "hr",
    "html", "li", "main", "nav", "ol", "p", "section", "summary", "table", "tbody", "tfoot",
    "thead", "tr", "ul",
];

const SKIPPED_TAGS: &[&str] = &["head", "script", "style", "noscript", "template", "title"];

pub(super) fn normalize(raw: &str) -> Result<TextBuilder, String> {
    let mut out = TextBuilder::default();
    let mut rest = raw;
    let mut open_heading: Option<u8> = None;

    while !rest.is_empty() {
        let Some(lt) = rest.find('<') else {
            out.push_text(&decode_entities(rest));
            break;
        };
        if lt > 0 {
            out.push_text(&decode_entities(&rest[..lt]));
        }
        rest = &rest[lt..];

        if let Some(after) = rest.strip_prefix("<!--") {
            let end = after
                .find("-->")
                .ok_or_else(|| "unterminated comment".to_string())?;
            rest = &after[end + 3..];
            continue;
        }
        if rest.starts_with("<!") || rest.starts_with("<?") {
            let end = rest
                .find('>')
                .ok_or_else(|| "unterminated declaration".to_string())?;
            rest = &rest[end + 1..];
            continue;
        }

        let closing = rest.starts_with("</");
        let name_start = if closing { 2 } else { 1 };
        let starts_tag = rest[name_start..]
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic());
        if !starts_tag {
            // a bare `<` in running text
            out.push_text("<");
            rest = &rest[1..];
            continue;
        }
        let end = find_tag_end(rest).ok_or_else(|| {
            let preview: String = rest.chars().take(24).collect();
            format!("unterminated tag near `{preview}`")
        })?;
        let inner = &rest[name_start..end];
        rest = &rest[end + 1..];

        let name_len = inner
            .find(|c: char| c.is_whitespace() || c == '/' || c == '>')
            .unwrap_or(inner.len());
        let name = inner[..name_len].to_ascii_lowercase();
        let attrs = &inner[name_len..];
        let self_closing = attrs.trim_end().ends_with('/');

        if !closing && SKIPPED_TAGS.contains(&name.as_str()) && !self_closing {
            let close = format!("</{name}");
            let idx = find_ascii_case_insensitive(rest, &close)
                .ok_or_else(|| format!("unclosed <{name}> element"))?;
            let after = &rest[idx..];
            let gt = after
                .find('>')
                .ok_or_else(|| format!("unterminated </{name}> tag"))?;
            rest = &after[gt + 1..];
            continue;
        }

        if let Some(level) = heading_level(&name) {
            if closing {
                match open_heading {
                    Some(open) if open == level => {
                        out.close_heading();
                        open_heading = None;
                    }
                    Some(open) => {
                        return Err(format!("</h{level}> closes an open <h{open}>"));
                    }
                    None => return Err(format!("stray </h{level}>")),
                }
            } else {
                if let Some(open) = open_heading {
                    return Err(format!("<h{level}> opened inside <h{open}>"));
                }
                out.open_heading(level);
                open_heading = Some(level);
            }
            continue;
        }

        match name.as_str() {
            "a" if !closing => {
                if let Some(href) = attribute(attrs, "href") {
                    out.open_link(&decode_entities(&href));
                }
            }
            "a" => out.close_link(),
            "pre" => {
                out.break_paragraph();
                out.set_preformatted(!closing);
            }
            "td" | "th" => out.push_text(" "),
            n if BLOCK_TAGS.contains(&n) => out.break_paragraph(),
            _ => {}
        }
    }

    if let Some(level) = open_heading {
        return Err(format!("unclosed <h{level}>"));
    }
    Ok(out)
}

fn heading_level(name: &str) -> Option<u8> {
    match name {
        "h1" => Some(1),
        "h2" => Some(2),
        "h3" => Some(3),
        "h4" => Some(4),
        _ => None,
    }
}

/// Index of the `>` that ends the tag starting at `s[0] == '<'`, honoring quotes.
fn find_tag_end(s: &str) -> Option<usize> {
    let mut quote: Option<char> = None;
    for (i, c) in s.char_indices().skip(1) {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '"' || c == '\'' => quote = Some(c),
            None if c == '>' => return Some(i),
            None if c == '<' => return None,
            None => {}
        }
    }
    None
}

fn find_ascii_case_insensitive(haystack: &str, needle: &str) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.len() > h.len() {
        return None;
    }
    (0..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

fn attribute(attrs: &str, wanted: &str) -> Option<String> {
    let mut rest = attrs;
    loop {
        rest = rest.trim_start_matches(|c: char| c.is_whitespace() || c == '/');
        if rest.is_empty() {
            return None;
        }
        let name_end = rest
            .find(|c: char| c.is_whitespace() || c == '=' || c == '/')
            .unwrap_or(rest.len());
        let name = &rest[..name_end];
        rest = rest[name_end..].trim_start();
        let value = if let Some(after_eq) = rest.strip_prefix('=') {
            let after_eq = after_eq.trim_start();
            match after_eq.chars().next() {
                Some(q @ ('"' | '\'')) => {
                    let body = &after_eq[1..];
                    let close = body.find(q).unwrap_or(body.len());
                    rest = body.get(close + 1..).unwrap_or("");
                    body[..close].to_string()
                }
                _ => {
                    let end = after_eq
                        .find(char::is_whitespace)
                        .unwrap_or(after_eq.len());
                    rest = &after_eq[end..];
                    after_eq[..end].to_string()
                }
            }
        } else {
            String::new()
        };
        if name.eq_ignore_ascii_case(wanted) {
            return Some(value);
        }
    }
}

pub(super) fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let semi = rest[1..]
            .find(';')
            .map(|i| i + 1)
            .filter(|&i| i <= 12);
        let decoded = semi.and_then(|i| decode_entity(&rest[1..i]).map(|c| (c, i)));
        match decoded {
            Some((c, i)) => {
                out.push(c);
                rest = &rest[i + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_entity(name: &str) -> Option<char> {
    if let Some(num) = name.strip_prefix('#') {
        let code = if let Some(hex) = num.strip_prefix(['x', 'X']) {
            u32::from_str_radix(hex, 16).ok()?
        } else {
            num.parse().ok()?
        };
        return char::from_u32(code);
    }
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        "ndash" => '\u{2013}',
        "mdash" => '\u{2014}',
        "lsquo" => '\u{2018}',
        "rsquo" => '\u{2019}',
        "ldquo" => '\u{201C}',
        "rdquo" => '\u{201D}',
        "hellip" => '\u{2026}',
        "copy" => '\u{00A9}',
        "reg" => '\u{00AE}',
        "trade" => '\u{2122}',
        "sect" => '\u{00A7}',
        "bull" => '\u{2022}',
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(raw: &str) -> Result<crate::corpus::NormalizedPolicy, String> {
        normalize(raw).map(|b| b.finish("p"))
    }

    #[test]
    fn list_items_and_breaks_are_paragraphs() {
        let np = norm("<ul><li>one</li><li>two <b>bold</b></li></ul>line<br>next").unwrap();
        assert_eq!(np.text, "one\ntwo bold\nline\nnext");
    }

    #[test]
    fn whitespace_is_collapsed_inside_paragraphs() {
        let np = norm("<p>  a\n   b\t c  </p>").unwrap();
        assert_eq!(np.text, "a b c");
    }

    #[test]
    fn entities_are_decoded() {
        let np = norm("<p>Terms &amp; Conditions &#8212; &lt;v2&gt; &bogus;</p>").unwrap();
        assert_eq!(np.text, "Terms & Conditions \u{2014} <v2> &bogus;");
    }

    #[test]
    fn head_script_and_comments_are_skipped() {
        let np = norm(
            "<html><head><title>T</title><style>p{}</style></head><body><!-- x --><p>a</p>\
             <script>var x = '<p>';</script></body></html>",
        )
        .unwrap();
        assert_eq!(np.text, "a");
    }

    #[test]
    fn headings_nest_and_h5_is_body() {
        let np = norm("<h1>A</h1><p>x</p><h3>C</h3><h5>small</h5><p>y</p>").unwrap();
        assert_eq!(np.text, "x\nsmall\ny");
        let levels: Vec<_> = np.headings.iter().map(|h| (h.level, h.offset)).collect();
        assert_eq!(levels, vec![(1, 0), (3, 2)]);
    }

    #[test]
    fn table_rows_become_paragraphs() {
        let np = norm("<table><tr><th>Fee</th><th>Rate</th></tr><tr><td>Sale</td><td>20%</td></tr></table>")
            .unwrap();
        assert_eq!(np.text, "Fee Rate\nSale 20%");
    }

    #[test]
    fn malformed_markup_is_rejected() {
        assert!(norm("<p>ok</p><div class=\"x\"").is_err());
        assert!(norm("<!-- never closed").is_err());
        assert!(norm("<h2>open heading<p>x</p>").is_err());
        assert!(norm("<h2>a</h3>").is_err());
        assert!(norm("<script>no end").is_err());
    }

    #[test]
    fn bare_less_than_is_text() {
        let np = norm("<p>a < b and 3<4</p>").unwrap();
        assert_eq!(np.text, "a < b and 3<4");
    }

    #[test]
    fn preformatted_lines_are_kept() {
        let np = norm("<pre>line  one\nline two</pre><p>after</p>").unwrap();
        assert_eq!(np.text, "line  one\nline two\nafter");
    }

    #[test]
    fn attribute_parsing_handles_quotes() {
        assert_eq!(
            attribute(" class='x y' href=\"a b.html\"", "href").as_deref(),
            Some("a b.html")
        );
        assert_eq!(attribute(" href=plain.html", "href").as_deref(), Some("plain.html"));
        assert_eq!(attribute(" hidden", "href"), None);
    }
}
