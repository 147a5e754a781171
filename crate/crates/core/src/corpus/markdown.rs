use pulldown_cmark::{Event, HeadingLevel, Options, Parser, Tag, TagEnd};

use super::TextBuilder;

pub(super) fn normalize(raw: &str) -> TextBuilder {
    let mut out = TextBuilder::default();
    let parser = Parser::new_ext(raw, Options::ENABLE_TABLES | Options::ENABLE_STRIKETHROUGH);
    for event in parser {
        match event {
            Event::Start(Tag::Heading { level, .. }) => match heading_level(level) {
                Some(l) => out.open_heading(l),
                None => out.break_paragraph(),
            },
            Event::End(TagEnd::Heading(level)) => {
                if heading_level(level).is_some() {
                    out.close_heading();
                } else {
                    out.break_paragraph();
                }
            }
            Event::Start(Tag::Link { dest_url, .. }) => out.open_link(&dest_url),
            Event::End(TagEnd::Link) => out.close_link(),
            Event::Start(Tag::CodeBlock(_)) => {
                out.break_paragraph();
                out.set_preformatted(true);
            }
            Event::End(TagEnd::CodeBlock) => {
                out.break_paragraph();
                out.set_preformatted(false);
            }
            Event::Start(
                Tag::Paragraph | Tag::Item | Tag::BlockQuote(_) | Tag::TableRow | Tag::TableHead,
            )
            | Event::End(
                TagEnd::Paragraph
                | TagEnd::Item
                | TagEnd::BlockQuote(_)
                | TagEnd::TableRow
                | TagEnd::TableHead,
            )
            | Event::HardBreak
            | Event::Rule => out.break_paragraph(),
            Event::Start(Tag::TableCell) | Event::SoftBreak => out.push_text(" "),
            Event::Text(t) | Event::Code(t) => out.push_text(&t),
            // raw html: a <br> ends the paragraph, anything else is dropped
            Event::Html(h) | Event::InlineHtml(h) if h.trim_start().starts_with("<br") && !out.in_heading() => {
                out.break_paragraph()
            }
            _ => {}
        }
    }
    out
}

fn heading_level(level: HeadingLevel) -> Option<u8> {
    match level {
        HeadingLevel::H1 => Some(1),
        HeadingLevel::H2 => Some(2),
        HeadingLevel::H3 => Some(3),
        HeadingLevel::H4 => Some(4),
        _ => None,
    }
}
