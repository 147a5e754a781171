//! Static HTML report: meters, summary list and original text with
//! highlight bars, colored with the same palette as the service.

use std::fmt::Write;

use tosread_core::annotator::{Power, Relevance};
use tosread_core::bundle::{AnnotationBundle, BundlePolicy};
use tosread_core::meter::Palette;

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

const STYLE: &str = "body{font-family:sans-serif;margin:0 2em}\
.meter{display:flex;height:14px;width:320px;border:1px solid #999}\
.meter div{height:100%}\
.policy{display:grid;grid-template-columns:1fr 2fr;gap:2em;border-top:1px solid #ccc;padding:1em 0}\
.summary li{border-left:6px solid;padding-left:.5em;margin:.3em 0;list-style:none}\
.snippet{border-left:6px solid;padding-left:.5em;margin:.6em 0;white-space:pre-wrap}\
.legend span{display:inline-block;padding:0 .5em;margin-right:.3em}";

fn meter_html(out: &mut String, policy: &BundlePolicy, palette: &Palette) {
    out.push_str("<div class=\"meter\">");
    for b in &policy.meter.buckets {
        if b.fraction > 0.0 {
            let _ = write!(
                out,
                "<div title=\"{} {}: {}\" style=\"width:{:.4}%;background:{}\"></div>",
                b.power,
                b.relevance,
                b.count,
                b.fraction * 100.0,
                palette.hex(b.power, b.relevance)
            );
        }
    }
    out.push_str("</div>");
}

pub fn render(bundle: &AnnotationBundle, palette: &Palette) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{}</title><style>{STYLE}</style></head><body>\n",
        escape(&bundle.title)
    );
    let _ = write!(
        out,
        "<h1>{}</h1>\n<p>persona: {} &middot; model: {} &middot; hash: <code>{}</code></p>\n",
        escape(&bundle.title),
        escape(&bundle.persona.persona_id),
        escape(&bundle.provenance.model_id),
        bundle.content_hash
    );
    out.push_str("<p class=\"legend\">");
    for t in palette.tokens() {
        let _ = write!(out, "<span style=\"background:{}\">{} / {}</span>", t.hex, t.power, t.relevance);
    }
    out.push_str("</p>\n<nav><ul>");
    let mut policies: Vec<&BundlePolicy> = bundle.policies.iter().collect();
    policies.sort_by_key(|p| p.order_index);
    for p in &policies {
        let _ = write!(out, "<li><a href=\"#{}\">{}</a>", escape(&p.policy_id), escape(&p.title));
        meter_html(&mut out, p, palette);
        out.push_str("</li>");
    }
    out.push_str("</ul></nav>\n");

    for p in policies {
        let _ = write!(
            out,
            "<h2 id=\"{}\">{}</h2>\n<section class=\"policy\"><ol class=\"summary\">",
            escape(&p.policy_id),
            escape(&p.title)
        );
        let color = |v: &tosread_core::annotator::SnippetView<'_>| match v.labels {
            Some(l) if !v.snippet.unsummarized => palette.hex(l.power.category, l.relevance.level).to_string(),
            _ => palette.hex(Power::Neutral, Relevance::Low).to_string(),
        };
        for v in p.annotation.snippets().filter(|v| !v.summary.summary_text.is_empty()) {
            let _ = write!(
                out,
                "<li style=\"border-color:{}\"><a href=\"#{}\">{}</a></li>",
                color(&v),
                escape(&v.snippet.snippet_id),
                escape(&v.summary.summary_text)
            );
        }
        out.push_str("</ol><div class=\"text\">");
        for v in p.annotation.snippets() {
            let _ = write!(
                out,
                "<div class=\"snippet\" id=\"{}\" style=\"border-color:{}\">{}</div>",
                escape(&v.snippet.snippet_id),
                color(&v),
                escape(v.snippet.text.trim())
            );
        }
        out.push_str("</div></section>\n");
    }
    out.push_str("</body></html>\n");
    out
}
