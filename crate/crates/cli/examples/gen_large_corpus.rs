//! Writes the seeded synthetic corpus under `fixtures/large`: two contracts,
//! 21 policies, mixed Markdown and HTML, with cross-links, non-ASCII text and
//! one paragraph longer than the chunk cap.
//!
//! `cargo run -p tosread-cli --example gen_large_corpus`

use std::fmt::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const SUBJECTS: &[&str] = &[
    "We", "The service", "You", "Our partners", "Sellers", "Buyers", "Each account holder",
    "The company", "Authorized affiliates", "Résumé reviewers",
];
const VERBS: &[&str] = &[
    "may collect", "will retain", "can share", "must not upload", "agree to review",
    "are responsible for", "may suspend", "will notify", "can request deletion of",
    "may license", "shall protect", "will not sell",
];
const OBJECTS: &[&str] = &[
    "personal data", "usage statistics", "content you post", "device identifiers",
    "payment details", "account credentials", "public profile information",
    "messages sent through the platform", "location history", "purchase records",
    "cookies and similar technologies", "the user’s café reviews",
];
const TAILS: &[&str] = &[
    "for as long as the account remains active", "without prior notice",
    "in accordance with applicable law", "unless you opt out in your settings",
    "to improve and personalize the service", "when required by a court order",
    "within thirty days of a written request", "at our sole discretion",
    "for advertising and measurement purposes", "subject to the limits described below",
];
const HEADINGS: &[&str] = &[
    "Information We Collect", "How We Use Information", "Sharing", "Retention",
    "Your Rights", "Security", "Payments", "Termination", "Disputes", "Changes to This Policy",
    "Content License", "Prohibited Conduct", "Fees", "Returns", "Children",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {} {} {}.",
        SUBJECTS.choose(rng).unwrap(),
        VERBS.choose(rng).unwrap(),
        OBJECTS.choose(rng).unwrap(),
        TAILS.choose(rng).unwrap()
    )
}

fn paragraph(rng: &mut ChaCha8Rng, min_chars: usize) -> String {
    let mut p = String::new();
    while p.len() < min_chars {
        if !p.is_empty() {
            p.push(' ');
        }
        p.push_str(&sentence(rng));
    }
    p
}

struct PolicyText {
    body: String,
    format: &'static str,
    file: String,
}

fn policy(rng: &mut ChaCha8Rng, contract: &str, index: usize, count: usize, oversized: bool) -> PolicyText {
    let html = index % 3 == 2;
    let sections = rng.random_range(4..=7);
    let next = (index + 1) % count;
    let link_file = format!("policy-{next:02}.{}", if next % 3 == 2 { "html" } else { "md" });
    let mut paragraphs_by_section = Vec::new();
    for s in 0..sections {
        let mut paras: Vec<String> = (0..rng.random_range(2..=5))
            .map(|_| {
                let min = rng.random_range(120..900);
                paragraph(rng, min)
            })
            .collect();
        if oversized && s == 1 {
            paras.push(paragraph(rng, 2400));
        }
        paragraphs_by_section.push((HEADINGS[(index + s) % HEADINGS.len()], paras));
    }
    let title = format!("{contract} policy {index}");
    let mut body = String::new();
    if html {
        let _ = writeln!(body, "<html><body>\n<h1>{title}</h1>");
        let _ = writeln!(body, "<p>See also the <a href=\"{link_file}\">next policy</a>.</p>");
        for (h, paras) in &paragraphs_by_section {
            let _ = writeln!(body, "<h2>{h}</h2>");
            for p in paras {
                let _ = writeln!(body, "<p>{p}</p>");
            }
        }
        body.push_str("</body></html>\n");
    } else {
        let _ = writeln!(body, "# {title}\n\nSee also the [next policy]({link_file}).\n");
        for (h, paras) in &paragraphs_by_section {
            let _ = writeln!(body, "## {h}\n");
            for p in paras {
                let _ = writeln!(body, "{p}\n");
            }
        }
    }
    PolicyText {
        body,
        format: if html { "html" } else { "markdown" },
        file: format!("policy-{index:02}.{}", if html { "html" } else { "md" }),
    }
}

fn write_contract(root: &Path, contract: &str, count: usize, rng: &mut ChaCha8Rng) {
    let dir = root.join(contract);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let mut entries = Vec::new();
    for i in 0..count {
        let p = policy(rng, contract, i, count, i == 3);
        std::fs::write(dir.join(&p.file), &p.body).unwrap();
        entries.push(json!({
            "policy_id": format!("{contract}-p{i:02}"),
            "title": format!("{contract} policy {i}"),
            "format": p.format,
            "path": p.file,
            "order_index": i,
        }));
    }
    let manifest = json!({"contract_id": contract, "title": contract, "policies": entries});
    std::fs::write(dir.join("contract.manifest"), serde_json::to_string_pretty(&manifest).unwrap() + "\n").unwrap();
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/large");
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    write_contract(&root, "alpha", 15, &mut rng);
    write_contract(&root, "beta", 6, &mut rng);
    eprintln!("wrote {}", root.display());
}
