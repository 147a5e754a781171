//! Prompt templates. Placeholders use `{{name}}`; single braces in the
//! bodies are literal (they describe the JSON the model must return).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Summarize,
    ClassifyPower,
    ClassifyRelevance,
    IdentifyJargon,
    IdentifyVague,
    Define,
    Scenario,
    Ask,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::Summarize,
        TemplateId::ClassifyPower,
        TemplateId::ClassifyRelevance,
        TemplateId::IdentifyJargon,
        TemplateId::IdentifyVague,
        TemplateId::Define,
        TemplateId::Scenario,
        TemplateId::Ask,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Summarize => "summarize",
            TemplateId::ClassifyPower => "classify_power",
            TemplateId::ClassifyRelevance => "classify_relevance",
            TemplateId::IdentifyJargon => "identify_jargon",
            TemplateId::IdentifyVague => "identify_vague",
            TemplateId::Define => "define",
            TemplateId::Scenario => "scenario",
            TemplateId::Ask => "ask",
        }
    }

    /// Classification and extraction prompts must be reproducible.
    pub fn is_deterministic(self) -> bool {
        self != TemplateId::Scenario
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown template `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub version: &'static str,
    pub body: &'static str,
}

impl PromptTemplate {
    pub fn placeholders(&self) -> Vec<&'static str> {
        placeholders(self.body)
    }
}

pub fn template(id: TemplateId) -> &'static PromptTemplate {
    match id {
        TemplateId::Summarize => &SUMMARIZE,
        TemplateId::ClassifyPower => &CLASSIFY_POWER,
        TemplateId::ClassifyRelevance => &CLASSIFY_RELEVANCE,
        TemplateId::IdentifyJargon => &IDENTIFY_JARGON,
        TemplateId::IdentifyVague => &IDENTIFY_VAGUE,
        TemplateId::Define => &DEFINE,
        TemplateId::Scenario => &SCENARIO,
        TemplateId::Ask => &ASK,
    }
}

/// Template id -> version, recorded as bundle provenance.
pub fn template_versions() -> BTreeMap<String, String> {
    TemplateId::ALL
        .iter()
        .map(|&id| (id.as_str().to_string(), template(id).version.to_string()))
        .collect()
}

/// Names of `{{name}}` placeholders in order of first appearance.
pub fn placeholders(body: &str) -> Vec<&str> {
    let mut names = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else { break };
        let name = after[..close].trim();
        if !names.contains(&name) {
            names.push(name);
        }
        rest = &after[close + 2..];
    }
    names
}

/// A template instantiated with its bindings. `attempt` is 1 for the first
/// request and 2 for the single corrective re-prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template_id: TemplateId,
    pub version: String,
    pub bindings: BTreeMap<String, String>,
    pub attempt: u32,
    pub text: String,
}

impl RenderedPrompt {
    pub fn binding(&self, name: &str) -> Option<&str> {
        self.bindings.get(name).map(String::as_str)
    }

    /// The corrective re-prompt: same bindings, a format reminder appended.
    pub fn retry(&self, reminder: &str) -> RenderedPrompt {
        let mut next = self.clone();
        next.attempt += 1;
        next.text = format!("{}\n\n{}", self.text, reminder);
        next.bindings
            .insert("__retry_reminder".to_string(), reminder.to_string());
        next
    }
}

pub fn render_prompt(
    id: TemplateId,
    bindings: &BTreeMap<String, String>,
) -> Result<RenderedPrompt, GatewayError> {
    let tpl = template(id);
    let mut used = BTreeMap::new();
    for name in tpl.placeholders() {
        let value = bindings
            .get(name)
            .ok_or_else(|| GatewayError::MissingBinding {
                template: id,
                name: name.to_string(),
            })?;
        used.insert(name.to_string(), value.clone());
    }

    let mut text = String::with_capacity(tpl.body.len());
    let mut rest = tpl.body;
    while let Some(open) = rest.find("{{") {
        text.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after.find("}}").expect("placeholders are balanced");
        text.push_str(&used[after[..close].trim()]);
        rest = &after[close + 2..];
    }
    text.push_str(rest);

    Ok(RenderedPrompt {
        template_id: id,
        version: tpl.version.to_string(),
        bindings: used,
        attempt: 1,
        text,
    })
}

/// Convenience for building binding maps.
pub fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> BTreeMap<String, String> {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

pub const SUMMARY_EXAMPLE_OUTPUT: &str = "- Plain-language summary of the first idea {exact text of the passage it summarizes}
- Plain-language summary of the next idea {exact text of the next passage, copied without changes}";

pub const DEFINITION_EXAMPLES: &str = r#"Phrase: "information"
Context around the phrase: "We collect information you provide when you register."
Output: {"Definition": "Information refers to registration details such as your name, email address, phone number, and date of birth.", "References": ["ck_0000000000000001"]}"#;

pub const ANSWER_EXAMPLES: &str = r#"Question: "Can I get my money back?"
Phrase: "refund"
Output: {"Answer": "Yes. You can request a refund within three days of delivery if the item does not match its listing.", "References": ["ck_0000000000000002"]}"#;

const SUMMARIZE: PromptTemplate = PromptTemplate {
    id: TemplateId::Summarize,
    version: "1",
    body: r#"Summarize the input section of the Terms of Service into concise bullet points (less than 12 words) in plain language. When adjacent paragraphs or sentences share a similar or related theme, only output 1 single bullet point. For each bullet point summary, include the full-text reference to the original passage in {} and don't use "..." to reduce text in the reference. When outputting a reference, don't change anything in the original text, such as spaces and newlines. There can be multiple sentences or paragraphs that reference a single summary.  The references to summary should cover the original text.

Example output format: {{example_output}}

Input: {{chunk}}"#,
};

const CLASSIFY_POWER: PromptTemplate = PromptTemplate {
    id: TemplateId::ClassifyPower,
    version: "1",
    body: r#"Classify the input term from a Terms of Service agreement based on the power relationship and benefit between the service and the user. Use the following categories (Service, Neutral, User):
- Service: The term grants the service provider disproportionate power or control over the user. It may impose unfair restrictions, obligations, or liabilities on the user, or reduce the user's rights and autonomy over their data or content.
- Neutral: The term outlines standard procedures, responsibilities, or conditions the user and service have. For example, users take responsibility for the content they post. It neither significantly favors the service provider nor the user, and does not substantially impact the user's rights.
- User: The term empowers the user by offering clear protections, rights, or benefits, ensuring transparency, and limiting the service provider's power.

Examples for each category:

Service:
- The service can delete specific content without prior notice and without a reason.
- The service can license user content to third parties.
- The service tracks your personal data for advertising

Neutral:
- Users are responsible for the content they post
- Users agree not to use the service for illegal purposes
- Blocking first-party cookies may limit your ability to use the service

User:
- You can opt out of targeted advertising
- The service does not sell your personal data
- The service will not allow third parties to access your personal information without a legal basis

Output format in JSON:
{"Category": "Service/Neutral/User",
"Explanation": "explanation of output" }

Input: {{snippet}}"#,
};

const CLASSIFY_RELEVANCE: PromptTemplate = PromptTemplate {
    id: TemplateId::ClassifyRelevance,
    version: "1",
    body: r#"For the input term from a Terms of Service, output a relevance rating (High/Low) of the input term with respect to the user persona.
[High]: The term is directly relevant to the user's usage of the service or what the user cares about. The term applies to the user persona and is necessary for the user to know.
[Low]: The term is not relevant to the user's usage of the service or what the user cares about. The term doesn't apply to the user persona or is not necessary for the user to know.

User Persona: {{persona}}

Output format in JSON: {"Relevance": "Low/High", "Explanation": "explanation of output" }

Input: {{snippet}}"#,
};

const IDENTIFY_JARGON: PromptTemplate = PromptTemplate {
    id: TemplateId::IdentifyJargon,
    version: "1",
    body: r#"You are a helpful assistant who extracts words or multi-word phrases in the input section of Terms of Service that a high schooler might not know the meaning of. Jargon refers to domain-specific terminologies that a lay user might not know about.

Example jargon:
- legal jargon: indemnity, arbitration, liability
- copyright licenses: sublicensable licenses, royalty-free licenses
- technical privacy terms: cookies, Ad identifiers, Authentication tokens

Return an empty array if the section does not contain jargon. The extracted word should exactly match the original input text with the same capitalization and sequence of words.

Output format in JSON: {"Jargon": []}

Input: {{chunk}}"#,
};

const IDENTIFY_VAGUE: PromptTemplate = PromptTemplate {
    id: TemplateId::IdentifyVague,
    version: "1",
    body: r#"You are a helpful legal assistant who extracts vague terms (can have multiple words in one term) in the input section of Terms of Service. A vague term refers to information that is vaguely abstracted without a clear definition provided in the section.

Example Vague terms: information, other, some, third parties, most, generally, personal data,  others, general, many, various, might, services, certain information

Return an empty array if the section does not contain vague terms. The extracted word should exactly match the original input text with the same capitalization and sequence of words.

Output format in JSON: {"Vague": []}

Input: {{chunk}}"#,
};

const DEFINE: PromptTemplate = PromptTemplate {
    id: TemplateId::Define,
    version: "1",
    body: r#"Use information in the retrieved context to provide a definition of the user-selected phrase or term. Avoid using long sentences. For example, if the user-selected term is "information", define what the term "information" includes and refers to, such as: location data, interaction data, profile data, etc. The output definition should be specific and straight to the point; don't include language that doesn't contribute to the definition, such as 'in the given context'. Output the string list of reference ids (["ref1", ...]) used to generate the definition under "References". If the definition of the phrase is not specified in the retrieved context, output a definition of what the phrase might mean and output an empty array for "References".

Examples: {{examples}}

Output format in JSON: {"Definition": "", "References": ["ref1", "ref2", "ref3"]}

Retrieved Context: {{retrieved_context}}

Question: What does {{phrase}} refer to?
Context around the user-selected phrase: {{context}}"#,
};

const SCENARIO: PromptTemplate = PromptTemplate {
    id: TemplateId::Scenario,
    version: "1",
    body: r#"Tell a concise what-if scenario or example in less than 50 words to demonstrate the meaning and potential implications of the user-selected phrase based on the context around the user-selected phrase. The scenario/example should be relevant to the below user persona using {{platform}}.

User Persona: {{persona}}

Output format in JSON: {"Story": ""}

User selected phrase: {{phrase}}
Context around the user-selected phrase: {{context}}
Definition of user selected phrase: {{definition}}"#,
};

const ASK: PromptTemplate = PromptTemplate {
    id: TemplateId::Ask,
    version: "1",
    body: r#"You are an assistant for question-answering tasks. Use information in the retrieved context to answer the user's question in less than 5 sentences. Output the string list of reference ids (["ref1", ...]) used to generate the definition under "References". If the definition of the phrase is not specified in the retrieved context, output a definition of what the phrase might mean and output an empty array for "References".

Examples: {{examples}}

Output format in JSON: {"Answer": "", "References": ["ref1", "ref2", "ref3"]}

Retrieved Context: {{retrieved_context}}

Question: {{question}}
User selected phrase: {{phrase}}
Context around the user-selected phrase: {{context}}"#,
};
