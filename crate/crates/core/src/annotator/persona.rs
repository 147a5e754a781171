use serde::{Deserialize, Serialize};

fn default_platform() -> String {
    "online".to_string()
}

/// A reader profile. `rendered_text` is always derived from the other
/// fields; any value present in a loaded file is replaced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub persona_id: String,
    #[serde(default)]
    pub title: String,
    /// Platform category, e.g. "E-commerce".
    #[serde(default = "default_platform")]
    pub platform: String,
    pub usage: Vec<String>,
    pub values: Vec<String>,
    #[serde(default)]
    pub rendered_text: String,
}

impl Persona {
    pub fn new(
        persona_id: impl Into<String>,
        platform: impl Into<String>,
        usage: Vec<String>,
        values: Vec<String>,
    ) -> Self {
        let mut p = Persona {
            persona_id: persona_id.into(),
            title: String::new(),
            platform: platform.into(),
            usage,
            values,
            rendered_text: String::new(),
        };
        p.rendered_text = p.render();
        p
    }

    pub fn from_json(raw: &str) -> Result<Self, serde_json::Error> {
        let mut p: Persona = serde_json::from_str(raw)?;
        p.rendered_text = p.render();
        Ok(p)
    }

    pub fn has_content(&self) -> bool {
        self.usage.iter().chain(&self.values).any(|s| !s.trim().is_empty())
    }

    pub fn render(&self) -> String {
        let list = |items: &[String]| {
            items
                .iter()
                .filter(|s| !s.trim().is_empty())
                .map(|s| format!("- {}", s.trim()))
                .collect::<Vec<_>>()
                .join("\n")
        };
        format!(
            "Imagine you are a lay user of {lower} platforms. You are over 18 years old and located in the United States.\n\n\
             Your usage of {p} sites:\n{usage}\n\n\
             Things you care about when using {p} sites:\n{values}",
            lower = self.platform.to_lowercase(),
            p = self.platform,
            usage = list(&self.usage),
            values = list(&self.values),
        )
    }
}
