//! Per-policy power meters and the color tokens used to display labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotator::{PolicyAnnotation, Power, Relevance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Count,
    CharLength,
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "count" => Ok(Weighting::Count),
            "char_length" => Ok(Weighting::CharLength),
            other => Err(format!("unknown weighting `{other}` (expected count or char_length)")),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Count => "count",
            Weighting::CharLength => "char_length",
        })
    }
}

/// Serialization and display order of the six buckets.
pub const BUCKET_ORDER: [(Power, Relevance); 6] = [
    (Power::Service, Relevance::High),
    (Power::Service, Relevance::Low),
    (Power::Neutral, Relevance::High),
    (Power::Neutral, Relevance::Low),
    (Power::User, Relevance::High),
    (Power::User, Relevance::Low),
];

pub fn token_for(power: Power, relevance: Relevance) -> String {
    format!("{}-{}", power.as_str().to_lowercase(), relevance.as_str().to_lowercase())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorToken {
    pub power: Power,
    pub relevance: Relevance,
    pub token: String,
    pub hex: String,
}

/// Display colors in [`BUCKET_ORDER`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    pub service_high: String,
    pub service_low: String,
    pub neutral_high: String,
    pub neutral_low: String,
    pub user_high: String,
    pub user_low: String,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            service_high: "#d64545".into(),
            service_low: "#f0b3b3".into(),
            neutral_high: "#e6b800".into(),
            neutral_low: "#f5e3a3".into(),
            user_high: "#2e9e4f".into(),
            user_low: "#a8dbb5".into(),
        }
    }
}

impl Palette {
    pub fn hex(&self, power: Power, relevance: Relevance) -> &str {
        match (power, relevance) {
            (Power::Service, Relevance::High) => &self.service_high,
            (Power::Service, Relevance::Low) => &self.service_low,
            (Power::Neutral, Relevance::High) => &self.neutral_high,
            (Power::Neutral, Relevance::Low) => &self.neutral_low,
            (Power::User, Relevance::High) => &self.user_high,
            (Power::User, Relevance::Low) => &self.user_low,
        }
    }

    pub fn color_for(&self, power: Power, relevance: Relevance) -> ColorToken {
        ColorToken {
            power,
            relevance,
            token: token_for(power, relevance),
            hex: self.hex(power, relevance).to_string(),
        }
    }

    pub fn tokens(&self) -> Vec<ColorToken> {
        BUCKET_ORDER.iter().map(|&(p, r)| self.color_for(p, r)).collect()
    }
}

pub fn color_for(power: Power, relevance: Relevance) -> ColorToken {
    Palette::default().color_for(power, relevance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterBucket {
    pub power: Power,
    pub relevance: Relevance,
    pub token: String,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMeter {
    pub policy_id: String,
    pub weighting: Weighting,
    /// Number of labeled snippets.
    pub total: usize,
    pub buckets: Vec<MeterBucket>,
}

impl PowerMeter {
    pub fn bucket(&self, power: Power, relevance: Relevance) -> &MeterBucket {
        self.buckets
            .iter()
            .find(|b| b.power == power && b.relevance == relevance)
            .expect("all six buckets are present")
    }
}

/// Builds a meter from `(power, relevance, char_length)` triples.
pub fn meter_from_labels(
    policy_id: &str,
    labels: impl IntoIterator<Item = (Power, Relevance, usize)>,
    weighting: Weighting,
) -> PowerMeter {
    let mut counts = [0usize; 6];
    let mut weights = [0.0f64; 6];
    for (p, r, len) in labels {
        let i = BUCKET_ORDER.iter().position(|&b| b == (p, r)).expect("bucket exists");
        counts[i] += 1;
        weights[i] += match weighting {
            Weighting::Count => 1.0,
            Weighting::CharLength => len as f64,
        };
    }
    let sum: f64 = weights.iter().sum();
    PowerMeter {
        policy_id: policy_id.to_string(),
        weighting,
        total: counts.iter().sum(),
        buckets: BUCKET_ORDER
            .iter()
            .enumerate()
            .map(|(i, &(power, relevance))| MeterBucket {
                power,
                relevance,
                token: token_for(power, relevance),
                count: counts[i],
                fraction: if sum > 0.0 { weights[i] / sum } else { 0.0 },
            })
            .collect(),
    }
}

/// Labeled, summarized snippets only.
pub fn compute_meter(annotation: &PolicyAnnotation, weighting: Weighting) -> PowerMeter {
    let labels = annotation.snippets().filter(|v| !v.snippet.unsummarized).filter_map(|v| {
        v.labels
            .map(|l| (l.power.category, l.relevance.level, v.snippet.text.chars().count()))
    });
    meter_from_labels(&annotation.policy_id, labels, weighting)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviewEntry {
    pub snippet_id: String,
    pub chunk_id: String,
    pub summary_text: String,
    pub word_count: usize,
    pub token: Option<String>,
}

/// Summary snippets in document order, at most `limit`.
pub fn meter_preview(annotation: &PolicyAnnotation, limit: usize) -> Vec<PreviewEntry> {
    annotation
        .snippets()
        .filter(|v| !v.summary.summary_text.is_empty())
        .take(limit)
        .map(|v| PreviewEntry {
            snippet_id: v.snippet.snippet_id.clone(),
            chunk_id: v.snippet.chunk_id.clone(),
            summary_text: v.summary.summary_text.clone(),
            word_count: v.summary.word_count,
            token: v
                .labels
                .filter(|_| !v.snippet.unsummarized)
                .map(|l| token_for(l.power.category, l.relevance.level)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use proptest::prelude::*;

    const SH: (Power, Relevance) = (Power::Service, Relevance::High);

    #[test]
    fn count_weighting() {
        let m = meter_from_labels(
            "p",
            [(SH, 1), (SH, 1), ((Power::Neutral, Relevance::Low), 1), ((Power::User, Relevance::High), 1)]
                .map(|((p, r), n)| (p, r, n)),
            Weighting::Count,
        );
        let fr: Vec<f64> = m.buckets.iter().map(|b| b.fraction).collect();
        assert_eq!(fr, vec![0.5, 0.0, 0.0, 0.25, 0.25, 0.0]);
        assert_eq!(m.total, 4);
    }

    #[test]
    fn char_length_weighting() {
        let m = meter_from_labels(
            "p",
            vec![
                (Power::Service, Relevance::High, 100),
                (Power::Service, Relevance::High, 100),
                (Power::User, Relevance::Low, 200),
            ],
            Weighting::CharLength,
        );
        assert_eq!(m.bucket(Power::Service, Relevance::High).fraction, 0.5);
        assert_eq!(m.bucket(Power::User, Relevance::Low).fraction, 0.5);
        assert_eq!(m.bucket(Power::Service, Relevance::High).count, 2);
    }

    #[test]
    fn empty_policy_meter_is_all_zero() {
        let m = meter_from_labels("p", vec![], Weighting::Count);
        assert_eq!(m.total, 0);
        assert_eq!(m.buckets.len(), 6);
        assert!(m.buckets.iter().all(|b| b.count == 0 && b.fraction == 0.0));
    }

    #[test]
    fn colors_follow_hue_and_saturation() {
        let c = color_for(Power::Service, Relevance::High);
        assert_eq!((c.token.as_str(), c.hex.as_str()), ("service-high", "#d64545"));
        assert_eq!(color_for(Power::User, Relevance::Low).token, "user-low");
        let tokens: BTreeSet<String> = Palette::default().tokens().into_iter().map(|t| t.token).collect();
        let hexes: BTreeSet<String> = Palette::default().tokens().into_iter().map(|t| t.hex).collect();
        assert_eq!((tokens.len(), hexes.len()), (6, 6));
    }

    fn label() -> impl Strategy<Value = (Power, Relevance, usize)> {
        (0usize..6, 1usize..500).prop_map(|(i, n)| (BUCKET_ORDER[i].0, BUCKET_ORDER[i].1, n))
    }

    proptest! {
        #[test]
        fn fractions_sum_to_one(labels in proptest::collection::vec(label(), 1..80), by_len in any::<bool>()) {
            let w = if by_len { Weighting::CharLength } else { Weighting::Count };
            let m = meter_from_labels("p", labels.clone(), w);
            let sum: f64 = m.buckets.iter().map(|b| b.fraction).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            prop_assert_eq!(m.total, labels.len());
            for b in &m.buckets {
                let oracle = labels.iter().filter(|l| (l.0, l.1) == (b.power, b.relevance)).count();
                prop_assert_eq!(b.count, oracle);
            }
        }
    }
}
