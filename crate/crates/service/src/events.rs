//! Append-only interaction log, one newline-delimited JSON file per session.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Scroll,
    ClickSummarySnippet,
    ClickHighlightBar,
    HoverPowerMeter,
    OpenDefinition,
    OpenScenario,
    AskQuestion,
    NavigatePolicy,
}

#[derive(Clone, Copy)]
enum FieldType {
    Str,
    NonNegative,
    Panel,
}

impl EventKind {
    pub const ALL: [EventKind; 8] = [
        EventKind::Scroll,
        EventKind::ClickSummarySnippet,
        EventKind::ClickHighlightBar,
        EventKind::HoverPowerMeter,
        EventKind::OpenDefinition,
        EventKind::OpenScenario,
        EventKind::AskQuestion,
        EventKind::NavigatePolicy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Scroll => "scroll",
            EventKind::ClickSummarySnippet => "click_summary_snippet",
            EventKind::ClickHighlightBar => "click_highlight_bar",
            EventKind::HoverPowerMeter => "hover_power_meter",
            EventKind::OpenDefinition => "open_definition",
            EventKind::OpenScenario => "open_scenario",
            EventKind::AskQuestion => "ask_question",
            EventKind::NavigatePolicy => "navigate_policy",
        }
    }

    /// (field, type, required)
    fn schema(self) -> &'static [(&'static str, FieldType, bool)] {
        use FieldType::*;
        match self {
            EventKind::Scroll => &[("panel", Panel, true), ("offset", NonNegative, true), ("policy_id", Str, false)],
            EventKind::ClickSummarySnippet | EventKind::ClickHighlightBar => {
                &[("snippet_id", Str, true), ("policy_id", Str, false)]
            }
            EventKind::HoverPowerMeter => &[("policy_id", Str, true), ("duration_ms", NonNegative, false)],
            EventKind::OpenDefinition | EventKind::OpenScenario => {
                &[("chunk_id", Str, true), ("phrase", Str, true), ("policy_id", Str, false)]
            }
            EventKind::AskQuestion => &[("chunk_id", Str, true), ("question", Str, true), ("policy_id", Str, false)],
            EventKind::NavigatePolicy => &[("policy_id", Str, true), ("from_policy_id", Str, false)],
        }
    }

    pub fn validate_payload(self, payload: &Map<String, Value>) -> Result<(), String> {
        let schema = self.schema();
        for key in payload.keys() {
            if !schema.iter().any(|(f, _, _)| f == key) {
                return Err(format!("unexpected payload field `{key}` for {}", self.as_str()));
            }
        }
        for &(name, ty, required) in schema {
            let Some(v) = payload.get(name) else {
                if required {
                    return Err(format!("{} payload needs `{name}`", self.as_str()));
                }
                continue;
            };
            let ok = match ty {
                FieldType::Str => v.as_str().is_some_and(|s| !s.is_empty()),
                FieldType::NonNegative => v.as_f64().is_some_and(|x| x >= 0.0),
                FieldType::Panel => matches!(v.as_str(), Some("left" | "right" | "nav")),
            };
            if !ok {
                return Err(format!("invalid `{name}` in {} payload", self.as_str()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionEvent {
    pub session_id: String,
    pub seq: u64,
    /// Milliseconds since the Unix epoch, client clock.
    pub timestamp: u64,
    pub kind: EventKind,
    pub payload: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventError {
    Schema(String),
    Sequence(String),
    Io(String),
}

impl std::fmt::Display for EventError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EventError::Schema(m) => write!(f, "schema error: {m}"),
            EventError::Sequence(m) => write!(f, "sequence error: {m}"),
            EventError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Parses a raw batch body: `{"events": [...]}`.
pub fn parse_batch(body: &[u8]) -> Result<Vec<InteractionEvent>, EventError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Batch {
        events: Vec<Value>,
    }
    let batch: Batch = serde_json::from_slice(body).map_err(|e| EventError::Schema(e.to_string()))?;
    batch
        .events
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let ev: InteractionEvent =
                serde_json::from_value(v).map_err(|e| EventError::Schema(format!("event {i}: {e}")))?;
            if !valid_session_id(&ev.session_id) {
                return Err(EventError::Schema(format!("event {i}: invalid session_id")));
            }
            ev.kind
                .validate_payload(&ev.payload)
                .map_err(|m| EventError::Schema(format!("event {i}: {m}")))?;
            Ok(ev)
        })
        .collect()
}

#[derive(Debug, Default)]
struct SessionState {
    loaded: bool,
    last_seq: Option<u64>,
    counts: BTreeMap<EventKind, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageSummary {
    pub session_id: String,
    pub total: usize,
    pub counts: BTreeMap<EventKind, usize>,
}

pub fn count_kinds<'a>(events: impl IntoIterator<Item = &'a InteractionEvent>) -> BTreeMap<EventKind, usize> {
    let mut counts: BTreeMap<EventKind, usize> = EventKind::ALL.iter().map(|&k| (k, 0)).collect();
    for e in events {
        *counts.entry(e.kind).or_default() += 1;
    }
    counts
}

#[derive(Debug)]
pub struct EventLog {
    dir: PathBuf,
    sessions: Mutex<HashMap<String, Arc<Mutex<SessionState>>>>,
}

impl EventLog {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn path(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.ndjson"))
    }

    fn session(&self, id: &str) -> Arc<Mutex<SessionState>> {
        self.sessions.lock().unwrap().entry(id.to_string()).or_default().clone()
    }

    pub fn read_session(&self, session_id: &str) -> Result<Option<Vec<InteractionEvent>>, EventError> {
        read_log(&self.path(session_id))
    }

    /// Validates sequence numbers for the whole batch, then appends each
    /// session's events and syncs before returning.
    pub fn append_batch(&self, events: &[InteractionEvent]) -> Result<usize, EventError> {
        let mut by_session: BTreeMap<&str, Vec<&InteractionEvent>> = BTreeMap::new();
        for e in events {
            by_session.entry(e.session_id.as_str()).or_default().push(e);
        }
        // Sorted lock order avoids deadlock between overlapping batches.
        let handles: Vec<(&str, Arc<Mutex<SessionState>>)> =
            by_session.keys().map(|id| (*id, self.session(id))).collect();
        let mut guards: Vec<_> = handles.iter().map(|(id, h)| (*id, h.lock().unwrap())).collect();

        for (id, state) in guards.iter_mut() {
            if !state.loaded {
                let existing = read_log(&self.path(id))?.unwrap_or_default();
                state.last_seq = existing.last().map(|e| e.seq);
                state.counts = count_kinds(&existing);
                state.loaded = true;
            }
            let mut last = state.last_seq;
            for e in &by_session[id] {
                if last.is_some_and(|l| e.seq <= l) {
                    return Err(EventError::Sequence(format!(
                        "session `{id}`: seq {} does not follow {}",
                        e.seq,
                        last.unwrap()
                    )));
                }
                last = Some(e.seq);
            }
        }

        std::fs::create_dir_all(&self.dir).map_err(|e| EventError::Io(e.to_string()))?;
        for (id, state) in guards.iter_mut() {
            let mut buf = String::new();
            for e in &by_session[id] {
                buf.push_str(&serde_json::to_string(e).expect("event serializes"));
                buf.push('\n');
            }
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.path(id))
                .map_err(|e| EventError::Io(e.to_string()))?;
            file.write_all(buf.as_bytes()).map_err(|e| EventError::Io(e.to_string()))?;
            file.sync_data().map_err(|e| EventError::Io(e.to_string()))?;
            for e in &by_session[id] {
                *state.counts.entry(e.kind).or_default() += 1;
                state.last_seq = Some(e.seq);
            }
        }
        Ok(events.len())
    }

    /// Counts accumulated while appending, as opposed to re-read from disk.
    pub fn online_counts(&self, session_id: &str) -> Option<BTreeMap<EventKind, usize>> {
        let handle = self.sessions.lock().unwrap().get(session_id).cloned()?;
        let state = handle.lock().unwrap();
        state.loaded.then(|| state.counts.clone())
    }

    /// Usage recomputed from the raw log.
    pub fn usage(&self, session_id: &str) -> Result<Option<UsageSummary>, EventError> {
        Ok(self.read_session(session_id)?.map(|events| UsageSummary {
            session_id: session_id.to_string(),
            total: events.len(),
            counts: count_kinds(&events),
        }))
    }
}

fn read_log(path: &Path) -> Result<Option<Vec<InteractionEvent>>, EventError> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(EventError::Io(e.to_string())),
    };
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|line| {
            let line = line.map_err(|e| EventError::Io(e.to_string()))?;
            serde_json::from_str(&line).map_err(|e| EventError::Io(format!("corrupt log line: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn event(session: &str, seq: u64, kind: EventKind, payload: Value) -> InteractionEvent {
        InteractionEvent {
            session_id: session.into(),
            seq,
            timestamp: 1_700_000_000_000 + seq,
            kind,
            payload: payload.as_object().unwrap().clone(),
        }
    }

    #[test]
    fn hundred_events_keep_order() {
        let dir = tempfile::tempdir().unwrap();
        let log = EventLog::new(dir.path());
        let events: Vec<_> = (1..=100)
            .map(|i| event("s1", i, EventKind::Scroll, json!({"panel": "right", "offset": i * 10})))
            .collect();
        for chunk in events.chunks(7) {
            log.append_batch(chunk).unwrap();
        }
        let back = log.read_session("s1").unwrap().unwrap();
        assert_eq!(back, events);
        assert_eq!(log.usage("s1").unwrap().unwrap().counts[&EventKind::Scroll], 100);
    }

    #[test]
    fn duplicate_or_regressing_seq_is_rejected_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let log = EventLog::new(dir.path());
        log.append_batch(&[event("s", 5, EventKind::NavigatePolicy, json!({"policy_id": "p"}))]).unwrap();
        let batch = [
            event("t", 1, EventKind::NavigatePolicy, json!({"policy_id": "p"})),
            event("s", 5, EventKind::NavigatePolicy, json!({"policy_id": "p"})),
        ];
        assert!(matches!(log.append_batch(&batch), Err(EventError::Sequence(_))));
        assert!(log.read_session("t").unwrap().is_none());
        assert_eq!(log.read_session("s").unwrap().unwrap().len(), 1);
    }

    #[test]
    fn sequence_state_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        EventLog::new(dir.path())
            .append_batch(&[event("s", 3, EventKind::NavigatePolicy, json!({"policy_id": "p"}))])
            .unwrap();
        let log = EventLog::new(dir.path());
        assert!(log.append_batch(&[event("s", 2, EventKind::NavigatePolicy, json!({"policy_id": "p"}))]).is_err());
        log.append_batch(&[event("s", 4, EventKind::NavigatePolicy, json!({"policy_id": "p"}))]).unwrap();
    }

    #[test]
    fn payloads_are_checked_against_their_kind() {
        let ok = EventKind::ClickSummarySnippet.validate_payload(json!({"snippet_id": "x"}).as_object().unwrap());
        assert!(ok.is_ok());
        for bad in [json!({}), json!({"snippet_id": 3}), json!({"snippet_id": "x", "extra": 1})] {
            assert!(EventKind::ClickSummarySnippet.validate_payload(bad.as_object().unwrap()).is_err());
        }
        assert!(EventKind::Scroll.validate_payload(json!({"panel": "top", "offset": 1}).as_object().unwrap()).is_err());
        assert!(parse_batch(br#"{"events":[{"session_id":"a/b","seq":1,"timestamp":1,"kind":"scroll","payload":{"panel":"nav","offset":0}}]}"#).is_err());
        assert!(parse_batch(br#"{"events":[{"session_id":"a","seq":1,"timestamp":1,"kind":"zoom","payload":{}}]}"#).is_err());
        assert_eq!(parse_batch(br#"{"events":[]}"#).unwrap().len(), 0);
    }
}
