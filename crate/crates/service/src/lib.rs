//! HTTP service over saved annotation bundles: policy views, power meters,
//! lazily generated phrase scopes and the reading-session event log.

mod error;
pub mod events;
pub mod views;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tokio::sync::OnceCell;

use tosread_core::bundle::{AnnotationBundle, BundleError, BundlePolicy, BundleStore};
use tosread_core::corpus::{Chunk, Span};
use tosread_core::gateway::Gateway;
use tosread_core::meter::{compute_meter, Palette, Weighting};
use tosread_core::scope::{
    answer_question, build_index, generate_phrase_scope, phrase_context, PhraseScopeResult, ScopeRequest,
    VectorIndex, DEFAULT_K,
};

pub use error::ApiError;
use events::{parse_batch, valid_session_id, EventError, EventLog};
use views::{ContractSummary, PolicyListing, PolicyView};

pub const EVENTS_DIR: &str = "_events";
pub const DEFAULT_PREVIEW_LIMIT: usize = 5;
/// Response header telling whether a phrase scope came from the store.
pub const SCOPE_SOURCE_HEADER: &str = "x-scope-source";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub palette: Palette,
    pub k: usize,
    pub preview_limit: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            palette: Palette::default(),
            k: DEFAULT_K,
            preview_limit: DEFAULT_PREVIEW_LIMIT,
        }
    }
}

type ScopeKey = (String, Span, String);

struct ContractState {
    bundle: RwLock<Arc<AnnotationBundle>>,
    index: OnceCell<Arc<VectorIndex>>,
    writer: tokio::sync::Mutex<()>,
    inflight: Mutex<HashMap<ScopeKey, Arc<tokio::sync::Mutex<()>>>>,
}

impl ContractState {
    fn snapshot(&self) -> Arc<AnnotationBundle> {
        self.bundle.read().unwrap().clone()
    }
}

struct Inner {
    store: BundleStore,
    gateway: Arc<Gateway>,
    config: ServiceConfig,
    contracts: BTreeMap<String, ContractState>,
    events: EventLog,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Loads every bundle in the store, or only the listed contracts.
    pub fn load(
        store: BundleStore,
        gateway: Arc<Gateway>,
        config: ServiceConfig,
        only: Option<&[String]>,
    ) -> Result<Self, BundleError> {
        let ids = match only {
            Some(ids) => ids.to_vec(),
            None => store.contracts()?,
        };
        let mut contracts = BTreeMap::new();
        for id in ids {
            let bundle = store.load_bundle(&id)?;
            contracts.insert(
                id,
                ContractState {
                    bundle: RwLock::new(Arc::new(bundle)),
                    index: OnceCell::new(),
                    writer: tokio::sync::Mutex::new(()),
                    inflight: Mutex::new(HashMap::new()),
                },
            );
        }
        let events = EventLog::new(store.root().join(EVENTS_DIR));
        Ok(Self(Arc::new(Inner {
            store,
            gateway,
            config,
            contracts,
            events,
        })))
    }

    pub fn gateway(&self) -> &Gateway {
        &self.0.gateway
    }

    pub fn events(&self) -> &EventLog {
        &self.0.events
    }

    pub fn bundle(&self, contract_id: &str) -> Option<Arc<AnnotationBundle>> {
        self.0.contracts.get(contract_id).map(|c| c.snapshot())
    }

    fn contract(&self, id: &str) -> Result<&ContractState, ApiError> {
        self.0
            .contracts
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown contract `{id}`")))
    }

    /// Finds the contract holding a policy. Policy ids may repeat across
    /// contracts, in which case the caller must name one.
    fn locate_policy(&self, policy_id: &str, contract: Option<&str>) -> Result<(&str, &ContractState), ApiError> {
        if let Some(cid) = contract {
            let c = self.contract(cid)?;
            if c.snapshot().policy(policy_id).is_none() {
                return Err(ApiError::not_found(format!("unknown policy `{policy_id}` in `{cid}`")));
            }
            return Ok((self.0.contracts.get_key_value(cid).unwrap().0, c));
        }
        let hits: Vec<_> = self
            .0
            .contracts
            .iter()
            .filter(|(_, c)| c.snapshot().policy(policy_id).is_some())
            .collect();
        match hits.as_slice() {
            [] => Err(ApiError::not_found(format!("unknown policy `{policy_id}`"))),
            [(id, c)] => Ok((id.as_str(), c)),
            _ => Err(ApiError::bad_request(format!(
                "policy `{policy_id}` exists in several contracts; pass contract"
            ))),
        }
    }

    async fn index(&self, contract: &ContractState, contract_id: &str) -> Result<Arc<VectorIndex>, ApiError> {
        contract
            .index
            .get_or_try_init(|| {
                let store_root = self.0.store.root().to_path_buf();
                let gateway = self.0.gateway.clone();
                let bundle = contract.snapshot();
                let id = contract_id.to_string();
                async move {
                    tokio::task::spawn_blocking(move || -> Result<Arc<VectorIndex>, ApiError> {
                        match BundleStore::new(store_root).load_index(&id) {
                            Ok(index) => return Ok(Arc::new(index)),
                            Err(BundleError::NotFound(_)) => {}
                            Err(e) => return Err(e.into()),
                        }
                        let chunks: Vec<Chunk> = bundle.chunks().cloned().collect();
                        Ok(Arc::new(build_index(&gateway, &chunks)?))
                    })
                    .await
                    .map_err(|e| ApiError::internal(e.to_string()))?
                }
            })
            .await
            .cloned()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/contracts", get(list_contracts))
        .route("/contracts/{id}/policies", get(list_policies))
        .route("/policies/{id}", get(get_policy))
        .route("/policies/{id}/meter", get(get_meter))
        .route("/phrases/scope", post(phrase_scope))
        .route("/phrases/ask", post(phrase_ask))
        .route("/events", post(post_events))
        .route("/sessions/{id}/usage", get(session_usage))
        .fallback(|| async { ApiError::not_found("no such route") })
        .with_state(state)
}

pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(state)).await
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let bytes = serde_json::to_vec(body).expect("response serializes");
    (
        status,
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json; charset=utf-8"))],
        bytes,
    )
        .into_response()
}

fn ok<T: Serialize>(body: &T) -> Response {
    json_response(StatusCode::OK, body)
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

/// Minimal query parser: ids and enum values never need percent-decoding.
fn query_params(raw: Option<String>, allowed: &[&str]) -> Result<BTreeMap<String, String>, ApiError> {
    let mut out = BTreeMap::new();
    for pair in raw.as_deref().unwrap_or("").split('&').filter(|p| !p.is_empty()) {
        let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
        if !allowed.contains(&k) {
            return Err(ApiError::bad_request(format!("unknown query parameter `{k}`")));
        }
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

async fn healthz(State(state): State<AppState>) -> Response {
    ok(&serde_json::json!({
        "status": "ok",
        "contracts": state.0.contracts.len(),
        "gateway_mode": state.gateway().mode().to_string(),
    }))
}

async fn list_contracts(State(state): State<AppState>) -> Response {
    let list: Vec<ContractSummary> = state
        .0
        .contracts
        .values()
        .map(|c| ContractSummary::of(&c.snapshot()))
        .collect();
    ok(&list)
}

async fn list_policies(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bundle = state.contract(&id)?.snapshot();
    Ok(ok(&PolicyListing::of(&bundle, state.0.config.preview_limit)))
}

fn with_policy<T>(
    state: &AppState,
    policy_id: &str,
    contract: Option<&str>,
    f: impl FnOnce(&AnnotationBundle, &BundlePolicy) -> T,
) -> Result<T, ApiError> {
    let (_, c) = state.locate_policy(policy_id, contract)?;
    let bundle = c.snapshot();
    let policy = bundle.policy(policy_id).expect("located");
    Ok(f(&bundle, policy))
}

async fn get_policy(
    State(state): State<AppState>,
    Path(id): Path<String>,
    RawQuery(q): RawQuery,
) -> Result<Response, ApiError> {
    let q = query_params(q, &["contract"])?;
    with_policy(&state, &id, q.get("contract").map(String::as_str), |b, p| {
        ok(&PolicyView::of(b, p, &state.0.config.palette))
    })
}

async fn get_meter(
    State(state): State<AppState>,
    Path(id): Path<String>,
    RawQuery(q): RawQuery,
) -> Result<Response, ApiError> {
    let q = query_params(q, &["contract", "weighting"])?;
    let weighting: Weighting = match q.get("weighting") {
        Some(w) => w.parse().map_err(ApiError::bad_request)?,
        None => Weighting::Count,
    };
    with_policy(&state, &id, q.get("contract").map(String::as_str), |_, p| {
        ok(&compute_meter(&p.annotation, weighting))
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScopeBody {
    policy_id: String,
    chunk_id: String,
    #[serde(default)]
    span: Option<Span>,
    #[serde(default)]
    phrase_text: Option<String>,
    #[serde(default)]
    contract_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AskBody {
    policy_id: String,
    chunk_id: String,
    phrase: String,
    question: String,
    #[serde(default)]
    span: Option<Span>,
    #[serde(default)]
    contract_id: Option<String>,
}

fn find_chunk<'a>(policy: &'a BundlePolicy, chunk_id: &str) -> Result<&'a Chunk, ApiError> {
    policy
        .chunks
        .iter()
        .find(|c| c.chunk_id == chunk_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown chunk `{chunk_id}` in `{}`", policy.policy_id)))
}

fn check_span(text: &str, span: Span) -> Result<Span, ApiError> {
    if span.start >= span.end {
        return Err(ApiError::bad_request("span must be non-empty with start < end"));
    }
    if span.end > text.len() {
        return Err(ApiError::conflict(format!(
            "span {}..{} exceeds chunk length {}",
            span.start,
            span.end,
            text.len()
        )));
    }
    if !text.is_char_boundary(span.start) || !text.is_char_boundary(span.end) {
        return Err(ApiError::conflict("span does not fall on character boundaries"));
    }
    if span.slice(text).trim().is_empty() {
        return Err(ApiError::bad_request("span covers only whitespace"));
    }
    Ok(span)
}

fn locate_phrase(text: &str, phrase: &str) -> Result<Span, ApiError> {
    let phrase = phrase.trim();
    if phrase.is_empty() {
        return Err(ApiError::bad_request("phrase is empty"));
    }
    text.find(phrase)
        .map(|start| Span::new(start, start + phrase.len()))
        .ok_or_else(|| ApiError::conflict(format!("phrase `{phrase}` does not occur in the chunk")))
}

async fn phrase_scope(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: ScopeBody = parse_body(&body)?;
    let (contract_id, contract) = state.locate_policy(&req.policy_id, req.contract_id.as_deref())?;
    let bundle = contract.snapshot();
    let policy = bundle.policy(&req.policy_id).expect("located");
    let chunk = find_chunk(policy, &req.chunk_id)?;
    let span = match (req.span, req.phrase_text.as_deref()) {
        (Some(span), None) => check_span(&chunk.text, span)?,
        (None, Some(text)) => locate_phrase(&chunk.text, text)?,
        _ => return Err(ApiError::bad_request("give exactly one of span or phrase_text")),
    };
    let persona_id = bundle.persona.persona_id.clone();
    if let Some(hit) = bundle.phrase_scope(&chunk.chunk_id, span, &persona_id) {
        return Ok(scope_response(hit, "store"));
    }

    let key: ScopeKey = (chunk.chunk_id.clone(), span, persona_id.clone());
    let flight = contract.inflight.lock().unwrap().entry(key.clone()).or_default().clone();
    let _guard = flight.lock().await;
    // A concurrent request for the same key may have finished meanwhile.
    if let Some(hit) = contract.snapshot().phrase_scope(&key.0, span, &persona_id) {
        return Ok(scope_response(hit, "store"));
    }

    let index = state.index(contract, contract_id).await?;
    let gateway = state.0.gateway.clone();
    let k = state.0.config.k;
    let (chunk_id, chunk_text) = (chunk.chunk_id.clone(), chunk.text.clone());
    let gen_bundle = bundle.clone();
    let result = tokio::task::spawn_blocking(move || {
        let texts = gen_bundle.chunk_texts();
        generate_phrase_scope(
            &gateway,
            &index,
            &texts,
            &ScopeRequest {
                chunk_id: &chunk_id,
                chunk_text: &chunk_text,
                span,
                persona: &gen_bundle.persona,
                platform: &gen_bundle.title,
                k,
            },
        )
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;

    {
        let _w = contract.writer.lock().await;
        let mut updated = (*contract.snapshot()).clone();
        updated.upsert_phrase_scope(result.clone());
        let store_root = state.0.store.root().to_path_buf();
        let updated = tokio::task::spawn_blocking(move || {
            BundleStore::new(store_root).save_bundle(&updated).map(|_| updated)
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
        *contract.bundle.write().unwrap() = Arc::new(updated);
    }
    contract.inflight.lock().unwrap().remove(&key);
    Ok(scope_response(&result, "generated"))
}

fn scope_response(result: &PhraseScopeResult, source: &'static str) -> Response {
    let mut resp = ok(result);
    resp.headers_mut()
        .insert(SCOPE_SOURCE_HEADER, HeaderValue::from_static(source));
    resp
}

async fn phrase_ask(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: AskBody = parse_body(&body)?;
    if req.question.trim().is_empty() {
        return Err(ApiError::bad_request("question is empty"));
    }
    let (contract_id, contract) = state.locate_policy(&req.policy_id, req.contract_id.as_deref())?;
    let bundle = contract.snapshot();
    let policy = bundle.policy(&req.policy_id).expect("located");
    let chunk = find_chunk(policy, &req.chunk_id)?;
    let span = match req.span {
        Some(span) => check_span(&chunk.text, span)?,
        None => locate_phrase(&chunk.text, &req.phrase)?,
    };
    let index = state.index(contract, contract_id).await?;
    let gateway = state.0.gateway.clone();
    let k = state.0.config.k;
    let text = chunk.text.clone();
    let answer = tokio::task::spawn_blocking(move || {
        let texts = bundle.chunk_texts();
        let context = phrase_context(&text, span);
        answer_question(&gateway, &index, &texts, &req.question, &req.phrase, context, k)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(ok(&answer))
}

impl From<EventError> for ApiError {
    fn from(e: EventError) -> Self {
        match e {
            EventError::Schema(_) | EventError::Sequence(_) => ApiError::bad_request(e.to_string()),
            EventError::Io(_) => ApiError::internal(e.to_string()),
        }
    }
}

async fn post_events(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let batch = parse_batch(&body)?;
    let accepted = tokio::task::spawn_blocking(move || state.events().append_batch(&batch))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(ok(&serde_json::json!({ "accepted": accepted })))
}

async fn session_usage(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    if !valid_session_id(&id) {
        return Err(ApiError::bad_request(format!("invalid session id `{id}`")));
    }
    match state.events().usage(&id)? {
        Some(usage) => Ok(ok(&usage)),
        None => Err(ApiError::not_found(format!("no events for session `{id}`"))),
    }
}
