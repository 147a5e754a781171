//! The `tosread` command-line driver. Every command prints exactly one JSON
//! object on stdout; logs and errors go to stderr.

pub mod config;
mod error;
pub mod report;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tosread_core::annotator::{annotate_policy, Persona, PolicyAnnotation};
use tosread_core::bundle::{AnnotationBundle, BundleError, BundleStore, Provenance};
use tosread_core::corpus::{ingest_contract, Chunk};
use tosread_core::eval::{run_eval, EvalFixture};
use tosread_core::gateway::offline::{HashingEmbedder, HeuristicProvider, Override};
use tosread_core::gateway::{
    template_versions, Gateway, HttpCompletionProvider, HttpEmbeddingProvider, HttpProviderConfig, ReplayCache,
};
use tosread_core::scope::{build_index, generate_phrase_scope, ScopeRequest, VectorIndex};
use tosread_service::AppState;

pub use config::{Config, FileConfig, GlobalArgs, ProviderKind};
pub use error::{CliError, EXIT_OK, EXIT_PROVIDER, EXIT_REPLAY_MISS, EXIT_VALIDATION};

#[derive(Debug, Parser)]
#[command(name = "tosread", version, about = "Annotate and serve terms-of-service contracts")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Json,
    HtmlReport,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a contract directory and store its normalized corpus.
    Ingest {
        #[arg(long)]
        contract_dir: PathBuf,
    },
    /// Annotate every policy of an ingested contract for one persona.
    Annotate {
        #[arg(long)]
        contract: String,
        /// Persona JSON file.
        #[arg(long)]
        persona: PathBuf,
        /// Also generate phrase scopes for every identified phrase.
        #[arg(long)]
        scopes: bool,
    },
    /// Embed every chunk of an ingested contract.
    Index {
        #[arg(long)]
        contract: String,
    },
    /// Write the bundle as canonical JSON or as a static HTML report.
    Export {
        #[arg(long)]
        contract: String,
        #[arg(long, value_enum, default_value = "json")]
        format: ExportFormat,
        /// Output file (default: inside the contract's store directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve bundles over HTTP.
    Serve {
        /// Contracts to load (default: all in the store).
        #[arg(long)]
        contract: Vec<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Compare a bundle against gold judgments.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        fixtures: PathBuf,
    },
}

pub fn process_env(name: &str) -> Option<String> {
    std::env::var(name).ok()
}

pub fn run(cli: &Cli, env: &dyn Fn(&str) -> Option<String>) -> Result<Value, CliError> {
    let cfg = Config::load(&cli.global, env)?;
    match &cli.command {
        Command::Ingest { contract_dir } => ingest(&cfg, contract_dir),
        Command::Annotate {
            contract,
            persona,
            scopes,
        } => annotate(&cfg, contract, persona, *scopes),
        Command::Index { contract } => index(&cfg, contract),
        Command::Export { contract, format, out } => export(&cfg, contract, *format, out.as_deref()),
        Command::Serve { contract, port, host } => serve(&cfg, contract, *port, host),
        Command::Eval { bundle, fixtures } => eval(bundle, fixtures),
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_file(path)?)
        .map_err(|e| CliError::validation(format!("invalid JSON in {}: {e}", path.display())))
}

pub fn load_overrides(path: &Path) -> Result<Vec<Override>, CliError> {
    parse_json(path)
}

pub fn build_gateway(cfg: &Config) -> Result<Gateway, CliError> {
    let gw = Gateway::new(cfg.gateway.clone(), ReplayCache::new(&cfg.cache_dir));
    Ok(match cfg.provider {
        ProviderKind::Offline => {
            let overrides = match &cfg.overrides {
                Some(p) => load_overrides(p)?,
                None => Vec::new(),
            };
            gw.with_completion_provider(Arc::new(HeuristicProvider::with_overrides(overrides)))
                .with_embedding_provider(Arc::new(HashingEmbedder))
        }
        ProviderKind::Http => match &cfg.api_key {
            Some(key) => {
                let http = HttpProviderConfig::new(&cfg.base_url, key);
                gw.with_completion_provider(Arc::new(HttpCompletionProvider::new(http.clone())))
                    .with_embedding_provider(Arc::new(HttpEmbeddingProvider::new(http)))
            }
            None => gw,
        },
    })
}

fn ingest(cfg: &Config, dir: &Path) -> Result<Value, CliError> {
    let corpus = ingest_contract(dir, &cfg.chunking)?;
    let path = BundleStore::new(&cfg.store_dir).save_corpus(&corpus)?;
    Ok(json!({
        "command": "ingest",
        "contract_id": corpus.contract_id,
        "policies": corpus.policies.len(),
        "chunks": corpus.chunks().count(),
        "oversized_chunks": corpus.chunks().filter(|c| c.oversized).count(),
        "warnings": corpus.warnings,
        "path": path,
    }))
}

fn load_or_build_index(gw: &Gateway, store: &BundleStore, contract: &str, chunks: &[Chunk]) -> Result<VectorIndex, CliError> {
    match store.load_index(contract) {
        Ok(index) => Ok(index),
        Err(BundleError::NotFound(_)) => {
            let index = build_index(gw, chunks)?;
            store.save_index(contract, &index)?;
            Ok(index)
        }
        Err(e) => Err(e.into()),
    }
}

fn annotate(cfg: &Config, contract: &str, persona_path: &Path, scopes: bool) -> Result<Value, CliError> {
    let store = BundleStore::new(&cfg.store_dir);
    let corpus = store.load_corpus(contract)?;
    let persona = Persona::from_json(&read_file(persona_path)?)
        .map_err(|e| CliError::validation(format!("invalid persona {}: {e}", persona_path.display())))?;
    let gw = build_gateway(cfg)?;

    let annotations = corpus
        .policies
        .iter()
        .map(|p| {
            tracing::info!(policy = %p.policy_id, chunks = p.chunks.len(), "annotating");
            annotate_policy(&gw, &p.policy_id, &p.chunks, &persona)
        })
        .collect::<Result<Vec<PolicyAnnotation>, _>>()?;
    let chunk_errors: usize = annotations.iter().map(|a| a.errors().count()).sum();
    let provenance = Provenance {
        model_id: cfg.gateway.model_id.clone(),
        embed_model_id: cfg.gateway.embed_model_id.clone(),
        template_versions: template_versions(),
        persona_id: persona.persona_id.clone(),
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    let mut bundle = AnnotationBundle::build(&corpus, annotations, &persona, provenance)?;

    let mut scope_errors = 0usize;
    if scopes {
        let chunks: Vec<Chunk> = corpus.chunks().cloned().collect();
        let index = load_or_build_index(&gw, &store, contract, &chunks)?;
        let texts = bundle.chunk_texts();
        let mut results = Vec::new();
        for policy in &bundle.policies {
            for ca in &policy.annotation.chunks {
                let chunk = policy.chunks.iter().find(|c| c.chunk_id == ca.chunk_id).expect("validated");
                for phrase in &ca.phrases {
                    let req = ScopeRequest {
                        chunk_id: &chunk.chunk_id,
                        chunk_text: &chunk.text,
                        span: phrase.span,
                        persona: &persona,
                        platform: &bundle.title,
                        k: cfg.service.k,
                    };
                    match generate_phrase_scope(&gw, &index, &texts, &req) {
                        Ok(r) => results.push(r),
                        Err(e) if e.is_fatal(gw.mode()) => return Err(e.into()),
                        Err(e) => {
                            tracing::warn!(chunk = %chunk.chunk_id, phrase = %phrase.surface_text, error = %e, "phrase scope skipped");
                            scope_errors += 1;
                        }
                    }
                }
            }
        }
        bundle.phrase_scopes = results;
        bundle.seal();
    }

    store.save_bundle(&bundle)?;
    Ok(json!({
        "command": "annotate",
        "contract_id": bundle.contract_id,
        "persona_id": persona.persona_id,
        "mode": gw.mode().to_string(),
        "content_hash": bundle.content_hash,
        "path": store.bundle_path(contract)?,
        "policies": bundle.policies.len(),
        "snippets": bundle.policies.iter().map(|p| p.annotation.snippets().count()).sum::<usize>(),
        "chunk_errors": chunk_errors,
        "phrase_scopes": bundle.phrase_scopes.len(),
        "phrase_scope_errors": scope_errors,
        "gateway": gw.stats(),
        "provider_calls": gw.provider_calls(),
    }))
}

fn index(cfg: &Config, contract: &str) -> Result<Value, CliError> {
    let store = BundleStore::new(&cfg.store_dir);
    let corpus = store.load_corpus(contract)?;
    let gw = build_gateway(cfg)?;
    let chunks: Vec<Chunk> = corpus.chunks().cloned().collect();
    let index = build_index(&gw, &chunks)?;
    let path = store.save_index(contract, &index)?;
    Ok(json!({
        "command": "index",
        "contract_id": contract,
        "count": index.len(),
        "dimension": index.dimension(),
        "path": path,
        "gateway": gw.stats(),
    }))
}

fn export(cfg: &Config, contract: &str, format: ExportFormat, out: Option<&Path>) -> Result<Value, CliError> {
    let store = BundleStore::new(&cfg.store_dir);
    let bundle = store.load_bundle(contract)?;
    let (body, default_name) = match format {
        ExportFormat::Json => (bundle.to_canonical_json(), "export.json"),
        ExportFormat::HtmlReport => (report::render(&bundle, &cfg.service.palette), "report.html"),
    };
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => store.contract_dir(contract)?.join(default_name),
    };
    std::fs::write(&path, body).map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))?;
    Ok(json!({
        "command": "export",
        "contract_id": contract,
        "format": match format { ExportFormat::Json => "json", ExportFormat::HtmlReport => "html-report" },
        "content_hash": bundle.content_hash,
        "path": path,
    }))
}

fn serve(cfg: &Config, contracts: &[String], port: Option<u16>, host: &str) -> Result<Value, CliError> {
    let gw = Arc::new(build_gateway(cfg)?);
    let only = (!contracts.is_empty()).then_some(contracts);
    let state = AppState::load(BundleStore::new(&cfg.store_dir), gw, cfg.service.clone(), only)?;
    let addr: SocketAddr = format!("{host}:{}", port.unwrap_or(cfg.port))
        .parse()
        .map_err(|e| CliError::validation(format!("invalid listen address: {e}")))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::validation(e.to_string()))?;
    eprintln!("{}", json!({ "listening": addr.to_string() }));
    runtime
        .block_on(tosread_service::serve(state, addr))
        .map_err(|e| CliError::validation(format!("server error: {e}")))?;
    Ok(json!({ "command": "serve", "stopped": true }))
}

fn eval(bundle_path: &Path, fixtures: &Path) -> Result<Value, CliError> {
    let bundle = AnnotationBundle::from_json(&read_file(bundle_path)?)
        .map_err(|e| CliError::validation(format!("invalid bundle {}: {e}", bundle_path.display())))?;
    bundle.validate()?;
    let fixture: EvalFixture = parse_json(fixtures)?;
    let report = run_eval(&bundle, &fixture)?;
    Ok(json!({ "command": "eval", "report": report }))
}
