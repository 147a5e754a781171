//! Re-records the committed fixtures: replay cache, frozen store and the
//! exchanges behind the API golden requests. Uses the offline provider, so
//! the output is reproducible apart from bundle timestamps.
//!
//! Run from anywhere with `cargo run -p tosread-cli --example record_fixtures`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use clap::Parser;
use serde_json::Value;
use tower::ServiceExt;

use tosread_cli::{build_gateway, run, Cli, Config, GlobalArgs};
use tosread_core::annotator::{classify_power, classify_relevance, Persona};
use tosread_core::bundle::BundleStore;
use tosread_core::gateway::GatewayMode;
use tosread_service::{router, AppState};

const CONFIG: &str = "fixtures/tosread.toml";

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn no_env(_: &str) -> Option<String> {
    None
}

fn cli(args: &[&str]) -> Value {
    let mut full = vec!["tosread", "--config", CONFIG, "--mode", "record"];
    full.extend_from_slice(args);
    let cli = Cli::try_parse_from(&full).unwrap();
    let out = run(&cli, &no_env).unwrap_or_else(|e| panic!("{args:?}: {e}"));
    eprintln!("{out}");
    out
}

pub const POWER_EXAMPLES: [&str; 9] = [
    "The service can delete specific content without prior notice and without a reason.",
    "The service can license user content to third parties.",
    "The service tracks your personal data for advertising",
    "Users are responsible for the content they post",
    "Users agree not to use the service for illegal purposes",
    "Blocking first-party cookies may limit your ability to use the service",
    "You can opt out of targeted advertising",
    "The service does not sell your personal data",
    "The service will not allow third parties to access your personal information without a legal basis",
];

const INVALID_POWER: [&str; 2] = [
    "The service may change these rules whenever it wants.",
    "Accounts are personal and cannot be transferred.",
];

const INVALID_RELEVANCE: &str = "This term concerns the color of the website footer.";

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn main() {
    let root = repo_root();
    std::env::set_current_dir(&root).unwrap();
    for dir in ["fixtures/cache", "fixtures/store"] {
        let _ = std::fs::remove_dir_all(dir);
    }

    for (contract, persona) in [("servicex", "poster"), ("servicey", "buyer")] {
        let persona_path = format!("fixtures/personas/{persona}.json");
        cli(&["ingest", "--contract-dir", &format!("fixtures/contracts/{contract}")]);
        cli(&["index", "--contract", contract]);
        // The scoped run only records exchanges; the frozen bundle carries no
        // phrase scopes so the service can demonstrate lazy generation.
        cli(&["annotate", "--contract", contract, "--persona", &persona_path, "--scopes"]);
        cli(&["annotate", "--contract", contract, "--persona", &persona_path]);
    }

    let flags = GlobalArgs {
        config: Some(CONFIG.into()),
        mode: Some(GatewayMode::Record),
        ..Default::default()
    };
    let cfg = Config::load(&flags, &no_env).unwrap();
    let gw = build_gateway(&cfg).unwrap();
    for text in POWER_EXAMPLES {
        let label = classify_power(&gw, text).unwrap();
        eprintln!("{:<8} {text}", label.category);
    }
    for text in INVALID_POWER {
        assert!(classify_power(&gw, text).is_err());
    }
    let buyer = Persona::from_json(&std::fs::read_to_string("fixtures/personas/buyer.json").unwrap()).unwrap();
    assert!(classify_relevance(&gw, INVALID_RELEVANCE, &buyer).is_err());

    // Replays the golden requests against a scratch copy of the store so the
    // scope and ask exchanges land in the cache.
    let scratch = tempfile::tempdir().unwrap();
    copy_dir(Path::new("fixtures/store"), scratch.path());
    let state = AppState::load(
        BundleStore::new(scratch.path()),
        Arc::new(build_gateway(&cfg).unwrap()),
        cfg.service.clone(),
        None,
    )
    .unwrap();
    let app = router(state);
    let requests: Vec<Value> =
        serde_json::from_str(&std::fs::read_to_string("fixtures/api/requests.json").unwrap()).unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    for r in requests.iter().filter(|r| r["record"] != Value::Bool(false)) {
        let body = match (&r["body"], &r["raw_body"]) {
            (Value::Null, Value::String(raw)) => Body::from(raw.clone()),
            (Value::Null, _) => Body::empty(),
            (b, _) => Body::from(b.to_string()),
        };
        let req = Request::builder()
            .method(r["method"].as_str().unwrap())
            .uri(r["path"].as_str().unwrap())
            .header("content-type", "application/json")
            .body(body)
            .unwrap();
        let status = rt.block_on(app.clone().oneshot(req)).unwrap().status();
        eprintln!("{status} {}", r["name"]);
    }
}
