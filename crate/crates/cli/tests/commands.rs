use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use tosread_core::bundle::AnnotationBundle;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn fixture(rel: &str) -> String {
    repo().join(rel).display().to_string()
}

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

/// Runs the binary from `cwd` with a clean environment and the fixture
/// configuration, using `store` and `cache` as absolute locations.
fn tosread(cwd: &Path, store: &Path, cache: &str, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tosread"))
        .current_dir(cwd)
        .env_clear()
        .args(["--config", &fixture("fixtures/tosread.toml")])
        .args(["--overrides", &fixture("fixtures/overrides.json")])
        .arg("--store")
        .arg(store)
        .args(["--cache-dir", cache])
        .args(args)
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr_error(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no error JSON in {text}"));
    serde_json::from_str::<Value>(line).unwrap()["error"].clone()
}

struct Scratch {
    dir: tempfile::TempDir,
}

impl Scratch {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        copy_dir(&repo().join("fixtures/store"), &dir.path().join("store"));
        Self { dir }
    }

    fn store(&self) -> PathBuf {
        self.dir.path().join("store")
    }

    fn run(&self, args: &[&str]) -> Output {
        tosread(self.dir.path(), &self.store(), &fixture("fixtures/cache"), args)
    }
}

#[test]
fn ingest_reports_counts_on_stdout() {
    let s = Scratch::new();
    let out = s.run(&["ingest", "--contract-dir", &fixture("fixtures/contracts/servicex")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["contract_id"], "servicex");
    assert_eq!(v["policies"], 3);
    assert_eq!(v["chunks"], 16);
}

#[test]
fn strict_replay_miss_exits_with_code_2() {
    let s = Scratch::new();
    let contract = s.dir.path().join("changed");
    copy_dir(&repo().join("fixtures/contracts/servicey"), &contract);
    let terms = contract.join("terms.md");
    let text = std::fs::read_to_string(&terms).unwrap();
    std::fs::write(&terms, format!("{text}\nA sentence that was never recorded.\n")).unwrap();

    let out = s.run(&["ingest", "--contract-dir", contract.to_str().unwrap()]);
    assert!(out.status.success());
    let out = s.run(&["annotate", "--contract", "servicey", "--persona", &fixture("fixtures/personas/buyer.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_error(&out)["kind"], "replay_miss");
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_provider_exits_with_code_3() {
    let s = Scratch::new();
    let empty_cache = s.dir.path().join("empty-cache");
    let out = tosread(
        s.dir.path(),
        &s.store(),
        empty_cache.to_str().unwrap(),
        &["--mode", "record", "--provider", "http", "index", "--contract", "servicey"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_error(&out)["kind"], "provider");
}

#[test]
fn invalid_input_exits_with_code_1() {
    let s = Scratch::new();
    let missing = s.dir.path().join("nowhere");
    let out = s.run(&["ingest", "--contract-dir", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_error(&out)["kind"], "validation");

    let out = s.run(&["annotate", "--contract", "unknown", "--persona", &fixture("fixtures/personas/buyer.json")]);
    assert_eq!(out.status.code(), Some(1));

    let bad = s.dir.path().join("bad.toml");
    std::fs::write(&bad, "[gateway]\nmystery = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tosread"))
        .current_dir(s.dir.path())
        .env_clear()
        .args(["--config", bad.to_str().unwrap(), "index", "--contract", "servicey"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn export_json_is_the_canonical_bundle() {
    let s = Scratch::new();
    let out = s.run(&["export", "--contract", "servicex"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    let written = std::fs::read_to_string(s.store().join("servicex/export.json")).unwrap();
    let stored = std::fs::read_to_string(repo().join("fixtures/store/servicex/bundle.json")).unwrap();
    assert_eq!(written, stored);
    let bundle = AnnotationBundle::from_json(&written).unwrap();
    assert_eq!(v["content_hash"], bundle.content_hash.as_str());
    assert_eq!(bundle.compute_hash(), bundle.content_hash);
}

#[test]
fn export_html_report_lists_every_policy() {
    let s = Scratch::new();
    let target = s.dir.path().join("report.html");
    let out = s.run(&["export", "--contract", "servicey", "--format", "html-report", "--out", target.to_str().unwrap()]);
    assert!(out.status.success());
    let html = std::fs::read_to_string(&target).unwrap();
    let bundle = AnnotationBundle::from_json(&std::fs::read_to_string(repo().join("fixtures/store/servicey/bundle.json")).unwrap()).unwrap();
    assert!(html.starts_with("<!DOCTYPE html>"));
    for p in &bundle.policies {
        assert!(html.contains(&p.policy_id), "{} missing", p.policy_id);
    }
}

#[test]
fn eval_with_no_items_reports_zero() {
    let s = Scratch::new();
    let out = s.run(&[
        "eval",
        "--bundle",
        &fixture("fixtures/store/servicey/bundle.json"),
        "--fixtures",
        &fixture("fixtures/eval/empty.json"),
    ]);
    assert!(out.status.success());
    let report = &stdout_json(&out)["report"];
    assert_eq!(report["total_items"], 0);
    assert_eq!(report["total_mismatches"], 0);
    assert_eq!(report["mismatches"], Value::Array(vec![]));
}

#[test]
fn annotate_in_strict_replay_reproduces_the_fixture_bundle() {
    let s = Scratch::new();
    let out = s.run(&["annotate", "--contract", "servicey", "--persona", &fixture("fixtures/personas/buyer.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["provider_calls"], 0);
    let frozen = AnnotationBundle::from_json(&std::fs::read_to_string(repo().join("fixtures/store/servicey/bundle.json")).unwrap()).unwrap();
    assert_eq!(v["content_hash"], frozen.content_hash.as_str());
}
