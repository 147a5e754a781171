//! Layered configuration: command-line flags override environment variables,
//! which override the TOML file, which overrides built-in defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use tosread_core::corpus::ChunkConfig;
use tosread_core::gateway::{GatewayMode, GatewaySettings};
use tosread_core::meter::Palette;
use tosread_service::ServiceConfig;

use crate::CliError;

pub const DEFAULT_CONFIG_FILE: &str = "tosread.toml";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_PORT: u16 = 8080;

pub const ENV_API_KEY: &str = "PROVIDER_API_KEY";
pub const ENV_BASE_URL: &str = "PROVIDER_BASE_URL";
pub const ENV_MODEL_ID: &str = "MODEL_ID";
pub const ENV_EMBED_MODEL_ID: &str = "EMBED_MODEL_ID";
pub const ENV_GATEWAY_MODE: &str = "GATEWAY_MODE";
pub const ENV_CACHE_DIR: &str = "CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    /// OpenAI-compatible HTTP endpoints.
    #[default]
    Http,
    /// Local heuristic completions and hashed embeddings.
    Offline,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayFile {
    pub mode: Option<GatewayMode>,
    pub provider: Option<ProviderKind>,
    pub model_id: Option<String>,
    pub embed_model_id: Option<String>,
    pub dimension: Option<usize>,
    pub max_in_flight: Option<usize>,
    pub scenario_temperature: Option<f64>,
    pub cache_dir: Option<PathBuf>,
    pub base_url: Option<String>,
    pub overrides: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreFile {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingFile {
    pub target_chars: Option<usize>,
    pub max_chars: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalFile {
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceFile {
    pub port: Option<u16>,
    pub preview_limit: Option<usize>,
}

/// The on-disk schema, shared by every command including `serve`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub gateway: GatewayFile,
    pub store: StoreFile,
    pub chunking: ChunkingFile,
    pub retrieval: RetrievalFile,
    pub palette: Option<Palette>,
    pub service: ServiceFile,
}

impl FileConfig {
    pub fn parse(raw: &str) -> Result<Self, CliError> {
        toml::from_str(raw).map_err(|e| CliError::validation(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&raw)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file (default: ./tosread.toml when present).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding corpora, bundles, indexes and event logs.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Replay cache directory.
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// record | replay | strict-replay
    #[arg(long, global = true)]
    pub mode: Option<GatewayMode>,
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderKind>,
    #[arg(long, global = true)]
    pub model_id: Option<String>,
    #[arg(long, global = true)]
    pub embed_model_id: Option<String>,
    #[arg(long, global = true)]
    pub dimension: Option<usize>,
    #[arg(long, global = true)]
    pub max_in_flight: Option<usize>,
    #[arg(long, global = true)]
    pub base_url: Option<String>,
    /// JSON list of canned completions for the offline provider.
    #[arg(long, global = true)]
    pub overrides: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub gateway: GatewaySettings,
    pub provider: ProviderKind,
    pub cache_dir: PathBuf,
    pub base_url: String,
    pub api_key: Option<String>,
    pub overrides: Option<PathBuf>,
    pub store_dir: PathBuf,
    pub chunking: ChunkConfig,
    pub service: ServiceConfig,
    pub port: u16,
}

fn env_parsed<T: FromStr>(env: &dyn Fn(&str) -> Option<String>, name: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    env(name)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|e| CliError::validation(format!("{name}: {e}"))))
        .transpose()
}

impl Config {
    /// Reads the config file named by the flags, or the default file when it
    /// exists, then layers flags and environment on top.
    pub fn load(flags: &GlobalArgs, env: &dyn Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None if Path::new(DEFAULT_CONFIG_FILE).is_file() => FileConfig::load(Path::new(DEFAULT_CONFIG_FILE))?,
            None => FileConfig::default(),
        };
        Self::resolve(flags, env, &file)
    }

    pub fn resolve(flags: &GlobalArgs, env: &dyn Fn(&str) -> Option<String>, file: &FileConfig) -> Result<Self, CliError> {
        let defaults = GatewaySettings::default();
        let g = &file.gateway;
        let env_str = |name: &str| env(name).filter(|v| !v.is_empty());

        let gateway = GatewaySettings {
            mode: flags
                .mode
                .or(env_parsed(env, ENV_GATEWAY_MODE)?)
                .or(g.mode)
                .unwrap_or(defaults.mode),
            model_id: flags
                .model_id
                .clone()
                .or_else(|| env_str(ENV_MODEL_ID))
                .or_else(|| g.model_id.clone())
                .unwrap_or(defaults.model_id),
            embed_model_id: flags
                .embed_model_id
                .clone()
                .or_else(|| env_str(ENV_EMBED_MODEL_ID))
                .or_else(|| g.embed_model_id.clone())
                .unwrap_or(defaults.embed_model_id),
            dimension: flags.dimension.or(g.dimension).unwrap_or(defaults.dimension),
            max_in_flight: flags.max_in_flight.or(g.max_in_flight).unwrap_or(defaults.max_in_flight),
            scenario_temperature: g.scenario_temperature.unwrap_or(defaults.scenario_temperature),
        };
        if gateway.dimension == 0 {
            return Err(CliError::validation("embedding dimension must be positive"));
        }
        if gateway.max_in_flight == 0 {
            return Err(CliError::validation("max_in_flight must be positive"));
        }
        let chunking = ChunkConfig::new(
            file.chunking.target_chars.unwrap_or(ChunkConfig::default().target_chars),
            file.chunking.max_chars.unwrap_or(ChunkConfig::default().max_chars),
        )
        .map_err(|e| CliError::validation(e.to_string()))?;
        let service_defaults = ServiceConfig::default();
        let service = ServiceConfig {
            palette: file.palette.clone().unwrap_or(service_defaults.palette),
            k: file.retrieval.k.unwrap_or(service_defaults.k),
            preview_limit: file.service.preview_limit.unwrap_or(service_defaults.preview_limit),
        };
        if service.k == 0 {
            return Err(CliError::validation("retrieval k must be positive"));
        }
        Ok(Self {
            gateway,
            provider: flags.provider.or(g.provider).unwrap_or_default(),
            cache_dir: flags
                .cache_dir
                .clone()
                .or_else(|| env_str(ENV_CACHE_DIR).map(PathBuf::from))
                .or_else(|| g.cache_dir.clone())
                .unwrap_or_else(|| PathBuf::from("cache")),
            base_url: flags
                .base_url
                .clone()
                .or_else(|| env_str(ENV_BASE_URL))
                .or_else(|| g.base_url.clone())
                .unwrap_or_else(|| DEFAULT_BASE_URL.to_string()),
            api_key: env_str(ENV_API_KEY),
            overrides: flags.overrides.clone().or_else(|| g.overrides.clone()),
            store_dir: flags
                .store
                .clone()
                .or_else(|| file.store.dir.clone())
                .unwrap_or_else(|| PathBuf::from("store")),
            chunking,
            service,
            port: file.service.port.unwrap_or(DEFAULT_PORT),
        })
    }
}
