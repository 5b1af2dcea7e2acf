//! Command-line front end: one subcommand per pipeline stage plus `run`.
//! Every configuration key has a flag; flags beat the config file, which
//! beats `TCMAP_*` environment variables, which beat defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{resolve_config, ConfigLayer, PipelineConfig};
use crate::error::Result;
use crate::stages::Stage;

#[derive(Debug, Parser)]
#[command(
    name = "tcmap",
    version,
    about = "Task-level transaction-cost mapping over occupational task tables",
    after_help = "Exit codes: 0 success, 1 configuration error, 2 data error, 3 transport exhaustion."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse O*NET files, filter occupations, and write the task table.
    Ingest,
    /// Score every unique task text through the configured backend.
    Score,
    /// Join scores and compute occupation metrics and group headlines.
    Aggregate,
    /// Run the clinician vs non-clinician comparison battery.
    Analyze,
    /// Emit the checksummed summary pack.
    Report,
    /// All stages in order.
    Run,
}

impl Command {
    pub fn stage(&self) -> Stage {
        match self {
            Command::Ingest => Stage::Ingest,
            Command::Score => Stage::Score,
            Command::Aggregate => Stage::Aggregate,
            Command::Analyze => Stage::Analyze,
            Command::Report => Stage::Report,
            Command::Run => Stage::Run,
        }
    }
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Config file in `key = value` format.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// O*NET task statements file (tab-delimited).
    #[arg(long, global = true, value_name = "FILE")]
    pub statements: Option<PathBuf>,
    /// O*NET task ratings file (tab-delimited).
    #[arg(long, global = true, value_name = "FILE")]
    pub ratings: Option<PathBuf>,
    /// Output directory for stage files and the pack.
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Score cache file (defaults to <out_dir>/score_cache.jsonl).
    #[arg(long, global = true, value_name = "FILE")]
    pub cache_path: Option<PathBuf>,
    /// Scoring backend: mock or remote.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Remote endpoint base URL.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Remote deployment (model) name.
    #[arg(long, global = true)]
    pub deployment: Option<String>,
    /// Remote API version.
    #[arg(long, global = true)]
    pub api_version: Option<String>,
    /// Schema repair attempts per task (including the first request).
    #[arg(long, global = true)]
    pub max_attempts: Option<u32>,
    #[arg(long, global = true)]
    pub request_timeout_secs: Option<u64>,
    /// Concurrent scoring requests.
    #[arg(long, global = true)]
    pub max_in_flight: Option<u32>,
    #[arg(long, global = true)]
    pub backoff_base_ms: Option<u64>,
    #[arg(long, global = true)]
    pub backoff_multiplier: Option<f64>,
    #[arg(long, global = true)]
    pub max_output_tokens: Option<u32>,
    /// Comma-separated SOC prefixes to retain, e.g. "29-,31-".
    #[arg(long, global = true)]
    pub include_prefixes: Option<String>,
    /// Comma-separated prefix=group rules, e.g. "29-=clinician,31-=non_clinician".
    #[arg(long, global = true)]
    pub role_rules: Option<String>,
    /// Comma-separated soc=group overrides.
    #[arg(long, global = true)]
    pub role_overrides: Option<String>,
    /// Explicit friction-map TCI cut (default: median).
    #[arg(long, global = true)]
    pub tci_cut: Option<f64>,
    /// Explicit friction-map dispersion cut (default: median).
    #[arg(long, global = true)]
    pub sd_cut: Option<f64>,
    /// Mann-Whitney p-value path: auto, exact, or approx.
    #[arg(long, global = true)]
    pub stats_method: Option<String>,
    /// Group headline pooling: pooled or occupation_mean.
    #[arg(long, global = true)]
    pub headline_mode: Option<String>,
    /// Also emit a static frictionmap.svg scatter.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub svg: Option<bool>,
}

impl Overrides {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            statements_file: self.statements.clone(),
            ratings_file: self.ratings.clone(),
            out_dir: self.out_dir.clone(),
            cache_path: self.cache_path.clone(),
            backend: self.backend.clone(),
            endpoint: self.endpoint.clone(),
            deployment: self.deployment.clone(),
            api_version: self.api_version.clone(),
            max_attempts: self.max_attempts,
            request_timeout_secs: self.request_timeout_secs,
            max_in_flight: self.max_in_flight,
            backoff_base_ms: self.backoff_base_ms,
            backoff_multiplier: self.backoff_multiplier,
            max_output_tokens: self.max_output_tokens,
            include_prefixes: self.include_prefixes.clone(),
            role_rules: self.role_rules.clone(),
            role_overrides: self.role_overrides.clone(),
            tci_cut: self.tci_cut,
            sd_cut: self.sd_cut,
            stats_method: self.stats_method.clone(),
            headline_mode: self.headline_mode.clone(),
            svg: self.svg,
        }
    }

    pub fn resolve(&self) -> Result<PipelineConfig> {
        resolve_config(self.layer(), self.config.as_deref(), &|key| {
            std::env::var(key).ok()
        })
    }
}
