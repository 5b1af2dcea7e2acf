//! Layered pipeline configuration: flags > config file > environment >
//! defaults. The config file is plain `key = value` lines; environment keys
//! are the same names upper-cased with a `TCMAP_` prefix. Unknown keys are
//! rejected. The API credential is accepted from the environment only and is
//! never stored in the resolved snapshot.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use tcmap_core::aggregate::HeadlineMode;
use tcmap_core::ingest::{HealthFilterConfig, RoleGroup};
use tcmap_core::scorer::ScorerPolicy;
use tcmap_core::stats::MethodChoice;

use crate::error::{PipelineError, Result};

/// Environment variable carrying the backend credential.
pub const API_KEY_ENV: &str = "TCMAP_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Remote,
}

/// Fully resolved configuration; every stage runs off this snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub statements_file: Option<PathBuf>,
    pub ratings_file: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub cache_path: PathBuf,
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub deployment: Option<String>,
    pub api_version: Option<String>,
    pub policy: ScorerPolicy,
    pub filter: HealthFilterConfig,
    pub tci_cut: Option<f64>,
    pub sd_cut: Option<f64>,
    pub stats_method: MethodChoice,
    pub headline_mode: HeadlineMode,
    pub svg: bool,
}

impl PipelineConfig {
    pub fn statements_file(&self) -> Result<&Path> {
        self.statements_file
            .as_deref()
            .ok_or_else(|| PipelineError::config("statements_file is not set"))
    }

    pub fn ratings_file(&self) -> Result<&Path> {
        self.ratings_file
            .as_deref()
            .ok_or_else(|| PipelineError::config("ratings_file is not set"))
    }
}

/// One unresolved configuration layer. `None` means "not set here".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigLayer {
    pub statements_file: Option<PathBuf>,
    pub ratings_file: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub cache_path: Option<PathBuf>,
    pub backend: Option<String>,
    pub endpoint: Option<String>,
    pub deployment: Option<String>,
    pub api_version: Option<String>,
    pub max_attempts: Option<u32>,
    pub request_timeout_secs: Option<u64>,
    pub max_in_flight: Option<u32>,
    pub backoff_base_ms: Option<u64>,
    pub backoff_multiplier: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub include_prefixes: Option<String>,
    pub role_rules: Option<String>,
    pub role_overrides: Option<String>,
    pub tci_cut: Option<f64>,
    pub sd_cut: Option<f64>,
    pub stats_method: Option<String>,
    pub headline_mode: Option<String>,
    pub svg: Option<bool>,
}

pub const CONFIG_KEYS: [&str; 22] = [
    "statements_file",
    "ratings_file",
    "out_dir",
    "cache_path",
    "backend",
    "endpoint",
    "deployment",
    "api_version",
    "max_attempts",
    "request_timeout_secs",
    "max_in_flight",
    "backoff_base_ms",
    "backoff_multiplier",
    "max_output_tokens",
    "include_prefixes",
    "role_rules",
    "role_overrides",
    "tci_cut",
    "sd_cut",
    "stats_method",
    "headline_mode",
    "svg",
];

impl ConfigLayer {
    /// Merge: values in `self` win over `lower`.
    fn over(self, lower: ConfigLayer) -> ConfigLayer {
        macro_rules! pick {
            ($field:ident) => {
                self.$field.or(lower.$field)
            };
        }
        ConfigLayer {
            statements_file: pick!(statements_file),
            ratings_file: pick!(ratings_file),
            out_dir: pick!(out_dir),
            cache_path: pick!(cache_path),
            backend: pick!(backend),
            endpoint: pick!(endpoint),
            deployment: pick!(deployment),
            api_version: pick!(api_version),
            max_attempts: pick!(max_attempts),
            request_timeout_secs: pick!(request_timeout_secs),
            max_in_flight: pick!(max_in_flight),
            backoff_base_ms: pick!(backoff_base_ms),
            backoff_multiplier: pick!(backoff_multiplier),
            max_output_tokens: pick!(max_output_tokens),
            include_prefixes: pick!(include_prefixes),
            role_rules: pick!(role_rules),
            role_overrides: pick!(role_overrides),
            tci_cut: pick!(tci_cut),
            sd_cut: pick!(sd_cut),
            stats_method: pick!(stats_method),
            headline_mode: pick!(headline_mode),
            svg: pick!(svg),
        }
    }

    fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<()> {
        let bad_value = |what: &str| {
            PipelineError::config(format!("{origin}: {key} must be {what}, got '{value}'"))
        };
        match key {
            "statements_file" => self.statements_file = Some(PathBuf::from(value)),
            "ratings_file" => self.ratings_file = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "cache_path" => self.cache_path = Some(PathBuf::from(value)),
            "backend" => self.backend = Some(value.to_string()),
            "endpoint" => self.endpoint = Some(value.to_string()),
            "deployment" => self.deployment = Some(value.to_string()),
            "api_version" => self.api_version = Some(value.to_string()),
            "max_attempts" => {
                self.max_attempts = Some(value.parse().map_err(|_| bad_value("an integer"))?)
            }
            "request_timeout_secs" => {
                self.request_timeout_secs =
                    Some(value.parse().map_err(|_| bad_value("an integer"))?)
            }
            "max_in_flight" => {
                self.max_in_flight = Some(value.parse().map_err(|_| bad_value("an integer"))?)
            }
            "backoff_base_ms" => {
                self.backoff_base_ms = Some(value.parse().map_err(|_| bad_value("an integer"))?)
            }
            "backoff_multiplier" => {
                self.backoff_multiplier = Some(value.parse().map_err(|_| bad_value("a number"))?)
            }
            "max_output_tokens" => {
                self.max_output_tokens = Some(value.parse().map_err(|_| bad_value("an integer"))?)
            }
            "include_prefixes" => self.include_prefixes = Some(value.to_string()),
            "role_rules" => self.role_rules = Some(value.to_string()),
            "role_overrides" => self.role_overrides = Some(value.to_string()),
            "tci_cut" => self.tci_cut = Some(value.parse().map_err(|_| bad_value("a number"))?),
            "sd_cut" => self.sd_cut = Some(value.parse().map_err(|_| bad_value("a number"))?),
            "stats_method" => self.stats_method = Some(value.to_string()),
            "headline_mode" => self.headline_mode = Some(value.to_string()),
            "svg" => {
                self.svg = Some(match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(bad_value("true or false")),
                })
            }
            other => {
                return Err(PipelineError::config(format!(
                    "{origin}: unknown configuration key '{other}'"
                )))
            }
        }
        Ok(())
    }
}

/// Parse the `key = value` config file format. `#` starts a comment; blank
/// lines are ignored; unknown keys are errors.
pub fn parse_config_file(path: &Path, content: &str) -> Result<ConfigLayer> {
    let mut layer = ConfigLayer::default();
    for (i, raw_line) in content.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let origin = format!("{}:{}", path.display(), i + 1);
        let (key, value) = line.split_once('=').ok_or_else(|| {
            PipelineError::config(format!("{origin}: expected 'key = value', got '{line}'"))
        })?;
        layer.set(key.trim(), value.trim(), &origin)?;
    }
    Ok(layer)
}

/// Read the `TCMAP_<KEY>` environment layer through an injected lookup.
pub fn env_layer(lookup: &dyn Fn(&str) -> Option<String>) -> Result<ConfigLayer> {
    let mut layer = ConfigLayer::default();
    for key in CONFIG_KEYS {
        let var = format!("TCMAP_{}", key.to_uppercase());
        if let Some(value) = lookup(&var) {
            layer.set(key, &value, &format!("environment {var}"))?;
        }
    }
    Ok(layer)
}

fn parse_role_group(s: &str, origin: &str) -> Result<RoleGroup> {
    RoleGroup::parse(s).ok_or_else(|| {
        PipelineError::config(format!(
            "{origin}: role group must be 'clinician' or 'non_clinician', got '{s}'"
        ))
    })
}

fn parse_filter(layer: &ConfigLayer) -> Result<HealthFilterConfig> {
    let mut filter = HealthFilterConfig::default();
    if let Some(prefixes) = &layer.include_prefixes {
        filter.included_soc_prefixes = prefixes
            .split(',')
            .map(|p| p.trim().to_string())
            .filter(|p| !p.is_empty())
            .collect();
        if filter.included_soc_prefixes.is_empty() {
            return Err(PipelineError::config(
                "include_prefixes must name at least one SOC prefix",
            ));
        }
    }
    if let Some(rules) = &layer.role_rules {
        let mut role_map = Vec::new();
        for rule in rules.split(',').filter(|r| !r.trim().is_empty()) {
            let (prefix, group) = rule.split_once('=').ok_or_else(|| {
                PipelineError::config(format!(
                    "role_rules entries must look like 'prefix=group', got '{rule}'"
                ))
            })?;
            role_map.push((
                prefix.trim().to_string(),
                parse_role_group(group.trim(), "role_rules")?,
            ));
        }
        filter.role_map = role_map;
    }
    if let Some(overrides) = &layer.role_overrides {
        let mut map = BTreeMap::new();
        for entry in overrides.split(',').filter(|r| !r.trim().is_empty()) {
            let (soc, group) = entry.split_once('=').ok_or_else(|| {
                PipelineError::config(format!(
                    "role_overrides entries must look like 'soc=group', got '{entry}'"
                ))
            })?;
            map.insert(
                soc.trim().to_string(),
                parse_role_group(group.trim(), "role_overrides")?,
            );
        }
        filter.per_occupation_overrides = map;
    }
    Ok(filter)
}

/// Resolve the final configuration from the precedence chain
/// flags > file > environment > defaults, and validate it as a whole.
pub fn resolve_config(
    flags: ConfigLayer,
    config_file: Option<&Path>,
    env: &dyn Fn(&str) -> Option<String>,
) -> Result<PipelineConfig> {
    let file_layer = match config_file {
        Some(path) => {
            let content = std::fs::read_to_string(path).map_err(|e| {
                PipelineError::config(format!("cannot read config file {}: {e}", path.display()))
            })?;
            parse_config_file(path, &content)?
        }
        None => ConfigLayer::default(),
    };
    let merged = flags.over(file_layer).over(env_layer(env)?);

    let backend = match merged.backend.as_deref().unwrap_or("mock") {
        "mock" => BackendKind::Mock,
        "remote" => BackendKind::Remote,
        other => {
            return Err(PipelineError::config(format!(
                "backend must be 'mock' or 'remote', got '{other}'"
            )))
        }
    };
    let stats_method = match merged.stats_method.as_deref().unwrap_or("auto") {
        "auto" => MethodChoice::Auto,
        "exact" => MethodChoice::ForceExact,
        "approx" => MethodChoice::ForceApprox,
        other => {
            return Err(PipelineError::config(format!(
                "stats_method must be auto, exact, or approx, got '{other}'"
            )))
        }
    };
    let headline_mode = match merged.headline_mode.as_deref().unwrap_or("pooled") {
        "pooled" => HeadlineMode::PooledRows,
        "occupation_mean" => HeadlineMode::OccupationMean,
        other => {
            return Err(PipelineError::config(format!(
                "headline_mode must be pooled or occupation_mean, got '{other}'"
            )))
        }
    };

    let defaults = ScorerPolicy::default();
    let policy = ScorerPolicy {
        max_attempts: merged.max_attempts.unwrap_or(defaults.max_attempts),
        request_timeout_secs: merged
            .request_timeout_secs
            .unwrap_or(defaults.request_timeout_secs),
        max_in_flight: merged.max_in_flight.unwrap_or(defaults.max_in_flight),
        backoff_base_ms: merged.backoff_base_ms.unwrap_or(defaults.backoff_base_ms),
        backoff_multiplier: merged
            .backoff_multiplier
            .unwrap_or(defaults.backoff_multiplier),
        max_output_tokens: merged
            .max_output_tokens
            .unwrap_or(defaults.max_output_tokens),
    };
    policy
        .validate()
        .map_err(|e| PipelineError::config(e.to_string()))?;

    let filter = parse_filter(&merged)?;
    let out_dir = merged.out_dir.unwrap_or_else(|| PathBuf::from("tcmap_out"));
    let cache_path = merged
        .cache_path
        .unwrap_or_else(|| out_dir.join("score_cache.jsonl"));

    let config = PipelineConfig {
        statements_file: merged.statements_file,
        ratings_file: merged.ratings_file,
        out_dir,
        cache_path,
        backend,
        endpoint: merged.endpoint,
        deployment: merged.deployment,
        api_version: merged.api_version,
        policy,
        filter,
        tci_cut: merged.tci_cut,
        sd_cut: merged.sd_cut,
        stats_method,
        headline_mode,
        svg: merged.svg.unwrap_or(false),
    };

    if config.backend == BackendKind::Remote {
        for (field, name) in [
            (&config.endpoint, "endpoint"),
            (&config.deployment, "deployment"),
            (&config.api_version, "api_version"),
        ] {
            if field.is_none() {
                return Err(PipelineError::config(format!(
                    "backend=remote requires {name}"
                )));
            }
        }
        if env(API_KEY_ENV).is_none_or(|k| k.is_empty()) {
            return Err(PipelineError::config(format!(
                "backend=remote requires the credential in the {API_KEY_ENV} environment variable"
            )));
        }
    }

    Ok(config)
}

/// The configuration snapshot embedded in provenance. The credential is never
/// present. Knobs that cannot affect emitted content — concurrency and the
/// output/cache locations — are omitted so packs from equivalent runs stay
/// byte-identical; the input paths live in the provenance inputs block
/// alongside their checksums.
pub fn provenance_snapshot(config: &PipelineConfig) -> serde_json::Value {
    let mut value = serde_json::to_value(config).expect("config serialises");
    if let Some(top) = value.as_object_mut() {
        top.remove("out_dir");
        top.remove("cache_path");
        top.remove("statements_file");
        top.remove("ratings_file");
    }
    if let Some(policy) = value
        .get_mut("policy")
        .and_then(serde_json::Value::as_object_mut)
    {
        policy.remove("max_in_flight");
    }
    value
}
