//! The five pipeline stages and their interchange files.
//!
//! ingest  : raw O*NET files            -> task_table.tsv + ingest_meta.json
//! score   : task_table.tsv (+ cache)   -> corpus.json
//! aggregate: task_table.tsv + corpus   -> metrics.json + metrics.csv + headline.csv
//! analyze : metrics.json               -> tests.csv
//! report  : all of the above           -> pack/ (atomic, checksummed)
//!
//! Every stage reads only documented files from the output directory, so the
//! expensive scoring step is checkpointed and each artifact is auditable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use tcmap_core::aggregate::{
    aggregate_all, group_headline_with_mode, join_scores, GroupHeadline, OccupationMetrics,
};
use tcmap_core::friction::{median_thresholds, quadrant_classify, ThresholdRule, Thresholds};
use tcmap_core::ingest::{
    build_task_table, dedup_tasks, parse_task_ratings, parse_task_statements, parse_task_table,
    whitespace_twins, write_task_table, RoleGroup, SocCode, TaskOccupationRow,
};
use tcmap_core::scorer::{ScoreBackend, ScoredCorpus};
use tcmap_core::stats::compare_groups_with;

use crate::backend::build_backend;
use crate::cache::FileCache;
use crate::config::{provenance_snapshot, PipelineConfig};
use crate::corpus::{read_corpus, score_corpus, write_corpus};
use crate::error::{PipelineError, Result};
use crate::pack::{
    emit_summary_pack, sha256_hex, write_headline_csv, write_metrics_csv, write_tests_csv,
    PackInputs, Provenance, ProvenanceCounts, ProvenanceInputs, SummaryPack,
};

pub const TASK_TABLE_FILE: &str = "task_table.tsv";
pub const INGEST_META_FILE: &str = "ingest_meta.json";
pub const CORPUS_FILE: &str = "corpus.json";
pub const METRICS_JSON_FILE: &str = "metrics.json";
pub const METRICS_CSV_FILE: &str = "metrics.csv";
pub const HEADLINE_CSV_FILE: &str = "headline.csv";
pub const TESTS_CSV_FILE: &str = "tests.csv";
pub const PACK_DIR: &str = "pack";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Score,
    Aggregate,
    Analyze,
    Report,
    Run,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Score => "score",
            Stage::Aggregate => "aggregate",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
            Stage::Run => "run",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: &'static str,
    pub input_records: usize,
    pub output_records: usize,
    pub duration_ms: u128,
    pub warnings: Vec<String>,
}

impl std::fmt::Display for StageReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "stage={} input_records={} output_records={} duration_ms={} warnings={}",
            self.stage,
            self.input_records,
            self.output_records,
            self.duration_ms,
            self.warnings.len()
        )
    }
}

/// Sidecar with input checksums and parse diagnostics, consumed by `report`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestMeta {
    pub statements_file: String,
    pub statements_sha256: String,
    pub ratings_file: String,
    pub ratings_sha256: String,
    pub statement_rows: usize,
    pub rating_rows: usize,
    pub issues: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetricsFile {
    metrics: Vec<OccupationMetrics>,
    exclusions: BTreeMap<SocCode, u32>,
}

fn require_file(path: &Path, produced_by: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::data(format!(
            "{} does not exist; run `{produced_by}` first",
            path.display()
        )))
    }
}

fn read_utf8(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::io("cannot read", path, e))
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn run_stage(stage: Stage, config: &PipelineConfig) -> Result<Vec<StageReport>> {
    match stage {
        Stage::Ingest => Ok(vec![run_ingest(config)?]),
        Stage::Score => Ok(vec![run_score(config)?]),
        Stage::Aggregate => Ok(vec![run_aggregate(config)?]),
        Stage::Analyze => Ok(vec![run_analyze(config)?]),
        Stage::Report => Ok(vec![run_report(config)?]),
        Stage::Run => Ok(vec![
            run_ingest(config)?,
            run_score(config)?,
            run_aggregate(config)?,
            run_analyze(config)?,
            run_report(config)?,
        ]),
    }
}

pub fn run_ingest(config: &PipelineConfig) -> Result<StageReport> {
    let started = Instant::now();
    let statements_path = config.statements_file()?;
    let ratings_path = config.ratings_file()?;

    let statements_raw = read_utf8(statements_path)?;
    let ratings_raw = read_utf8(ratings_path)?;

    let statements = parse_task_statements(&statements_raw)
        .map_err(|e| PipelineError::data(format!("statements file: {e}")))?;
    let ratings = parse_task_ratings(&ratings_raw)
        .map_err(|e| PipelineError::data(format!("ratings file: {e}")))?;

    let table = build_task_table(&statements.rows, &ratings.rows, &config.filter)
        .map_err(|e| PipelineError::data(e.to_string()))?;

    let mut issues = Vec::new();
    for issue in &statements.issues {
        issues.push(format!("statements line {}: {}", issue.line, issue.message));
    }
    for issue in &ratings.issues {
        issues.push(format!("ratings line {}: {}", issue.line, issue.message));
    }

    let dedup = dedup_tasks(&table);
    let mut warnings = Vec::new();
    for (a, b) in whitespace_twins(&dedup.unique_tasks) {
        warnings.push(format!(
            "task keys {a} and {b} differ only by surrounding whitespace"
        ));
    }

    let meta = IngestMeta {
        statements_file: statements_path.display().to_string(),
        statements_sha256: sha256_hex(statements_raw.as_bytes()),
        ratings_file: ratings_path.display().to_string(),
        ratings_sha256: sha256_hex(ratings_raw.as_bytes()),
        statement_rows: statements.rows.len(),
        rating_rows: ratings.rows.len(),
        issues: issues.clone(),
        warnings: warnings.clone(),
    };

    let table_text = write_task_table(&table);
    crate::pack::write_file_atomic(&config.out_dir.join(TASK_TABLE_FILE), table_text.as_bytes())?;
    let meta_json = serde_json::to_string_pretty(&meta)
        .map_err(|e| PipelineError::data(format!("cannot serialise ingest metadata: {e}")))?;
    crate::pack::write_file_atomic(
        &config.out_dir.join(INGEST_META_FILE),
        format!("{meta_json}\n").as_bytes(),
    )?;

    let mut all_warnings = issues;
    all_warnings.extend(warnings);
    Ok(StageReport {
        stage: "ingest",
        input_records: meta.statement_rows + meta.rating_rows,
        output_records: table.len(),
        duration_ms: started.elapsed().as_millis(),
        warnings: all_warnings,
    })
}

fn load_table(config: &PipelineConfig) -> Result<Vec<TaskOccupationRow>> {
    let path = config.out_dir.join(TASK_TABLE_FILE);
    require_file(&path, "ingest")?;
    parse_task_table(&read_utf8(&path)?).map_err(|e| PipelineError::data(e.to_string()))
}

pub fn run_score(config: &PipelineConfig) -> Result<StageReport> {
    let backend = build_backend(config)?;
    let mut report = run_score_with_backend(config, backend.as_score_backend(), backend.is_mock())?;
    if let crate::backend::Backend::Remote(remote) = &backend {
        let retries = remote.retries_made();
        if retries > 0 {
            report
                .warnings
                .push(format!("{retries} transport retry(ies) during scoring"));
        }
    }
    Ok(report)
}

/// Score with an explicit backend; split out so tests can wrap the backend in
/// a recording shim. `fixed_clock` stamps scores with time 0 instead of wall
/// time so mock runs are byte-reproducible.
pub fn run_score_with_backend(
    config: &PipelineConfig,
    backend: &dyn ScoreBackend,
    fixed_clock: bool,
) -> Result<StageReport> {
    let started = Instant::now();
    let table = load_table(config)?;
    let dedup = dedup_tasks(&table);

    let cache = FileCache::open(&config.cache_path)?;
    let mut warnings = Vec::new();
    if cache.truncated_tail() {
        warnings.push(format!(
            "cache {} ended with a truncated record, ignored as an interrupted write",
            config.cache_path.display()
        ));
    }

    let scored_at = if fixed_clock { 0 } else { now_unix() };
    let run = score_corpus(
        &dedup.unique_tasks,
        backend,
        &cache,
        &config.policy,
        scored_at,
    )?;
    if !run.corpus.failures.is_empty() {
        warnings.push(format!(
            "{} task(s) exhausted the repair budget and are excluded from aggregation",
            run.corpus.failures.len()
        ));
    }

    write_corpus(&config.out_dir.join(CORPUS_FILE), &run.corpus)?;
    Ok(StageReport {
        stage: "score",
        input_records: table.len(),
        output_records: run.corpus.scores.len() + run.corpus.failures.len(),
        duration_ms: started.elapsed().as_millis(),
        warnings,
    })
}

pub fn run_aggregate(config: &PipelineConfig) -> Result<StageReport> {
    let started = Instant::now();
    let table = load_table(config)?;
    let corpus_path = config.out_dir.join(CORPUS_FILE);
    require_file(&corpus_path, "score")?;
    let corpus = read_corpus(&corpus_path)?;

    let join = join_scores(&table, &corpus).map_err(|e| PipelineError::data(e.to_string()))?;
    let metrics = aggregate_all(&join.rows, &join.exclusions);

    let mut headlines: Vec<GroupHeadline> = Vec::new();
    for group in [RoleGroup::Clinician, RoleGroup::NonClinician] {
        if join.rows.iter().any(|r| r.role_group == group) {
            headlines.push(
                group_headline_with_mode(&join.rows, &metrics, group, config.headline_mode)
                    .map_err(|e| PipelineError::data(e.to_string()))?,
            );
        }
    }

    let metrics_file = MetricsFile {
        metrics: metrics.clone(),
        exclusions: join.exclusions.clone(),
    };
    let json = serde_json::to_string_pretty(&metrics_file)
        .map_err(|e| PipelineError::data(format!("cannot serialise metrics: {e}")))?;
    crate::pack::write_file_atomic(
        &config.out_dir.join(METRICS_JSON_FILE),
        format!("{json}\n").as_bytes(),
    )?;
    crate::pack::write_file_atomic(
        &config.out_dir.join(METRICS_CSV_FILE),
        write_metrics_csv(&metrics).as_bytes(),
    )?;
    crate::pack::write_file_atomic(
        &config.out_dir.join(HEADLINE_CSV_FILE),
        write_headline_csv(&headlines).as_bytes(),
    )?;

    let mut warnings = Vec::new();
    let excluded_total: u32 = join.exclusions.values().sum();
    if excluded_total > 0 {
        warnings.push(format!(
            "{excluded_total} task-occupation row(s) excluded over {} occupation(s)",
            join.exclusions.len()
        ));
    }
    Ok(StageReport {
        stage: "aggregate",
        input_records: table.len(),
        output_records: metrics.len(),
        duration_ms: started.elapsed().as_millis(),
        warnings,
    })
}

fn load_metrics(config: &PipelineConfig) -> Result<MetricsFile> {
    let path = config.out_dir.join(METRICS_JSON_FILE);
    require_file(&path, "aggregate")?;
    serde_json::from_str(&read_utf8(&path)?)
        .map_err(|e| PipelineError::data(format!("metrics {} is invalid: {e}", path.display())))
}

pub fn run_analyze(config: &PipelineConfig) -> Result<StageReport> {
    let started = Instant::now();
    let metrics_file = load_metrics(config)?;
    let results = compare_groups_with(&metrics_file.metrics, config.stats_method)
        .map_err(|e| PipelineError::data(e.to_string()))?;
    crate::pack::write_file_atomic(
        &config.out_dir.join(TESTS_CSV_FILE),
        write_tests_csv(&results).as_bytes(),
    )?;
    Ok(StageReport {
        stage: "analyze",
        input_records: metrics_file.metrics.len(),
        output_records: results.len(),
        duration_ms: started.elapsed().as_millis(),
        warnings: Vec::new(),
    })
}

fn resolve_thresholds(config: &PipelineConfig, metrics: &[OccupationMetrics]) -> Thresholds {
    let medians = median_thresholds(metrics);
    match (config.tci_cut, config.sd_cut) {
        (None, None) => medians,
        (tci, sd) => Thresholds {
            tci_cut: tci.unwrap_or(medians.tci_cut),
            sd_cut: sd.unwrap_or(medians.sd_cut),
            rule: ThresholdRule::Explicit,
        },
    }
}

pub fn run_report(config: &PipelineConfig) -> Result<StageReport> {
    let started = Instant::now();
    let out = &config.out_dir;

    let meta_path = out.join(INGEST_META_FILE);
    require_file(&meta_path, "ingest")?;
    let meta: IngestMeta = serde_json::from_str(&read_utf8(&meta_path)?)
        .map_err(|e| PipelineError::data(format!("ingest metadata is invalid: {e}")))?;

    let corpus_path = out.join(CORPUS_FILE);
    require_file(&corpus_path, "score")?;
    let corpus: ScoredCorpus = read_corpus(&corpus_path)?;

    let metrics_file = load_metrics(config)?;
    for file in [METRICS_CSV_FILE, HEADLINE_CSV_FILE] {
        require_file(&out.join(file), "aggregate")?;
    }
    require_file(&out.join(TESTS_CSV_FILE), "analyze")?;

    let thresholds = resolve_thresholds(config, &metrics_file.metrics);
    let points = quadrant_classify(&metrics_file.metrics, &thresholds);

    let table = load_table(config)?;
    let mut warnings = meta.issues.clone();
    warnings.extend(meta.warnings.clone());
    let provenance = Provenance {
        inputs: ProvenanceInputs {
            statements_file: meta.statements_file.clone(),
            statements_sha256: meta.statements_sha256.clone(),
            ratings_file: meta.ratings_file.clone(),
            ratings_sha256: meta.ratings_sha256.clone(),
        },
        config: provenance_snapshot(config),
        backend_id: corpus.backend_id.clone(),
        counts: ProvenanceCounts {
            statement_rows: meta.statement_rows,
            rating_rows: meta.rating_rows,
            parse_issues: meta.issues.len(),
            table_rows: table.len(),
            unique_tasks: corpus.scores.len() + corpus.failures.len(),
            scored_tasks: corpus.scores.len(),
            failed_tasks: corpus.failures.len(),
            occupations: metrics_file.metrics.len(),
            excluded_rows_by_occupation: metrics_file
                .exclusions
                .iter()
                .map(|(soc, count)| (soc.as_str().to_string(), *count))
                .collect(),
        },
        warnings,
    };

    let metrics_csv = read_utf8(&out.join(METRICS_CSV_FILE))?;
    let headline_csv = read_utf8(&out.join(HEADLINE_CSV_FILE))?;
    let tests_csv = read_utf8(&out.join(TESTS_CSV_FILE))?;

    let pack: SummaryPack = emit_summary_pack(
        &out.join(PACK_DIR),
        &PackInputs {
            metrics_csv: &metrics_csv,
            headline_csv: &headline_csv,
            tests_csv: &tests_csv,
            points: &points,
            thresholds,
            provenance: &provenance,
            svg: config.svg,
        },
    )?;

    Ok(StageReport {
        stage: "report",
        input_records: metrics_file.metrics.len(),
        // Manifest entries plus the manifest itself.
        output_records: pack.files.len() + 1,
        duration_ms: started.elapsed().as_millis(),
        warnings: Vec::new(),
    })
}

/// Directory of the emitted pack for a given configuration.
pub fn pack_dir(config: &PipelineConfig) -> PathBuf {
    config.out_dir.join(PACK_DIR)
}
