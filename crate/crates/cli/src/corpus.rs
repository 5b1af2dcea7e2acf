//! Scoring a deduplicated corpus against a backend with a cache in front.
//!
//! Cache hits never touch the backend. Misses are scored by up to
//! `max_in_flight` worker threads pulling from a shared queue; every accepted
//! score is persisted to the cache before it counts as included, so an
//! interrupted run resumes where it stopped. Results are keyed by task key
//! and therefore independent of completion order.

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use tcmap_core::ingest::TaskKey;
use tcmap_core::scorer::{
    score_task, ScoreBackend, ScoreError, ScoreOutcome, ScoredCorpus, ScorerPolicy,
};

use crate::cache::ScoreCache;
use crate::error::{PipelineError, Result};

#[derive(Debug)]
pub struct CorpusRun {
    pub corpus: ScoredCorpus,
    pub cache_hits: usize,
    pub backend_calls_scored: usize,
}

pub fn score_corpus(
    unique_tasks: &[(TaskKey, String)],
    backend: &dyn ScoreBackend,
    cache: &dyn ScoreCache,
    policy: &ScorerPolicy,
    scored_at: u64,
) -> Result<CorpusRun> {
    policy
        .validate()
        .map_err(|e| PipelineError::config(e.to_string()))?;

    let mut corpus = ScoredCorpus::new(backend.id(), policy);
    let mut misses: Vec<&(TaskKey, String)> = Vec::new();
    let mut cache_hits = 0usize;
    for entry in unique_tasks {
        match cache.get(&entry.0) {
            Some(score) => {
                cache_hits += 1;
                corpus.scores.insert(entry.0.clone(), score);
            }
            None => misses.push(entry),
        }
    }

    if misses.is_empty() {
        return Ok(CorpusRun {
            corpus,
            cache_hits,
            backend_calls_scored: 0,
        });
    }

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let results: Mutex<(ScoredCorpus, Option<PipelineError>)> = Mutex::new((corpus, None));
    let workers = (policy.max_in_flight as usize).min(misses.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::SeqCst);
                let Some((key, text)) = misses.get(index) else {
                    break;
                };
                match score_task(text, backend, policy, scored_at) {
                    Ok(ScoreOutcome::Scored(score)) => {
                        debug_assert_eq!(&score.task_key, key);
                        // Persist before inclusion; a put failure stops the run.
                        if let Err(e) = cache.put(&score) {
                            stop.store(true, Ordering::SeqCst);
                            let mut guard = results.lock().unwrap();
                            guard.1.get_or_insert(e);
                            break;
                        }
                        let mut guard = results.lock().unwrap();
                        guard.0.scores.insert(score.task_key.clone(), score);
                    }
                    Ok(ScoreOutcome::Failed(failure)) => {
                        let mut guard = results.lock().unwrap();
                        guard.0.failures.insert(failure.task_key.clone(), failure);
                    }
                    Err(error) => {
                        stop.store(true, Ordering::SeqCst);
                        let mut guard = results.lock().unwrap();
                        guard.1.get_or_insert(match error {
                            ScoreError::Transport(e) => {
                                PipelineError::transport(format!("scoring '{text}' failed: {e}"))
                            }
                            other => {
                                PipelineError::data(format!("scoring '{text}' failed: {other}"))
                            }
                        });
                        break;
                    }
                }
            });
        }
    });

    let (corpus, error) = results.into_inner().unwrap();
    if let Some(error) = error {
        return Err(error);
    }
    let scored_now = corpus.scores.len() - cache_hits;
    Ok(CorpusRun {
        corpus,
        cache_hits,
        backend_calls_scored: scored_now,
    })
}

/// Deterministic serialisation of a scored corpus (BTreeMap-backed, so key
/// order is stable).
pub fn write_corpus(path: &Path, corpus: &ScoredCorpus) -> Result<()> {
    let json = serde_json::to_string_pretty(corpus)
        .map_err(|e| PipelineError::data(format!("cannot serialise corpus: {e}")))?;
    crate::pack::write_file_atomic(path, format!("{json}\n").as_bytes())
}

pub fn read_corpus(path: &Path) -> Result<ScoredCorpus> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::io("cannot read corpus", path, e))?;
    serde_json::from_str(&content)
        .map_err(|e| PipelineError::data(format!("corpus {} is invalid: {e}", path.display())))
}
