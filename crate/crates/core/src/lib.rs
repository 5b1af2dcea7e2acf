//! Core algorithms for task-level transaction-cost analysis of occupational
//! task tables: ingestion of O*NET-style task statements and ratings,
//! schema-constrained score validation with repair feedback, frequency-weighted
//! occupation aggregation, nonparametric group comparison, and friction-map
//! quadrant classification.
//!
//! This crate is `no_std` (with `alloc`) so the numeric and validation paths
//! stay free of IO; file formats, caching, backends, and the CLI live in the
//! companion `tcmap` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod aggregate;
pub mod friction;
pub mod ingest;
pub mod numfmt;
pub mod schema;
pub mod scorer;
pub mod stats;

pub use aggregate::{GroupHeadline, OccupationMetrics, ScoredRow};
pub use friction::{FrictionPoint, Quadrant, Thresholds};
pub use ingest::{
    HealthFilterConfig, RoleGroup, SocCode, TaskKey, TaskOccupationRow, WeightSource,
};
pub use schema::{CategoryCode, DriverScores, ScoreMeta, TaskScore, ValidationViolation};
pub use scorer::{ScoreBackend, ScoredCorpus, ScorerPolicy, ScoringFailure};
pub use stats::{SampleSplit, TestResult};
