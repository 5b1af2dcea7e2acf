//! Frequency-weighted aggregation of task scores to occupations.
//!
//! The occupation-level index is the weight-weighted mean task intensity
//! Σ w·intensity / Σ w; dispersion is the square root of the corresponding
//! weighted population variance; category shares are the fraction of total
//! frequency weight falling in each category. Tasks whose scoring failed are
//! excluded and counted, never imputed.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ingest::{RoleGroup, SocCode, TaskKey, TaskOccupationRow};
use crate::schema::CategoryCode;
use crate::scorer::ScoredCorpus;

/// A task-occupation row joined with its accepted score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRow {
    pub soc_code: SocCode,
    pub occupation_title: String,
    pub task_id: u64,
    pub task_key: TaskKey,
    pub weight: f64,
    pub role_group: RoleGroup,
    pub tc_category: CategoryCode,
    pub tc_intensity: u8,
}

/// Category shares in the fixed category order; all four categories are
/// always present, zero when unrepresented.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryShares([f64; 4]);

impl CategoryShares {
    pub fn get(&self, category: CategoryCode) -> f64 {
        self.0[category.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (CategoryCode, f64)> + '_ {
        CategoryCode::ALL
            .iter()
            .map(move |&c| (c, self.0[c.index()]))
    }
}

/// Per-occupation metrics over its successfully scored tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationMetrics {
    pub soc_code: SocCode,
    pub occupation_title: String,
    pub role_group: RoleGroup,
    /// Number of scored (occupation, task) rows behind the metrics.
    pub n_tasks: u32,
    pub total_weight: f64,
    pub tci: f64,
    pub tci_sd: f64,
    pub shares: CategoryShares,
    /// Rows dropped because their task's scoring failed.
    pub excluded_tasks: u32,
}

/// Pooled role-group summary computed across task-occupation rows, not as a
/// mean of occupation means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupHeadline {
    pub role_group: RoleGroup,
    pub weighted_mean_tci: f64,
    pub shares: CategoryShares,
}

/// How group headlines pool: over all task rows (default) or as an unweighted
/// mean of per-occupation metrics, for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadlineMode {
    PooledRows,
    OccupationMean,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AggregateError {
    /// A table row's key is in neither the score nor the failure map: the
    /// corpus is stale relative to the table.
    UnknownKey {
        task_key: TaskKey,
        soc_code: SocCode,
    },
    EmptyOccupation,
    EmptyGroup {
        role_group: RoleGroup,
    },
}

impl fmt::Display for AggregateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregateError::UnknownKey { task_key, soc_code } => write!(
                f,
                "task key {task_key} of occupation {soc_code} is in neither scores nor failures; \
                 the scored corpus is stale"
            ),
            AggregateError::EmptyOccupation => f.write_str("no rows for occupation"),
            AggregateError::EmptyGroup { role_group } => {
                write!(f, "no rows in group {role_group}")
            }
        }
    }
}

/// Result of joining scores back onto the task table.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinOutput {
    pub rows: Vec<ScoredRow>,
    /// Failure counts per occupation, including occupations whose every task
    /// failed (and which therefore have no rows at all).
    pub exclusions: BTreeMap<SocCode, u32>,
}

/// Join the scored corpus back onto the full task-occupation table. Rows
/// whose task failed are excluded and counted per occupation; a key missing
/// from both maps aborts.
pub fn join_scores(
    table: &[TaskOccupationRow],
    corpus: &ScoredCorpus,
) -> Result<JoinOutput, AggregateError> {
    let mut rows = Vec::with_capacity(table.len());
    let mut exclusions: BTreeMap<SocCode, u32> = BTreeMap::new();
    for row in table {
        if let Some(score) = corpus.scores.get(&row.task_key) {
            rows.push(ScoredRow {
                soc_code: row.soc_code.clone(),
                occupation_title: row.occupation_title.clone(),
                task_id: row.task_id,
                task_key: row.task_key.clone(),
                weight: row.weight,
                role_group: row.role_group,
                tc_category: score.tc_category,
                tc_intensity: score.tc_intensity,
            });
        } else if corpus.failures.contains_key(&row.task_key) {
            *exclusions.entry(row.soc_code.clone()).or_insert(0) += 1;
        } else {
            return Err(AggregateError::UnknownKey {
                task_key: row.task_key.clone(),
                soc_code: row.soc_code.clone(),
            });
        }
    }
    Ok(JoinOutput { rows, exclusions })
}

fn weight_sum(rows: &[&ScoredRow]) -> f64 {
    rows.iter().map(|r| r.weight).sum()
}

/// Σ w·intensity / Σ w over one occupation's scored rows.
pub fn weighted_tci(rows: &[&ScoredRow]) -> Result<f64, AggregateError> {
    if rows.is_empty() {
        return Err(AggregateError::EmptyOccupation);
    }
    let total = weight_sum(rows);
    let weighted: f64 = rows
        .iter()
        .map(|r| r.weight * f64::from(r.tc_intensity))
        .sum();
    Ok(weighted / total)
}

/// sqrt( Σ w·(intensity − TCI)² / Σ w ): the frequency-weighted population
/// standard deviation of intensities within one occupation.
pub fn weighted_tci_sd(rows: &[&ScoredRow]) -> Result<f64, AggregateError> {
    let mean = weighted_tci(rows)?;
    let total = weight_sum(rows);
    let variance: f64 = rows
        .iter()
        .map(|r| {
            let d = f64::from(r.tc_intensity) - mean;
            r.weight * d * d
        })
        .sum::<f64>()
        / total;
    // Guard against a tiny negative from rounding in the constant case.
    Ok(libm::sqrt(variance.max(0.0)))
}

/// Fraction of total frequency weight in each category; all four categories
/// present and summing to 1.
pub fn category_shares(rows: &[&ScoredRow]) -> Result<CategoryShares, AggregateError> {
    if rows.is_empty() {
        return Err(AggregateError::EmptyOccupation);
    }
    let total = weight_sum(rows);
    let mut shares = [0.0f64; 4];
    for row in rows {
        shares[row.tc_category.index()] += row.weight;
    }
    for share in &mut shares {
        *share /= total;
    }
    Ok(CategoryShares(shares))
}

/// Compute metrics for every occupation present in the scored rows, ordered
/// by SOC code. Occupations whose every task failed have no rows and are
/// omitted here; their exclusion counts stay visible in provenance.
pub fn aggregate_all(
    rows: &[ScoredRow],
    exclusions: &BTreeMap<SocCode, u32>,
) -> Vec<OccupationMetrics> {
    let mut by_occupation: BTreeMap<&SocCode, Vec<&ScoredRow>> = BTreeMap::new();
    for row in rows {
        by_occupation.entry(&row.soc_code).or_default().push(row);
    }
    by_occupation
        .into_iter()
        .map(|(soc, occ_rows)| {
            let tci = weighted_tci(&occ_rows).expect("occupation has rows");
            let tci_sd = weighted_tci_sd(&occ_rows).expect("occupation has rows");
            let shares = category_shares(&occ_rows).expect("occupation has rows");
            OccupationMetrics {
                soc_code: soc.clone(),
                occupation_title: occ_rows[0].occupation_title.clone(),
                role_group: occ_rows[0].role_group,
                n_tasks: occ_rows.len() as u32,
                total_weight: weight_sum(&occ_rows),
                tci,
                tci_sd,
                shares,
                excluded_tasks: exclusions.get(soc).copied().unwrap_or(0),
            }
        })
        .collect()
}

/// Pooled headline for one role group across all its task-occupation rows.
pub fn group_headline(
    rows: &[ScoredRow],
    group: RoleGroup,
) -> Result<GroupHeadline, AggregateError> {
    let group_rows: Vec<&ScoredRow> = rows.iter().filter(|r| r.role_group == group).collect();
    if group_rows.is_empty() {
        return Err(AggregateError::EmptyGroup { role_group: group });
    }
    Ok(GroupHeadline {
        role_group: group,
        weighted_mean_tci: weighted_tci(&group_rows)?,
        shares: category_shares(&group_rows)?,
    })
}

/// Headline under an explicit pooling mode. `OccupationMean` averages the
/// per-occupation metrics unweighted, for comparison against the pooled-rows
/// default.
pub fn group_headline_with_mode(
    rows: &[ScoredRow],
    metrics: &[OccupationMetrics],
    group: RoleGroup,
    mode: HeadlineMode,
) -> Result<GroupHeadline, AggregateError> {
    match mode {
        HeadlineMode::PooledRows => group_headline(rows, group),
        HeadlineMode::OccupationMean => {
            let in_group: Vec<&OccupationMetrics> =
                metrics.iter().filter(|m| m.role_group == group).collect();
            if in_group.is_empty() {
                return Err(AggregateError::EmptyGroup { role_group: group });
            }
            let n = in_group.len() as f64;
            let mut shares = [0.0f64; 4];
            for m in &in_group {
                for (category, share) in m.shares.iter() {
                    shares[category.index()] += share / n;
                }
            }
            Ok(GroupHeadline {
                role_group: group,
                weighted_mean_tci: in_group.iter().map(|m| m.tci).sum::<f64>() / n,
                shares: CategoryShares(shares),
            })
        }
    }
}

impl CategoryShares {
    /// Test/support constructor; production shares come from aggregation.
    pub fn from_values(values: [f64; 4]) -> Self {
        CategoryShares(values)
    }
}
