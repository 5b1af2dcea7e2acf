//! Nonparametric inference over occupation-level metrics: two-sided
//! Mann-Whitney U (exact enumeration for small tie-free samples, otherwise a
//! tie-corrected normal approximation with continuity correction), Cliff's δ
//! effect sizes, and Benjamini-Hochberg step-up FDR adjustment.
//!
//! U is oriented so it counts clinician-over-non-clinician pairs with ties at
//! one half; positive δ therefore means higher values for the clinician
//! group, and δ = 2U/(n·m) − 1 holds by construction.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::aggregate::OccupationMetrics;
use crate::ingest::RoleGroup;
use crate::schema::CategoryCode;

/// Two samples at the occupation level: `x` holds clinician values, `y`
/// non-clinician values.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSplit {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl SampleSplit {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, StatsError> {
        if x.is_empty() || y.is_empty() {
            return Err(StatsError::EmptySample);
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(StatsError::NonFiniteValue);
        }
        Ok(SampleSplit { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StatsError {
    EmptySample,
    NonFiniteValue,
    OutOfRangeP { value: f64 },
    EmptyGroup { role_group: RoleGroup },
}

impl fmt::Display for StatsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatsError::EmptySample => f.write_str("both samples must be non-empty"),
            StatsError::NonFiniteValue => f.write_str("sample values must be finite"),
            StatsError::OutOfRangeP { value } => {
                write!(f, "p-value {value} is outside [0, 1]")
            }
            StatsError::EmptyGroup { role_group } => {
                write!(f, "group {role_group} has no occupations")
            }
        }
    }
}

/// How the two-sided p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwMethod {
    Exact,
    NormalApprox,
    /// All pooled values identical: p is 1 and U is n·m/2 by convention.
    Degenerate,
}

impl MwMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            MwMethod::Exact => "exact",
            MwMethod::NormalApprox => "normal_approx",
            MwMethod::Degenerate => "degenerate",
        }
    }
}

/// Caller preference for the p-value path. `Auto` uses exact enumeration for
/// tie-free pooled samples of at most 20 values. A forced exact path still
/// falls back to the approximation when ties or size make enumeration
/// invalid; the emitted method records what actually ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    #[default]
    Auto,
    ForceExact,
    ForceApprox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwResult {
    pub u: f64,
    pub p: f64,
    pub method: MwMethod,
}

const EXACT_POOLED_LIMIT: usize = 20;

struct PairCounts {
    wins: u64,
    ties: u64,
    losses: u64,
}

fn count_pairs(split: &SampleSplit) -> PairCounts {
    let mut counts = PairCounts {
        wins: 0,
        ties: 0,
        losses: 0,
    };
    for &xi in split.x() {
        for &yj in split.y() {
            if xi > yj {
                counts.wins += 1;
            } else if xi < yj {
                counts.losses += 1;
            } else {
                counts.ties += 1;
            }
        }
    }
    counts
}

fn pooled_has_ties(split: &SampleSplit) -> bool {
    let mut pooled: Vec<f64> = split.x().iter().chain(split.y()).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.windows(2).any(|w| w[0] == w[1])
}

/// Exact null distribution of U for tie-free samples: counts k-subsets of the
/// ranks 1..=n by rank sum, so `dist[u]` is the number of assignments with
/// that U value.
fn exact_u_distribution(nx: usize, ny: usize) -> Vec<u64> {
    let n = nx + ny;
    let min_sum = nx * (nx + 1) / 2;
    let max_sum = min_sum + nx * ny;
    let mut ways = alloc::vec![alloc::vec![0u64; max_sum + 1]; nx + 1];
    ways[0][0] = 1;
    for rank in 1..=n {
        for k in (1..=nx.min(rank)).rev() {
            for sum in (rank..=max_sum).rev() {
                ways[k][sum] += ways[k - 1][sum - rank];
            }
        }
    }
    (0..=nx * ny).map(|u| ways[nx][min_sum + u]).collect()
}

fn exact_two_sided_p(u: f64, nx: usize, ny: usize) -> f64 {
    let dist = exact_u_distribution(nx, ny);
    let total: f64 = dist.iter().map(|&c| c as f64).sum();
    // Tie-free U is an integer.
    let u_int = libm::round(u) as usize;
    let lower: f64 = dist[..=u_int].iter().map(|&c| c as f64).sum();
    let upper: f64 = dist[u_int..].iter().map(|&c| c as f64).sum();
    let one_sided = (lower / total).min(upper / total);
    (2.0 * one_sided).min(1.0)
}

/// Tie-corrected variance of U under the null; zero iff everything is tied.
fn normal_approx_p(u: f64, split: &SampleSplit) -> Option<f64> {
    let nx = split.x().len() as f64;
    let ny = split.y().len() as f64;
    let n = nx + ny;
    let mut pooled: Vec<f64> = split.x().iter().chain(split.y()).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j] == pooled[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let variance = nx * ny / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        return None;
    }
    let centered = u - nx * ny / 2.0;
    // Continuity correction: shrink the deviation by one half toward zero.
    let corrected = (libm::fabs(centered) - 0.5).max(0.0);
    let z = corrected / libm::sqrt(variance);
    // Two-sided tail of the standard normal.
    let p = libm::erfc(z / core::f64::consts::SQRT_2);
    Some(p.clamp(0.0, 1.0))
}

/// Two-sided Mann-Whitney U with automatic method selection.
pub fn mann_whitney_u(split: &SampleSplit) -> MwResult {
    mann_whitney_u_with(split, MethodChoice::Auto)
}

pub fn mann_whitney_u_with(split: &SampleSplit, choice: MethodChoice) -> MwResult {
    let nx = split.x().len();
    let ny = split.y().len();
    let counts = count_pairs(split);
    let u = counts.wins as f64 + counts.ties as f64 / 2.0;

    // Every pooled value identical: no ordering information at all, so U sits
    // at n·m/2 and p is 1 by convention.
    let first = split.x()[0];
    if split.x().iter().chain(split.y()).all(|&v| v == first) {
        return MwResult {
            u,
            p: 1.0,
            method: MwMethod::Degenerate,
        };
    }

    let ties = pooled_has_ties(split);
    let exact_valid = !ties && nx + ny <= EXACT_POOLED_LIMIT;
    let use_exact = match choice {
        MethodChoice::Auto | MethodChoice::ForceExact => exact_valid,
        MethodChoice::ForceApprox => false,
    };

    if use_exact {
        MwResult {
            u,
            p: exact_two_sided_p(u, nx, ny),
            method: MwMethod::Exact,
        }
    } else {
        match normal_approx_p(u, split) {
            Some(p) => MwResult {
                u,
                p,
                method: MwMethod::NormalApprox,
            },
            None => MwResult {
                u,
                p: 1.0,
                method: MwMethod::Degenerate,
            },
        }
    }
}

/// Cliff's δ: (#{x>y} − #{x<y}) / (n·m), in [−1, 1]. Positive values mean the
/// x (clinician) sample is stochastically larger.
pub fn cliffs_delta(split: &SampleSplit) -> f64 {
    let counts = count_pairs(split);
    let nm = (split.x().len() * split.y().len()) as f64;
    (counts.wins as f64 - counts.losses as f64) / nm
}

/// Benjamini-Hochberg step-up adjustment. Returns adjusted p-values in the
/// original input order; in sorted order they are monotone non-decreasing and
/// never below the raw values.
pub fn bh_adjust(pvals: &[f64]) -> Result<Vec<f64>, StatsError> {
    for &p in pvals {
        if !(0.0..=1.0).contains(&p) {
            return Err(StatsError::OutOfRangeP { value: p });
        }
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut adjusted = alloc::vec![0.0f64; m];
    let mut running_min = 1.0f64;
    for rank in (0..m).rev() {
        let index = order[rank];
        let scaled = pvals[index] * (m as f64 / (rank + 1) as f64);
        running_min = running_min.min(scaled.min(1.0));
        // Floor at the raw value: m/rank ≥ 1 makes adjusted ≥ raw exact in
        // real arithmetic; the max only undoes float rounding.
        adjusted[index] = running_min.max(pvals[index]);
    }
    Ok(adjusted)
}

/// Plain median; even-length samples average the two central order statistics.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// One row of the group-comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub variable: String,
    pub u: f64,
    pub p: f64,
    pub p_fdr: f64,
    pub delta: f64,
    /// Clinician-group median.
    pub median_x: f64,
    /// Non-clinician-group median.
    pub median_y: f64,
    pub method: MwMethod,
}

/// The six comparison variables in their table order.
pub const COMPARISON_VARIABLES: [&str; 6] = [
    "TCI",
    "share_BARGAIN_DECIDE",
    "share_SEARCH_INFO",
    "share_MONITOR_ENFORCE",
    "share_ADAPT_COORDINATE",
    "TCI_sd",
];

fn variable_value(metrics: &OccupationMetrics, variable: &str) -> f64 {
    match variable {
        "TCI" => metrics.tci,
        "TCI_sd" => metrics.tci_sd,
        "share_SEARCH_INFO" => metrics.shares.get(CategoryCode::SearchInfo),
        "share_BARGAIN_DECIDE" => metrics.shares.get(CategoryCode::BargainDecide),
        "share_MONITOR_ENFORCE" => metrics.shares.get(CategoryCode::MonitorEnforce),
        "share_ADAPT_COORDINATE" => metrics.shares.get(CategoryCode::AdaptCoordinate),
        other => unreachable!("unknown comparison variable {other}"),
    }
}

/// Run the six clinician-vs-non-clinician comparisons with one joint BH
/// adjustment across exactly these six tests.
pub fn compare_groups(metrics: &[OccupationMetrics]) -> Result<Vec<TestResult>, StatsError> {
    compare_groups_with(metrics, MethodChoice::Auto)
}

pub fn compare_groups_with(
    metrics: &[OccupationMetrics],
    choice: MethodChoice,
) -> Result<Vec<TestResult>, StatsError> {
    let clinician: Vec<&OccupationMetrics> = metrics
        .iter()
        .filter(|m| m.role_group == RoleGroup::Clinician)
        .collect();
    let non_clinician: Vec<&OccupationMetrics> = metrics
        .iter()
        .filter(|m| m.role_group == RoleGroup::NonClinician)
        .collect();
    if clinician.is_empty() {
        return Err(StatsError::EmptyGroup {
            role_group: RoleGroup::Clinician,
        });
    }
    if non_clinician.is_empty() {
        return Err(StatsError::EmptyGroup {
            role_group: RoleGroup::NonClinician,
        });
    }

    let mut partial = Vec::with_capacity(COMPARISON_VARIABLES.len());
    for variable in COMPARISON_VARIABLES {
        let x: Vec<f64> = clinician
            .iter()
            .map(|m| variable_value(m, variable))
            .collect();
        let y: Vec<f64> = non_clinician
            .iter()
            .map(|m| variable_value(m, variable))
            .collect();
        let split = SampleSplit::new(x, y)?;
        let mw = mann_whitney_u_with(&split, choice);
        partial.push((
            variable.to_string(),
            mw,
            cliffs_delta(&split),
            median(split.x()),
            median(split.y()),
        ));
    }

    let raw_p: Vec<f64> = partial.iter().map(|(_, mw, _, _, _)| mw.p).collect();
    let adjusted = bh_adjust(&raw_p)?;

    Ok(partial
        .into_iter()
        .zip(adjusted)
        .map(
            |((variable, mw, delta, median_x, median_y), p_fdr)| TestResult {
                variable,
                u: mw.u,
                p: mw.p,
                p_fdr,
                delta,
                median_x,
                median_y,
                method: mw.method,
            },
        )
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::CategoryShares;
    use crate::ingest::SocCode;
    use proptest::prelude::*;

    fn split(x: &[f64], y: &[f64]) -> SampleSplit {
        SampleSplit::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn exact_small_sample() {
        let result = mann_whitney_u(&split(&[1.0, 2.0], &[3.0, 4.0]));
        assert_eq!(result.u, 0.0);
        assert_eq!(result.method, MwMethod::Exact);
        assert!((result.p - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn full_tie_is_degenerate() {
        let result = mann_whitney_u(&split(&[5.0], &[5.0]));
        assert_eq!(result.u, 0.5);
        assert_eq!(result.p, 1.0);
        assert_eq!(result.method, MwMethod::Degenerate);
    }

    #[test]
    fn symmetric_placement_has_p_one() {
        let result = mann_whitney_u(&split(&[1.0, 3.0], &[2.0]));
        assert_eq!(result.u, 1.0);
        assert_eq!(result.method, MwMethod::Exact);
        assert_eq!(result.p, 1.0);
    }

    #[test]
    fn forced_approx_reports_its_method() {
        let result = mann_whitney_u_with(
            &split(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]),
            MethodChoice::ForceApprox,
        );
        assert_eq!(result.method, MwMethod::NormalApprox);
        assert!(result.p > 0.0 && result.p <= 1.0);
    }

    #[test]
    fn exact_path_at_the_pooled_size_limit() {
        // Complete separation at 10 vs 10: exactly one of the C(20,10)
        // assignments is as extreme, so the two-sided p is 2/184756.
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y: Vec<f64> = (11..=20).map(f64::from).collect();
        let result = mann_whitney_u(&SampleSplit::new(x, y).unwrap());
        assert_eq!(result.method, MwMethod::Exact);
        assert_eq!(result.u, 0.0);
        assert!((result.p - 2.0 / 184_756.0).abs() < 1e-15);

        // One value more switches auto mode to the approximation.
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y: Vec<f64> = (11..=21).map(f64::from).collect();
        let result = mann_whitney_u(&SampleSplit::new(x, y).unwrap());
        assert_eq!(result.method, MwMethod::NormalApprox);
    }

    #[test]
    fn ties_push_auto_to_the_approximation() {
        let result = mann_whitney_u(&split(&[1.0, 2.0, 2.0], &[2.0, 3.0]));
        assert_eq!(result.method, MwMethod::NormalApprox);
    }

    #[test]
    fn delta_complete_dominance() {
        assert_eq!(cliffs_delta(&split(&[2.0, 2.0], &[1.0, 1.0])), 1.0);
    }

    #[test]
    fn delta_symmetric_with_ties() {
        assert_eq!(cliffs_delta(&split(&[1.0, 2.0], &[1.0, 2.0])), 0.0);
    }

    #[test]
    fn bh_matches_published_adjustment() {
        let raw = [2e-6, 9.66e-4, 6.60e-3, 5.47e-2, 5.14e-2, 5.41e-1];
        let adjusted = bh_adjust(&raw).unwrap();
        let expected = [1.2e-5, 2.898e-3, 1.32e-2, 6.564e-2, 6.564e-2, 5.41e-1];
        for (a, e) in adjusted.iter().zip(expected) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn bh_single_value_is_identity() {
        assert_eq!(bh_adjust(&[0.5]).unwrap(), alloc::vec![0.5]);
    }

    #[test]
    fn bh_rejects_out_of_range() {
        assert!(matches!(
            bh_adjust(&[0.5, 1.2]),
            Err(StatsError::OutOfRangeP { .. })
        ));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    pub(super) fn metrics_for(
        soc: &str,
        group: RoleGroup,
        tci: f64,
        tci_sd: f64,
        shares: [f64; 4],
    ) -> OccupationMetrics {
        OccupationMetrics {
            soc_code: SocCode::parse(soc).unwrap(),
            occupation_title: soc.to_string(),
            role_group: group,
            n_tasks: 10,
            total_weight: 10.0,
            tci,
            tci_sd,
            shares: CategoryShares::from_values(shares),
            excluded_tasks: 0,
        }
    }

    fn synthetic_metrics(n_per_group: usize) -> Vec<OccupationMetrics> {
        // Small deterministic generator so tests are reproducible without an
        // RNG dependency.
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut metrics = Vec::new();
        for i in 0..n_per_group * 2 {
            let group = if i % 2 == 0 {
                RoleGroup::Clinician
            } else {
                RoleGroup::NonClinician
            };
            let soc = format!(
                "{}-10{:02}.00",
                if group == RoleGroup::Clinician {
                    29
                } else {
                    31
                },
                i % 100
            );
            let raw = [next(), next(), next(), next()];
            let total: f64 = raw.iter().sum();
            let shares = [
                raw[0] / total,
                raw[1] / total,
                raw[2] / total,
                raw[3] / total,
            ];
            let lift = if group == RoleGroup::Clinician {
                0.8
            } else {
                0.0
            };
            metrics.push(metrics_for(
                &soc,
                group,
                1.0 + 3.0 * next() + lift,
                2.0 * next(),
                shares,
            ));
        }
        metrics
    }

    #[test]
    fn compare_groups_runs_six_tests_in_order() {
        let metrics = synthetic_metrics(5);
        let results = compare_groups(&metrics).unwrap();
        let names: Vec<&str> = results.iter().map(|r| r.variable.as_str()).collect();
        assert_eq!(names, COMPARISON_VARIABLES);
    }

    #[test]
    fn identical_groups_have_zero_delta_and_p_one() {
        let mut metrics = Vec::new();
        for (i, soc) in ["29-1011.00", "29-1021.00"].iter().enumerate() {
            metrics.push(metrics_for(
                soc,
                RoleGroup::Clinician,
                2.0 + i as f64,
                0.5,
                [0.25, 0.25, 0.25, 0.25],
            ));
        }
        for (i, soc) in ["31-1011.00", "31-1021.00"].iter().enumerate() {
            metrics.push(metrics_for(
                soc,
                RoleGroup::NonClinician,
                2.0 + i as f64,
                0.5,
                [0.25, 0.25, 0.25, 0.25],
            ));
        }
        let results = compare_groups(&metrics).unwrap();
        for result in results {
            assert_eq!(result.delta, 0.0, "{}", result.variable);
            assert_eq!(result.p, 1.0, "{}", result.variable);
        }
    }

    #[test]
    fn fdr_comes_from_one_joint_adjustment() {
        let metrics = synthetic_metrics(6);
        let results = compare_groups(&metrics).unwrap();
        let raw: Vec<f64> = results.iter().map(|r| r.p).collect();
        let joint = bh_adjust(&raw).unwrap();
        for (result, expected) in results.iter().zip(joint) {
            assert_eq!(result.p_fdr, expected);
        }
    }

    #[test]
    fn empty_group_is_error() {
        let metrics = alloc::vec![metrics_for(
            "29-1011.00",
            RoleGroup::Clinician,
            2.0,
            0.5,
            [0.25, 0.25, 0.25, 0.25],
        )];
        assert!(matches!(
            compare_groups(&metrics),
            Err(StatsError::EmptyGroup { .. })
        ));
    }

    fn arb_split(max_n: usize) -> impl Strategy<Value = SampleSplit> {
        (
            proptest::collection::vec(-50i32..50, 1..=max_n),
            proptest::collection::vec(-50i32..50, 1..=max_n),
        )
            .prop_map(|(x, y)| {
                SampleSplit::new(
                    x.into_iter().map(f64::from).collect(),
                    y.into_iter().map(f64::from).collect(),
                )
                .unwrap()
            })
    }

    proptest! {
        /// δ = 2U/(n·m) − 1 with ties counted as one half in U.
        #[test]
        fn delta_u_identity(split in arb_split(12)) {
            let mw = mann_whitney_u(&split);
            let delta = cliffs_delta(&split);
            let nm = (split.x().len() * split.y().len()) as f64;
            prop_assert!((delta - (2.0 * mw.u / nm - 1.0)).abs() < 1e-12);
        }

        /// Swapping the samples negates δ, mirrors U, and keeps p unchanged.
        #[test]
        fn antisymmetry(split in arb_split(10)) {
            let swapped = SampleSplit::new(split.y().to_vec(), split.x().to_vec()).unwrap();
            let nm = (split.x().len() * split.y().len()) as f64;
            let a = mann_whitney_u(&split);
            let b = mann_whitney_u(&swapped);
            prop_assert!((cliffs_delta(&split) + cliffs_delta(&swapped)).abs() < 1e-12);
            prop_assert!((a.u + b.u - nm).abs() < 1e-12);
            prop_assert!((a.p - b.p).abs() < 1e-12);
        }

        /// Adding a constant to every value changes nothing.
        #[test]
        fn translation_invariance(split in arb_split(10), shift in -30i32..30) {
            let shift = f64::from(shift);
            let shifted = SampleSplit::new(
                split.x().iter().map(|v| v + shift).collect(),
                split.y().iter().map(|v| v + shift).collect(),
            ).unwrap();
            let a = mann_whitney_u(&split);
            let b = mann_whitney_u(&shifted);
            prop_assert_eq!(a.u, b.u);
            prop_assert!((a.p - b.p).abs() < 1e-12);
            prop_assert!((cliffs_delta(&split) - cliffs_delta(&shifted)).abs() < 1e-12);
        }

        /// Exact enumeration and the normal approximation agree to 0.03 for
        /// tie-free pooled samples of 10 to 14 values with at least three per
        /// side. Below three per side the corrected approximation genuinely
        /// drifts past 0.03; those sizes take the exact path anyway.
        #[test]
        fn exact_and_approx_agree(
            pooled in proptest::collection::btree_set(-10_000i32..10_000, 10..=14),
            nx_frac in 0usize..=13,
            rotation in 0usize..14,
        ) {
            let mut pooled: Vec<f64> = pooled.into_iter().map(f64::from).collect();
            let turn = rotation % pooled.len();
            pooled.rotate_left(turn);
            let nx = 3 + nx_frac % (pooled.len() - 5);
            let split = SampleSplit::new(
                pooled[..nx].to_vec(),
                pooled[nx..].to_vec(),
            ).unwrap();
            let exact = mann_whitney_u_with(&split, MethodChoice::ForceExact);
            let approx = mann_whitney_u_with(&split, MethodChoice::ForceApprox);
            prop_assert_eq!(exact.method, MwMethod::Exact);
            prop_assert_eq!(approx.method, MwMethod::NormalApprox);
            prop_assert!((exact.p - approx.p).abs() < 0.03,
                "exact {} vs approx {}", exact.p, approx.p);
        }

        /// BH output dominates the raw p-values, stays within [0, 1], is
        /// monotone in sorted order, and is permutation-equivariant.
        #[test]
        fn bh_bounds_monotonicity_equivariance(
            raw in proptest::collection::vec(0.0f64..=1.0, 1..12),
            seed in 0u64..1000,
        ) {
            let adjusted = bh_adjust(&raw).unwrap();
            for (a, r) in adjusted.iter().zip(&raw) {
                prop_assert!(a >= r);
                prop_assert!(*a <= 1.0);
            }
            let mut order: Vec<usize> = (0..raw.len()).collect();
            order.sort_by(|&i, &j| raw[i].total_cmp(&raw[j]));
            for pair in order.windows(2) {
                prop_assert!(adjusted[pair[0]] <= adjusted[pair[1]] + 1e-15);
            }

            // Permute deterministically from the seed and compare.
            let mut permutation: Vec<usize> = (0..raw.len()).collect();
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            for i in (1..permutation.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                permutation.swap(i, (state >> 33) as usize % (i + 1));
            }
            let permuted: Vec<f64> = permutation.iter().map(|&i| raw[i]).collect();
            let adjusted_permuted = bh_adjust(&permuted).unwrap();
            for (slot, &source) in permutation.iter().enumerate() {
                prop_assert_eq!(adjusted_permuted[slot], adjusted[source]);
            }
        }

        /// Constant vectors (optionally with a prefix of zeros) are fixed
        /// points of the adjustment.
        #[test]
        fn bh_fixed_points(c in 0.0f64..=1.0, zeros in 0usize..4, len in 1usize..6) {
            let mut input = alloc::vec![0.0; zeros];
            input.extend(core::iter::repeat_n(c, len));
            let adjusted = bh_adjust(&input).unwrap();
            prop_assert_eq!(adjusted, input);
        }

        /// Rank statistics ignore positive rescaling of the inputs.
        #[test]
        fn compare_groups_scale_invariance(scale in 1u32..=50) {
            let metrics = synthetic_metrics(6);
            let scale = f64::from(scale) / 10.0;
            let scaled: Vec<OccupationMetrics> = metrics
                .iter()
                .map(|m| {
                    let mut s = m.clone();
                    s.tci *= scale;
                    s.tci_sd *= scale;
                    let values = [
                        m.shares.get(CategoryCode::SearchInfo) * scale,
                        m.shares.get(CategoryCode::BargainDecide) * scale,
                        m.shares.get(CategoryCode::MonitorEnforce) * scale,
                        m.shares.get(CategoryCode::AdaptCoordinate) * scale,
                    ];
                    s.shares = CategoryShares::from_values(values);
                    s
                })
                .collect();
            let base = compare_groups(&metrics).unwrap();
            let rescaled = compare_groups(&scaled).unwrap();
            for (a, b) in base.iter().zip(&rescaled) {
                prop_assert_eq!(a.u, b.u);
                prop_assert!((a.p - b.p).abs() < 1e-12);
                prop_assert!((a.p_fdr - b.p_fdr).abs() < 1e-12);
                prop_assert!((a.delta - b.delta).abs() < 1e-12);
            }
        }
    }
}
