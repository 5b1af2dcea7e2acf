//! Friction-map quadrant classification.
//!
//! Occupations are placed by (TCI, TCI_sd) and split into four quadrants by a
//! pair of cuts, by default the cross-occupation medians of each axis. "High"
//! means strictly above the cut; a value exactly equal to a cut lands on the
//! low side.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::aggregate::OccupationMetrics;
use crate::ingest::{RoleGroup, SocCode};
use crate::stats::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrant {
    /// Low mean, high dispersion: a few costly tasks worth fixing directly.
    TargetedTaskFixes,
    /// High mean, low dispersion: friction is uniform, so redesign the role.
    StructuralRedesign,
    /// High mean, high dispersion.
    MixedAugmentation,
    /// Low mean, low dispersion.
    LowFriction,
}

impl Quadrant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Quadrant::TargetedTaskFixes => "targeted_task_fixes",
            Quadrant::StructuralRedesign => "structural_redesign",
            Quadrant::MixedAugmentation => "mixed_augmentation",
            Quadrant::LowFriction => "low_friction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Cuts are the medians of tci and tci_sd over the classified set.
    Median,
    /// Cuts supplied explicitly by configuration.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tci_cut: f64,
    pub sd_cut: f64,
    pub rule: ThresholdRule,
}

/// Default cuts: per-axis medians across the given occupations.
pub fn median_thresholds(metrics: &[OccupationMetrics]) -> Thresholds {
    let tci: Vec<f64> = metrics.iter().map(|m| m.tci).collect();
    let sd: Vec<f64> = metrics.iter().map(|m| m.tci_sd).collect();
    Thresholds {
        tci_cut: median(&tci),
        sd_cut: median(&sd),
        rule: ThresholdRule::Median,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionPoint {
    pub soc_code: SocCode,
    pub title: String,
    pub role_group: RoleGroup,
    pub tci: f64,
    pub tci_sd: f64,
    pub quadrant: Quadrant,
}

fn classify_one(tci: f64, tci_sd: f64, thresholds: &Thresholds) -> Quadrant {
    let high_tci = tci > thresholds.tci_cut;
    let high_sd = tci_sd > thresholds.sd_cut;
    match (high_tci, high_sd) {
        (true, false) => Quadrant::StructuralRedesign,
        (false, true) => Quadrant::TargetedTaskFixes,
        (true, true) => Quadrant::MixedAugmentation,
        (false, false) => Quadrant::LowFriction,
    }
}

/// Classify every occupation against the given cuts.
pub fn quadrant_classify(
    metrics: &[OccupationMetrics],
    thresholds: &Thresholds,
) -> Vec<FrictionPoint> {
    metrics
        .iter()
        .map(|m| FrictionPoint {
            soc_code: m.soc_code.clone(),
            title: m.occupation_title.clone(),
            role_group: m.role_group,
            tci: m.tci,
            tci_sd: m.tci_sd,
            quadrant: classify_one(m.tci, m.tci_sd, thresholds),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::CategoryShares;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn metrics(soc: &str, tci: f64, tci_sd: f64) -> OccupationMetrics {
        OccupationMetrics {
            soc_code: SocCode::parse(soc).unwrap(),
            occupation_title: soc.to_string(),
            role_group: RoleGroup::Clinician,
            n_tasks: 5,
            total_weight: 5.0,
            tci,
            tci_sd,
            shares: CategoryShares::from_values([0.25, 0.25, 0.25, 0.25]),
            excluded_tasks: 0,
        }
    }

    fn cuts(tci_cut: f64, sd_cut: f64) -> Thresholds {
        Thresholds {
            tci_cut,
            sd_cut,
            rule: ThresholdRule::Explicit,
        }
    }

    #[test]
    fn high_mean_low_dispersion_is_structural_redesign() {
        let points = quadrant_classify(&[metrics("29-1011.00", 4.0, 0.2)], &cuts(3.0, 0.5));
        assert_eq!(points[0].quadrant, Quadrant::StructuralRedesign);
    }

    #[test]
    fn values_on_the_cut_land_low() {
        let points = quadrant_classify(
            &[
                metrics("29-1011.00", 3.0, 0.2),
                metrics("29-1021.00", 3.0, 0.9),
            ],
            &cuts(3.0, 0.5),
        );
        assert_eq!(points[0].quadrant, Quadrant::LowFriction);
        assert_eq!(points[1].quadrant, Quadrant::TargetedTaskFixes);
    }

    #[test]
    fn identical_occupations_all_land_low_low() {
        let set = [
            metrics("29-1011.00", 2.5, 0.5),
            metrics("29-1021.00", 2.5, 0.5),
            metrics("29-1031.00", 2.5, 0.5),
        ];
        let thresholds = median_thresholds(&set);
        assert_eq!(thresholds.tci_cut, 2.5);
        assert_eq!(thresholds.sd_cut, 0.5);
        for point in quadrant_classify(&set, &thresholds) {
            assert_eq!(point.quadrant, Quadrant::LowFriction);
        }
    }

    fn arb_metrics() -> impl Strategy<Value = Vec<OccupationMetrics>> {
        proptest::collection::vec((0u32..=500, 0u32..=250), 1..20).prop_map(|pairs| {
            pairs
                .into_iter()
                .enumerate()
                .map(|(i, (tci, sd))| {
                    metrics(
                        &format!("29-1{:03}.00", i % 1000),
                        f64::from(tci) / 100.0,
                        f64::from(sd) / 100.0,
                    )
                })
                .collect()
        })
    }

    proptest! {
        /// Every occupation lands in exactly one quadrant, and with median
        /// cuts at most half the points can sit strictly high on each axis.
        #[test]
        fn partition_and_median_balance(set in arb_metrics()) {
            let thresholds = median_thresholds(&set);
            let points = quadrant_classify(&set, &thresholds);
            prop_assert_eq!(points.len(), set.len());
            let high_tci = points
                .iter()
                .filter(|p| matches!(p.quadrant, Quadrant::StructuralRedesign | Quadrant::MixedAugmentation))
                .count();
            let high_sd = points
                .iter()
                .filter(|p| matches!(p.quadrant, Quadrant::TargetedTaskFixes | Quadrant::MixedAugmentation))
                .count();
            prop_assert!(high_tci * 2 <= set.len());
            prop_assert!(high_sd * 2 <= set.len());
        }

        /// Reclassification with the same thresholds is stable.
        #[test]
        fn reclassification_stability(set in arb_metrics()) {
            let thresholds = median_thresholds(&set);
            let first = quadrant_classify(&set, &thresholds);
            let second = quadrant_classify(&set, &thresholds);
            prop_assert_eq!(first, second);
        }
    }
}
