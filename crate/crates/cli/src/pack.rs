//! Summary-pack emission.
//!
//! The pack is a directory of delimited tables, friction-map data, a
//! provenance record, and a checksummed manifest. Files are staged in a
//! sibling directory and renamed into place, so a partially written pack is
//! never left behind. Delimited output is comma-separated UTF-8 with `\n`
//! line endings and decimals fixed to at most six fractional digits, making
//! regeneration byte-stable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tcmap_core::aggregate::{GroupHeadline, OccupationMetrics};
use tcmap_core::friction::{FrictionPoint, Thresholds};
use tcmap_core::ingest::RoleGroup;
use tcmap_core::numfmt::format_fixed;
use tcmap_core::schema::CategoryCode;
use tcmap_core::stats::TestResult;

use crate::error::{PipelineError, Result};

pub const METRICS_CSV: &str = "metrics.csv";
pub const HEADLINE_CSV: &str = "headline.csv";
pub const TESTS_CSV: &str = "tests.csv";
pub const FRICTIONMAP_CSV: &str = "frictionmap.csv";
pub const PROVENANCE_JSON: &str = "provenance.json";
pub const FRICTIONMAP_SVG: &str = "frictionmap.svg";
pub const MANIFEST_JSON: &str = "manifest.json";

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') || s.contains('\r') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

const SHARE_COLUMNS: &str =
    "share_SEARCH_INFO,share_BARGAIN_DECIDE,share_MONITOR_ENFORCE,share_ADAPT_COORDINATE";

fn shares_cells(metrics_shares: &tcmap_core::aggregate::CategoryShares) -> String {
    CategoryCode::ALL
        .iter()
        .map(|&c| format_fixed(metrics_shares.get(c)))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn write_metrics_csv(metrics: &[OccupationMetrics]) -> String {
    let mut out = format!(
        "soc_code,occupation_title,role_group,n_tasks,total_weight,tci,tci_sd,{SHARE_COLUMNS},excluded_tasks\n"
    );
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            m.soc_code,
            csv_field(&m.occupation_title),
            m.role_group.as_str(),
            m.n_tasks,
            format_fixed(m.total_weight),
            format_fixed(m.tci),
            format_fixed(m.tci_sd),
            shares_cells(&m.shares),
            m.excluded_tasks,
        ));
    }
    out
}

pub fn write_headline_csv(headlines: &[GroupHeadline]) -> String {
    let mut out = format!("role_group,weighted_mean_tci,{SHARE_COLUMNS}\n");
    for h in headlines {
        out.push_str(&format!(
            "{},{},{}\n",
            h.role_group.as_str(),
            format_fixed(h.weighted_mean_tci),
            shares_cells(&h.shares),
        ));
    }
    out
}

pub fn write_tests_csv(results: &[TestResult]) -> String {
    let mut out = String::from("variable,p,p_fdr,u,delta,median_clin,median_non,method\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.variable,
            format_fixed(r.p),
            format_fixed(r.p_fdr),
            format_fixed(r.u),
            format_fixed(r.delta),
            format_fixed(r.median_x),
            format_fixed(r.median_y),
            r.method.as_str(),
        ));
    }
    out
}

pub fn write_frictionmap_csv(points: &[FrictionPoint]) -> String {
    let mut out = String::from("soc_code,occupation_title,role_group,tci,tci_sd,quadrant\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.soc_code,
            csv_field(&p.title),
            p.role_group.as_str(),
            format_fixed(p.tci),
            format_fixed(p.tci_sd),
            p.quadrant.as_str(),
        ));
    }
    out
}

/// Static SVG scatter of the friction map, colored by role group, with the
/// quadrant cuts drawn as dashed lines. Informational only; the points table
/// is the normative output.
pub fn render_svg(points: &[FrictionPoint], thresholds: &Thresholds) -> String {
    const WIDTH: f64 = 640.0;
    const HEIGHT: f64 = 480.0;
    const LEFT: f64 = 64.0;
    const RIGHT: f64 = 24.0;
    const TOP: f64 = 28.0;
    const BOTTOM: f64 = 56.0;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;

    let range = |values: Vec<f64>| -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() || !hi.is_finite() {
            return (0.0, 1.0);
        }
        if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = (hi - lo) * 0.06;
            (lo - pad, hi + pad)
        }
    };
    let (x_lo, x_hi) = range(
        points
            .iter()
            .map(|p| p.tci)
            .chain(std::iter::once(thresholds.tci_cut))
            .collect(),
    );
    let (y_lo, y_hi) = range(
        points
            .iter()
            .map(|p| p.tci_sd)
            .chain(std::iter::once(thresholds.sd_cut))
            .collect(),
    );
    let sx = |v: f64| LEFT + (v - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |v: f64| TOP + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h;
    let f = format_fixed;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        f(LEFT),
        f(TOP + plot_h),
        f(LEFT + plot_w),
        f(TOP + plot_h)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        f(LEFT),
        f(TOP),
        f(LEFT),
        f(TOP + plot_h)
    ));
    // Quadrant cuts.
    for (x1, y1, x2, y2) in [
        (
            sx(thresholds.tci_cut),
            TOP,
            sx(thresholds.tci_cut),
            TOP + plot_h,
        ),
        (
            LEFT,
            sy(thresholds.sd_cut),
            LEFT + plot_w,
            sy(thresholds.sd_cut),
        ),
    ] {
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" stroke-dasharray=\"5,4\"/>\n",
            f(x1), f(y1), f(x2), f(y2)
        ));
    }
    // Axis labels and extents.
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">mean transaction-cost intensity (TCI)</text>\n",
        f(LEFT + plot_w / 2.0),
        f(HEIGHT - 14.0)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">within-occupation dispersion (TCI_sd)</text>\n",
        f(TOP + plot_h / 2.0),
        f(TOP + plot_h / 2.0)
    ));
    for (value, x) in [(x_lo, LEFT), (x_hi, LEFT + plot_w)] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            f(x),
            f(TOP + plot_h + 16.0),
            f(value)
        ));
    }
    for (value, y) in [(y_lo, TOP + plot_h), (y_hi, TOP)] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            f(LEFT - 6.0),
            f(y + 4.0),
            f(value)
        ));
    }
    // Legend.
    svg.push_str(&format!(
        "<circle cx=\"{}\" cy=\"18\" r=\"4\" fill=\"#2f6fb0\"/><text x=\"{}\" y=\"22\" font-size=\"11\">clinician</text>\n",
        f(LEFT + plot_w - 170.0),
        f(LEFT + plot_w - 162.0)
    ));
    svg.push_str(&format!(
        "<circle cx=\"{}\" cy=\"18\" r=\"4\" fill=\"#d97a28\"/><text x=\"{}\" y=\"22\" font-size=\"11\">non-clinician</text>\n",
        f(LEFT + plot_w - 90.0),
        f(LEFT + plot_w - 82.0)
    ));
    // Points, in input (soc-sorted) order.
    for p in points {
        let color = match p.role_group {
            RoleGroup::Clinician => "#2f6fb0",
            RoleGroup::NonClinician => "#d97a28",
        };
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\" fill-opacity=\"0.85\"><title>{}</title></circle>\n",
            f(sx(p.tci)),
            f(sy(p.tci_sd)),
            color,
            xml_escape(&format!("{} {}", p.soc_code, p.title)),
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceInputs {
    pub statements_file: String,
    pub statements_sha256: String,
    pub ratings_file: String,
    pub ratings_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceCounts {
    pub statement_rows: usize,
    pub rating_rows: usize,
    pub parse_issues: usize,
    pub table_rows: usize,
    pub unique_tasks: usize,
    pub scored_tasks: usize,
    pub failed_tasks: usize,
    pub occupations: usize,
    /// Task-occupation rows dropped per occupation because scoring failed;
    /// includes occupations that ended up with no metrics at all.
    pub excluded_rows_by_occupation: BTreeMap<String, u32>,
}

/// Everything needed to re-run the pipeline identically, minus the secret.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub inputs: ProvenanceInputs,
    pub config: serde_json::Value,
    pub backend_id: String,
    pub counts: ProvenanceCounts,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub role: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPack {
    pub files: Vec<ManifestEntry>,
    pub thresholds: Thresholds,
}

pub struct PackInputs<'a> {
    pub metrics_csv: &'a str,
    pub headline_csv: &'a str,
    pub tests_csv: &'a str,
    pub points: &'a [FrictionPoint],
    pub thresholds: Thresholds,
    pub provenance: &'a Provenance,
    pub svg: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Write a single file atomically: temp sibling plus rename.
pub fn write_file_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&parent)
        .map_err(|e| PipelineError::io("cannot create directory", &parent, e))?;
    let file_name = path
        .file_name()
        .ok_or_else(|| PipelineError::data(format!("{} has no file name", path.display())))?;
    let tmp = parent.join(format!(".{}.tmp", file_name.to_string_lossy()));
    std::fs::write(&tmp, bytes).map_err(|e| PipelineError::io("cannot write", &tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| PipelineError::io("cannot move into place", path, e))
}

/// Emit the pack into `pack_dir` atomically. An existing pack directory is
/// replaced only if it looks like one (it has a manifest) or is empty;
/// anything else is refused rather than deleted.
pub fn emit_summary_pack(pack_dir: &Path, inputs: &PackInputs) -> Result<SummaryPack> {
    let parent = pack_dir
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let staging = parent.join(".pack.staging");

    let result = build_in_staging(&staging, pack_dir, inputs);
    if result.is_err() && staging.exists() {
        let _ = std::fs::remove_dir_all(&staging);
    }
    result
}

fn build_in_staging(staging: &Path, pack_dir: &Path, inputs: &PackInputs) -> Result<SummaryPack> {
    if staging.exists() {
        std::fs::remove_dir_all(staging)
            .map_err(|e| PipelineError::io("cannot clear stale staging", staging, e))?;
    }
    std::fs::create_dir_all(staging)
        .map_err(|e| PipelineError::io("cannot create staging directory", staging, e))?;

    let frictionmap_csv = write_frictionmap_csv(inputs.points);
    let provenance_json = serde_json::to_string_pretty(inputs.provenance)
        .map_err(|e| PipelineError::data(format!("cannot serialise provenance: {e}")))?
        + "\n";

    let mut planned: Vec<(&str, &str, Vec<u8>)> = vec![
        (METRICS_CSV, "occupation_metrics", inputs.metrics_csv.into()),
        (HEADLINE_CSV, "group_headlines", inputs.headline_csv.into()),
        (TESTS_CSV, "group_tests", inputs.tests_csv.into()),
        (FRICTIONMAP_CSV, "friction_map", frictionmap_csv.into()),
        (PROVENANCE_JSON, "provenance", provenance_json.into()),
    ];
    if inputs.svg {
        planned.push((
            FRICTIONMAP_SVG,
            "friction_map_figure",
            render_svg(inputs.points, &inputs.thresholds).into(),
        ));
    }

    let mut files = Vec::with_capacity(planned.len());
    for (name, role, bytes) in &planned {
        let path = staging.join(name);
        std::fs::write(&path, bytes).map_err(|e| PipelineError::io("cannot write", &path, e))?;
        files.push(ManifestEntry {
            file: (*name).to_string(),
            role: (*role).to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    let pack = SummaryPack {
        files,
        thresholds: inputs.thresholds,
    };
    let manifest_json = serde_json::to_string_pretty(&pack)
        .map_err(|e| PipelineError::data(format!("cannot serialise manifest: {e}")))?
        + "\n";
    let manifest_path = staging.join(MANIFEST_JSON);
    std::fs::write(&manifest_path, manifest_json)
        .map_err(|e| PipelineError::io("cannot write", &manifest_path, e))?;

    if pack_dir.exists() {
        let has_manifest = pack_dir.join(MANIFEST_JSON).exists();
        let is_empty = std::fs::read_dir(pack_dir)
            .map_err(|e| PipelineError::io("cannot inspect existing pack", pack_dir, e))?
            .next()
            .is_none();
        if !has_manifest && !is_empty {
            return Err(PipelineError::data(format!(
                "{} exists and does not look like a summary pack; refusing to replace it",
                pack_dir.display()
            )));
        }
        std::fs::remove_dir_all(pack_dir)
            .map_err(|e| PipelineError::io("cannot remove previous pack", pack_dir, e))?;
    }
    std::fs::rename(staging, pack_dir)
        .map_err(|e| PipelineError::io("cannot move staging into place", pack_dir, e))?;
    Ok(pack)
}

/// Verify every manifest checksum against the files on disk.
pub fn verify_pack(pack_dir: &Path) -> Result<SummaryPack> {
    let manifest_path = pack_dir.join(MANIFEST_JSON);
    let manifest: SummaryPack = serde_json::from_str(
        &std::fs::read_to_string(&manifest_path)
            .map_err(|e| PipelineError::io("cannot read manifest", &manifest_path, e))?,
    )
    .map_err(|e| PipelineError::data(format!("manifest is invalid: {e}")))?;
    for entry in &manifest.files {
        let path = pack_dir.join(&entry.file);
        let bytes = std::fs::read(&path)
            .map_err(|e| PipelineError::io("cannot read pack file", &path, e))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(PipelineError::data(format!(
                "checksum mismatch for {}",
                path.display()
            )));
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tcmap_core::aggregate::CategoryShares;
    use tcmap_core::friction::{Quadrant, ThresholdRule};
    use tcmap_core::ingest::SocCode;

    fn point(soc: &str, title: &str, tci: f64, sd: f64) -> FrictionPoint {
        FrictionPoint {
            soc_code: SocCode::parse(soc).unwrap(),
            title: title.to_string(),
            role_group: RoleGroup::Clinician,
            tci,
            tci_sd: sd,
            quadrant: Quadrant::LowFriction,
        }
    }

    fn provenance() -> Provenance {
        Provenance {
            inputs: ProvenanceInputs {
                statements_file: "statements.tsv".into(),
                statements_sha256: "00".into(),
                ratings_file: "ratings.tsv".into(),
                ratings_sha256: "11".into(),
            },
            config: serde_json::json!({"backend": "mock"}),
            backend_id: "mock-rule-v1".into(),
            counts: ProvenanceCounts {
                statement_rows: 1,
                rating_rows: 1,
                parse_issues: 0,
                table_rows: 1,
                unique_tasks: 1,
                scored_tasks: 1,
                failed_tasks: 0,
                occupations: 1,
                excluded_rows_by_occupation: BTreeMap::new(),
            },
            warnings: vec![],
        }
    }

    fn inputs<'a>(points: &'a [FrictionPoint], provenance: &'a Provenance) -> PackInputs<'a> {
        PackInputs {
            metrics_csv: "soc_code\n",
            headline_csv: "role_group\n",
            tests_csv: "variable\n",
            points,
            thresholds: Thresholds {
                tci_cut: 2.0,
                sd_cut: 1.0,
                rule: ThresholdRule::Median,
            },
            provenance,
            svg: true,
        }
    }

    #[test]
    fn csv_quotes_titles_with_commas() {
        let metrics = OccupationMetrics {
            soc_code: SocCode::parse("29-1141.00").unwrap(),
            occupation_title: "Nurses, Registered \"RN\"".into(),
            role_group: RoleGroup::Clinician,
            n_tasks: 1,
            total_weight: 1.0,
            tci: 2.0,
            tci_sd: 0.0,
            shares: CategoryShares::from_values([1.0, 0.0, 0.0, 0.0]),
            excluded_tasks: 0,
        };
        let csv = write_metrics_csv(&[metrics]);
        assert!(csv.contains("\"Nurses, Registered \"\"RN\"\"\""));
    }

    #[test]
    fn pack_contains_manifest_covering_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let pack_dir = dir.path().join("pack");
        let points = [point("29-1141.00", "Registered Nurses", 3.0, 0.5)];
        let prov = provenance();
        let pack = emit_summary_pack(&pack_dir, &inputs(&points, &prov)).unwrap();
        assert_eq!(pack.files.len(), 6);
        verify_pack(&pack_dir).unwrap();
        assert!(!dir.path().join(".pack.staging").exists());
    }

    #[test]
    fn pack_without_svg_has_five_files_plus_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let pack_dir = dir.path().join("pack");
        let points = [point("29-1141.00", "Registered Nurses", 3.0, 0.5)];
        let prov = provenance();
        let mut no_svg = inputs(&points, &prov);
        no_svg.svg = false;
        let pack = emit_summary_pack(&pack_dir, &no_svg).unwrap();
        assert_eq!(pack.files.len(), 5);
        assert!(pack_dir.join(MANIFEST_JSON).exists());
        assert!(!pack_dir.join(FRICTIONMAP_SVG).exists());
    }

    #[test]
    fn reemission_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let pack_dir = dir.path().join("pack");
        let points = [point("29-1141.00", "Registered Nurses", 3.0, 0.5)];
        let prov = provenance();
        emit_summary_pack(&pack_dir, &inputs(&points, &prov)).unwrap();
        let first: BTreeMap<String, Vec<u8>> = std::fs::read_dir(&pack_dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        emit_summary_pack(&pack_dir, &inputs(&points, &prov)).unwrap();
        for (name, bytes) in &first {
            assert_eq!(
                &std::fs::read(pack_dir.join(name)).unwrap(),
                bytes,
                "{name}"
            );
        }
    }

    #[test]
    fn refuses_to_replace_a_directory_that_is_not_a_pack() {
        let dir = tempfile::tempdir().unwrap();
        let pack_dir = dir.path().join("pack");
        std::fs::create_dir_all(&pack_dir).unwrap();
        std::fs::write(pack_dir.join("keep.me"), b"user data").unwrap();
        let points = [point("29-1141.00", "Registered Nurses", 3.0, 0.5)];
        let prov = provenance();
        let err = emit_summary_pack(&pack_dir, &inputs(&points, &prov)).unwrap_err();
        assert!(err.to_string().contains("refusing"));
        assert!(pack_dir.join("keep.me").exists());
    }

    #[test]
    fn unwritable_target_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let blocked = dir.path().join("blocked");
        std::fs::write(&blocked, b"a file, not a directory").unwrap();
        let pack_dir = blocked.join("pack");
        let points = [point("29-1141.00", "Registered Nurses", 3.0, 0.5)];
        let prov = provenance();
        assert!(emit_summary_pack(&pack_dir, &inputs(&points, &prov)).is_err());
        assert!(!blocked.join(".pack.staging").exists());
    }

    #[test]
    fn svg_is_deterministic_and_marks_both_groups() {
        let mut p2 = point("31-9092.00", "Medical Assistants", 1.5, 1.2);
        p2.role_group = RoleGroup::NonClinician;
        let points = [point("29-1141.00", "Registered Nurses", 3.0, 0.5), p2];
        let thresholds = Thresholds {
            tci_cut: 2.0,
            sd_cut: 1.0,
            rule: ThresholdRule::Median,
        };
        let a = render_svg(&points, &thresholds);
        let b = render_svg(&points, &thresholds);
        assert_eq!(a, b);
        assert!(a.contains("#2f6fb0"));
        assert!(a.contains("#d97a28"));
        assert!(a.contains("</svg>"));
    }
}
