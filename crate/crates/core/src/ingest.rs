//! Ingestion of O*NET-style task statement and task rating tables.
//!
//! Input files are tab-delimited with a header row; columns are resolved by
//! header name, never by position. Parsing collects per-line issues instead of
//! silently dropping rows, derives a frequency weight per (occupation, task)
//! pair, restricts to a configured occupation roster, and deduplicates task
//! texts by exact byte match.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// O*NET-SOC occupation identifier in the `NN-NNNN.NN` format.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SocCode(String);

impl SocCode {
    pub fn parse(s: &str) -> Result<Self, IngestError> {
        let bytes = s.as_bytes();
        let shape_ok = bytes.len() == 10
            && bytes[2] == b'-'
            && bytes[7] == b'.'
            && [0usize, 1, 3, 4, 5, 6, 8, 9]
                .iter()
                .all(|&i| bytes[i].is_ascii_digit());
        if shape_ok {
            Ok(SocCode(s.to_owned()))
        } else {
            Err(IngestError::BadSocCode {
                value: s.to_owned(),
            })
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.0.starts_with(prefix)
    }
}

impl fmt::Display for SocCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Content hash of a task text: lowercase hex SHA-256 over the exact UTF-8
/// bytes. Stable across runs and machines, so it doubles as the cache key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskKey(String);

impl TaskKey {
    pub fn of_text(text: &str) -> Self {
        let digest = Sha256::digest(text.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest.iter() {
            const TABLE: &[u8; 16] = b"0123456789abcdef";
            hex.push(TABLE[(byte >> 4) as usize] as char);
            hex.push(TABLE[(byte & 0xf) as usize] as char);
        }
        TaskKey(hex)
    }

    /// Accepts an already-computed 64-char lowercase hex digest.
    pub fn from_hex(s: &str) -> Result<Self, IngestError> {
        if s.len() == 64
            && s.bytes()
                .all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
        {
            Ok(TaskKey(s.to_owned()))
        } else {
            Err(IngestError::BadTaskKey {
                value: s.to_owned(),
            })
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskType {
    Core,
    Supplemental,
    Unknown,
}

impl TaskType {
    fn from_field(s: &str) -> Self {
        match s.trim() {
            "Core" => TaskType::Core,
            "Supplemental" => TaskType::Supplemental,
            _ => TaskType::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleId {
    #[serde(rename = "FT")]
    Ft,
    #[serde(rename = "IM")]
    Im,
    #[serde(rename = "RT")]
    Rt,
    Other,
}

impl ScaleId {
    fn from_field(s: &str) -> Self {
        match s.trim() {
            "FT" => ScaleId::Ft,
            "IM" => ScaleId::Im,
            "RT" => ScaleId::Rt,
            _ => ScaleId::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleGroup {
    Clinician,
    NonClinician,
}

impl RoleGroup {
    pub fn as_str(&self) -> &'static str {
        match self {
            RoleGroup::Clinician => "clinician",
            RoleGroup::NonClinician => "non_clinician",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "clinician" => Some(RoleGroup::Clinician),
            "non_clinician" => Some(RoleGroup::NonClinician),
            _ => None,
        }
    }
}

impl fmt::Display for RoleGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Provenance of a task frequency weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    /// Expected frequency-category value over the FT percentage distribution.
    FtExpected,
    /// Importance (IM) rating used because no usable FT distribution exists.
    ImFallback,
    /// Constant 1.0 used because neither FT nor IM ratings exist.
    UniformFallback,
}

impl WeightSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightSource::FtExpected => "ft_expected",
            WeightSource::ImFallback => "im_fallback",
            WeightSource::UniformFallback => "uniform_fallback",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ft_expected" => Some(WeightSource::FtExpected),
            "im_fallback" => Some(WeightSource::ImFallback),
            "uniform_fallback" => Some(WeightSource::UniformFallback),
            _ => None,
        }
    }
}

/// One raw task statement line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStatementRow {
    pub soc_code: SocCode,
    pub occupation_title: String,
    pub task_id: u64,
    pub task_text: String,
    pub task_type: TaskType,
}

/// One raw task rating line. FT rows carry a frequency category 1..=7 and a
/// percentage; IM rows carry an importance value in [1, 5].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRatingRow {
    pub soc_code: SocCode,
    pub task_id: u64,
    pub scale_id: ScaleId,
    pub category: Option<u8>,
    pub data_value: f64,
}

/// One (occupation, task) pair of the canonical task table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOccupationRow {
    pub soc_code: SocCode,
    pub occupation_title: String,
    pub task_id: u64,
    pub task_text: String,
    pub task_key: TaskKey,
    pub weight: f64,
    pub role_group: RoleGroup,
    pub weight_source: WeightSource,
}

/// Occupation roster: which SOC codes are retained and how each maps to a
/// role group. Overrides win over prefix rules; prefix rules apply in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthFilterConfig {
    pub included_soc_prefixes: Vec<String>,
    pub role_map: Vec<(String, RoleGroup)>,
    pub per_occupation_overrides: BTreeMap<String, RoleGroup>,
}

impl Default for HealthFilterConfig {
    /// SOC major group 29- (healthcare practitioners) mapped to clinician,
    /// 31- (healthcare support) to non-clinician.
    fn default() -> Self {
        HealthFilterConfig {
            included_soc_prefixes: alloc::vec!["29-".to_string(), "31-".to_string()],
            role_map: alloc::vec![
                ("29-".to_string(), RoleGroup::Clinician),
                ("31-".to_string(), RoleGroup::NonClinician),
            ],
            per_occupation_overrides: BTreeMap::new(),
        }
    }
}

impl HealthFilterConfig {
    pub fn includes(&self, soc: &SocCode) -> bool {
        self.included_soc_prefixes.iter().any(|p| soc.has_prefix(p))
    }

    pub fn resolve_role(&self, soc: &SocCode) -> Option<RoleGroup> {
        if let Some(group) = self.per_occupation_overrides.get(soc.as_str()) {
            return Some(*group);
        }
        self.role_map
            .iter()
            .find(|(prefix, _)| soc.has_prefix(prefix))
            .map(|(_, group)| *group)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestError {
    /// Header lacks a required column.
    MissingColumn {
        column: String,
    },
    BadSocCode {
        value: String,
    },
    BadTaskKey {
        value: String,
    },
    /// A retained occupation has no role rule and no override.
    UnmappedOccupation {
        soc_code: String,
    },
    /// Rows passed to weight derivation mix more than one (soc, task) pair.
    InconsistentTask,
    /// Canonical task table text did not parse.
    BadTableRecord {
        line: usize,
        message: String,
    },
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestError::MissingColumn { column } => {
                write!(f, "header is missing required column '{column}'")
            }
            IngestError::BadSocCode { value } => {
                write!(f, "'{value}' is not an NN-NNNN.NN SOC code")
            }
            IngestError::BadTaskKey { value } => {
                write!(f, "'{value}' is not a 64-char lowercase hex task key")
            }
            IngestError::UnmappedOccupation { soc_code } => {
                write!(f, "retained occupation {soc_code} has no role-group rule")
            }
            IngestError::InconsistentTask => {
                f.write_str("rating rows mix more than one (soc_code, task_id) pair")
            }
            IngestError::BadTableRecord { line, message } => {
                write!(f, "task table line {line}: {message}")
            }
        }
    }
}

/// A data line that could not be used, reported with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct RowIssue {
    pub line: usize,
    pub kind: RowIssueKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowIssueKind {
    /// Wrong field count or an unusable field value.
    MalformedRow,
    /// A numeric field outside its documented range.
    OutOfRangeValue,
}

/// Parse result carrying both usable rows and per-line issues. Issues are
/// collected, never silently dropped; the caller decides how loud to be.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub rows: Vec<T>,
    pub issues: Vec<RowIssue>,
}

struct Header {
    n_fields: usize,
    indices: BTreeMap<&'static str, usize>,
}

fn resolve_header(
    line: &str,
    required: &[(&'static str, &[&str])],
    optional: &[(&'static str, &[&str])],
) -> Result<Header, IngestError> {
    let names: Vec<String> = line
        .trim_start_matches('\u{feff}')
        .split('\t')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    let mut indices = BTreeMap::new();
    for (canon, aliases) in required {
        match names.iter().position(|n| aliases.iter().any(|a| n == a)) {
            Some(i) => {
                indices.insert(*canon, i);
            }
            None => {
                return Err(IngestError::MissingColumn {
                    column: (*canon).to_owned(),
                })
            }
        }
    }
    for (canon, aliases) in optional {
        if let Some(i) = names.iter().position(|n| aliases.iter().any(|a| n == a)) {
            indices.insert(*canon, i);
        }
    }
    Ok(Header {
        n_fields: names.len(),
        indices,
    })
}

const SOC_ALIASES: &[&str] = &["o*net-soc code", "onetsoc code", "soc code", "soc_code"];
const TASK_ID_ALIASES: &[&str] = &["task id", "task_id"];

fn split_fields<'a>(line: &'a str, header: &Header) -> Result<Vec<&'a str>, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != header.n_fields {
        Err(format!(
            "expected {} tab-separated fields, found {}",
            header.n_fields,
            fields.len()
        ))
    } else {
        Ok(fields)
    }
}

fn data_lines(input: &str) -> impl Iterator<Item = (usize, &str)> {
    input
        .lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.is_empty())
}

/// Parse a tab-delimited task statements file. The first line must be a
/// header naming at least the SOC code, occupation title, task ID, and task
/// text columns; a task type column is honoured when present.
pub fn parse_task_statements(input: &str) -> Result<Parsed<TaskStatementRow>, IngestError> {
    let header_line = input
        .lines()
        .next()
        .ok_or_else(|| IngestError::MissingColumn {
            column: "soc_code".to_owned(),
        })?;
    let header = resolve_header(
        header_line.trim_end_matches('\r'),
        &[
            ("soc_code", SOC_ALIASES),
            ("occupation_title", &["title", "occupation_title"]),
            ("task_id", TASK_ID_ALIASES),
            ("task_text", &["task", "task_text"]),
        ],
        &[("task_type", &["task type", "task_type"])],
    )?;

    let mut rows = Vec::new();
    let mut issues = Vec::new();
    for (line_no, line) in data_lines(input) {
        let fields = match split_fields(line, &header) {
            Ok(f) => f,
            Err(message) => {
                issues.push(RowIssue {
                    line: line_no,
                    kind: RowIssueKind::MalformedRow,
                    message,
                });
                continue;
            }
        };
        let get = |name: &str| fields[header.indices[name]];

        let soc_code = match SocCode::parse(get("soc_code").trim()) {
            Ok(code) => code,
            Err(e) => {
                issues.push(RowIssue {
                    line: line_no,
                    kind: RowIssueKind::MalformedRow,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let task_id = match get("task_id").trim().parse::<u64>() {
            Ok(id) => id,
            Err(_) => {
                issues.push(RowIssue {
                    line: line_no,
                    kind: RowIssueKind::MalformedRow,
                    message: format!("task id '{}' is not an integer", get("task_id").trim()),
                });
                continue;
            }
        };
        let task_text = get("task_text");
        if task_text.trim().is_empty() {
            issues.push(RowIssue {
                line: line_no,
                kind: RowIssueKind::MalformedRow,
                message: "task text is empty".to_owned(),
            });
            continue;
        }
        let task_type = header
            .indices
            .get("task_type")
            .map(|&i| TaskType::from_field(fields[i]))
            .unwrap_or(TaskType::Unknown);
        rows.push(TaskStatementRow {
            soc_code,
            occupation_title: get("occupation_title").trim().to_owned(),
            task_id,
            task_text: task_text.to_owned(),
            task_type,
        });
    }
    Ok(Parsed { rows, issues })
}

/// Parse a tab-delimited task ratings file. FT rows retain their frequency
/// category; all other scales have the category dropped. Unknown scale IDs map
/// to `Other` and are retained.
pub fn parse_task_ratings(input: &str) -> Result<Parsed<TaskRatingRow>, IngestError> {
    let header_line = input
        .lines()
        .next()
        .ok_or_else(|| IngestError::MissingColumn {
            column: "soc_code".to_owned(),
        })?;
    let header = resolve_header(
        header_line.trim_end_matches('\r'),
        &[
            ("soc_code", SOC_ALIASES),
            ("task_id", TASK_ID_ALIASES),
            ("scale_id", &["scale id", "scale_id"]),
            ("category", &["category"]),
            ("data_value", &["data value", "data_value"]),
        ],
        &[],
    )?;

    let mut rows = Vec::new();
    let mut issues = Vec::new();
    for (line_no, line) in data_lines(input) {
        let fields = match split_fields(line, &header) {
            Ok(f) => f,
            Err(message) => {
                issues.push(RowIssue {
                    line: line_no,
                    kind: RowIssueKind::MalformedRow,
                    message,
                });
                continue;
            }
        };
        let get = |name: &str| fields[header.indices[name]].trim();

        let soc_code = match SocCode::parse(get("soc_code")) {
            Ok(code) => code,
            Err(e) => {
                issues.push(RowIssue {
                    line: line_no,
                    kind: RowIssueKind::MalformedRow,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let task_id = match get("task_id").parse::<u64>() {
            Ok(id) => id,
            Err(_) => {
                issues.push(RowIssue {
                    line: line_no,
                    kind: RowIssueKind::MalformedRow,
                    message: format!("task id '{}' is not an integer", get("task_id")),
                });
                continue;
            }
        };
        let data_value = match get("data_value").parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                issues.push(RowIssue {
                    line: line_no,
                    kind: RowIssueKind::MalformedRow,
                    message: format!("data value '{}' is not a number", get("data_value")),
                });
                continue;
            }
        };
        let scale_id = ScaleId::from_field(get("scale_id"));

        let category = if scale_id == ScaleId::Ft {
            match get("category").parse::<u8>() {
                Ok(k) if (1..=7).contains(&k) => Some(k),
                _ => {
                    issues.push(RowIssue {
                        line: line_no,
                        kind: RowIssueKind::MalformedRow,
                        message: format!(
                            "FT category '{}' is not an integer in 1..7",
                            get("category")
                        ),
                    });
                    continue;
                }
            }
        } else {
            None
        };

        if scale_id == ScaleId::Ft && !(0.0..=100.0).contains(&data_value) {
            issues.push(RowIssue {
                line: line_no,
                kind: RowIssueKind::OutOfRangeValue,
                message: format!("FT percentage {data_value} outside [0, 100]"),
            });
            continue;
        }
        if scale_id == ScaleId::Im && !(1.0..=5.0).contains(&data_value) {
            issues.push(RowIssue {
                line: line_no,
                kind: RowIssueKind::OutOfRangeValue,
                message: format!("IM value {data_value} outside [1, 5]"),
            });
            continue;
        }

        rows.push(TaskRatingRow {
            soc_code,
            task_id,
            scale_id,
            category,
            data_value,
        });
    }
    Ok(Parsed { rows, issues })
}

/// Derive the frequency weight for one (occupation, task) pair.
///
/// If the task has a usable FT percentage distribution, the weight is the
/// expected frequency category Σ_k k·(pct_k / 100). Otherwise the IM rating is
/// used, and failing that the weight is a uniform 1.0. The source is recorded
/// so results stay reweightable.
pub fn compute_frequency_weight(
    ratings: &[TaskRatingRow],
) -> Result<(f64, WeightSource), IngestError> {
    if let Some(first) = ratings.first() {
        let task = (&first.soc_code, first.task_id);
        if ratings.iter().any(|r| (&r.soc_code, r.task_id) != task) {
            return Err(IngestError::InconsistentTask);
        }
    }

    let mut ft_expected = 0.0;
    let mut ft_total_pct = 0.0;
    for row in ratings.iter().filter(|r| r.scale_id == ScaleId::Ft) {
        if let Some(k) = row.category {
            ft_expected += f64::from(k) * row.data_value / 100.0;
            ft_total_pct += row.data_value;
        }
    }
    // An FT distribution with zero total mass cannot yield a positive weight,
    // so it falls through to the IM and uniform fallbacks.
    if ft_total_pct > 0.0 {
        return Ok((ft_expected, WeightSource::FtExpected));
    }

    if let Some(im) = ratings
        .iter()
        .find(|r| r.scale_id == ScaleId::Im && r.data_value > 0.0)
    {
        return Ok((im.data_value, WeightSource::ImFallback));
    }

    Ok((1.0, WeightSource::UniformFallback))
}

/// Build the canonical task-occupation table: filter statements to the
/// configured roster, attach weights and role groups, and key each row by the
/// content hash of its exact task text. An included occupation with no role
/// rule is an error, never a guess.
pub fn build_task_table(
    statements: &[TaskStatementRow],
    ratings: &[TaskRatingRow],
    config: &HealthFilterConfig,
) -> Result<Vec<TaskOccupationRow>, IngestError> {
    let mut ratings_by_task: BTreeMap<(&SocCode, u64), Vec<&TaskRatingRow>> = BTreeMap::new();
    for rating in ratings {
        ratings_by_task
            .entry((&rating.soc_code, rating.task_id))
            .or_default()
            .push(rating);
    }

    let mut table = Vec::new();
    for stmt in statements {
        if !config.includes(&stmt.soc_code) {
            continue;
        }
        let role_group =
            config
                .resolve_role(&stmt.soc_code)
                .ok_or_else(|| IngestError::UnmappedOccupation {
                    soc_code: stmt.soc_code.as_str().to_owned(),
                })?;
        let task_ratings: Vec<TaskRatingRow> = ratings_by_task
            .get(&(&stmt.soc_code, stmt.task_id))
            .map(|rs| rs.iter().map(|&r| r.clone()).collect())
            .unwrap_or_default();
        let (weight, weight_source) = compute_frequency_weight(&task_ratings)?;
        table.push(TaskOccupationRow {
            soc_code: stmt.soc_code.clone(),
            occupation_title: stmt.occupation_title.clone(),
            task_id: stmt.task_id,
            task_key: TaskKey::of_text(&stmt.task_text),
            task_text: stmt.task_text.clone(),
            weight,
            role_group,
            weight_source,
        });
    }
    Ok(table)
}

/// Deduplicated task texts plus the membership map back to table row indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dedup {
    /// One entry per distinct task text, sorted by task key.
    pub unique_tasks: Vec<(TaskKey, String)>,
    /// Row indices of the input table keyed by task key; the lists partition
    /// the row set.
    pub membership: BTreeMap<TaskKey, Vec<usize>>,
}

/// Deduplicate by exact string match on the task text. No normalisation is
/// applied; texts differing only in whitespace stay distinct.
pub fn dedup_tasks(table: &[TaskOccupationRow]) -> Dedup {
    let mut texts: BTreeMap<TaskKey, String> = BTreeMap::new();
    let mut membership: BTreeMap<TaskKey, Vec<usize>> = BTreeMap::new();
    for (idx, row) in table.iter().enumerate() {
        texts
            .entry(row.task_key.clone())
            .or_insert_with(|| row.task_text.clone());
        membership
            .entry(row.task_key.clone())
            .or_default()
            .push(idx);
    }
    Dedup {
        unique_tasks: texts.into_iter().collect(),
        membership,
    }
}

/// Pairs of unique tasks whose texts are byte-distinct but equal after
/// trimming. Surfaced as a lint so near-duplicate keys are visible.
pub fn whitespace_twins(unique_tasks: &[(TaskKey, String)]) -> Vec<(TaskKey, TaskKey)> {
    let mut by_trimmed: BTreeMap<&str, Vec<&TaskKey>> = BTreeMap::new();
    for (key, text) in unique_tasks {
        by_trimmed.entry(text.trim()).or_default().push(key);
    }
    let mut twins = Vec::new();
    for keys in by_trimmed.values() {
        for pair in keys.windows(2) {
            twins.push((pair[0].clone(), pair[1].clone()));
        }
    }
    twins
}

const TABLE_HEADER: &str =
    "soc_code\toccupation_title\ttask_id\ttask_key\tweight\trole_group\tweight_source\ttask_text";

fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape_field(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape '\\{}'", other.unwrap_or(' '))),
        }
    }
    Ok(out)
}

/// Serialise the canonical task table. Text fields are backslash-escaped so
/// every record stays on one line; floats use the shortest representation
/// that parses back to the identical value, making the format a fixed point
/// of serialise-then-parse.
pub fn write_task_table(rows: &[TaskOccupationRow]) -> String {
    let mut out = String::new();
    out.push_str(TABLE_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            row.soc_code,
            escape_field(&row.occupation_title),
            row.task_id,
            row.task_key,
            row.weight,
            row.role_group.as_str(),
            row.weight_source.as_str(),
            escape_field(&row.task_text),
        ));
    }
    out
}

/// Parse text produced by [`write_task_table`].
pub fn parse_task_table(input: &str) -> Result<Vec<TaskOccupationRow>, IngestError> {
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == TABLE_HEADER => {}
        _ => {
            return Err(IngestError::BadTableRecord {
                line: 1,
                message: "missing canonical task table header".to_owned(),
            })
        }
    }

    let bad = |line: usize, message: String| IngestError::BadTableRecord { line, message };

    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 8 {
            return Err(bad(
                line_no,
                format!("expected 8 fields, found {}", fields.len()),
            ));
        }
        let soc_code = SocCode::parse(fields[0]).map_err(|e| bad(line_no, e.to_string()))?;
        let occupation_title = unescape_field(fields[1]).map_err(|m| bad(line_no, m))?;
        let task_id = fields[2].parse::<u64>().map_err(|_| {
            bad(
                line_no,
                format!("task id '{}' is not an integer", fields[2]),
            )
        })?;
        let task_key = TaskKey::from_hex(fields[3]).map_err(|e| bad(line_no, e.to_string()))?;
        let weight = fields[4]
            .parse::<f64>()
            .map_err(|_| bad(line_no, format!("weight '{}' is not a number", fields[4])))?;
        if !weight.is_finite() || weight <= 0.0 {
            return Err(bad(line_no, format!("weight {weight} is not positive")));
        }
        let role_group = RoleGroup::parse(fields[5])
            .ok_or_else(|| bad(line_no, format!("unknown role group '{}'", fields[5])))?;
        let weight_source = WeightSource::parse(fields[6])
            .ok_or_else(|| bad(line_no, format!("unknown weight source '{}'", fields[6])))?;
        let task_text = unescape_field(fields[7]).map_err(|m| bad(line_no, m))?;
        rows.push(TaskOccupationRow {
            soc_code,
            occupation_title,
            task_id,
            task_text,
            task_key,
            weight,
            role_group,
            weight_source,
        });
    }
    Ok(rows)
}
