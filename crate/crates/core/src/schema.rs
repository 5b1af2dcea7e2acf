//! The constrained scoring record and its validator.
//!
//! A scoring backend must return exactly one flat JSON record matching
//! [`SCORE_RECORD_CONTRACT`]. Candidates are validated against categorical
//! membership and numeric bounds; every violation found is reported (not just
//! the first) so the repair loop can hand the model a complete correction.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ingest::TaskKey;

/// The four transaction-cost categories. No other value is representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CategoryCode {
    #[serde(rename = "SEARCH_INFO")]
    SearchInfo,
    #[serde(rename = "BARGAIN_DECIDE")]
    BargainDecide,
    #[serde(rename = "MONITOR_ENFORCE")]
    MonitorEnforce,
    #[serde(rename = "ADAPT_COORDINATE")]
    AdaptCoordinate,
}

impl CategoryCode {
    pub const ALL: [CategoryCode; 4] = [
        CategoryCode::SearchInfo,
        CategoryCode::BargainDecide,
        CategoryCode::MonitorEnforce,
        CategoryCode::AdaptCoordinate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CategoryCode::SearchInfo => "SEARCH_INFO",
            CategoryCode::BargainDecide => "BARGAIN_DECIDE",
            CategoryCode::MonitorEnforce => "MONITOR_ENFORCE",
            CategoryCode::AdaptCoordinate => "ADAPT_COORDINATE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.as_str() == s)
    }

    /// Stable index used for share tables and CSV column order.
    pub fn index(&self) -> usize {
        match self {
            CategoryCode::SearchInfo => 0,
            CategoryCode::BargainDecide => 1,
            CategoryCode::MonitorEnforce => 2,
            CategoryCode::AdaptCoordinate => 3,
        }
    }
}

impl fmt::Display for CategoryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ordinal driver scores, each in {0, 1, 2, 3}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverScores {
    pub uncertainty: u8,
    pub measurability: u8,
    pub asset_specificity: u8,
    pub interdependence: u8,
    pub opportunism: u8,
}

/// Driver field names in canonical order.
pub const DRIVER_FIELDS: [&str; 5] = [
    "uncertainty",
    "measurability",
    "asset_specificity",
    "interdependence",
    "opportunism",
];

/// Everything a backend must supply for one task: the validated payload of a
/// [`TaskScore`] before task key and run metadata are attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePayload {
    pub tc_category: CategoryCode,
    pub tc_intensity: u8,
    pub drivers: DriverScores,
    pub tags: Vec<String>,
}

/// Run metadata attached to an accepted score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreMeta {
    /// Requests made before acceptance; at least 1.
    pub attempts: u32,
    /// True iff the first response was rejected, i.e. attempts > 1.
    pub repaired: bool,
    pub model_id: String,
    /// Unix seconds, UTC.
    pub scored_at: u64,
}

/// A validated scoring record for one unique task text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_key: TaskKey,
    pub tc_category: CategoryCode,
    pub tc_intensity: u8,
    pub drivers: DriverScores,
    pub tags: Vec<String>,
    pub meta: ScoreMeta,
}

impl TaskScore {
    pub fn from_payload(task_key: TaskKey, payload: ScorePayload, meta: ScoreMeta) -> Self {
        TaskScore {
            task_key,
            tc_category: payload.tc_category,
            tc_intensity: payload.tc_intensity,
            drivers: payload.drivers,
            tags: payload.tags,
            meta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    NotParseable,
    MissingField,
    WrongType,
    OutOfRange,
    NotInEnum,
    ExtraField,
}

impl Constraint {
    pub fn as_str(&self) -> &'static str {
        match self {
            Constraint::NotParseable => "not_parseable",
            Constraint::MissingField => "missing_field",
            Constraint::WrongType => "wrong_type",
            Constraint::OutOfRange => "out_of_range",
            Constraint::NotInEnum => "not_in_enum",
            Constraint::ExtraField => "extra_field",
        }
    }
}

/// One schema violation, addressed by field path so the repair message can
/// point at the offending value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationViolation {
    pub field_path: String,
    pub constraint: Constraint,
    pub message: String,
}

fn violation(path: &str, constraint: Constraint, message: String) -> ValidationViolation {
    ValidationViolation {
        field_path: path.to_owned(),
        constraint,
        message,
    }
}

/// The exact wire shape a backend must return. Prompts, the validator, and
/// fixtures all reference this one constant so they cannot drift apart.
pub const SCORE_RECORD_CONTRACT: &str = r#"{"tc_category": "SEARCH_INFO" | "BARGAIN_DECIDE" | "MONITOR_ENFORCE" | "ADAPT_COORDINATE", "tc_intensity": <integer 0-5>, "drivers": {"uncertainty": <integer 0-3>, "measurability": <integer 0-3>, "asset_specificity": <integer 0-3>, "interdependence": <integer 0-3>, "opportunism": <integer 0-3>}, "tags": [<lowercase string, at most 40 chars, no duplicates>, ...]}"#;

/// Parse a raw backend response and validate it. A body that is not a single
/// JSON value is itself a violation, not an abort.
pub fn validate_response(raw: &str) -> Result<ScorePayload, Vec<ValidationViolation>> {
    match serde_json::from_str::<Value>(raw) {
        Ok(candidate) => validate_candidate(&candidate),
        Err(e) => Err(alloc::vec![violation(
            "$",
            Constraint::NotParseable,
            format!("response is not parseable as JSON: {e}"),
        )]),
    }
}

fn check_small_int(
    value: &Value,
    path: &str,
    max: i64,
    violations: &mut Vec<ValidationViolation>,
) -> Option<u8> {
    match value {
        Value::Number(n) => match n.as_i64() {
            Some(i) if (0..=max).contains(&i) => Some(i as u8),
            Some(i) => {
                violations.push(violation(
                    path,
                    Constraint::OutOfRange,
                    format!("{i} is outside 0..={max}"),
                ));
                None
            }
            None => {
                violations.push(violation(
                    path,
                    Constraint::WrongType,
                    format!("{n} is not an integer"),
                ));
                None
            }
        },
        other => {
            violations.push(violation(
                path,
                Constraint::WrongType,
                format!("expected an integer, found {}", type_name(other)),
            ));
            None
        }
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Validate a parsed candidate record against the scoring contract. Returns a
/// fully typed payload iff there are zero violations; otherwise returns every
/// violation found, in a fixed field order.
pub fn validate_candidate(candidate: &Value) -> Result<ScorePayload, Vec<ValidationViolation>> {
    let mut violations = Vec::new();

    let object = match candidate.as_object() {
        Some(o) => o,
        None => {
            return Err(alloc::vec![violation(
                "$",
                Constraint::WrongType,
                format!(
                    "expected a single JSON object, found {}",
                    type_name(candidate)
                ),
            )])
        }
    };

    let tc_category = match object.get("tc_category") {
        None => {
            violations.push(violation(
                "tc_category",
                Constraint::MissingField,
                "tc_category is required".to_owned(),
            ));
            None
        }
        Some(Value::String(s)) => match CategoryCode::parse(s) {
            Some(code) => Some(code),
            None => {
                violations.push(violation(
                    "tc_category",
                    Constraint::NotInEnum,
                    format!("'{s}' is not one of the four category codes"),
                ));
                None
            }
        },
        Some(other) => {
            violations.push(violation(
                "tc_category",
                Constraint::WrongType,
                format!("expected one category string, found {}", type_name(other)),
            ));
            None
        }
    };

    let tc_intensity = match object.get("tc_intensity") {
        None => {
            violations.push(violation(
                "tc_intensity",
                Constraint::MissingField,
                "tc_intensity is required".to_owned(),
            ));
            None
        }
        Some(v) => check_small_int(v, "tc_intensity", 5, &mut violations),
    };

    let drivers = match object.get("drivers") {
        None => {
            violations.push(violation(
                "drivers",
                Constraint::MissingField,
                "drivers is required".to_owned(),
            ));
            None
        }
        Some(Value::Object(map)) => {
            let mut values = [0u8; 5];
            let mut complete = true;
            for (i, field) in DRIVER_FIELDS.iter().enumerate() {
                let path = format!("drivers.{field}");
                match map.get(*field) {
                    None => {
                        violations.push(violation(
                            &path,
                            Constraint::MissingField,
                            format!("{path} is required"),
                        ));
                        complete = false;
                    }
                    Some(v) => match check_small_int(v, &path, 3, &mut violations) {
                        Some(score) => values[i] = score,
                        None => complete = false,
                    },
                }
            }
            // serde_json objects iterate in sorted key order, so extras are
            // reported deterministically.
            for key in map.keys() {
                if !DRIVER_FIELDS.contains(&key.as_str()) {
                    violations.push(violation(
                        &format!("drivers.{key}"),
                        Constraint::ExtraField,
                        format!("'{key}' is not a driver field"),
                    ));
                    complete = false;
                }
            }
            complete.then(|| DriverScores {
                uncertainty: values[0],
                measurability: values[1],
                asset_specificity: values[2],
                interdependence: values[3],
                opportunism: values[4],
            })
        }
        Some(other) => {
            violations.push(violation(
                "drivers",
                Constraint::WrongType,
                format!(
                    "expected an object with the five driver fields, found {}",
                    type_name(other)
                ),
            ));
            None
        }
    };

    // tags are optional and default to the empty list.
    let tags = match object.get("tags") {
        None => Some(Vec::new()),
        Some(Value::Array(items)) => {
            let mut tags: Vec<String> = Vec::with_capacity(items.len());
            let mut ok = true;
            for (i, item) in items.iter().enumerate() {
                let path = format!("tags[{i}]");
                match item {
                    Value::String(s) => {
                        if s.is_empty() {
                            violations.push(violation(
                                &path,
                                Constraint::OutOfRange,
                                "tags must be non-empty".to_owned(),
                            ));
                            ok = false;
                        } else if s.chars().count() > 40 {
                            violations.push(violation(
                                &path,
                                Constraint::OutOfRange,
                                format!("tag '{s}' is longer than 40 characters"),
                            ));
                            ok = false;
                        } else if s.chars().any(|c| c.is_uppercase()) {
                            violations.push(violation(
                                &path,
                                Constraint::OutOfRange,
                                format!("tag '{s}' must be lowercase"),
                            ));
                            ok = false;
                        } else if tags.iter().any(|t| t == s) {
                            violations.push(violation(
                                &path,
                                Constraint::OutOfRange,
                                format!("tag '{s}' is a duplicate"),
                            ));
                            ok = false;
                        } else {
                            tags.push(s.clone());
                        }
                    }
                    other => {
                        violations.push(violation(
                            &path,
                            Constraint::WrongType,
                            format!("expected a string, found {}", type_name(other)),
                        ));
                        ok = false;
                    }
                }
            }
            ok.then_some(tags)
        }
        Some(other) => {
            violations.push(violation(
                "tags",
                Constraint::WrongType,
                format!("expected an array of strings, found {}", type_name(other)),
            ));
            None
        }
    };

    const KNOWN_FIELDS: [&str; 4] = ["tc_category", "tc_intensity", "drivers", "tags"];
    for key in object.keys() {
        if !KNOWN_FIELDS.contains(&key.as_str()) {
            violations.push(violation(
                key,
                Constraint::ExtraField,
                format!("'{key}' is not part of the scoring record"),
            ));
        }
    }

    if violations.is_empty() {
        Ok(ScorePayload {
            tc_category: tc_category.expect("validated"),
            tc_intensity: tc_intensity.expect("validated"),
            drivers: drivers.expect("validated"),
            tags: tags.expect("validated"),
        })
    } else {
        Err(violations)
    }
}

fn allowed_domain(v: &ValidationViolation) -> &'static str {
    if v.constraint == Constraint::ExtraField {
        return "remove this field";
    }
    if v.constraint == Constraint::NotParseable {
        return "send a single well-formed JSON object with no surrounding prose";
    }
    let path = v.field_path.as_str();
    if path == "tc_category" {
        "allowed values: SEARCH_INFO, BARGAIN_DECIDE, MONITOR_ENFORCE, ADAPT_COORDINATE"
    } else if path == "tc_intensity" {
        "allowed values: integers 0 to 5"
    } else if path.starts_with("drivers.") {
        "allowed values: integers 0 to 3"
    } else if path.starts_with("tags") {
        "allowed values: distinct lowercase strings of at most 40 characters"
    } else if path == "drivers" {
        "an object with exactly the fields uncertainty, measurability, asset_specificity, interdependence, opportunism"
    } else {
        "a single JSON object matching the record contract"
    }
}

/// Render violations as the corrective message for the repair loop. Output is
/// deterministic: one line per violation in field-path order, then the record
/// contract and the instruction to resend exactly one corrected record.
pub fn render_violations(violations: &[ValidationViolation]) -> String {
    let mut sorted: Vec<&ValidationViolation> = violations.iter().collect();
    sorted.sort_by(|a, b| {
        a.field_path
            .cmp(&b.field_path)
            .then(a.constraint.cmp(&b.constraint))
    });

    let mut out = String::from("The previous response violated the scoring record schema:\n");
    for v in sorted {
        out.push_str(&format!(
            "- {} [{}]: {} ({}).\n",
            v.field_path,
            v.constraint.as_str(),
            v.message,
            allowed_domain(v)
        ));
    }
    out.push_str(
        "Resend exactly one corrected JSON record and nothing else. The record must match:\n",
    );
    out.push_str(SCORE_RECORD_CONTRACT);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn valid_record_yields_payload() {
        let candidate = json!({
            "tc_category": "SEARCH_INFO",
            "tc_intensity": 3,
            "drivers": {
                "uncertainty": 1, "measurability": 1, "asset_specificity": 1,
                "interdependence": 1, "opportunism": 1
            },
            "tags": []
        });
        let payload = validate_candidate(&candidate).unwrap();
        assert_eq!(payload.tc_category, CategoryCode::SearchInfo);
        assert_eq!(payload.tc_intensity, 3);
        assert!(payload.tags.is_empty());
    }

    #[test]
    fn unknown_category_is_not_in_enum() {
        let candidate = json!({
            "tc_category": "OTHER",
            "tc_intensity": 3,
            "drivers": {
                "uncertainty": 1, "measurability": 1, "asset_specificity": 1,
                "interdependence": 1, "opportunism": 1
            }
        });
        let violations = validate_candidate(&candidate).unwrap_err();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].field_path, "tc_category");
        assert_eq!(violations[0].constraint, Constraint::NotInEnum);
    }

    #[test]
    fn all_violations_reported_not_just_first() {
        let candidate = json!({
            "tc_category": "MONITOR_ENFORCE",
            "tc_intensity": 6,
            "drivers": {
                "uncertainty": -1, "measurability": 1, "asset_specificity": 1,
                "interdependence": 1, "opportunism": 1
            }
        });
        let violations = validate_candidate(&candidate).unwrap_err();
        assert_eq!(violations.len(), 2);
        assert!(violations
            .iter()
            .any(|v| v.field_path == "tc_intensity" && v.constraint == Constraint::OutOfRange));
        assert!(violations.iter().any(
            |v| v.field_path == "drivers.uncertainty" && v.constraint == Constraint::OutOfRange
        ));
    }

    #[test]
    fn non_integer_intensity_is_wrong_type() {
        let candidate = json!({
            "tc_category": "MONITOR_ENFORCE",
            "tc_intensity": 3.5,
            "drivers": {
                "uncertainty": 1, "measurability": 1, "asset_specificity": 1,
                "interdependence": 1, "opportunism": 1
            }
        });
        let violations = validate_candidate(&candidate).unwrap_err();
        assert_eq!(violations[0].constraint, Constraint::WrongType);
    }

    #[test]
    fn category_array_is_wrong_type() {
        let candidate = json!({
            "tc_category": ["SEARCH_INFO"],
            "tc_intensity": 3,
            "drivers": {
                "uncertainty": 1, "measurability": 1, "asset_specificity": 1,
                "interdependence": 1, "opportunism": 1
            }
        });
        let violations = validate_candidate(&candidate).unwrap_err();
        assert_eq!(violations[0].constraint, Constraint::WrongType);
    }

    #[test]
    fn extra_top_level_field_rejected() {
        let candidate = json!({
            "tc_category": "SEARCH_INFO",
            "tc_intensity": 3,
            "drivers": {
                "uncertainty": 1, "measurability": 1, "asset_specificity": 1,
                "interdependence": 1, "opportunism": 1
            },
            "rationale": "because"
        });
        let violations = validate_candidate(&candidate).unwrap_err();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].field_path, "rationale");
        assert_eq!(violations[0].constraint, Constraint::ExtraField);
    }

    #[test]
    fn missing_tags_default_to_empty() {
        let candidate = json!({
            "tc_category": "ADAPT_COORDINATE",
            "tc_intensity": 0,
            "drivers": {
                "uncertainty": 0, "measurability": 0, "asset_specificity": 0,
                "interdependence": 0, "opportunism": 0
            }
        });
        let payload = validate_candidate(&candidate).unwrap();
        assert!(payload.tags.is_empty());
    }

    #[test]
    fn duplicate_tags_rejected() {
        let candidate = json!({
            "tc_category": "ADAPT_COORDINATE",
            "tc_intensity": 1,
            "drivers": {
                "uncertainty": 0, "measurability": 0, "asset_specificity": 0,
                "interdependence": 0, "opportunism": 0
            },
            "tags": ["handoff", "handoff"]
        });
        let violations = validate_candidate(&candidate).unwrap_err();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].field_path, "tags[1]");
    }

    #[test]
    fn unparseable_response_reported_as_not_parseable() {
        let violations = validate_response("sure, here is the score: five").unwrap_err();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].constraint, Constraint::NotParseable);
    }

    #[test]
    fn render_names_all_categories_for_enum_violation() {
        let violations = alloc::vec![super::violation(
            "tc_category",
            Constraint::NotInEnum,
            "'OTHER' is not one of the four category codes".into(),
        )];
        let text = render_violations(&violations);
        for code in CategoryCode::ALL {
            assert!(text.contains(code.as_str()));
        }
    }

    #[test]
    fn render_lists_violations_in_field_path_order() {
        let violations = alloc::vec![
            super::violation("tc_intensity", Constraint::OutOfRange, "6".into()),
            super::violation("drivers.uncertainty", Constraint::OutOfRange, "-1".into()),
        ];
        let text = render_violations(&violations);
        let drivers_at = text.find("drivers.uncertainty").unwrap();
        let intensity_at = text.find("tc_intensity").unwrap();
        assert!(drivers_at < intensity_at);
    }

    #[test]
    fn render_not_parseable_requests_bare_record() {
        let violations = alloc::vec![super::violation(
            "$",
            Constraint::NotParseable,
            "response is not parseable as JSON".into(),
        )];
        let text = render_violations(&violations);
        assert!(text.contains("no surrounding prose"));
        assert!(text.contains("exactly one corrected JSON record"));
    }

    fn valid_value() -> Value {
        json!({
            "tc_category": "BARGAIN_DECIDE",
            "tc_intensity": 2,
            "drivers": {
                "uncertainty": 1, "measurability": 2, "asset_specificity": 0,
                "interdependence": 3, "opportunism": 1
            },
            "tags": ["negotiation"]
        })
    }

    // Independent fault injectors; each introduces exactly one violation.
    fn inject(value: &mut Value, fault: usize) {
        let object = value.as_object_mut().unwrap();
        match fault {
            0 => {
                object.insert("tc_category".into(), json!("COORDINATION"));
            }
            1 => {
                object.insert("tc_intensity".into(), json!(9));
            }
            2 => {
                object["drivers"]
                    .as_object_mut()
                    .unwrap()
                    .insert("opportunism".into(), json!(-2));
            }
            3 => {
                object.insert("confidence".into(), json!(0.9));
            }
            4 => {
                object["drivers"]
                    .as_object_mut()
                    .unwrap()
                    .remove("uncertainty");
            }
            _ => {
                object.insert("tags".into(), json!(["ok", "TOO_LOUD"]));
            }
        }
    }

    proptest! {
        #[test]
        fn injecting_k_faults_reports_k_violations(
            faults in proptest::collection::btree_set(0usize..6, 1..=6)
        ) {
            let mut candidate = valid_value();
            for &f in &faults {
                inject(&mut candidate, f);
            }
            let violations = validate_candidate(&candidate).unwrap_err();
            prop_assert_eq!(violations.len(), faults.len());
        }

        #[test]
        fn accepted_payloads_satisfy_all_invariants(
            category in 0usize..4,
            intensity in 0u8..=5,
            drivers in proptest::array::uniform5(0u8..=3),
            tags in proptest::collection::btree_set("[a-z]{1,40}", 0..4),
        ) {
            let tags: Vec<String> = tags.into_iter().collect();
            let candidate = json!({
                "tc_category": CategoryCode::ALL[category].as_str(),
                "tc_intensity": intensity,
                "drivers": {
                    "uncertainty": drivers[0], "measurability": drivers[1],
                    "asset_specificity": drivers[2], "interdependence": drivers[3],
                    "opportunism": drivers[4]
                },
                "tags": tags,
            });
            let payload = validate_candidate(&candidate).unwrap();
            prop_assert!(payload.tc_intensity <= 5);
            prop_assert!(payload.drivers.uncertainty <= 3);
            prop_assert!(payload.drivers.opportunism <= 3);
            let mut seen = payload.tags.clone();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), payload.tags.len());
            prop_assert!(payload.tags.iter().all(|t| t.chars().count() <= 40));
        }

        #[test]
        fn validation_is_total_and_deterministic(raw in "[ -~]{0,60}") {
            let first = validate_response(&raw);
            let second = validate_response(&raw);
            prop_assert_eq!(first, second);
        }
    }
}
