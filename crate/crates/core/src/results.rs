//! The `veritas-results/1` file format, shared by applicant and assessor
//! result submissions. Assessor files additionally carry an
//! `observations` section; assessor rows must use the physical method.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::TestId;
use crate::rating::{MetricValue, Rating};
use crate::selection::{ApplicantReport, ResultEntry, TestMethod};
use crate::verdict::{AssessorEntry, AssessorReport, Observation};

/// Schema string required in the results file header.
pub const RESULTS_SCHEMA: &str = "veritas-results/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRow {
    pub test_id: TestId,
    pub rating: Rating,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<MetricValue>,
    pub method: TestMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRow {
    pub test_id: TestId,
    pub note: String,
}

/// On-disk form of a results submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsFile {
    pub schema: String,
    #[serde(default)]
    pub results: Vec<ResultRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observations: Vec<ObservationRow>,
}

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("failed to read results: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed results document: {0}")]
    Schema(String),
    #[error("duplicate result row for test '{0}'")]
    DuplicateRow(TestId),
    #[error("assessor result for test '{0}' uses method '{1:?}'; assessor tests are physical")]
    NonPhysicalAssessorMethod(TestId, TestMethod),
}

fn parse_results(text: &str) -> Result<ResultsFile, ResultsError> {
    let header: toml::Value = text
        .parse()
        .map_err(|e: toml::de::Error| ResultsError::Schema(e.to_string()))?;
    match header.get("schema").and_then(|v| v.as_str()) {
        None => {
            return Err(ResultsError::Schema(
                "missing 'schema' header field".to_string(),
            ))
        }
        Some(s) if s != RESULTS_SCHEMA => {
            return Err(ResultsError::Schema(format!(
                "unsupported schema '{s}' (expected '{RESULTS_SCHEMA}')"
            )))
        }
        Some(_) => {}
    }
    toml::from_str(text).map_err(|e| ResultsError::Schema(e.to_string()))
}

fn rows_to_map<T>(
    rows: Vec<ResultRow>,
    mut convert: impl FnMut(&ResultRow) -> Result<T, ResultsError>,
) -> Result<BTreeMap<TestId, T>, ResultsError> {
    let mut entries = BTreeMap::new();
    for row in rows {
        let entry = convert(&row)?;
        if entries.insert(row.test_id.clone(), entry).is_some() {
            return Err(ResultsError::DuplicateRow(row.test_id));
        }
    }
    Ok(entries)
}

/// Parse an applicant results file.
pub fn load_applicant_report(mut source: impl Read) -> Result<ApplicantReport, ResultsError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    load_applicant_report_str(&text)
}

pub fn load_applicant_report_str(text: &str) -> Result<ApplicantReport, ResultsError> {
    let file = parse_results(text)?;
    let entries = rows_to_map(file.results, |row| {
        Ok(ResultEntry {
            rating: row.rating,
            raw: row.raw.clone(),
            method: row.method,
        })
    })?;
    Ok(ApplicantReport { entries })
}

/// Parse an assessor results file, which may carry observations.
pub fn load_assessor_report(mut source: impl Read) -> Result<AssessorReport, ResultsError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    load_assessor_report_str(&text)
}

pub fn load_assessor_report_str(text: &str) -> Result<AssessorReport, ResultsError> {
    let file = parse_results(text)?;
    let entries = rows_to_map(file.results, |row| {
        if row.method != TestMethod::Physical {
            return Err(ResultsError::NonPhysicalAssessorMethod(
                row.test_id.clone(),
                row.method,
            ));
        }
        Ok(AssessorEntry {
            rating: row.rating,
            raw: row.raw.clone(),
        })
    })?;
    let observations = file
        .observations
        .into_iter()
        .map(|o| Observation {
            test_id: o.test_id,
            note: o.note,
        })
        .collect();
    Ok(AssessorReport {
        entries,
        observations,
    })
}

/// Serialize an applicant report to its document form.
pub fn save_applicant_report(report: &ApplicantReport) -> String {
    let file = ResultsFile {
        schema: RESULTS_SCHEMA.to_string(),
        results: report
            .entries
            .iter()
            .map(|(id, e)| ResultRow {
                test_id: id.clone(),
                rating: e.rating,
                raw: e.raw.clone(),
                method: e.method,
            })
            .collect(),
        observations: Vec::new(),
    };
    toml::to_string_pretty(&file).expect("results serialization cannot fail")
}

/// Serialize an assessor report to its document form.
pub fn save_assessor_report(report: &AssessorReport) -> String {
    let file = ResultsFile {
        schema: RESULTS_SCHEMA.to_string(),
        results: report
            .entries
            .iter()
            .map(|(id, e)| ResultRow {
                test_id: id.clone(),
                rating: e.rating,
                raw: e.raw.clone(),
                method: TestMethod::Physical,
            })
            .collect(),
        observations: report
            .observations
            .iter()
            .map(|o| ObservationRow {
                test_id: o.test_id.clone(),
                note: o.note.clone(),
            })
            .collect(),
    };
    toml::to_string_pretty(&file).expect("results serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    const APPLICANT_DOC: &str = r#"
schema = "veritas-results/1"

[[results]]
test_id = "1.1"
rating = "good"
method = "virtual"

[[results]]
test_id = "1.2"
rating = "fair"
method = "hardware-in-loop"
raw = { value = 1.7, unit = "s" }
"#;

    #[test]
    fn applicant_report_parses() {
        let report = load_applicant_report_str(APPLICANT_DOC).unwrap();
        assert_eq!(report.entries.len(), 2);
        let entry = report.get(&TestId::new("1.2")).unwrap();
        assert_eq!(entry.rating, Rating::Fair);
        assert_eq!(entry.method, TestMethod::HardwareInLoop);
        assert_eq!(entry.raw.as_ref().unwrap().value, 1.7);
    }

    #[test]
    fn applicant_report_round_trips() {
        let report = load_applicant_report_str(APPLICANT_DOC).unwrap();
        let text = save_applicant_report(&report);
        let back = load_applicant_report_str(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn assessor_report_parses_with_observations() {
        let doc = r#"
schema = "veritas-results/1"

[[results]]
test_id = "2.4"
rating = "fair"
method = "physical"

[[observations]]
test_id = "2.4"
note = "erratic behavior, safety not compromised"
"#;
        let report = load_assessor_report_str(doc).unwrap();
        assert_eq!(report.entries.len(), 1);
        assert_eq!(report.observations.len(), 1);
        let text = save_assessor_report(&report);
        let back = load_assessor_report_str(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn assessor_rows_must_be_physical() {
        let doc = r#"
schema = "veritas-results/1"

[[results]]
test_id = "2.4"
rating = "fair"
method = "virtual"
"#;
        assert!(matches!(
            load_assessor_report_str(doc),
            Err(ResultsError::NonPhysicalAssessorMethod(..))
        ));
    }

    #[test]
    fn duplicate_rows_are_rejected() {
        let doc = r#"
schema = "veritas-results/1"

[[results]]
test_id = "1.1"
rating = "good"
method = "virtual"

[[results]]
test_id = "1.1"
rating = "fair"
method = "virtual"
"#;
        assert!(matches!(
            load_applicant_report_str(doc),
            Err(ResultsError::DuplicateRow(_))
        ));
    }

    #[test]
    fn wrong_schema_is_rejected() {
        assert!(matches!(
            load_applicant_report_str("schema = \"veritas-results/2\""),
            Err(ResultsError::Schema(_))
        ));
        assert!(matches!(
            load_applicant_report_str("results = []"),
            Err(ResultsError::Schema(_))
        ));
    }
}
