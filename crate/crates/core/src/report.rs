//! The advice report: a results table in the assessment's row format
//! plus the advice section, rendered as fixed-mark ASCII text or as a
//! lossless machine document.
//!
//! Text marks: ratings fail=F, acceptable=A, fair=R, good=G; pass=P and
//! nopass=X; findings NC and OB. A fidelity check that never ran renders
//! as P in text (not falsified); the machine format keeps the tristate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, TestId};
use crate::rating::Rating;
use crate::selection::ApplicantReport;
use crate::session::Session;
use crate::verdict::{Advice, AssessorReport, FidelityVerdict, TestAssessment};

/// Schema string of the machine report format.
pub const REPORT_SCHEMA: &str = "veritas-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub session_id: String,
    pub catalog_digest: String,
    pub demerit_starting_points: u32,
    pub demerit_remaining: u32,
    pub nc_total: u64,
    pub ob_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub test_id: TestId,
    pub applicant: Option<Rating>,
    pub assessor: Option<Rating>,
    pub fidelity: FidelityVerdict,
    pub passed: bool,
    pub nc: bool,
    pub ob: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: String,
    pub header: ReportHeader,
    pub rows: Vec<ReportRow>,
    pub advice: Advice,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report row count {actual} does not match catalog test count {expected}")]
    RowCountMismatch { expected: usize, actual: usize },
    #[error("session is missing {0}; run the pipeline through assessment first")]
    Incomplete(&'static str),
    #[error("malformed machine report: {0}")]
    Parse(String),
}

/// Assemble the report document from the assessment state.
pub fn build_report(
    session_id: &str,
    catalog: &Catalog,
    applicant: &ApplicantReport,
    assessor: &AssessorReport,
    assessments: &[TestAssessment],
    advice: &Advice,
) -> Result<ReportDocument, ReportError> {
    if assessments.len() != catalog.tests.len() {
        return Err(ReportError::RowCountMismatch {
            expected: catalog.tests.len(),
            actual: assessments.len(),
        });
    }
    let rows: Vec<ReportRow> = assessments
        .iter()
        .map(|a| ReportRow {
            test_id: a.test_id.clone(),
            applicant: applicant.get(&a.test_id).map(|e| e.rating),
            assessor: assessor.get(&a.test_id).map(|e| e.rating),
            fidelity: a.fidelity,
            passed: a.passed,
            nc: a.has_nc(),
            ob: a.has_ob(),
        })
        .collect();
    let nc_total = rows.iter().filter(|r| r.nc).count() as u64;
    let ob_total = rows.iter().filter(|r| r.ob).count() as u64;
    Ok(ReportDocument {
        schema: REPORT_SCHEMA.to_string(),
        header: ReportHeader {
            session_id: session_id.to_string(),
            catalog_digest: catalog.digest(),
            demerit_starting_points: advice.demerit.starting_points,
            demerit_remaining: advice.demerit.remaining,
            nc_total,
            ob_total,
        },
        rows,
        advice: advice.clone(),
    })
}

/// Assemble the report document from a completed session.
pub fn build_report_from_session(session: &Session) -> Result<ReportDocument, ReportError> {
    let catalog = session.catalog.as_ref().ok_or(ReportError::Incomplete("a catalog"))?;
    let applicant = session
        .applicant_report
        .as_ref()
        .ok_or(ReportError::Incomplete("applicant results"))?;
    let assessor = session
        .assessor_report
        .as_ref()
        .ok_or(ReportError::Incomplete("assessor results"))?;
    let assessments = session
        .assessments
        .as_ref()
        .ok_or(ReportError::Incomplete("assessments"))?;
    let advice = session.advice.as_ref().ok_or(ReportError::Incomplete("advice"))?;
    build_report(
        &session.session_id,
        catalog,
        applicant,
        assessor,
        assessments,
        advice,
    )
}

fn rating_mark(rating: Option<Rating>) -> &'static str {
    match rating {
        None => "-",
        Some(Rating::Fail) => "F",
        Some(Rating::Acceptable) => "A",
        Some(Rating::Fair) => "R",
        Some(Rating::Good) => "G",
    }
}

fn fidelity_mark(fidelity: FidelityVerdict) -> &'static str {
    match fidelity {
        // Unchecked renders as a pass mark: the result was not falsified.
        FidelityVerdict::Pass | FidelityVerdict::NotChecked => "P",
        FidelityVerdict::Fail => "X",
    }
}

fn finding_marks(nc: bool, ob: bool) -> &'static str {
    match (nc, ob) {
        (false, false) => "-",
        (true, false) => "NC",
        (false, true) => "OB",
        (true, true) => "NC OB",
    }
}

/// Render one results row in the fixed text format.
pub fn render_row(row: &ReportRow) -> String {
    format!(
        "{}  {}  {}  {}  {}  {}",
        row.test_id,
        rating_mark(row.applicant),
        rating_mark(row.assessor),
        fidelity_mark(row.fidelity),
        if row.passed { "P" } else { "X" },
        finding_marks(row.nc, row.ob),
    )
}

/// Render the full report as human-readable text.
pub fn render_text(document: &ReportDocument) -> String {
    let mut out = String::new();
    out.push_str("veritas assessment report\n");
    out.push_str(&format!("session:  {}\n", document.header.session_id));
    out.push_str(&format!("catalog:  {}\n", document.header.catalog_digest));
    out.push_str(&format!(
        "demerit:  {} of {} points remaining\n",
        document.header.demerit_remaining, document.header.demerit_starting_points
    ));
    out.push_str(&format!(
        "findings: {} NC, {} OB\n",
        document.header.nc_total, document.header.ob_total
    ));
    out.push('\n');
    out.push_str("id  applicant  assessor  fidelity  p/f  nc/ob\n");
    for row in &document.rows {
        out.push_str(&render_row(row));
        out.push('\n');
    }
    out.push('\n');
    let outcome = match document.advice.outcome {
        crate::verdict::AdviceOutcome::Approve => "approve",
        crate::verdict::AdviceOutcome::ApproveWithConditions => "approve with conditions",
        crate::verdict::AdviceOutcome::Reject => "reject",
    };
    out.push_str(&format!("advice:   {outcome}\n"));
    for (dimension, values) in &document.advice.conditions {
        for value in values {
            out.push_str(&format!("exclude:  {dimension}={value}\n"));
        }
    }
    out.push_str(&format!("because:  {}\n", document.advice.rationale));
    out
}

/// Render the report as the machine format (JSON).
pub fn render_machine(document: &ReportDocument) -> String {
    let mut text =
        serde_json::to_string_pretty(document).expect("report serialization cannot fail");
    text.push('\n');
    text
}

/// Parse a machine-format report back into an equal document.
pub fn parse_machine(text: &str) -> Result<ReportDocument, ReportError> {
    let document: ReportDocument =
        serde_json::from_str(text).map_err(|e| ReportError::Parse(e.to_string()))?;
    if document.schema != REPORT_SCHEMA {
        return Err(ReportError::Parse(format!(
            "unsupported schema '{}' (expected '{REPORT_SCHEMA}')",
            document.schema
        )));
    }
    Ok(document)
}
