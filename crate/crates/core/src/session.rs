//! Assessment session: the workflow state machine, role gating, the
//! hash-chained event log, and durable persistence.
//!
//! A session is single-writer. Every module-level computation (coverage,
//! selection, assessment, advice) is invoked through [`Session::advance`],
//! which appends one event per successful call. The event log is
//! append-only and hash-chained: each record carries the SHA-256 digest
//! of its predecessor, so ratings-only sessions stay auditable without
//! disclosing raw data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{
    check_coverage, validate_catalog, Catalog, CatalogError, CoverageReport, CoverageVerdict,
};
use crate::digest::{sha256_hex_json, ZERO_DIGEST};
use crate::selection::{
    select_tests, selected_ids, ApplicantReport, SelectionError, SelectionOutcome,
    SelectionPolicy,
};
use crate::verdict::{
    apply_demerits, assess_all, synthesize_advice, Advice, AdviceOutcome, AssessorReport,
    SeverityPolicy, TestAssessment, VerdictError,
};

/// Schema string in the session file header.
pub const SESSION_SCHEMA: &str = "veritas-session/1";

/// Stakeholder roles. The authority never drives an engine action: it
/// sets requirements and takes the final decision outside the engine,
/// which records such decisions only as external events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Applicant,
    Assessor,
    Authority,
}

/// Terminal states of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Closure {
    AutoFail,
    Advised,
}

/// Workflow phase. The only cycle in the phase graph is the coverage
/// restart loop between `DeriveTests` and `CoverageCheck`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    DeriveTests,
    CoverageCheck,
    SelectTests,
    CollectResults,
    Assess,
    Report,
    MonitoredDeployment,
    Closed(Closure),
}

impl Phase {
    pub const ALL: [Phase; 9] = [
        Phase::DeriveTests,
        Phase::CoverageCheck,
        Phase::SelectTests,
        Phase::CollectResults,
        Phase::Assess,
        Phase::Report,
        Phase::MonitoredDeployment,
        Phase::Closed(Closure::AutoFail),
        Phase::Closed(Closure::Advised),
    ];
}

/// The complete set of legal phase transitions.
pub fn legal_transitions() -> Vec<(Phase, Phase)> {
    vec![
        (Phase::DeriveTests, Phase::CoverageCheck),
        (Phase::CoverageCheck, Phase::DeriveTests),
        (Phase::CoverageCheck, Phase::SelectTests),
        (Phase::SelectTests, Phase::CollectResults),
        (Phase::SelectTests, Phase::Closed(Closure::AutoFail)),
        (Phase::CollectResults, Phase::Assess),
        (Phase::Assess, Phase::Report),
        (Phase::Report, Phase::Closed(Closure::Advised)),
        (Phase::Closed(Closure::Advised), Phase::MonitoredDeployment),
    ]
}

pub fn is_legal_transition(from: Phase, to: Phase) -> bool {
    legal_transitions().contains(&(from, to))
}

/// An action a stakeholder asks the engine to perform.
#[derive(Debug, Clone, PartialEq)]
pub enum SessionAction {
    /// Applicant submits (or resubmits, after a failed coverage check)
    /// the derived test descriptions.
    SubmitCatalog(Catalog),
    /// Assessor checks the catalog against the test domain.
    RunCoverage,
    /// Assessor runs test selection over the applicant's results.
    RunSelection {
        report: ApplicantReport,
        policy: SelectionPolicy,
    },
    /// Assessor submits the physical test results it collected.
    SubmitAssessorResults(AssessorReport),
    /// Assessor assesses all results and synthesizes the advice.
    RunAssessment {
        severity_policy: SeverityPolicy,
        starting_points: u32,
    },
    /// Assessor issues the advice to the authority, closing the session.
    IssueAdvice,
    /// Applicant begins monitored deployment after a non-negative advice.
    BeginMonitoring,
}

impl SessionAction {
    pub fn name(&self) -> &'static str {
        match self {
            SessionAction::SubmitCatalog(_) => "submit-catalog",
            SessionAction::RunCoverage => "run-coverage",
            SessionAction::RunSelection { .. } => "run-selection",
            SessionAction::SubmitAssessorResults(_) => "submit-assessor-results",
            SessionAction::RunAssessment { .. } => "run-assessment",
            SessionAction::IssueAdvice => "issue-advice",
            SessionAction::BeginMonitoring => "begin-monitoring",
        }
    }

    pub fn required_role(&self) -> Role {
        match self {
            SessionAction::SubmitCatalog(_) | SessionAction::BeginMonitoring => Role::Applicant,
            _ => Role::Assessor,
        }
    }
}

/// One hash-chained audit record. `prev_digest` is the digest of the
/// predecessor record (all-zero for the first entry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// UTC seconds.
    pub timestamp: u64,
    pub role: Role,
    pub action: String,
    pub payload_digest: String,
    pub prev_digest: String,
}

impl EventRecord {
    pub fn digest(&self) -> String {
        sha256_hex_json(self)
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("action '{action}' is illegal in phase {phase:?}")]
    IllegalTransition { phase: Phase, action: String },
    #[error("role {role:?} is not authorized for action '{action}'")]
    UnauthorizedRole { role: Role, action: String },
    #[error("session state digest mismatch; state was modified outside the engine")]
    StaleSession,
    #[error("corrupt session state: {0}")]
    CorruptState(String),
    #[error("unsupported session schema '{found}' (expected '{SESSION_SCHEMA}')")]
    VersionMismatch { found: String },
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Verdict(#[from] VerdictError),
}

/// Durable assessment session state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub phase: Phase,
    pub catalog: Option<Catalog>,
    pub coverage: Option<CoverageReport>,
    pub applicant_report: Option<ApplicantReport>,
    pub selection_policy: Option<SelectionPolicy>,
    pub selection: Option<SelectionOutcome>,
    pub assessor_report: Option<AssessorReport>,
    pub assessments: Option<Vec<TestAssessment>>,
    pub advice: Option<Advice>,
    pub event_log: Vec<EventRecord>,
    state_digest: String,
}

/// Serializable projection of the session state that the state digest
/// covers: everything except the event log and the digest itself.
#[derive(Serialize)]
struct StateView<'a> {
    session_id: &'a str,
    phase: &'a Phase,
    catalog: &'a Option<Catalog>,
    coverage: &'a Option<CoverageReport>,
    applicant_report: &'a Option<ApplicantReport>,
    selection_policy: &'a Option<SelectionPolicy>,
    selection: &'a Option<SelectionOutcome>,
    assessor_report: &'a Option<AssessorReport>,
    assessments: &'a Option<Vec<TestAssessment>>,
    advice: &'a Option<Advice>,
}

impl Session {
    pub fn new(session_id: impl Into<String>) -> Self {
        let mut session = Session {
            session_id: session_id.into(),
            phase: Phase::DeriveTests,
            catalog: None,
            coverage: None,
            applicant_report: None,
            selection_policy: None,
            selection: None,
            assessor_report: None,
            assessments: None,
            advice: None,
            event_log: Vec::new(),
            state_digest: String::new(),
        };
        session.state_digest = session.compute_state_digest();
        session
    }

    fn compute_state_digest(&self) -> String {
        sha256_hex_json(&StateView {
            session_id: &self.session_id,
            phase: &self.phase,
            catalog: &self.catalog,
            coverage: &self.coverage,
            applicant_report: &self.applicant_report,
            selection_policy: &self.selection_policy,
            selection: &self.selection,
            assessor_report: &self.assessor_report,
            assessments: &self.assessments,
            advice: &self.advice,
        })
    }

    fn check_fresh(&self) -> Result<(), SessionError> {
        if self.compute_state_digest() != self.state_digest {
            return Err(SessionError::StaleSession);
        }
        Ok(())
    }

    fn append_event(
        &mut self,
        timestamp: u64,
        role: Role,
        action: &str,
        payload_digest: String,
    ) {
        let prev_digest = self
            .event_log
            .last()
            .map(EventRecord::digest)
            .unwrap_or_else(|| ZERO_DIGEST.to_string());
        self.event_log.push(EventRecord {
            timestamp,
            role,
            action: action.to_string(),
            payload_digest,
            prev_digest,
        });
    }

    fn illegal(&self, action: &SessionAction) -> SessionError {
        SessionError::IllegalTransition {
            phase: self.phase,
            action: action.name().to_string(),
        }
    }

    /// Raw values are optional, but when present their unit must match
    /// the unit the test's metric is defined in.
    fn check_raw_units<'a>(
        catalog: &Catalog,
        raws: impl Iterator<Item = (&'a crate::catalog::TestId, &'a crate::rating::MetricValue)>,
    ) -> Result<(), SessionError> {
        for (id, raw) in raws {
            if let Some(test) = catalog.test(id) {
                if raw.unit != test.metric_unit {
                    return Err(SessionError::InvalidPayload(format!(
                        "raw value for test '{id}' is in '{}' but the metric is defined in '{}'",
                        raw.unit, test.metric_unit
                    )));
                }
            }
        }
        Ok(())
    }

    /// Apply one workflow action, returning the successor session with
    /// the event logged. The input session is left untouched.
    pub fn advance(
        &self,
        role: Role,
        action: SessionAction,
        timestamp: u64,
    ) -> Result<Session, SessionError> {
        self.check_fresh()?;
        if role != action.required_role() {
            return Err(SessionError::UnauthorizedRole {
                role,
                action: action.name().to_string(),
            });
        }

        let mut next = self.clone();
        let action_name = action.name();
        let payload_digest = match action {
            SessionAction::SubmitCatalog(catalog) => {
                if self.phase != Phase::DeriveTests {
                    return Err(self.illegal(&SessionAction::SubmitCatalog(catalog)));
                }
                validate_catalog(&catalog)?;
                let digest = catalog.digest();
                next.catalog = Some(catalog);
                next.coverage = None;
                next.phase = Phase::CoverageCheck;
                digest
            }
            SessionAction::RunCoverage => {
                if self.phase != Phase::CoverageCheck {
                    return Err(self.illegal(&SessionAction::RunCoverage));
                }
                let catalog = next.catalog.as_ref().expect("catalog set before coverage");
                let report = check_coverage(catalog);
                next.phase = match report.verdict {
                    CoverageVerdict::Ok => Phase::SelectTests,
                    CoverageVerdict::NotOk => Phase::DeriveTests,
                };
                let digest = sha256_hex_json(&report);
                next.coverage = Some(report);
                digest
            }
            SessionAction::RunSelection { report, policy } => {
                if self.phase != Phase::SelectTests {
                    return Err(self.illegal(&SessionAction::RunSelection { report, policy }));
                }
                let catalog = next.catalog.as_ref().expect("catalog set before selection");
                Self::check_raw_units(
                    catalog,
                    report
                        .entries
                        .iter()
                        .filter_map(|(id, e)| e.raw.as_ref().map(|raw| (id, raw))),
                )?;
                let outcome = select_tests(catalog, &report, &policy)?;
                let digest = sha256_hex_json(&(&report, &policy));
                next.phase = match &outcome {
                    SelectionOutcome::Decisions { .. } => Phase::CollectResults,
                    SelectionOutcome::AutoFail(_) => Phase::Closed(Closure::AutoFail),
                };
                next.applicant_report = Some(report);
                next.selection_policy = Some(policy);
                next.selection = Some(outcome);
                digest
            }
            SessionAction::SubmitAssessorResults(report) => {
                if self.phase != Phase::CollectResults {
                    return Err(self.illegal(&SessionAction::SubmitAssessorResults(report)));
                }
                let selected = selected_ids(
                    next.selection.as_ref().expect("selection set before results"),
                );
                for id in report.entries.keys() {
                    if !selected.contains(id) {
                        return Err(SessionError::InvalidPayload(format!(
                            "assessor result for test '{id}' which was not selected"
                        )));
                    }
                }
                let catalog = next.catalog.as_ref().expect("catalog set before results");
                Self::check_raw_units(
                    catalog,
                    report
                        .entries
                        .iter()
                        .filter_map(|(id, e)| e.raw.as_ref().map(|raw| (id, raw))),
                )?;
                for obs in &report.observations {
                    if !selected.contains(&obs.test_id) {
                        return Err(SessionError::InvalidPayload(format!(
                            "observation on test '{}' which was not selected",
                            obs.test_id
                        )));
                    }
                }
                let digest = sha256_hex_json(&report);
                next.assessor_report = Some(report);
                next.phase = Phase::Assess;
                digest
            }
            SessionAction::RunAssessment {
                severity_policy,
                starting_points,
            } => {
                if self.phase != Phase::Assess {
                    return Err(self.illegal(&SessionAction::RunAssessment {
                        severity_policy,
                        starting_points,
                    }));
                }
                let catalog = next.catalog.as_ref().expect("catalog set before assessment");
                let applicant = next
                    .applicant_report
                    .as_ref()
                    .expect("applicant report set before assessment");
                let assessor = next
                    .assessor_report
                    .as_ref()
                    .expect("assessor report set before assessment");
                let assessments = assess_all(catalog, applicant, assessor, &severity_policy)?;
                let ledger = apply_demerits(&assessments, starting_points);
                let advice = synthesize_advice(catalog, &assessments, &ledger);
                let digest = sha256_hex_json(&(&severity_policy, starting_points));
                next.assessments = Some(assessments);
                next.advice = Some(advice);
                next.phase = Phase::Report;
                digest
            }
            SessionAction::IssueAdvice => {
                if self.phase != Phase::Report {
                    return Err(self.illegal(&SessionAction::IssueAdvice));
                }
                let advice = next.advice.as_ref().expect("advice set before issuing");
                let digest = sha256_hex_json(advice);
                next.phase = Phase::Closed(Closure::Advised);
                digest
            }
            SessionAction::BeginMonitoring => {
                if self.phase != Phase::Closed(Closure::Advised) {
                    return Err(self.illegal(&SessionAction::BeginMonitoring));
                }
                let advice = next.advice.as_ref().expect("advice set before monitoring");
                if advice.outcome == AdviceOutcome::Reject {
                    return Err(self.illegal(&SessionAction::BeginMonitoring));
                }
                let digest = sha256_hex_json(advice);
                next.phase = Phase::MonitoredDeployment;
                digest
            }
        };

        next.append_event(timestamp, role, action_name, payload_digest);
        next.state_digest = next.compute_state_digest();
        debug_assert!(is_legal_transition(self.phase, next.phase) || self.phase == next.phase);
        Ok(next)
    }

    /// Append an audit event that does not move the workflow: an
    /// authority decision record or a monitored-deployment data upload.
    pub fn record_external_event(
        &self,
        role: Role,
        action: &str,
        payload_digest: String,
        timestamp: u64,
    ) -> Result<Session, SessionError> {
        self.check_fresh()?;
        if !matches!(
            self.phase,
            Phase::Closed(Closure::Advised) | Phase::MonitoredDeployment
        ) {
            return Err(SessionError::IllegalTransition {
                phase: self.phase,
                action: action.to_string(),
            });
        }
        let mut next = self.clone();
        next.append_event(timestamp, role, action, payload_digest);
        next.state_digest = next.compute_state_digest();
        Ok(next)
    }

    /// Verify the event-log hash chain.
    pub fn verify_chain(&self) -> Result<(), SessionError> {
        let mut expected = ZERO_DIGEST.to_string();
        for (index, record) in self.event_log.iter().enumerate() {
            if record.prev_digest != expected {
                return Err(SessionError::CorruptState(format!(
                    "event {index}: chain digest mismatch"
                )));
            }
            expected = record.digest();
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SessionFile {
    schema: String,
    session: Session,
}

/// Serialize a session for storage.
pub fn persist(session: &Session) -> Vec<u8> {
    let file = SessionFile {
        schema: SESSION_SCHEMA.to_string(),
        session: session.clone(),
    };
    let mut bytes =
        serde_json::to_vec_pretty(&file).expect("session serialization cannot fail");
    bytes.push(b'\n');
    bytes
}

/// Restore a persisted session, verifying the schema version and the
/// event-log hash chain.
pub fn restore(bytes: &[u8]) -> Result<Session, SessionError> {
    let raw: serde_json::Value = serde_json::from_slice(bytes)
        .map_err(|e| SessionError::CorruptState(format!("unparseable session file: {e}")))?;
    match raw.get("schema").and_then(|v| v.as_str()) {
        None => {
            return Err(SessionError::CorruptState(
                "missing 'schema' field".to_string(),
            ))
        }
        Some(s) if s != SESSION_SCHEMA => {
            return Err(SessionError::VersionMismatch {
                found: s.to_string(),
            })
        }
        Some(_) => {}
    }
    let file: SessionFile = serde_json::from_value(raw)
        .map_err(|e| SessionError::CorruptState(format!("malformed session file: {e}")))?;
    file.session.verify_chain()?;
    Ok(file.session)
}
