//! Deterministic engine for the independent safety assessment of
//! autonomous vehicles.
//!
//! The assessment workflow runs scenario-based and stakeholder-aware:
//! the applicant derives system-level test descriptions over its ODD and
//! DDT and reports ratings for them, the assessor checks catalog
//! completeness, selects tests for physical spot checking, compares its
//! own measurements against the reported ratings, tracks non-conformity
//! demerits, and advises the authority: approve, approve under ODD
//! restrictions, or reject. Sessions persist with a hash-chained audit
//! log; a seeded simulator and a drive-log monitor make the whole
//! pipeline exercisable end to end without a vehicle.

pub mod catalog;
pub mod digest;
pub mod monitor;
pub mod rating;
pub mod report;
pub mod results;
pub mod selection;
pub mod session;
pub mod simulator;
#[cfg(test)]
pub(crate) mod testkit;
pub mod verdict;

pub use catalog::{Catalog, CoverageReport, CoverageVerdict, TestDescription, TestId};
pub use rating::{Direction, MetricValue, Rating, References};
pub use selection::{ApplicantReport, SelectionDecision, SelectionOutcome, SelectionPolicy};
pub use session::{Phase, Role, Session, SessionAction};
pub use verdict::{Advice, AdviceOutcome, AssessorReport, TestAssessment};
