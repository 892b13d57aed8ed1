//! Per-test assessment, non-conformity and observation findings, demerit
//! accounting, and overall advice synthesis.
//!
//! The effective rating of a test is the ordinal minimum of the ratings
//! available for it. A test passes iff its effective rating is better
//! than Fail. Findings attach only to passed tests: a barely-acceptable
//! result raises a non-conformity, as does a fidelity check failure
//! (the assessor measured strictly worse than the applicant reported);
//! a failed test needs no finding, it already counts against approval.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, TagMap, TestDescription, TestId};
use crate::rating::{MetricValue, Rating};
use crate::selection::ApplicantReport;

/// One assessor-measured result for a selected test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessorEntry {
    pub rating: Rating,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<MetricValue>,
}

/// A note made during assessor testing that needs applicant
/// consideration but does not score.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Observation {
    pub test_id: TestId,
    pub note: String,
}

/// Assessor results: entries only for selected tests, plus observations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssessorReport {
    pub entries: BTreeMap<TestId, AssessorEntry>,
    #[serde(default)]
    pub observations: BTreeSet<Observation>,
}

impl AssessorReport {
    pub fn get(&self, id: &TestId) -> Option<&AssessorEntry> {
        self.entries.get(id)
    }

    pub fn observations_for<'a>(
        &'a self,
        id: &'a TestId,
    ) -> impl Iterator<Item = &'a Observation> + 'a {
        self.observations.iter().filter(move |o| &o.test_id == id)
    }
}

/// Outcome of comparing the assessor's rating against the applicant's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FidelityVerdict {
    Pass,
    Fail,
    NotChecked,
}

/// Fidelity check: fails iff the assessor's result is strictly worse
/// than the applicant's. An equal or better assessor result passes; a
/// better one is attributed to the applicant reporting the worst case.
pub fn fidelity_check(applicant: Rating, assessor: Rating) -> FidelityVerdict {
    if assessor < applicant {
        FidelityVerdict::Fail
    } else {
        FidelityVerdict::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingKind {
    Nc,
    Ob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingCause {
    AcceptableResult,
    FidelityMismatch,
    Observation,
}

/// A non-conformity (NC, demerit-scored) or observation (OB, unscored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub cause: FindingCause,
    /// Demerit points in 1..=3; present on NCs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<u8>,
    pub note: String,
}

impl Finding {
    pub fn is_nc(&self) -> bool {
        self.kind == FindingKind::Nc
    }

    pub fn is_ob(&self) -> bool {
        self.kind == FindingKind::Ob
    }
}

/// Assessment of a single test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestAssessment {
    pub test_id: TestId,
    pub effective_rating: Rating,
    pub fidelity: FidelityVerdict,
    pub passed: bool,
    pub findings: Vec<Finding>,
}

impl TestAssessment {
    pub fn has_nc(&self) -> bool {
        self.findings.iter().any(Finding::is_nc)
    }

    pub fn has_ob(&self) -> bool {
        self.findings.iter().any(Finding::is_ob)
    }
}

/// Severity assignment for non-conformities. Absent overrides fall back
/// to the default rules: 1 point for a barely-acceptable result, and
/// the ordinal gap between applicant and assessor ratings (clamped to
/// 1..=3) for a fidelity mismatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeverityPolicy {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptable_result: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity_mismatch: Option<u8>,
}

impl SeverityPolicy {
    pub fn validate(&self) -> Result<(), VerdictError> {
        for (name, value) in [
            ("acceptable_result", self.acceptable_result),
            ("fidelity_mismatch", self.fidelity_mismatch),
        ] {
            if let Some(v) = value {
                if !(1..=3).contains(&v) {
                    return Err(VerdictError::InvalidSeverity {
                        cause: name,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }

    fn acceptable_severity(&self) -> u8 {
        self.acceptable_result.unwrap_or(1)
    }

    fn fidelity_severity(&self, applicant: Rating, assessor: Rating) -> u8 {
        self.fidelity_mismatch.unwrap_or_else(|| {
            let gap = applicant.rank().saturating_sub(assessor.rank());
            gap.clamp(1, 3)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerdictError {
    #[error("no result available for test '{0}'")]
    NoResult(TestId),
    #[error("severity override for {cause} is {value}, must be 1..=3")]
    InvalidSeverity { cause: &'static str, value: u8 },
    #[error("malformed severity policy: {0}")]
    MalformedSeverityPolicy(String),
}

/// Parse and validate a severity-policy override file.
pub fn load_severity_policy(
    mut source: impl std::io::Read,
) -> Result<SeverityPolicy, VerdictError> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| VerdictError::MalformedSeverityPolicy(e.to_string()))?;
    let policy: SeverityPolicy =
        toml::from_str(&text).map_err(|e| VerdictError::MalformedSeverityPolicy(e.to_string()))?;
    policy.validate()?;
    Ok(policy)
}

/// Assess one test from the available applicant and assessor results.
///
/// At least one of the two entries must be present; selection has
/// already auto-failed any session where whole swaths of results are
/// missing.
pub fn assess_test(
    desc: &TestDescription,
    applicant: Option<Rating>,
    assessor: Option<Rating>,
    observations: &[&Observation],
    severity_policy: &SeverityPolicy,
) -> Result<TestAssessment, VerdictError> {
    severity_policy.validate()?;
    let effective_rating = match (applicant, assessor) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(VerdictError::NoResult(desc.id.clone())),
    };
    let fidelity = match (applicant, assessor) {
        (Some(a), Some(b)) => fidelity_check(a, b),
        _ => FidelityVerdict::NotChecked,
    };
    let passed = effective_rating > Rating::Fail;

    let mut findings = Vec::new();
    if passed {
        let acceptable_nc = effective_rating == Rating::Acceptable;
        let fidelity_nc = fidelity == FidelityVerdict::Fail;
        match (acceptable_nc, fidelity_nc) {
            (true, true) => {
                // Both causes fire: a single merged NC recording both
                // reasons, scored under the fidelity rule.
                let (a, b) = (applicant.unwrap(), assessor.unwrap());
                findings.push(Finding {
                    kind: FindingKind::Nc,
                    cause: FindingCause::FidelityMismatch,
                    severity: Some(severity_policy.fidelity_severity(a, b)),
                    note: format!(
                        "assessor result ({b}) worse than applicant result ({a}); \
                         assessor result is acceptable, the minimum band"
                    ),
                });
            }
            (true, false) => {
                findings.push(Finding {
                    kind: FindingKind::Nc,
                    cause: FindingCause::AcceptableResult,
                    severity: Some(severity_policy.acceptable_severity()),
                    note: "result meets only the acceptable reference".to_string(),
                });
            }
            (false, true) => {
                let (a, b) = (applicant.unwrap(), assessor.unwrap());
                findings.push(Finding {
                    kind: FindingKind::Nc,
                    cause: FindingCause::FidelityMismatch,
                    severity: Some(severity_policy.fidelity_severity(a, b)),
                    note: format!("assessor result ({b}) worse than applicant result ({a})"),
                });
            }
            (false, false) => {}
        }
    }
    for obs in observations {
        findings.push(Finding {
            kind: FindingKind::Ob,
            cause: FindingCause::Observation,
            severity: None,
            note: obs.note.clone(),
        });
    }

    Ok(TestAssessment {
        test_id: desc.id.clone(),
        effective_rating,
        fidelity,
        passed,
        findings,
    })
}

/// Assess every catalog test in catalog order.
pub fn assess_all(
    catalog: &Catalog,
    applicant: &ApplicantReport,
    assessor: &AssessorReport,
    severity_policy: &SeverityPolicy,
) -> Result<Vec<TestAssessment>, VerdictError> {
    catalog
        .tests
        .iter()
        .map(|desc| {
            let obs: Vec<&Observation> = assessor.observations_for(&desc.id).collect();
            assess_test(
                desc,
                applicant.get(&desc.id).map(|e| e.rating),
                assessor.get(&desc.id).map(|e| e.rating),
                &obs,
                severity_policy,
            )
        })
        .collect()
}

/// One demerit deduction, attributed to the test that raised the NC.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deduction {
    pub test_id: TestId,
    pub severity: u8,
}

/// Demerit-point account: the AV starts with a budget and loses 1-3
/// points per NC. `remaining` is clamped at zero; exhaustion is flagged
/// when the deductions meet or exceed the budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemeritLedger {
    pub starting_points: u32,
    pub deductions: Vec<Deduction>,
    pub remaining: u32,
    pub exhausted: bool,
}

/// Default demerit budget.
pub const DEFAULT_STARTING_POINTS: u32 = 100;

/// Deduct each NC's severity from the starting budget.
pub fn apply_demerits(assessments: &[TestAssessment], starting_points: u32) -> DemeritLedger {
    let deductions: Vec<Deduction> = assessments
        .iter()
        .flat_map(|a| {
            a.findings
                .iter()
                .filter(|f| f.is_nc())
                .map(|f| Deduction {
                    test_id: a.test_id.clone(),
                    severity: f.severity.unwrap_or(1),
                })
        })
        .collect();
    let total: u32 = deductions.iter().map(|d| u32::from(d.severity)).sum();
    DemeritLedger {
        starting_points,
        remaining: starting_points.saturating_sub(total),
        exhausted: total >= starting_points,
        deductions,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdviceOutcome {
    Approve,
    ApproveWithConditions,
    Reject,
}

/// The assessor's advice to the authority: approve, approve only under
/// ODD restrictions, or reject. The decision itself stays with the
/// authority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advice {
    pub outcome: AdviceOutcome,
    /// Excluded ODD values per dimension; non-empty iff the outcome is
    /// `ApproveWithConditions`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub conditions: BTreeMap<String, BTreeSet<String>>,
    pub demerit: DemeritLedger,
    pub rationale: String,
}

fn combination_admissible(
    combo: &TagMap,
    catalog: &Catalog,
    excluded: &BTreeMap<String, BTreeSet<String>>,
) -> bool {
    let constrained_ok = combo.iter().all(|(dim, value)| {
        excluded
            .get(dim)
            .map(|vals| !vals.contains(value))
            .unwrap_or(true)
    });
    if !constrained_ok {
        return false;
    }
    // Every unconstrained dimension must retain at least one value.
    catalog.odd.dimensions.iter().all(|dim| {
        if combo.contains_key(&dim.name) {
            return true;
        }
        match excluded.get(&dim.name) {
            None => true,
            Some(vals) => dim.values.iter().any(|v| !vals.contains(v)),
        }
    })
}

/// Synthesize overall advice from the per-test assessments and the
/// demerit ledger.
///
/// Exhausted demerits reject outright. With no failed test the AV is
/// approved. Otherwise the failed tests' ODD tags form the candidate
/// restriction set; if every failed test carries at least one tag and
/// at least one required domain combination stays admissible under the
/// restrictions, approval is conditional on them, else the advice is
/// negative.
pub fn synthesize_advice(
    catalog: &Catalog,
    assessments: &[TestAssessment],
    ledger: &DemeritLedger,
) -> Advice {
    let nc_count = assessments.iter().filter(|a| a.has_nc()).count();
    if ledger.exhausted {
        return Advice {
            outcome: AdviceOutcome::Reject,
            conditions: BTreeMap::new(),
            demerit: ledger.clone(),
            rationale: format!(
                "demerit points exhausted by an overrun of non-conformities \
                 ({nc_count} NC-carrying tests against {} starting points)",
                ledger.starting_points
            ),
        };
    }

    let failed: Vec<&TestAssessment> = assessments.iter().filter(|a| !a.passed).collect();
    if failed.is_empty() {
        return Advice {
            outcome: AdviceOutcome::Approve,
            conditions: BTreeMap::new(),
            demerit: ledger.clone(),
            rationale: "all tests passed".to_string(),
        };
    }

    let mut excluded: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for assessment in &failed {
        let tags = catalog
            .test(&assessment.test_id)
            .map(|t| &t.tags)
            .filter(|t| !t.is_empty());
        match tags {
            None => {
                return Advice {
                    outcome: AdviceOutcome::Reject,
                    conditions: BTreeMap::new(),
                    demerit: ledger.clone(),
                    rationale: format!(
                        "test {} failed and carries no ODD tags; no deployment \
                         restriction can exclude it",
                        assessment.test_id
                    ),
                };
            }
            Some(tags) => {
                for (dim, value) in tags {
                    excluded.entry(dim.clone()).or_default().insert(value.clone());
                }
            }
        }
    }

    let any_admissible = catalog
        .domain
        .required_combinations
        .iter()
        .any(|combo| combination_admissible(combo, catalog, &excluded));
    if !any_admissible {
        return Advice {
            outcome: AdviceOutcome::Reject,
            conditions: BTreeMap::new(),
            demerit: ledger.clone(),
            rationale: "excluding the failed tests' conditions leaves no required \
                        domain combination admissible"
                .to_string(),
        };
    }

    let failed_ids: Vec<String> = failed.iter().map(|a| a.test_id.to_string()).collect();
    let restrictions: Vec<String> = excluded
        .iter()
        .flat_map(|(dim, vals)| vals.iter().map(move |v| format!("{dim}={v}")))
        .collect();
    Advice {
        outcome: AdviceOutcome::ApproveWithConditions,
        conditions: excluded,
        demerit: ledger.clone(),
        rationale: format!(
            "tests {} failed; deployment restricted by excluding {}",
            failed_ids.join(", "),
            restrictions.join(", ")
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{
        Catalog, OddDimension, OddModel, TestCase, TestDomain, CATALOG_SCHEMA,
    };
    use crate::rating::{compare, Direction, RatingOrdering, References};
    use proptest::prelude::*;

    fn desc(id: &str, tags: &[(&str, &str)]) -> TestDescription {
        TestDescription {
            id: TestId::new(id),
            criterion: "c".into(),
            test_case: TestCase {
                description: "tc".into(),
                parameters: BTreeMap::new(),
            },
            metric_id: "m".into(),
            metric_unit: "s".into(),
            direction: Direction::HigherIsBetter,
            references: Some(References::new(1.0, 1.5, 2.0)),
            tags: tags
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            ddt_task: "t".into(),
        }
    }

    fn assess(
        applicant: Option<Rating>,
        assessor: Option<Rating>,
        observations: &[&Observation],
    ) -> TestAssessment {
        assess_test(
            &desc("1.1", &[]),
            applicant,
            assessor,
            observations,
            &SeverityPolicy::default(),
        )
        .unwrap()
    }

    #[test]
    fn fidelity_check_examples() {
        assert_eq!(
            fidelity_check(Rating::Good, Rating::Good),
            FidelityVerdict::Pass
        );
        assert_eq!(
            fidelity_check(Rating::Good, Rating::Fair),
            FidelityVerdict::Fail
        );
        assert_eq!(
            fidelity_check(Rating::Fair, Rating::Good),
            FidelityVerdict::Pass
        );
    }

    #[test]
    fn fidelity_fails_iff_assessor_strictly_worse_all_pairs() {
        let mut failing = 0;
        for a in Rating::ALL {
            for b in Rating::ALL {
                let verdict = fidelity_check(a, b);
                assert_eq!(
                    verdict == FidelityVerdict::Fail,
                    compare(b, a) == RatingOrdering::Worse
                );
                if verdict == FidelityVerdict::Fail {
                    failing += 1;
                }
            }
        }
        assert_eq!(failing, 6);
    }

    #[test]
    fn acceptable_without_assessor_raises_one_nc() {
        // Worked-example row 1.4.
        let a = assess(Some(Rating::Acceptable), None, &[]);
        assert!(a.passed);
        assert_eq!(a.fidelity, FidelityVerdict::NotChecked);
        assert_eq!(a.findings.len(), 1);
        assert_eq!(a.findings[0].cause, FindingCause::AcceptableResult);
        assert_eq!(a.findings[0].severity, Some(1));
    }

    #[test]
    fn fidelity_mismatch_raises_one_nc() {
        // Worked-example row 2.2.
        let a = assess(Some(Rating::Good), Some(Rating::Fair), &[]);
        assert!(a.passed);
        assert_eq!(a.fidelity, FidelityVerdict::Fail);
        assert_eq!(a.effective_rating, Rating::Fair);
        assert_eq!(a.findings.len(), 1);
        assert_eq!(a.findings[0].cause, FindingCause::FidelityMismatch);
    }

    #[test]
    fn both_causes_merge_into_a_single_nc() {
        // Worked-example row 3.1: the NC is issued for two reasons.
        let a = assess(Some(Rating::Fair), Some(Rating::Acceptable), &[]);
        assert!(a.passed);
        assert_eq!(a.fidelity, FidelityVerdict::Fail);
        assert_eq!(a.effective_rating, Rating::Acceptable);
        assert_eq!(a.findings.len(), 1);
        let nc = &a.findings[0];
        assert_eq!(nc.cause, FindingCause::FidelityMismatch);
        assert!(nc.note.contains("worse than applicant"));
        assert!(nc.note.contains("acceptable"));
    }

    #[test]
    fn applicant_fail_without_assessor_fails_the_test() {
        // Worked-example row 3.3.
        let a = assess(Some(Rating::Fail), None, &[]);
        assert!(!a.passed);
        assert_eq!(a.fidelity, FidelityVerdict::NotChecked);
        assert!(a.findings.is_empty());
    }

    #[test]
    fn assessor_fail_overrides_applicant_acceptable() {
        // Worked-example row 4.3: the test fails outright, so no NC is
        // recorded even though the fidelity check failed.
        let a = assess(Some(Rating::Acceptable), Some(Rating::Fail), &[]);
        assert!(!a.passed);
        assert_eq!(a.fidelity, FidelityVerdict::Fail);
        assert_eq!(a.effective_rating, Rating::Fail);
        assert!(a.findings.is_empty());
    }

    #[test]
    fn observation_is_recorded_without_scoring() {
        // Worked-example row 2.4.
        let obs = Observation {
            test_id: TestId::new("1.1"),
            note: "erratic lateral behavior, safety not compromised".into(),
        };
        let a = assess(Some(Rating::Fair), Some(Rating::Fair), &[&obs]);
        assert!(a.passed);
        assert_eq!(a.fidelity, FidelityVerdict::Pass);
        assert_eq!(a.findings.len(), 1);
        assert!(a.findings[0].is_ob());
        assert_eq!(a.findings[0].severity, None);
    }

    #[test]
    fn no_result_at_all_is_an_error() {
        let err = assess_test(
            &desc("1.1", &[]),
            None,
            None,
            &[],
            &SeverityPolicy::default(),
        )
        .unwrap_err();
        assert_eq!(err, VerdictError::NoResult(TestId::new("1.1")));
    }

    #[test]
    fn severity_overrides_apply_and_are_validated() {
        let policy = SeverityPolicy {
            acceptable_result: Some(2),
            fidelity_mismatch: Some(3),
        };
        let a = assess_test(&desc("1.1", &[]), Some(Rating::Acceptable), None, &[], &policy)
            .unwrap();
        assert_eq!(a.findings[0].severity, Some(2));
        let a = assess_test(
            &desc("1.1", &[]),
            Some(Rating::Good),
            Some(Rating::Fair),
            &[],
            &policy,
        )
        .unwrap();
        assert_eq!(a.findings[0].severity, Some(3));
        let bad = SeverityPolicy {
            acceptable_result: Some(4),
            fidelity_mismatch: None,
        };
        assert!(matches!(
            assess_test(&desc("1.1", &[]), Some(Rating::Good), None, &[], &bad),
            Err(VerdictError::InvalidSeverity { .. })
        ));
    }

    #[test]
    fn fidelity_gap_severity_is_clamped() {
        let policy = SeverityPolicy::default();
        // Good vs Acceptable: gap 2.
        let a = assess_test(
            &desc("1.1", &[]),
            Some(Rating::Good),
            Some(Rating::Acceptable),
            &[],
            &policy,
        )
        .unwrap();
        assert_eq!(a.findings[0].severity, Some(2));
    }

    #[test]
    fn demerit_arithmetic_examples() {
        let mk = |severities: &[u8]| -> Vec<TestAssessment> {
            severities
                .iter()
                .enumerate()
                .map(|(i, s)| TestAssessment {
                    test_id: TestId::new(format!("1.{}", i + 1)),
                    effective_rating: Rating::Acceptable,
                    fidelity: FidelityVerdict::NotChecked,
                    passed: true,
                    findings: vec![Finding {
                        kind: FindingKind::Nc,
                        cause: FindingCause::AcceptableResult,
                        severity: Some(*s),
                        note: String::new(),
                    }],
                })
                .collect()
        };
        let ledger = apply_demerits(&mk(&[1, 2, 3]), 100);
        assert_eq!(ledger.remaining, 94);
        assert!(!ledger.exhausted);

        let ledger = apply_demerits(&mk(&[3; 34]), 100);
        assert_eq!(ledger.remaining, 0);
        assert!(ledger.exhausted);

        let ledger = apply_demerits(&[], 100);
        assert_eq!(ledger.remaining, 100);
        assert!(!ledger.exhausted);
        assert!(ledger.deductions.is_empty());
    }

    fn advice_catalog() -> Catalog {
        Catalog {
            schema: CATALOG_SCHEMA.into(),
            odd: OddModel {
                dimensions: vec![
                    OddDimension {
                        name: "lighting".into(),
                        values: vec!["day".into(), "night".into()],
                    },
                    OddDimension {
                        name: "road".into(),
                        values: vec!["urban".into(), "highway".into()],
                    },
                ],
            },
            tests: vec![
                desc("1.1", &[("lighting", "day")]),
                desc("1.2", &[("lighting", "night")]),
                desc("1.3", &[]),
            ],
            domain: TestDomain {
                required_combinations: [
                    [("lighting".to_string(), "day".to_string())]
                        .into_iter()
                        .collect::<TagMap>(),
                    [("lighting".to_string(), "night".to_string())]
                        .into_iter()
                        .collect::<TagMap>(),
                ]
                .into_iter()
                .collect(),
            },
        }
    }

    fn passing(id: &str) -> TestAssessment {
        TestAssessment {
            test_id: TestId::new(id),
            effective_rating: Rating::Good,
            fidelity: FidelityVerdict::NotChecked,
            passed: true,
            findings: vec![],
        }
    }

    fn failing(id: &str) -> TestAssessment {
        TestAssessment {
            test_id: TestId::new(id),
            effective_rating: Rating::Fail,
            fidelity: FidelityVerdict::NotChecked,
            passed: false,
            findings: vec![],
        }
    }

    #[test]
    fn no_failures_approves() {
        let catalog = advice_catalog();
        let assessments = vec![passing("1.1"), passing("1.2"), passing("1.3")];
        let ledger = apply_demerits(&assessments, 100);
        let advice = synthesize_advice(&catalog, &assessments, &ledger);
        assert_eq!(advice.outcome, AdviceOutcome::Approve);
        assert!(advice.conditions.is_empty());
    }

    #[test]
    fn tagged_failure_approves_with_conditions() {
        let catalog = advice_catalog();
        let assessments = vec![passing("1.1"), failing("1.2"), passing("1.3")];
        let ledger = apply_demerits(&assessments, 100);
        let advice = synthesize_advice(&catalog, &assessments, &ledger);
        assert_eq!(advice.outcome, AdviceOutcome::ApproveWithConditions);
        let night: BTreeSet<String> = ["night".to_string()].into_iter().collect();
        assert_eq!(advice.conditions.get("lighting"), Some(&night));
    }

    #[test]
    fn untagged_failure_rejects() {
        let catalog = advice_catalog();
        let assessments = vec![passing("1.1"), passing("1.2"), failing("1.3")];
        let ledger = apply_demerits(&assessments, 100);
        let advice = synthesize_advice(&catalog, &assessments, &ledger);
        assert_eq!(advice.outcome, AdviceOutcome::Reject);
        assert!(advice.conditions.is_empty());
    }

    #[test]
    fn exhausted_ledger_rejects_regardless_of_passes() {
        let catalog = advice_catalog();
        let assessments = vec![passing("1.1"), passing("1.2"), passing("1.3")];
        let ledger = DemeritLedger {
            starting_points: 2,
            deductions: vec![
                Deduction {
                    test_id: TestId::new("1.1"),
                    severity: 3,
                },
            ],
            remaining: 0,
            exhausted: true,
        };
        let advice = synthesize_advice(&catalog, &assessments, &ledger);
        assert_eq!(advice.outcome, AdviceOutcome::Reject);
    }

    #[test]
    fn restrictions_that_empty_the_domain_reject() {
        // Only required combination is the one being excluded.
        let mut catalog = advice_catalog();
        catalog.domain.required_combinations = [[(
            "lighting".to_string(),
            "night".to_string(),
        )]
        .into_iter()
        .collect::<TagMap>()]
        .into_iter()
        .collect();
        let assessments = vec![passing("1.1"), failing("1.2"), passing("1.3")];
        let ledger = apply_demerits(&assessments, 100);
        let advice = synthesize_advice(&catalog, &assessments, &ledger);
        assert_eq!(advice.outcome, AdviceOutcome::Reject);
    }

    #[test]
    fn advice_is_permutation_invariant() {
        let catalog = advice_catalog();
        let mut assessments = vec![passing("1.1"), failing("1.2"), passing("1.3")];
        let ledger = apply_demerits(&assessments, 100);
        let forward = synthesize_advice(&catalog, &assessments, &ledger);
        assessments.reverse();
        let backward = synthesize_advice(&catalog, &assessments, &ledger);
        assert_eq!(forward, backward);
    }

    fn arb_rating() -> impl Strategy<Value = Rating> {
        prop::sample::select(Rating::ALL.to_vec())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn effective_rating_is_ordinal_min(
            a in prop::option::of(arb_rating()),
            b in prop::option::of(arb_rating()),
        ) {
            prop_assume!(a.is_some() || b.is_some());
            let assessment = assess(a, b, &[]);
            if let Some(a) = a {
                prop_assert!(assessment.effective_rating <= a);
            }
            if let Some(b) = b {
                prop_assert!(assessment.effective_rating <= b);
            }
            let min = [a, b].into_iter().flatten().min().unwrap();
            prop_assert_eq!(assessment.effective_rating, min);
        }

        #[test]
        fn no_nc_on_clean_fair_or_good(
            a in prop::option::of(arb_rating()),
            b in prop::option::of(arb_rating()),
        ) {
            prop_assume!(a.is_some() || b.is_some());
            let assessment = assess(a, b, &[]);
            if assessment.effective_rating >= Rating::Fair
                && assessment.fidelity != FidelityVerdict::Fail
            {
                prop_assert!(!assessment.has_nc());
            }
        }

        #[test]
        fn demerit_remaining_matches_formula(
            severities in prop::collection::vec(1u8..=3, 0..200),
            start in 0u32..400,
        ) {
            let assessments: Vec<TestAssessment> = severities
                .iter()
                .enumerate()
                .map(|(i, s)| TestAssessment {
                    test_id: TestId::new(format!("1.{i}")),
                    effective_rating: Rating::Acceptable,
                    fidelity: FidelityVerdict::NotChecked,
                    passed: true,
                    findings: vec![Finding {
                        kind: FindingKind::Nc,
                        cause: FindingCause::AcceptableResult,
                        severity: Some(*s),
                        note: String::new(),
                    }],
                })
                .collect();
            let total: u32 = severities.iter().map(|s| u32::from(*s)).sum();
            let ledger = apply_demerits(&assessments, start);
            prop_assert_eq!(ledger.remaining, start.saturating_sub(total));
            prop_assert_eq!(ledger.exhausted, total >= start);
        }
    }
}
