//! Selection of tests for physical assessment by the assessor.
//!
//! Three rules, checked in order of precedence per test: the applicant
//! provided no result, the result was flagged as inconsistent, or the
//! test falls in the deterministic spot-check sample. Before any per-test
//! rule runs, a guard fails the whole assessment when the applicant left
//! too large a fraction of the catalog without results.
//!
//! Spot-check sampling is a keyed-hash ranking rather than a stateful
//! generator, so the sample is reproducible from the policy alone and
//! independent of iteration order or platform.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, TestId};
use crate::rating::{MetricValue, Rating};

/// How the applicant obtained a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    Virtual,
    Physical,
    HardwareInLoop,
}

/// One applicant-reported result. Raw values are optional: ratings are
/// the only result currency the applicant must disclose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub rating: Rating,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<MetricValue>,
    pub method: TestMethod,
}

/// Applicant results keyed by test id; at most one entry per test.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ApplicantReport {
    pub entries: std::collections::BTreeMap<TestId, ResultEntry>,
}

impl ApplicantReport {
    pub fn get(&self, id: &TestId) -> Option<&ResultEntry> {
        self.entries.get(id)
    }
}

/// Why a test was (or was not) selected for physical assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionReason {
    MissingResult,
    Inconsistent,
    SpotCheck,
    NotSelected,
}

/// Per-test selection outcome. `selected` iff the reason is anything
/// other than `NotSelected`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDecision {
    pub test_id: TestId,
    pub selected: bool,
    pub reason: SelectionReason,
}

/// Knobs governing selection, supplied by the assessor. The policy file
/// doubles as the audit trail for the inconsistency judgments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionPolicy {
    /// Fraction of the catalog to spot check, in [0, 1].
    #[serde(default)]
    pub spot_check_fraction: f64,
    /// Auto-fail when the missing-result fraction exceeds this, in (0, 1].
    #[serde(default = "default_missing_fail_fraction")]
    pub missing_fail_fraction: f64,
    /// Tests whose applicant results the assessor does not confide in.
    #[serde(default)]
    pub inconsistency_flags: BTreeSet<TestId>,
    /// Sampling seed; serialized as a decimal string.
    #[serde(default, with = "seed_string")]
    pub seed: u64,
}

fn default_missing_fail_fraction() -> f64 {
    0.10
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            spot_check_fraction: 0.0,
            missing_fail_fraction: default_missing_fail_fraction(),
            inconsistency_flags: BTreeSet::new(),
            seed: 0,
        }
    }
}

/// Parse and range-check a selection policy file.
pub fn load_policy(mut source: impl std::io::Read) -> Result<SelectionPolicy, SelectionError> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| SelectionError::InvalidPolicy(e.to_string()))?;
    load_policy_str(&text)
}

pub fn load_policy_str(text: &str) -> Result<SelectionPolicy, SelectionError> {
    let policy: SelectionPolicy =
        toml::from_str(text).map_err(|e| SelectionError::InvalidPolicy(e.to_string()))?;
    policy.validate()?;
    Ok(policy)
}

/// Serialize a policy back to its file form.
pub fn save_policy(policy: &SelectionPolicy) -> String {
    toml::to_string_pretty(policy).expect("policy serialization cannot fail")
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if !(0.0..=1.0).contains(&self.spot_check_fraction)
            || !self.spot_check_fraction.is_finite()
        {
            return Err(SelectionError::InvalidPolicy(format!(
                "spot_check_fraction {} outside [0, 1]",
                self.spot_check_fraction
            )));
        }
        if !(self.missing_fail_fraction > 0.0 && self.missing_fail_fraction <= 1.0) {
            return Err(SelectionError::InvalidPolicy(format!(
                "missing_fail_fraction {} outside (0, 1]",
                self.missing_fail_fraction
            )));
        }
        Ok(())
    }
}

mod seed_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&seed.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse()
            .map_err(|_| serde::de::Error::custom(format!("seed '{raw}' is not a decimal u64")))
    }
}

/// Why the assessment ended without per-test decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AutoFailReason {
    MissingResultsOverrun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoFail {
    pub reason: AutoFailReason,
    pub missing_fraction: f64,
    pub threshold: f64,
}

/// Result of running selection: either one decision per catalog test,
/// in catalog order, or an automatic fail of the whole assessment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum SelectionOutcome {
    Decisions { decisions: Vec<SelectionDecision> },
    AutoFail(AutoFail),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("report references unknown test id '{0}'")]
    UnknownTestId(TestId),
    #[error("invalid selection policy: {0}")]
    InvalidPolicy(String),
}

/// 64-bit FNV-1a over a byte string. Bit-exact across platforms.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET_BASIS: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    bytes
        .iter()
        .fold(OFFSET_BASIS, |h, b| (h ^ u64::from(*b)).wrapping_mul(PRIME))
}

/// Ranking key for the spot-check sample: FNV-1a of
/// `"<seed as decimal>:<test id>"`.
pub fn spot_check_key(seed: u64, id: &TestId) -> u64 {
    fnv1a64(format!("{seed}:{id}").as_bytes())
}

/// Fraction of catalog tests without an applicant result, in [0, 1].
pub fn missing_fraction(catalog: &Catalog, report: &ApplicantReport) -> f64 {
    let total = catalog.tests.len();
    if total == 0 {
        return 0.0;
    }
    let missing = catalog
        .tests
        .iter()
        .filter(|t| report.get(&t.id).is_none())
        .count();
    missing as f64 / total as f64
}

/// Decide, per catalog test, whether the assessor performs it physically.
///
/// Rule precedence per test: missing result, then inconsistency flag,
/// then spot-check sample membership. The spot-check sample ranks the
/// not-already-selected tests by keyed hash ascending (ties by
/// lexicographic test id) and takes the
/// ceil(spot_check_fraction x catalog size) lowest.
pub fn select_tests(
    catalog: &Catalog,
    report: &ApplicantReport,
    policy: &SelectionPolicy,
) -> Result<SelectionOutcome, SelectionError> {
    policy.validate()?;
    for id in report.entries.keys() {
        if catalog.test(id).is_none() {
            return Err(SelectionError::UnknownTestId(id.clone()));
        }
    }

    let fraction_missing = missing_fraction(catalog, report);
    if fraction_missing > policy.missing_fail_fraction {
        return Ok(SelectionOutcome::AutoFail(AutoFail {
            reason: AutoFailReason::MissingResultsOverrun,
            missing_fraction: fraction_missing,
            threshold: policy.missing_fail_fraction,
        }));
    }

    let total = catalog.tests.len();
    let sample_size = (policy.spot_check_fraction * total as f64).ceil() as usize;

    // First two rules, in precedence order.
    let mut reasons: Vec<Option<SelectionReason>> = catalog
        .tests
        .iter()
        .map(|t| {
            if report.get(&t.id).is_none() {
                Some(SelectionReason::MissingResult)
            } else if policy.inconsistency_flags.contains(&t.id) {
                Some(SelectionReason::Inconsistent)
            } else {
                None
            }
        })
        .collect();

    // Spot-check sample over the tests not already selected.
    let mut candidates: Vec<(u64, &TestId, usize)> = catalog
        .tests
        .iter()
        .enumerate()
        .filter(|(i, _)| reasons[*i].is_none())
        .map(|(i, t)| (spot_check_key(policy.seed, &t.id), &t.id, i))
        .collect();
    candidates.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    for (_, _, index) in candidates.into_iter().take(sample_size) {
        reasons[index] = Some(SelectionReason::SpotCheck);
    }

    let decisions = catalog
        .tests
        .iter()
        .zip(reasons)
        .map(|(t, reason)| {
            let reason = reason.unwrap_or(SelectionReason::NotSelected);
            SelectionDecision {
                test_id: t.id.clone(),
                selected: reason != SelectionReason::NotSelected,
                reason,
            }
        })
        .collect();
    Ok(SelectionOutcome::Decisions { decisions })
}

/// Ids of the selected tests, when selection produced decisions.
pub fn selected_ids(outcome: &SelectionOutcome) -> BTreeSet<TestId> {
    match outcome {
        SelectionOutcome::Decisions { decisions } => decisions
            .iter()
            .filter(|d| d.selected)
            .map(|d| d.test_id.clone())
            .collect(),
        SelectionOutcome::AutoFail(_) => BTreeSet::new(),
    }
}
