//! Synthetic assessment runs: ground-truth capability profiles,
//! applicant reports with optional reporting bias, and noisy assessor
//! measurements, so the whole pipeline can be exercised without a
//! vehicle.
//!
//! All randomness is counter-based and keyed on (seed, test id, stream):
//! every draw is a pure function of its key, so per-test draws are
//! order-independent and any output is reproducible from the inputs
//! alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{Catalog, TestDescription, TestId};
use crate::rating::{classify_value, Direction, MetricValue, Rating, References};
use crate::selection::{ApplicantReport, ResultEntry, SelectionDecision, TestMethod};
use crate::verdict::{AssessorEntry, AssessorReport};

/// Fraction of the acceptable-to-good band width used as the default
/// measurement noise standard deviation in generated profiles.
pub const DEFAULT_NOISE_FRACTION: f64 = 0.1;

/// Ground truth for one test: the AV's true metric value (in the test's
/// metric unit) and the standard deviation of physical measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapabilityEntry {
    pub true_metric: f64,
    pub measurement_noise_sd: f64,
}

/// Synthetic ground-truth capability of an AV, one entry per catalog test.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CapabilityProfile {
    pub entries: BTreeMap<TestId, CapabilityEntry>,
}

impl CapabilityProfile {
    pub fn get(&self, id: &TestId) -> Option<&CapabilityEntry> {
        self.entries.get(id)
    }

    /// Scale every measurement noise sd by `factor` (0 silences noise).
    pub fn scale_noise(mut self, factor: f64) -> Self {
        for entry in self.entries.values_mut() {
            entry.measurement_noise_sd *= factor;
        }
        self
    }
}

/// How the applicant reports results relative to the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ReportingBias {
    /// Report the true metric value.
    Truthful,
    /// Report the pessimistic envelope: the true value degraded by two
    /// measurement-noise standard deviations.
    WorstCase,
    /// Report the true value improved by `delta` metric units.
    Optimistic { delta: f64 },
}

// ---------------------------------------------------------------------
// Counter-based keyed generator
// ---------------------------------------------------------------------

fn keyed_u64(seed: u64, id: &TestId, stream: &str, counter: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"veritas-sim/1\0");
    hasher.update(seed.to_be_bytes());
    hasher.update(id.as_str().as_bytes());
    hasher.update(b"\0");
    hasher.update(stream.as_bytes());
    hasher.update(b"\0");
    hasher.update(counter.to_be_bytes());
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Uniform draw in [0, 1) with 53-bit precision.
fn keyed_unit(seed: u64, id: &TestId, stream: &str, counter: u64) -> f64 {
    let x = keyed_u64(seed, id, stream, counter) >> 11;
    x as f64 / (1u64 << 53) as f64
}

/// Standard normal draw via Box-Muller over two keyed uniforms.
fn keyed_gaussian(seed: u64, id: &TestId, stream: &str) -> f64 {
    let u1 = 1.0 - keyed_unit(seed, id, stream, 0); // (0, 1]
    let u2 = keyed_unit(seed, id, stream, 1);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn references_of(test: &TestDescription) -> &References {
    test.references
        .as_ref()
        .expect("simulated catalogs carry references on every test")
}

/// Signed span of the reference band in the "better" direction:
/// positive for higher-is-better tests, negative for lower-is-better.
fn band_width(refs: &References) -> f64 {
    refs.good - refs.acceptable
}

// ---------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------

/// Generate a ground-truth profile for every catalog test,
/// deterministically in (catalog, seed).
///
/// True metrics are uniform over [acceptable - w, good + w] with
/// w = good - acceptable, which spans all four rating bands; the noise
/// sd defaults to a tenth of the band width.
pub fn gen_profile(catalog: &Catalog, seed: u64) -> CapabilityProfile {
    let entries = catalog
        .tests
        .iter()
        .map(|test| {
            let refs = references_of(test);
            let w = band_width(refs);
            let lo = refs.acceptable - w;
            let hi = refs.good + w;
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let u = keyed_unit(seed, &test.id, "true-metric", 0);
            let entry = CapabilityEntry {
                true_metric: lo + u * (hi - lo),
                measurement_noise_sd: w.abs() * DEFAULT_NOISE_FRACTION,
            };
            (test.id.clone(), entry)
        })
        .collect();
    CapabilityProfile { entries }
}

fn biased_value(entry: &CapabilityEntry, bias: ReportingBias, direction: Direction) -> f64 {
    let toward_worse = match direction {
        Direction::HigherIsBetter => -1.0,
        Direction::LowerIsBetter => 1.0,
    };
    match bias {
        ReportingBias::Truthful => entry.true_metric,
        ReportingBias::WorstCase => {
            entry.true_metric + toward_worse * 2.0 * entry.measurement_noise_sd
        }
        ReportingBias::Optimistic { delta } => entry.true_metric - toward_worse * delta,
    }
}

/// Simulate the applicant's result submission: every catalog test gets
/// a rating classified from the (possibly bias-shifted) true metric.
/// Raw values are withheld, matching the confidentiality stance; the
/// seed is reserved for bias strategies that draw randomness.
pub fn simulate_applicant(
    catalog: &Catalog,
    profile: &CapabilityProfile,
    bias: ReportingBias,
    _seed: u64,
) -> ApplicantReport {
    let entries = catalog
        .tests
        .iter()
        .map(|test| {
            let entry = profile
                .get(&test.id)
                .expect("profile covers every catalog test");
            let value = biased_value(entry, bias, test.direction);
            let rating = classify_value(value, references_of(test), test.direction)
                .expect("simulated values are finite");
            (
                test.id.clone(),
                ResultEntry {
                    rating,
                    raw: None,
                    method: TestMethod::Virtual,
                },
            )
        })
        .collect();
    ApplicantReport { entries }
}

/// Simulate the assessor's physical measurements on the selected tests:
/// the true metric plus keyed gaussian noise of the profile's sd.
pub fn simulate_assessor(
    catalog: &Catalog,
    profile: &CapabilityProfile,
    decisions: &[SelectionDecision],
    seed: u64,
) -> AssessorReport {
    let entries = decisions
        .iter()
        .filter(|d| d.selected)
        .map(|d| {
            let test = catalog
                .test(&d.test_id)
                .expect("decisions refer to catalog tests");
            let entry = profile
                .get(&test.id)
                .expect("profile covers every catalog test");
            let noise = entry.measurement_noise_sd * keyed_gaussian(seed, &test.id, "assessor");
            let value = entry.true_metric + noise;
            let rating = classify_value(value, references_of(test), test.direction)
                .expect("simulated values are finite");
            (
                test.id.clone(),
                AssessorEntry {
                    rating,
                    raw: Some(MetricValue::new(value, &test.metric_unit)),
                },
            )
        })
        .collect();
    AssessorReport {
        entries,
        observations: Default::default(),
    }
}

/// Rating of the true metric itself, without bias or noise.
pub fn true_rating(catalog: &Catalog, profile: &CapabilityProfile, id: &TestId) -> Option<Rating> {
    let test = catalog.test(id)?;
    let entry = profile.get(id)?;
    classify_value(entry.true_metric, references_of(test), test.direction).ok()
}
