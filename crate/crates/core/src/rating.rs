//! Four-level ordinal rating scheme and metric-value classification.
//!
//! A raw metric value is never exchanged between stakeholders directly;
//! it is classified against three per-test references (acceptable, fair,
//! good) into one of four ordered ratings. Band boundaries are inclusive
//! toward the better band: a value that meets a reference exactly attains
//! that band.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ordinal test outcome, ordered worst to best.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Rating {
    Fail,
    Acceptable,
    Fair,
    Good,
}

impl Rating {
    pub const ALL: [Rating; 4] = [
        Rating::Fail,
        Rating::Acceptable,
        Rating::Fair,
        Rating::Good,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Rating::Fail => "fail",
            Rating::Acceptable => "acceptable",
            Rating::Fair => "fair",
            Rating::Good => "good",
        }
    }

    /// Rank in the total order, 0 = Fail .. 3 = Good.
    pub fn rank(self) -> u8 {
        match self {
            Rating::Fail => 0,
            Rating::Acceptable => 1,
            Rating::Fair => 2,
            Rating::Good => 3,
        }
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of comparing two ratings, from the first argument's viewpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingOrdering {
    Worse,
    Equal,
    Better,
}

/// Compare two ratings under the total order Fail < Acceptable < Fair < Good.
pub fn compare(a: Rating, b: Rating) -> RatingOrdering {
    match a.cmp(&b) {
        std::cmp::Ordering::Less => RatingOrdering::Worse,
        std::cmp::Ordering::Equal => RatingOrdering::Equal,
        std::cmp::Ordering::Greater => RatingOrdering::Better,
    }
}

/// Whether larger or smaller metric values indicate better performance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

impl Direction {
    /// True when `a` is at least as good as `b` under this direction.
    pub fn at_least_as_good(self, a: f64, b: f64) -> bool {
        match self {
            Direction::HigherIsBetter => a >= b,
            Direction::LowerIsBetter => a <= b,
        }
    }
}

/// The three per-test reference values, each expressed in the test's
/// metric unit. Must be monotone under the test direction:
/// acceptable is never better than fair, fair never better than good.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct References {
    pub acceptable: f64,
    pub fair: f64,
    pub good: f64,
}

impl References {
    pub fn new(acceptable: f64, fair: f64, good: f64) -> Self {
        Self {
            acceptable,
            fair,
            good,
        }
    }

    /// Non-strict monotonicity check: acceptable is not better than
    /// fair, fair not better than good, under `direction`. Equal
    /// references are allowed and collapse the bands.
    pub fn is_monotone(&self, direction: Direction) -> bool {
        direction.at_least_as_good(self.fair, self.acceptable)
            && direction.at_least_as_good(self.good, self.fair)
    }

    pub fn is_finite(&self) -> bool {
        self.acceptable.is_finite() && self.fair.is_finite() && self.good.is_finite()
    }
}

/// A raw measurement in a named unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricValue {
    pub value: f64,
    pub unit: String,
}

impl MetricValue {
    pub fn new(value: f64, unit: impl Into<String>) -> Self {
        Self {
            value,
            unit: unit.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RatingError {
    #[error("unit mismatch: expected '{expected}', got '{actual}'")]
    UnitMismatch { expected: String, actual: String },
    #[error("metric value is not finite: {0}")]
    NonFiniteValue(f64),
}

/// Classify a raw metric value into a rating band.
///
/// A value at least as good as the good reference rates Good; else at
/// least as good as fair rates Fair; else at least as good as acceptable
/// rates Acceptable; anything worse is a Fail. Meeting a reference
/// exactly attains that band.
///
/// The caller guarantees monotone references (a loaded catalog always
/// satisfies this).
pub fn classify_value(
    value: f64,
    references: &References,
    direction: Direction,
) -> Result<Rating, RatingError> {
    if !value.is_finite() {
        return Err(RatingError::NonFiniteValue(value));
    }
    debug_assert!(references.is_monotone(direction));
    let rating = if direction.at_least_as_good(value, references.good) {
        Rating::Good
    } else if direction.at_least_as_good(value, references.fair) {
        Rating::Fair
    } else if direction.at_least_as_good(value, references.acceptable) {
        Rating::Acceptable
    } else {
        Rating::Fail
    };
    Ok(rating)
}

/// Classify a measured [`MetricValue`], first checking that its unit
/// matches the unit the test's metric is defined in.
pub fn classify(
    value: &MetricValue,
    expected_unit: &str,
    references: &References,
    direction: Direction,
) -> Result<Rating, RatingError> {
    if value.unit != expected_unit {
        return Err(RatingError::UnitMismatch {
            expected: expected_unit.to_string(),
            actual: value.unit.clone(),
        });
    }
    classify_value(value.value, references, direction)
}
