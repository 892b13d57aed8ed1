//! Test catalog: the ODD model, system-level test descriptions, and the
//! test domain, plus the completeness (coverage) check over the domain.
//!
//! A catalog document is a TOML file with top-level sections `odd`,
//! `tests`, and `domain`, and a mandatory `schema = "veritas-catalog/1"`
//! header field.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rating::{Direction, References};

/// Schema string required in the catalog file header.
pub const CATALOG_SCHEMA: &str = "veritas-catalog/1";

/// Hierarchical test identifier such as `"3.2"`.
///
/// Catalog files require the form `[0-9]+(\.[0-9]+)+`; the derived `Ord`
/// is plain lexicographic order, which is the tie-break order used by
/// spot-check sampling.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TestId(String);

impl TestId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True for ids of the form `[0-9]+(\.[0-9]+)+`.
    pub fn is_well_formed(&self) -> bool {
        let parts: Vec<&str> = self.0.split('.').collect();
        parts.len() >= 2
            && parts
                .iter()
                .all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()))
    }

    /// Leading group number, when well formed: 3 for `"3.2"`.
    pub fn group(&self) -> Option<u64> {
        self.0.split('.').next()?.parse().ok()
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TestId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// A (possibly partial) assignment of ODD dimension names to values.
pub type TagMap = BTreeMap<String, String>;

/// One discrete ODD dimension and its admissible values.
///
/// Value order is preserved from the source document; uniqueness is a
/// validation invariant rather than a container property so that files
/// round-trip unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OddDimension {
    pub name: String,
    pub values: Vec<String>,
}

/// Discrete operational-design-domain model: an ordered list of named
/// dimensions, each with a non-empty set of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OddModel {
    pub dimensions: Vec<OddDimension>,
}

impl OddModel {
    pub fn dimension(&self, name: &str) -> Option<&OddDimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    pub fn has_value(&self, dimension: &str, value: &str) -> bool {
        self.dimension(dimension)
            .map(|d| d.values.iter().any(|v| v == value))
            .unwrap_or(false)
    }
}

/// A quantity with a unit, used for test-case parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quantity {
    pub value: f64,
    pub unit: String,
}

/// How a test criterion is evaluated: a prose description plus concrete
/// scenario parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub description: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, Quantity>,
}

/// One assessable system-level test.
///
/// `references` is `None` only for drafts proposed from monitored
/// deployment data; a loadable catalog requires references on every test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestDescription {
    pub id: TestId,
    pub criterion: String,
    pub test_case: TestCase,
    pub metric_id: String,
    /// Unit the metric (and its references) are expressed in.
    pub metric_unit: String,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<References>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tags: TagMap,
    pub ddt_task: String,
}

impl TestDescription {
    /// A test is executable once its references have been authored.
    pub fn is_executable(&self) -> bool {
        self.references.is_some()
    }

    /// True when this test's tags agree with `combination` on every
    /// dimension the combination constrains.
    pub fn covers(&self, combination: &TagMap) -> bool {
        combination
            .iter()
            .all(|(dim, val)| self.tags.get(dim) == Some(val))
    }
}

/// High-level description of the range of tests that are expected:
/// a set of required (full or partial) dimension-value combinations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestDomain {
    #[serde(default)]
    pub required_combinations: BTreeSet<TagMap>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageVerdict {
    Ok,
    NotOk,
}

/// Result of checking the catalog's tests against the test domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub covered: BTreeSet<TagMap>,
    pub missing: BTreeSet<TagMap>,
    pub verdict: CoverageVerdict,
}

/// A validated catalog: ODD model, test descriptions, and test domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub schema: String,
    pub odd: OddModel,
    pub tests: Vec<TestDescription>,
    pub domain: TestDomain,
}

impl Catalog {
    pub fn test(&self, id: &TestId) -> Option<&TestDescription> {
        self.tests.iter().find(|t| &t.id == id)
    }

    pub fn test_ids(&self) -> impl Iterator<Item = &TestId> {
        self.tests.iter().map(|t| &t.id)
    }

    /// SHA-256 digest of the catalog's canonical JSON encoding, hex.
    pub fn digest(&self) -> String {
        crate::digest::sha256_hex_json(self)
    }
}

/// A single invariant violation found in a test description. Each
/// violation names the field it concerns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// `references` is unset (draft not yet authored for execution).
    UnsetReferences,
    /// `references` is not monotone under the test direction.
    NonMonotoneReferences,
    /// `references` contains a non-finite number.
    NonFiniteReferences,
    /// A tag names a dimension absent from the ODD model.
    UnknownDimension(String),
    /// A tag value is not among its dimension's values.
    UnknownDimensionValue { dimension: String, value: String },
}

impl Violation {
    pub fn field(&self) -> &'static str {
        match self {
            Violation::UnsetReferences
            | Violation::NonMonotoneReferences
            | Violation::NonFiniteReferences => "references",
            Violation::UnknownDimension(_) | Violation::UnknownDimensionValue { .. } => "tags",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnsetReferences => write!(f, "references: not set"),
            Violation::NonMonotoneReferences => write!(
                f,
                "references: acceptable/fair/good are not monotone under the test direction"
            ),
            Violation::NonFiniteReferences => write!(f, "references: non-finite value"),
            Violation::UnknownDimension(d) => {
                write!(f, "tags: unknown ODD dimension '{d}'")
            }
            Violation::UnknownDimensionValue { dimension, value } => {
                write!(f, "tags: value '{value}' not in ODD dimension '{dimension}'")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("failed to read catalog: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed catalog document: {0}")]
    Schema(String),
    #[error("invalid catalog{}: field '{field}': {message}", id.as_ref().map(|i| format!(" (test {i})")).unwrap_or_default())]
    Validation {
        id: Option<TestId>,
        field: String,
        message: String,
    },
    #[error("duplicate test id '{0}'")]
    DuplicateId(TestId),
}

impl CatalogError {
    fn validation(id: Option<TestId>, field: &str, message: impl Into<String>) -> Self {
        CatalogError::Validation {
            id,
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Check one test description against the ODD model. Returns an empty
/// list iff every description-level invariant holds.
pub fn validate_description(desc: &TestDescription, odd: &OddModel) -> Vec<Violation> {
    let mut violations = Vec::new();
    match &desc.references {
        None => violations.push(Violation::UnsetReferences),
        Some(refs) => {
            if !refs.is_finite() {
                violations.push(Violation::NonFiniteReferences);
            } else if !refs.is_monotone(desc.direction) {
                violations.push(Violation::NonMonotoneReferences);
            }
        }
    }
    for (dim, value) in &desc.tags {
        match odd.dimension(dim) {
            None => violations.push(Violation::UnknownDimension(dim.clone())),
            Some(d) if !d.values.iter().any(|v| v == value) => {
                violations.push(Violation::UnknownDimensionValue {
                    dimension: dim.clone(),
                    value: value.clone(),
                })
            }
            Some(_) => {}
        }
    }
    violations
}

fn validate_odd(odd: &OddModel) -> Result<(), CatalogError> {
    if odd.dimensions.is_empty() {
        return Err(CatalogError::validation(
            None,
            "odd.dimensions",
            "at least one dimension is required",
        ));
    }
    let mut names = BTreeSet::new();
    for dim in &odd.dimensions {
        if !names.insert(&dim.name) {
            return Err(CatalogError::validation(
                None,
                "odd.dimensions",
                format!("duplicate dimension name '{}'", dim.name),
            ));
        }
        if dim.values.is_empty() {
            return Err(CatalogError::validation(
                None,
                "odd.dimensions",
                format!("dimension '{}' has no values", dim.name),
            ));
        }
        let mut seen = BTreeSet::new();
        for value in &dim.values {
            if !seen.insert(value) {
                return Err(CatalogError::validation(
                    None,
                    "odd.dimensions",
                    format!("duplicate value '{}' in dimension '{}'", value, dim.name),
                ));
            }
        }
    }
    Ok(())
}

fn validate_combination(combo: &TagMap, odd: &OddModel, field: &str) -> Result<(), CatalogError> {
    for (dim, value) in combo {
        if odd.dimension(dim).is_none() {
            return Err(CatalogError::validation(
                None,
                field,
                format!("combination references unknown dimension '{dim}'"),
            ));
        }
        if !odd.has_value(dim, value) {
            return Err(CatalogError::validation(
                None,
                field,
                format!("combination value '{value}' not in dimension '{dim}'"),
            ));
        }
    }
    Ok(())
}

/// Validate a fully constructed catalog value.
pub fn validate_catalog(catalog: &Catalog) -> Result<(), CatalogError> {
    if catalog.schema != CATALOG_SCHEMA {
        return Err(CatalogError::Schema(format!(
            "unsupported schema '{}' (expected '{CATALOG_SCHEMA}')",
            catalog.schema
        )));
    }
    validate_odd(&catalog.odd)?;
    if catalog.tests.is_empty() {
        return Err(CatalogError::validation(
            None,
            "tests",
            "catalog contains no tests",
        ));
    }
    let mut ids = BTreeSet::new();
    for test in &catalog.tests {
        if !test.id.is_well_formed() {
            return Err(CatalogError::validation(
                Some(test.id.clone()),
                "id",
                "test id must match [0-9]+(.[0-9]+)+",
            ));
        }
        if !ids.insert(test.id.clone()) {
            return Err(CatalogError::DuplicateId(test.id.clone()));
        }
        if let Some(violation) = validate_description(test, &catalog.odd).into_iter().next() {
            return Err(CatalogError::validation(
                Some(test.id.clone()),
                violation.field(),
                violation.to_string(),
            ));
        }
    }
    for combo in &catalog.domain.required_combinations {
        validate_combination(combo, &catalog.odd, "domain.required_combinations")?;
    }
    Ok(())
}

/// Parse and validate a catalog document.
pub fn load_catalog(mut source: impl Read) -> Result<Catalog, CatalogError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    load_catalog_str(&text)
}

/// Parse and validate a catalog document from a string.
pub fn load_catalog_str(text: &str) -> Result<Catalog, CatalogError> {
    let header: toml::Value = text
        .parse()
        .map_err(|e: toml::de::Error| CatalogError::Schema(e.to_string()))?;
    match header.get("schema").and_then(|v| v.as_str()) {
        None => {
            return Err(CatalogError::Schema(
                "missing 'schema' header field".to_string(),
            ))
        }
        Some(s) if s != CATALOG_SCHEMA => {
            return Err(CatalogError::Schema(format!(
                "unsupported schema '{s}' (expected '{CATALOG_SCHEMA}')"
            )))
        }
        Some(_) => {}
    }
    let catalog: Catalog =
        toml::from_str(text).map_err(|e| CatalogError::Schema(e.to_string()))?;
    validate_catalog(&catalog)?;
    Ok(catalog)
}

/// Serialize a catalog back to its document form.
pub fn save_catalog(catalog: &Catalog) -> String {
    toml::to_string_pretty(catalog).expect("catalog serialization cannot fail")
}

/// Check whether the catalog's tests cover the test domain.
///
/// A required combination is covered iff at least one test's tags are
/// consistent with it: equal on every dimension the combination
/// constrains. `covered` and `missing` always partition the domain.
pub fn check_coverage(catalog: &Catalog) -> CoverageReport {
    let mut covered = BTreeSet::new();
    let mut missing = BTreeSet::new();
    for combo in &catalog.domain.required_combinations {
        if catalog.tests.iter().any(|t| t.covers(combo)) {
            covered.insert(combo.clone());
        } else {
            missing.insert(combo.clone());
        }
    }
    let verdict = if missing.is_empty() {
        CoverageVerdict::Ok
    } else {
        CoverageVerdict::NotOk
    };
    CoverageReport {
        covered,
        missing,
        verdict,
    }
}
