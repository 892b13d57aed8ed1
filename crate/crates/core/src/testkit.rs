//! Shared fixtures for unit tests.

use std::collections::{BTreeMap, BTreeSet};

use crate::catalog::{
    Catalog, OddDimension, OddModel, TestCase, TestDescription, TestDomain, TestId,
    CATALOG_SCHEMA,
};
use crate::rating::{Direction, References};

pub(crate) const FOURTEEN_IDS: [&str; 14] = [
    "1.1", "1.2", "1.3", "1.4", "2.1", "2.2", "2.3", "2.4", "3.1", "3.2", "3.3", "4.1", "4.2",
    "4.3",
];

/// Minimal catalog with the given test ids, references (1.0, 1.5, 2.0)
/// under higher-is-better, and no tags.
pub(crate) fn catalog_with_ids(ids: &[&str]) -> Catalog {
    Catalog {
        schema: CATALOG_SCHEMA.into(),
        odd: OddModel {
            dimensions: vec![OddDimension {
                name: "lighting".into(),
                values: vec!["day".into(), "night".into()],
            }],
        },
        tests: ids
            .iter()
            .map(|id| TestDescription {
                id: TestId::new(*id),
                criterion: "c".into(),
                test_case: TestCase {
                    description: "tc".into(),
                    parameters: BTreeMap::new(),
                },
                metric_id: "m".into(),
                metric_unit: "s".into(),
                direction: Direction::HigherIsBetter,
                references: Some(References::new(1.0, 1.5, 2.0)),
                tags: BTreeMap::new(),
                ddt_task: "t".into(),
            })
            .collect(),
        domain: TestDomain {
            required_combinations: BTreeSet::new(),
        },
    }
}
