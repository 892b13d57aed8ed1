//! Monitored-deployment log ingestion. Uploaded driving data is scanned
//! for condition combinations the assessed catalog knows nothing about;
//! each novel combination yields a draft test description for a future
//! assessment round. Drafts stay non-executable until a human authors
//! their references.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, TagMap, TestCase, TestDescription, TestId};
use crate::rating::Direction;

/// Schema string on the header line of a drive log.
pub const DRIVELOG_SCHEMA: &str = "veritas-drivelog/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveEvent {
    Nominal,
    Disengagement,
    SafetyEvent,
}

/// One line-delimited driving record. Observed tags may carry values
/// (or whole dimensions) the ODD model does not know.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveLogRecord {
    /// UTC seconds; monotone non-decreasing within a log file.
    pub timestamp: u64,
    #[serde(default)]
    pub observed_tags: BTreeMap<String, String>,
    pub event: DriveEvent,
    #[serde(default)]
    pub annotation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventCounts {
    pub nominal: u64,
    pub disengagement: u64,
    pub safety_event: u64,
}

impl EventCounts {
    fn bump(&mut self, event: DriveEvent) {
        match event {
            DriveEvent::Nominal => self.nominal += 1,
            DriveEvent::Disengagement => self.disengagement += 1,
            DriveEvent::SafetyEvent => self.safety_event += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.nominal + self.disengagement + self.safety_event
    }
}

/// What monitored deployment revealed relative to the catalog.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MonitorReport {
    /// Valid-tag combinations matched by no required combination and no
    /// test's tags.
    pub novel_combinations: BTreeSet<TagMap>,
    /// (dimension, value) pairs outside the ODD model.
    pub novel_dimension_values: BTreeSet<(String, String)>,
    /// Per observed combination (projected to valid tags), how many
    /// records of each event kind were seen.
    #[serde(with = "event_counts_entries")]
    pub event_counts: BTreeMap<TagMap, EventCounts>,
    pub records_ingested: u64,
}

/// Combination-keyed counts serialize as a sequence of entries; a map
/// key cannot itself be a map in JSON.
mod event_counts_entries {
    use super::{EventCounts, TagMap};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize)]
    struct EntryRef<'a> {
        combination: &'a TagMap,
        counts: &'a EventCounts,
    }

    #[derive(Deserialize)]
    struct Entry {
        combination: TagMap,
        counts: EventCounts,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<TagMap, EventCounts>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(
            map.iter()
                .map(|(combination, counts)| EntryRef { combination, counts }),
        )
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<TagMap, EventCounts>, D::Error> {
        let entries = Vec::<Entry>::deserialize(deserializer)?;
        Ok(entries
            .into_iter()
            .map(|e| (e.combination, e.counts))
            .collect())
    }
}

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("failed to read drive log: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed drive log record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
}

fn malformed(line: usize, message: impl Into<String>) -> MonitorError {
    MonitorError::MalformedRecord {
        line,
        message: message.into(),
    }
}

/// A known combination `k` accounts for an observation `o` when `k`
/// constrains every dimension `o` observed, with equal values.
fn matches_known(observed: &TagMap, known: &TagMap) -> bool {
    observed
        .iter()
        .all(|(dim, val)| known.get(dim) == Some(val))
}

/// Ingest a line-delimited drive log and report novel combinations,
/// novel dimension values, and per-combination event counts.
///
/// Unknown dimensions or values are never an error; they are projected
/// out of the combination and reported separately. Novelty uses set
/// semantics, so duplicate lines are idempotent; counts count each line.
pub fn ingest(source: impl BufRead, catalog: &Catalog) -> Result<MonitorReport, MonitorError> {
    let mut report = MonitorReport::default();
    let known: Vec<&TagMap> = catalog
        .domain
        .required_combinations
        .iter()
        .chain(catalog.tests.iter().map(|t| &t.tags))
        .collect();

    let mut saw_header = false;
    let mut last_timestamp = 0u64;
    for (index, line) in source.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !saw_header {
            let header: serde_json::Value = serde_json::from_str(trimmed)
                .map_err(|e| malformed(line_no, format!("unparseable header: {e}")))?;
            match header.get("schema").and_then(|v| v.as_str()) {
                Some(DRIVELOG_SCHEMA) => {}
                Some(other) => {
                    return Err(malformed(
                        line_no,
                        format!("unsupported schema '{other}' (expected '{DRIVELOG_SCHEMA}')"),
                    ))
                }
                None => return Err(malformed(line_no, "missing 'schema' header line")),
            }
            saw_header = true;
            continue;
        }

        let record: DriveLogRecord = serde_json::from_str(trimmed)
            .map_err(|e| malformed(line_no, e.to_string()))?;
        if record.timestamp < last_timestamp {
            return Err(malformed(
                line_no,
                format!(
                    "timestamp {} decreases from {}",
                    record.timestamp, last_timestamp
                ),
            ));
        }
        last_timestamp = record.timestamp;
        report.records_ingested += 1;

        let mut combination = TagMap::new();
        for (dim, value) in &record.observed_tags {
            if catalog.odd.has_value(dim, value) {
                combination.insert(dim.clone(), value.clone());
            } else {
                report
                    .novel_dimension_values
                    .insert((dim.clone(), value.clone()));
            }
        }
        report
            .event_counts
            .entry(combination.clone())
            .or_default()
            .bump(record.event);
        if !combination.is_empty() && !known.iter().any(|k| matches_known(&combination, k)) {
            report.novel_combinations.insert(combination);
        }
    }
    Ok(report)
}

/// Serialize records to the drive-log line format, header included.
pub fn save_drive_log(records: &[DriveLogRecord]) -> String {
    let mut out = format!("{{\"schema\":\"{DRIVELOG_SCHEMA}\"}}\n");
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serialization cannot fail"));
        out.push('\n');
    }
    out
}

/// Draft one test description per novel combination. Drafts carry the
/// novel tags but no references; they fail validation on exactly the
/// unset-references rule until a human authors the references.
pub fn propose_tests(report: &MonitorReport, catalog: &Catalog) -> Vec<TestDescription> {
    let next_group = catalog
        .tests
        .iter()
        .filter_map(|t| t.id.group())
        .max()
        .unwrap_or(0)
        + 1;
    report
        .novel_combinations
        .iter()
        .enumerate()
        .map(|(index, combo)| {
            let conditions: Vec<String> =
                combo.iter().map(|(d, v)| format!("{d}={v}")).collect();
            let conditions = conditions.join(", ");
            TestDescription {
                id: TestId::new(format!("{next_group}.{}", index + 1)),
                criterion: format!("Safe behavior under monitored conditions: {conditions}"),
                test_case: TestCase {
                    description: format!(
                        "Reproduce the condition combination ({conditions}) observed \
                         during monitored deployment"
                    ),
                    parameters: BTreeMap::new(),
                },
                metric_id: "unspecified".to_string(),
                metric_unit: "unspecified".to_string(),
                direction: Direction::HigherIsBetter,
                references: None,
                tags: combo.clone(),
                ddt_task: "unspecified".to_string(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{
        check_coverage, validate_description, Catalog, CoverageVerdict, OddDimension, OddModel,
        TestDomain, Violation, CATALOG_SCHEMA,
    };
    use crate::rating::References;

    fn tag(pairs: &[(&str, &str)]) -> TagMap {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn test_desc(id: &str, tags: TagMap) -> TestDescription {
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
            tags,
            ddt_task: "t".into(),
        }
    }

    /// Deployed catalog: the ODD spans 4 combinations but the domain
    /// requires (and the tests cover) only 3 of them.
    fn deployed_catalog() -> Catalog {
        let covered = [
            tag(&[("lighting", "day"), ("maneuver", "cut-in")]),
            tag(&[("lighting", "day"), ("maneuver", "braking")]),
            tag(&[("lighting", "night"), ("maneuver", "cut-in")]),
        ];
        Catalog {
            schema: CATALOG_SCHEMA.into(),
            odd: OddModel {
                dimensions: vec![
                    OddDimension {
                        name: "lighting".into(),
                        values: vec!["day".into(), "night".into()],
                    },
                    OddDimension {
                        name: "maneuver".into(),
                        values: vec!["cut-in".into(), "braking".into()],
                    },
                ],
            },
            tests: covered
                .iter()
                .enumerate()
                .map(|(i, tags)| test_desc(&format!("1.{}", i + 1), tags.clone()))
                .collect(),
            domain: TestDomain {
                required_combinations: covered.into_iter().collect(),
            },
        }
    }

    fn log(records: &[(u64, TagMap, DriveEvent)]) -> String {
        let records: Vec<DriveLogRecord> = records
            .iter()
            .map(|(ts, tags, event)| DriveLogRecord {
                timestamp: *ts,
                observed_tags: tags.clone(),
                event: *event,
                annotation: String::new(),
            })
            .collect();
        save_drive_log(&records)
    }

    #[test]
    fn unseen_combination_is_novel() {
        let catalog = deployed_catalog();
        let text = log(&[(
            100,
            tag(&[("lighting", "night"), ("maneuver", "braking")]),
            DriveEvent::Disengagement,
        )]);
        let report = ingest(text.as_bytes(), &catalog).unwrap();
        assert_eq!(report.novel_combinations.len(), 1);
        assert!(report
            .novel_combinations
            .contains(&tag(&[("lighting", "night"), ("maneuver", "braking")])));
        assert!(report.novel_dimension_values.is_empty());
        assert_eq!(report.records_ingested, 1);
    }

    #[test]
    fn known_conditions_are_not_novel() {
        let catalog = deployed_catalog();
        let text = log(&[
            (
                100,
                tag(&[("lighting", "day"), ("maneuver", "cut-in")]),
                DriveEvent::Nominal,
            ),
            // Partial observation refined by a known combination.
            (110, tag(&[("lighting", "night")]), DriveEvent::Nominal),
        ]);
        let report = ingest(text.as_bytes(), &catalog).unwrap();
        assert!(report.novel_combinations.is_empty());
        assert_eq!(report.records_ingested, 2);
    }

    #[test]
    fn unknown_values_are_reported_not_errors() {
        let catalog = deployed_catalog();
        let text = log(&[(
            100,
            tag(&[("lighting", "fog"), ("maneuver", "cut-in")]),
            DriveEvent::Nominal,
        )]);
        let report = ingest(text.as_bytes(), &catalog).unwrap();
        assert!(report
            .novel_dimension_values
            .contains(&("lighting".to_string(), "fog".to_string())));
        // The projected combination (maneuver=cut-in alone) matches a
        // known combination, so nothing is novel.
        assert!(report.novel_combinations.is_empty());
    }

    #[test]
    fn empty_log_yields_empty_report() {
        let catalog = deployed_catalog();
        let text = format!("{{\"schema\":\"{DRIVELOG_SCHEMA}\"}}\n");
        let report = ingest(text.as_bytes(), &catalog).unwrap();
        assert_eq!(report, MonitorReport::default());
    }

    #[test]
    fn duplicate_lines_are_idempotent_for_novelty() {
        let catalog = deployed_catalog();
        let combo = tag(&[("lighting", "night"), ("maneuver", "braking")]);
        let text = log(&[
            (100, combo.clone(), DriveEvent::Nominal),
            (100, combo.clone(), DriveEvent::Nominal),
            (101, combo.clone(), DriveEvent::SafetyEvent),
        ]);
        let report = ingest(text.as_bytes(), &catalog).unwrap();
        assert_eq!(report.novel_combinations.len(), 1);
        let counts = report.event_counts.get(&combo).unwrap();
        assert_eq!(counts.nominal, 2);
        assert_eq!(counts.safety_event, 1);
        assert_eq!(counts.total(), 3);
    }

    #[test]
    fn malformed_record_reports_line_number() {
        let catalog = deployed_catalog();
        let text = format!("{{\"schema\":\"{DRIVELOG_SCHEMA}\"}}\nnot json\n");
        let err = ingest(text.as_bytes(), &catalog).unwrap_err();
        match err {
            MonitorError::MalformedRecord { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn decreasing_timestamps_are_malformed() {
        let catalog = deployed_catalog();
        let text = log(&[
            (200, tag(&[("lighting", "day")]), DriveEvent::Nominal),
            (100, tag(&[("lighting", "day")]), DriveEvent::Nominal),
        ]);
        let err = ingest(text.as_bytes(), &catalog).unwrap_err();
        assert!(matches!(
            err,
            MonitorError::MalformedRecord { line: 3, .. }
        ));
    }

    #[test]
    fn missing_header_is_malformed() {
        let catalog = deployed_catalog();
        let text = "{\"timestamp\":1,\"event\":\"nominal\"}\n";
        assert!(matches!(
            ingest(text.as_bytes(), &catalog),
            Err(MonitorError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn drafts_carry_tags_and_fail_only_on_unset_references() {
        let catalog = deployed_catalog();
        let text = log(&[(
            100,
            tag(&[("lighting", "night"), ("maneuver", "braking")]),
            DriveEvent::Disengagement,
        )]);
        let report = ingest(text.as_bytes(), &catalog).unwrap();
        let drafts = propose_tests(&report, &catalog);
        assert_eq!(drafts.len(), 1);
        let draft = &drafts[0];
        assert_eq!(draft.id, TestId::new("2.1"));
        assert!(draft.id.is_well_formed());
        assert_eq!(
            draft.tags,
            tag(&[("lighting", "night"), ("maneuver", "braking")])
        );
        assert!(!draft.is_executable());
        let violations = validate_description(draft, &catalog.odd);
        assert_eq!(violations, vec![Violation::UnsetReferences]);
    }

    #[test]
    fn no_novelty_proposes_nothing() {
        let catalog = deployed_catalog();
        assert!(propose_tests(&MonitorReport::default(), &catalog).is_empty());
    }

    #[test]
    fn observation_matching_a_required_combination_is_not_novel() {
        // The coverage check already reports missing required
        // combinations; monitoring only surfaces unknown conditions.
        let mut catalog = deployed_catalog();
        let missing = tag(&[("lighting", "night"), ("maneuver", "braking")]);
        catalog.domain.required_combinations.insert(missing.clone());
        let text = log(&[(100, missing.clone(), DriveEvent::Disengagement)]);
        let report = ingest(text.as_bytes(), &catalog).unwrap();
        assert!(report.novel_combinations.is_empty());
    }

    #[test]
    fn merged_drafts_cover_previously_missing_combinations() {
        // A catalog whose domain requires a combination no test covers,
        // and a road log observing a strictly richer condition set.
        let mut catalog = deployed_catalog();
        catalog.odd.dimensions.push(OddDimension {
            name: "weather".into(),
            values: vec!["dry".into(), "rain".into()],
        });
        let missing = tag(&[("lighting", "night"), ("maneuver", "braking")]);
        catalog.domain.required_combinations.insert(missing.clone());
        let before = check_coverage(&catalog);
        assert_eq!(before.verdict, CoverageVerdict::NotOk);
        assert!(before.missing.contains(&missing));

        let observed = tag(&[
            ("lighting", "night"),
            ("maneuver", "braking"),
            ("weather", "rain"),
        ]);
        let text = log(&[(100, observed.clone(), DriveEvent::Disengagement)]);
        let report = ingest(text.as_bytes(), &catalog).unwrap();
        assert!(report.novel_combinations.contains(&observed));

        let drafts = propose_tests(&report, &catalog);
        let mut merged = catalog.clone();
        merged.tests.extend(drafts);
        let after = check_coverage(&merged);
        assert_eq!(after.verdict, CoverageVerdict::Ok);
        assert!(after.covered.contains(&missing));
    }
}
