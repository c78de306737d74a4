//! Entity recall against expert annotations.
//!
//! Annotations mark phrases as definitely present or definitely absent in a
//! report. An annotated present phrase counts as recognized when its
//! normalized token set is a subset of some extracted non-negated entity's
//! tokens; an absent phrase must be covered by a negated entity, ignoring the
//! "no" the pipeline prefixes to negated phrases. Subset matching tolerates
//! the pipeline's modifier-enriched phrases against shorter annotated spans.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::extraction::ClinicalEntity;
use crate::lexicon::normalize_term;

/// Whether the annotator marked the phrase as present in the patient or
/// explicitly ruled out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Presence {
    Present,
    Absent,
}

/// One annotated phrase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedEntity {
    pub phrase: String,
    pub presence: Presence,
}

/// All annotations for one report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub entities: Vec<AnnotatedEntity>,
}

#[derive(Debug, thiserror::Error)]
pub enum RecallError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("annotations reference unknown report ids: {}", .0.join(", "))]
    MissingIds(Vec<String>),
}

/// Read annotation records from JSON lines, one record per line. Blank lines
/// are skipped; malformed lines report their line number.
pub fn read_annotations_jsonl<R: BufRead>(reader: R) -> Result<Vec<AnnotationRecord>, RecallError> {
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord =
            serde_json::from_str(&line).map_err(|e| RecallError::MalformedRecord {
                line: index + 1,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Annotated and recognized totals for one presence class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub annotated: usize,
    pub recognized: usize,
}

/// Per-report breakdown of the two classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub id: String,
    pub present: ClassCounts,
    pub absent: ClassCounts,
}

/// Recall per presence class. A class with no annotated entities has no
/// defined recall and reports `None` rather than 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub present_recall: Option<f64>,
    pub absent_recall: Option<f64>,
    pub present: ClassCounts,
    pub absent: ClassCounts,
    pub per_report: Vec<ReportCounts>,
}

fn token_set(phrase: &str) -> HashSet<String> {
    normalize_term(phrase)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Token set of an extracted entity's phrase, dropping the "no" prefix that
/// finalization adds to negated phrases.
fn entity_token_set(entity: &ClinicalEntity) -> HashSet<String> {
    let mut tokens = token_set(&entity.phrase);
    if entity.negated {
        tokens.remove("no");
    }
    tokens
}

fn ratio(counts: ClassCounts) -> Option<f64> {
    (counts.annotated > 0).then(|| counts.recognized as f64 / counts.annotated as f64)
}

/// Compare extracted entities against annotations, keyed by report id. Every
/// annotated id must appear in `extracted`; extracted reports without
/// annotations are ignored.
pub fn entity_recall(
    extracted: &BTreeMap<String, Vec<ClinicalEntity>>,
    annotations: &[AnnotationRecord],
) -> Result<RecallReport, RecallError> {
    let missing: Vec<String> = annotations
        .iter()
        .filter(|record| !extracted.contains_key(&record.id))
        .map(|record| record.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(RecallError::MissingIds(missing));
    }

    let mut present = ClassCounts::default();
    let mut absent = ClassCounts::default();
    let mut per_report = Vec::with_capacity(annotations.len());

    for record in annotations {
        let entities = &extracted[&record.id];
        let affirmed: Vec<HashSet<String>> = entities
            .iter()
            .filter(|e| !e.negated)
            .map(entity_token_set)
            .collect();
        let negated: Vec<HashSet<String>> = entities
            .iter()
            .filter(|e| e.negated)
            .map(entity_token_set)
            .collect();

        let mut report = ReportCounts {
            id: record.id.clone(),
            present: ClassCounts::default(),
            absent: ClassCounts::default(),
        };
        for annotated in &record.entities {
            let wanted = token_set(&annotated.phrase);
            let (pool, counts) = match annotated.presence {
                Presence::Present => (&affirmed, &mut report.present),
                Presence::Absent => (&negated, &mut report.absent),
            };
            counts.annotated += 1;
            if pool.iter().any(|have| wanted.is_subset(have)) {
                counts.recognized += 1;
            }
        }

        present.annotated += report.present.annotated;
        present.recognized += report.present.recognized;
        absent.annotated += report.absent.annotated;
        absent.recognized += report.absent.recognized;
        per_report.push(report);
    }

    Ok(RecallReport {
        present_recall: ratio(present),
        absent_recall: ratio(absent),
        present,
        absent,
        per_report,
    })
}
