//! Validation harness: checks that the extraction and scoring stages behave
//! on annotated data, plus a BLEU baseline for side-by-side comparison.
//!
//! Three protocols live here. Entity recall compares extracted entities
//! against expert annotations marked present or absent. Label separation
//! scores report pairs that share or contradict a 14-slot chest X-ray label
//! vector and checks the two populations split at a threshold. BLEU is the
//! conventional n-gram baseline the score is usually read against.

pub mod bleu;
pub mod labels;
pub mod recall;
pub mod separation;

pub use bleu::{bleu, BleuScore, Smoothing};
pub use labels::{
    read_labels_csv, select_pairs, LabelError, LabelTable, LabelValue, LabelVector,
    PairSelection, SameGroup, CHEXPERT_LABELS,
};
pub use recall::{
    entity_recall, read_annotations_jsonl, AnnotatedEntity, AnnotationRecord, ClassCounts,
    Presence, RecallError, RecallReport, ReportCounts,
};
pub use separation::{
    evaluate_separation, PairClass, SeparationError, SeparationPoint, SeparationReport,
};
