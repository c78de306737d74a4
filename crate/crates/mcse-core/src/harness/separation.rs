//! Label-sequence separation: same-label report pairs should score high,
//! opposite-label pairs low, with a threshold (0.70 by default) splitting the
//! two populations.
//!
//! Each same-label group or opposite pairing becomes one plot-ready point:
//! the mean score over all ordered pairs it contains. Scoring direction
//! matters to the metric, so a two-report pairing averages both directions.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingStore;
use crate::extraction::{extract, ClinicalEntity};
use crate::harness::labels::PairSelection;
use crate::lexicon::{EntityMatcher, MedicalLexicon};
use crate::scorer::mcse;
use crate::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum SeparationError {
    #[error("threshold {0} must lie strictly between 0 and 1")]
    InvalidThreshold(String),
    #[error("selection references unknown report id {id:?}")]
    UnknownReport { id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which population a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairClass {
    Same,
    Opposite,
}

impl fmt::Display for PairClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairClass::Same => "same",
            PairClass::Opposite => "opposite",
        })
    }
}

/// One evaluated group or pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationPoint<S> {
    pub point_id: String,
    pub class: PairClass,
    pub mean_mcse: S,
    pub n_pairs: usize,
}

/// All evaluated points plus classification counts against the threshold.
/// `above` means strictly greater than the threshold; `above + below` equals
/// the point total for each class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport<S> {
    pub threshold: S,
    pub points: Vec<SeparationPoint<S>>,
    pub same_total: usize,
    pub same_above: usize,
    pub same_below: usize,
    pub opposite_total: usize,
    pub opposite_above: usize,
    pub opposite_below: usize,
}

impl<S: Scalar> SeparationReport<S> {
    fn class_mean(&self, class: PairClass) -> Option<S> {
        let mut sum = S::zero();
        let mut count = 0usize;
        for point in self.points.iter().filter(|p| p.class == class) {
            sum = sum + point.mean_mcse;
            count += 1;
        }
        (count > 0).then(|| sum / S::from_usize(count).expect("point count fits the scalar"))
    }

    /// Mean of the same-class point means, when any exist.
    #[must_use]
    pub fn same_mean(&self) -> Option<S> {
        self.class_mean(PairClass::Same)
    }

    /// Mean of the opposite-class point means, when any exist.
    #[must_use]
    pub fn opposite_mean(&self) -> Option<S> {
        self.class_mean(PairClass::Opposite)
    }

    /// Write the plot-ready point series as CSV.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "point_id,class,mean_mcse,n_pairs")?;
        for point in &self.points {
            writeln!(
                writer,
                "{},{},{},{}",
                point.point_id, point.class, point.mean_mcse, point.n_pairs
            )?;
        }
        Ok(())
    }
}

fn entities_for<'c>(
    cache: &'c mut BTreeMap<String, Vec<ClinicalEntity>>,
    id: &str,
    reports: &BTreeMap<String, String>,
    lexicon: &MedicalLexicon,
    matcher: &EntityMatcher,
) -> Result<&'c [ClinicalEntity], SeparationError> {
    if !cache.contains_key(id) {
        let text = reports
            .get(id)
            .ok_or_else(|| SeparationError::UnknownReport { id: id.to_string() })?;
        cache.insert(id.to_string(), extract(text, lexicon, matcher));
    }
    Ok(&cache[id])
}

/// Score every selected group and pairing against the report texts. Each
/// report is extracted once; a point's mean runs over all ordered pairs of
/// its members.
pub fn evaluate_separation<S: Scalar>(
    reports: &BTreeMap<String, String>,
    selection: &PairSelection,
    lexicon: &MedicalLexicon,
    matcher: &EntityMatcher,
    store: &EmbeddingStore<S>,
    threshold: S,
) -> Result<SeparationReport<S>, SeparationError> {
    if threshold <= S::zero() || threshold >= S::one() {
        return Err(SeparationError::InvalidThreshold(format!("{threshold}")));
    }

    let mut cache: BTreeMap<String, Vec<ClinicalEntity>> = BTreeMap::new();
    let mut warm = |ids: &[&str]| -> Result<(), SeparationError> {
        for id in ids {
            entities_for(&mut cache, id, reports, lexicon, matcher)?;
        }
        Ok(())
    };
    for group in &selection.same_groups {
        let ids: Vec<&str> = group.ids.iter().map(String::as_str).collect();
        warm(&ids)?;
    }
    for (a, b) in &selection.opposite_pairs {
        warm(&[a, b])?;
    }

    let mean_over = |ids: &[&String]| -> (S, usize) {
        let mut sum = S::zero();
        let mut count = 0usize;
        for reference in ids {
            for candidate in ids {
                if reference == candidate {
                    continue;
                }
                sum = sum + mcse(&cache[*reference], &cache[*candidate], store).mcse;
                count += 1;
            }
        }
        let mean = sum / S::from_usize(count.max(1)).expect("pair count fits the scalar");
        (mean, count)
    };

    let mut points = Vec::new();
    for group in &selection.same_groups {
        let ids: Vec<&String> = group.ids.iter().collect();
        let (mean, count) = mean_over(&ids);
        points.push(SeparationPoint {
            point_id: format!("same:{}", group.ids.join("+")),
            class: PairClass::Same,
            mean_mcse: mean,
            n_pairs: count,
        });
    }
    for (a, b) in &selection.opposite_pairs {
        let (mean, count) = mean_over(&[a, b]);
        points.push(SeparationPoint {
            point_id: format!("opposite:{a}+{b}"),
            class: PairClass::Opposite,
            mean_mcse: mean,
            n_pairs: count,
        });
    }

    let mut report = SeparationReport {
        threshold,
        points,
        same_total: 0,
        same_above: 0,
        same_below: 0,
        opposite_total: 0,
        opposite_above: 0,
        opposite_below: 0,
    };
    for point in &report.points {
        let above = point.mean_mcse > threshold;
        match point.class {
            PairClass::Same => {
                report.same_total += 1;
                if above {
                    report.same_above += 1;
                } else {
                    report.same_below += 1;
                }
            }
            PairClass::Opposite => {
                report.opposite_total += 1;
                if above {
                    report.opposite_above += 1;
                } else {
                    report.opposite_below += 1;
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::labels::SameGroup;
    use crate::lexicon::{compile_matcher, load_lexicon};

    const LEXICON: &str = "\
edema\tdisease
pneumothorax\tdisease
granuloma\tdisease
no\tnegation_trigger
";

    const VECTORS: &str = "\
edema 1 0
pneumothorax 0.6 0.4
granuloma 0 1
";

    fn fixture() -> (MedicalLexicon, EntityMatcher, EmbeddingStore<f64>) {
        let lexicon = load_lexicon(LEXICON.as_bytes()).unwrap();
        let matcher = compile_matcher(&lexicon).unwrap();
        let store = crate::embeddings::load_embeddings(VECTORS.as_bytes()).unwrap();
        (lexicon, matcher, store)
    }

    fn reports(entries: &[(&str, &str)]) -> BTreeMap<String, String> {
        entries
            .iter()
            .map(|(id, text)| (id.to_string(), text.to_string()))
            .collect()
    }

    fn selection(groups: &[&[&str]], pairs: &[(&str, &str)]) -> PairSelection {
        PairSelection {
            same_groups: groups
                .iter()
                .enumerate()
                .map(|(i, ids)| SameGroup {
                    key: format!("g{i}"),
                    ids: ids.iter().map(|s| s.to_string()).collect(),
                })
                .collect(),
            opposite_pairs: pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        }
    }

    #[test]
    fn duplicate_texts_score_one_and_disjoint_entities_stay_low() {
        let (lexicon, matcher, store) = fixture();
        let reports = reports(&[
            ("a1", "There is edema."),
            ("a2", "There is edema."),
            ("b1", "Large granuloma."),
        ]);
        let selection = selection(&[&["a1", "a2"]], &[("a1", "b1")]);
        let report =
            evaluate_separation(&reports, &selection, &lexicon, &matcher, &store, 0.7).unwrap();

        assert_eq!(report.points.len(), 2);
        let same = &report.points[0];
        assert_eq!(same.class, PairClass::Same);
        assert_eq!(same.mean_mcse, 1.0);
        assert_eq!(same.n_pairs, 2);

        // One residual entity on each side: the single-row column scores
        // exactly one half, or zero when the similarity is zero.
        let opposite = &report.points[1];
        assert_eq!(opposite.class, PairClass::Opposite);
        assert!(opposite.mean_mcse <= 0.5);

        assert_eq!((report.same_above, report.same_below), (1, 0));
        assert_eq!((report.opposite_above, report.opposite_below), (0, 1));
        assert_eq!(report.same_total, 1);
        assert_eq!(report.opposite_total, 1);
        assert!(report.same_mean().unwrap() > report.opposite_mean().unwrap());
    }

    #[test]
    fn group_means_average_all_ordered_pairs() {
        let (lexicon, matcher, store) = fixture();
        let reports = reports(&[
            ("a", "Edema and pneumothorax."),
            ("b", "Edema."),
            ("c", "Edema and pneumothorax."),
        ]);
        let selection = selection(&[&["a", "b", "c"]], &[]);
        let report =
            evaluate_separation(&reports, &selection, &lexicon, &matcher, &store, 0.7).unwrap();
        let point = &report.points[0];
        assert_eq!(point.n_pairs, 6);

        // Directions differ: scoring the one-entity report against a
        // two-entity reference is not the reverse comparison.
        let ab = mcse(
            &extract("Edema and pneumothorax.", &lexicon, &matcher),
            &extract("Edema.", &lexicon, &matcher),
            &store,
        )
        .mcse;
        let ba = mcse(
            &extract("Edema.", &lexicon, &matcher),
            &extract("Edema and pneumothorax.", &lexicon, &matcher),
            &store,
        )
        .mcse;
        let expected = (2.0 * ab + 2.0 * ba + 2.0) / 6.0;
        assert!((point.mean_mcse - expected).abs() < 1e-12);
    }

    #[test]
    fn unknown_id_and_bad_threshold_are_errors() {
        let (lexicon, matcher, store) = fixture();
        let reports = reports(&[("a", "Edema.")]);
        let missing = selection(&[], &[("a", "ghost")]);
        assert!(matches!(
            evaluate_separation(&reports, &missing, &lexicon, &matcher, &store, 0.7),
            Err(SeparationError::UnknownReport { id }) if id == "ghost"
        ));

        let empty = selection(&[], &[]);
        for bad in [0.0, 1.0, -0.2, 1.5] {
            assert!(matches!(
                evaluate_separation(&reports, &empty, &lexicon, &matcher, &store, bad),
                Err(SeparationError::InvalidThreshold(_))
            ));
        }
    }

    #[test]
    fn csv_lists_points_in_report_order() {
        let (lexicon, matcher, store) = fixture();
        let reports = reports(&[
            ("a1", "Edema."),
            ("a2", "Edema."),
            ("b1", "Granuloma."),
        ]);
        let selection = selection(&[&["a1", "a2"]], &[("a1", "b1")]);
        let report =
            evaluate_separation(&reports, &selection, &lexicon, &matcher, &store, 0.7).unwrap();
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "point_id,class,mean_mcse,n_pairs");
        assert_eq!(lines[1], "same:a1+a2,same,1,2");
        assert!(lines[2].starts_with("opposite:a1+b1,opposite,"));
    }
}
