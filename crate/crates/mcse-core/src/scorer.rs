//! The MCSE score: exact-match partition, residual similarity matrix, and
//! per-candidate column scores folded into one number.
//!
//! Given reference entities `T` (size N) and candidate entities `T-hat`
//! (size M), exact phrase matches are paired off one-to-one first. The
//! leftover lists span a similarity matrix (rows: reference residue, columns:
//! candidate residue). Each column j contributes
//!
//! ```text
//! S_j = max_j / (max_j + mean_j)
//! ```
//!
//! where the mean runs over the whole column, maximum included, so an
//! all-positive column lands in `[0.5, 1)` and an all-zero column scores 0.
//! The final score is `(matched + sum S_j) / M`, which stays in `[0, 1]`.
//!
//! Degenerate inputs are pinned: two empty lists score 1.0, an empty
//! candidate against a non-empty reference scores 0.0, and an empty reference
//! zeroes every column.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::embeddings::{phrase_vector, similarity, EmbeddingStore};
use crate::extraction::ClinicalEntity;
use crate::Scalar;

/// Errors from scoring and matrix replay.
#[derive(Debug, thiserror::Error)]
pub enum ScorerError {
    #[error("column {index} out of range for a {columns}-column matrix")]
    ColumnOutOfRange { index: usize, columns: usize },
    #[error("candidate total {m} does not equal matched {matched} plus {columns} residual columns")]
    CountMismatch {
        m: usize,
        matched: usize,
        columns: usize,
    },
    #[error("candidate total must be positive")]
    EmptyCandidateTotal,
    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid matrix json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Result of the exact-match pass: how many pairs matched and what is left on
/// each side, in original order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchPartition {
    pub matched: usize,
    pub residual_reference: Vec<ClinicalEntity>,
    pub residual_candidate: Vec<ClinicalEntity>,
}

/// Greedy one-to-one matching on exact phrase equality. Each candidate
/// consumes the first still-unmatched reference with the same phrase, so
/// duplicate phrases pair off multiset-style.
#[must_use]
pub fn partition_exact(
    reference: &[ClinicalEntity],
    candidate: &[ClinicalEntity],
) -> MatchPartition {
    let mut consumed = vec![false; reference.len()];
    let mut matched = 0usize;
    let mut residual_candidate = Vec::new();

    for entity in candidate {
        let slot = reference
            .iter()
            .enumerate()
            .find(|(i, r)| !consumed[*i] && r.phrase == entity.phrase);
        match slot {
            Some((i, _)) => {
                consumed[i] = true;
                matched += 1;
            }
            None => residual_candidate.push(entity.clone()),
        }
    }

    let residual_reference = reference
        .iter()
        .zip(&consumed)
        .filter(|(_, used)| !**used)
        .map(|(r, _)| r.clone())
        .collect();

    MatchPartition {
        matched,
        residual_reference,
        residual_candidate,
    }
}

/// Similarity matrix over residual phrases: `values[i][j]` compares
/// `reference[i]` against `candidate[j]`. All values lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix<S> {
    pub reference: Vec<String>,
    pub candidate: Vec<String>,
    pub values: Vec<Vec<S>>,
}

impl<S: Scalar> SimilarityMatrix<S> {
    #[must_use]
    pub fn rows(&self) -> usize {
        self.reference.len()
    }

    #[must_use]
    pub fn cols(&self) -> usize {
        self.candidate.len()
    }

    /// Parse a matrix from JSON and validate its shape: `values` must be
    /// `reference x candidate` with every entry finite in `[0, 1]`.
    pub fn from_json_reader<R: Read>(reader: R) -> Result<Self, ScorerError>
    where
        S: serde::de::DeserializeOwned,
    {
        let matrix: SimilarityMatrix<S> = serde_json::from_reader(reader)?;
        if matrix.values.len() != matrix.reference.len() {
            return Err(ScorerError::MalformedMatrix(format!(
                "expected {} rows, got {}",
                matrix.reference.len(),
                matrix.values.len()
            )));
        }
        for (i, row) in matrix.values.iter().enumerate() {
            if row.len() != matrix.candidate.len() {
                return Err(ScorerError::MalformedMatrix(format!(
                    "row {i} has {} entries, expected {}",
                    row.len(),
                    matrix.candidate.len()
                )));
            }
            for value in row {
                if !value.is_finite() || *value < S::zero() || *value > S::one() {
                    return Err(ScorerError::MalformedMatrix(format!(
                        "row {i} contains {value}, outside [0, 1]"
                    )));
                }
            }
        }
        Ok(matrix)
    }
}

/// Build the residual similarity matrix for a partition.
#[must_use]
pub fn build_matrix<S: Scalar>(
    partition: &MatchPartition,
    store: &EmbeddingStore<S>,
) -> SimilarityMatrix<S> {
    let reference: Vec<String> = partition
        .residual_reference
        .iter()
        .map(|e| e.phrase.clone())
        .collect();
    let candidate: Vec<String> = partition
        .residual_candidate
        .iter()
        .map(|e| e.phrase.clone())
        .collect();
    let values = reference
        .iter()
        .map(|r| candidate.iter().map(|c| similarity(r, c, store)).collect())
        .collect();
    SimilarityMatrix {
        reference,
        candidate,
        values,
    }
}

/// Score of one candidate column: `max / (max + mean)` with the mean taken
/// over the whole column, maximum included. An empty or all-zero column
/// scores 0; an all-equal positive column scores exactly one half.
pub fn column_score<S: Scalar>(matrix: &SimilarityMatrix<S>, j: usize) -> Result<S, ScorerError> {
    if j >= matrix.cols() {
        return Err(ScorerError::ColumnOutOfRange {
            index: j,
            columns: matrix.cols(),
        });
    }
    if matrix.rows() == 0 {
        return Ok(S::zero());
    }
    let mut max = S::zero();
    let mut sum = S::zero();
    for row in &matrix.values {
        max = max.max(row[j]);
        sum = sum + row[j];
    }
    if max.is_zero() {
        return Ok(S::zero());
    }
    if matrix.values.iter().all(|row| row[j] == max) {
        // An all-equal column has mean == max by definition; going through
        // the rounded sum can land one step off the exact half.
        return Ok(S::from_f64(0.5).expect("one half fits the scalar"));
    }
    // The true mean never exceeds the max it includes, but the rounded sum
    // can; clamping keeps the score from dipping below one half.
    let mean = (sum / S::from_usize(matrix.rows()).expect("row count fits the scalar")).min(max);
    Ok(max / (max + mean))
}

/// Index of the best reference row for a column; `None` when the column is
/// empty or all zero. Ties go to the earliest row.
fn best_row<S: Scalar>(matrix: &SimilarityMatrix<S>, j: usize) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, row) in matrix.values.iter().enumerate() {
        let value = row[j];
        if value > S::zero() && best.is_none_or(|(_, v)| value > v) {
            best = Some((i, value));
        }
    }
    best.map(|(i, _)| i)
}

/// Side observations made while scoring. `reference_oov`/`candidate_oov`
/// count residual entities whose phrase has no in-vocabulary token;
/// `zero_columns` counts candidate columns with no positive similarity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub reference_oov: usize,
    pub candidate_oov: usize,
    pub reference_empty: bool,
    pub candidate_empty: bool,
    pub both_empty: bool,
    pub zero_columns: usize,
}

/// One residual candidate's contribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEntry<S> {
    pub candidate: String,
    pub s: S,
    pub best_reference: Option<String>,
}

/// Full scoring output: the score, the exact-match count, both list sizes,
/// per-residual-candidate column entries, and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport<S> {
    pub mcse: S,
    pub matched: usize,
    pub m: usize,
    pub n: usize,
    pub columns: Vec<ColumnEntry<S>>,
    pub diagnostics: Diagnostics,
}

/// Score a candidate entity list against a reference entity list.
#[must_use]
pub fn mcse<S: Scalar>(
    reference: &[ClinicalEntity],
    candidate: &[ClinicalEntity],
    store: &EmbeddingStore<S>,
) -> ScoreReport<S> {
    let n = reference.len();
    let m = candidate.len();

    if m == 0 {
        let both = n == 0;
        return ScoreReport {
            mcse: if both { S::one() } else { S::zero() },
            matched: 0,
            m,
            n,
            columns: Vec::new(),
            diagnostics: Diagnostics {
                reference_empty: n == 0,
                candidate_empty: true,
                both_empty: both,
                ..Diagnostics::default()
            },
        };
    }

    let partition = partition_exact(reference, candidate);
    let matrix = build_matrix(&partition, store);

    let mut diagnostics = Diagnostics {
        reference_empty: n == 0,
        ..Diagnostics::default()
    };
    for entity in &partition.residual_reference {
        if phrase_vector(&entity.phrase, store).is_zero() {
            diagnostics.reference_oov += 1;
        }
    }
    for entity in &partition.residual_candidate {
        if phrase_vector(&entity.phrase, store).is_zero() {
            diagnostics.candidate_oov += 1;
        }
    }

    let mut total = S::from_usize(partition.matched).expect("match count fits the scalar");
    let mut columns = Vec::with_capacity(matrix.cols());
    for j in 0..matrix.cols() {
        let s = column_score(&matrix, j).expect("column index in range");
        if s.is_zero() {
            diagnostics.zero_columns += 1;
        }
        total = total + s;
        columns.push(ColumnEntry {
            candidate: matrix.candidate[j].clone(),
            s,
            best_reference: best_row(&matrix, j).map(|i| matrix.reference[i].clone()),
        });
    }

    ScoreReport {
        mcse: total / S::from_usize(m).expect("candidate count fits the scalar"),
        matched: partition.matched,
        m,
        n,
        columns,
        diagnostics,
    }
}

/// Replay score for a precomputed matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixScore<S> {
    pub column_scores: Vec<S>,
    pub mcse: S,
    pub matched: usize,
    pub m: usize,
}

/// Fold a precomputed similarity matrix plus an exact-match count into the
/// final score. `m` must equal `matched` plus the matrix's column count.
pub fn mcse_from_matrix<S: Scalar>(
    matrix: &SimilarityMatrix<S>,
    matched: usize,
    m: usize,
) -> Result<MatrixScore<S>, ScorerError> {
    if m == 0 {
        return Err(ScorerError::EmptyCandidateTotal);
    }
    if m != matched + matrix.cols() {
        return Err(ScorerError::CountMismatch {
            m,
            matched,
            columns: matrix.cols(),
        });
    }

    let mut column_scores = Vec::with_capacity(matrix.cols());
    let mut total = S::from_usize(matched).expect("match count fits the scalar");
    for j in 0..matrix.cols() {
        let s = column_score(matrix, j)?;
        total = total + s;
        column_scores.push(s);
    }

    Ok(MatrixScore {
        column_scores,
        mcse: total / S::from_usize(m).expect("candidate count fits the scalar"),
        matched,
        m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::load_embeddings;
    use crate::lexicon::Category;

    fn entity(phrase: &str) -> ClinicalEntity {
        let negated = phrase.starts_with("no ");
        ClinicalEntity {
            phrase: phrase.to_string(),
            head: phrase
                .split(' ')
                .next_back()
                .expect("non-empty phrase")
                .to_string(),
            category: Category::Disease,
            negated,
        }
    }

    fn entities(phrases: &[&str]) -> Vec<ClinicalEntity> {
        phrases.iter().map(|p| entity(p)).collect()
    }

    fn store(text: &str) -> EmbeddingStore<f64> {
        load_embeddings(text.as_bytes()).expect("test store loads")
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn duplicate_phrases_match_multiset_style() {
        let partition = partition_exact(&entities(&["edema", "edema"]), &entities(&["edema"]));
        assert_eq!(partition.matched, 1);
        assert_eq!(partition.residual_reference.len(), 1);
        assert!(partition.residual_candidate.is_empty());

        let flipped = partition_exact(&entities(&["edema"]), &entities(&["edema", "edema"]));
        assert_eq!(flipped.matched, 1);
        assert!(flipped.residual_reference.is_empty());
        assert_eq!(flipped.residual_candidate.len(), 1);
    }

    #[test]
    fn residuals_keep_original_order() {
        let partition = partition_exact(
            &entities(&["a", "b", "c"]),
            &entities(&["c", "x", "y"]),
        );
        assert_eq!(partition.matched, 1);
        let refs: Vec<&str> = partition
            .residual_reference
            .iter()
            .map(|e| e.phrase.as_str())
            .collect();
        let cands: Vec<&str> = partition
            .residual_candidate
            .iter()
            .map(|e| e.phrase.as_str())
            .collect();
        assert_eq!(refs, vec!["a", "b"]);
        assert_eq!(cands, vec!["x", "y"]);
    }

    fn matrix(reference: &[&str], candidate: &[&str], values: &[&[f64]]) -> SimilarityMatrix<f64> {
        SimilarityMatrix {
            reference: reference.iter().map(|s| s.to_string()).collect(),
            candidate: candidate.iter().map(|s| s.to_string()).collect(),
            values: values.iter().map(|row| row.to_vec()).collect(),
        }
    }

    #[test]
    fn column_mean_includes_the_maximum() {
        let m = matrix(&["r1", "r2"], &["c"], &[&[0.6], &[0.2]]);
        assert!(close(column_score(&m, 0).unwrap(), 0.6 / (0.6 + 0.4)));
    }

    #[test]
    fn single_entry_column_scores_half() {
        let m = matrix(&["r"], &["c"], &[&[0.8]]);
        assert_eq!(column_score(&m, 0).unwrap(), 0.5);
    }

    #[test]
    fn all_zero_column_scores_zero() {
        let m = matrix(&["r1", "r2"], &["c"], &[&[0.0], &[0.0]]);
        assert_eq!(column_score(&m, 0).unwrap(), 0.0);
    }

    #[test]
    fn column_index_out_of_range_is_an_error() {
        let m = matrix(&["r"], &["c"], &[&[0.5]]);
        assert!(matches!(
            column_score(&m, 1),
            Err(ScorerError::ColumnOutOfRange { index: 1, columns: 1 })
        ));
    }

    #[test]
    fn matrix_replay_matches_hand_arithmetic() {
        let m = matrix(&["r1", "r2"], &["c"], &[&[0.6], &[0.2]]);
        let score = mcse_from_matrix(&m, 1, 2).unwrap();
        assert!(close(score.mcse, 0.8));
        assert_eq!(score.column_scores.len(), 1);
    }

    #[test]
    fn matrix_replay_validates_counts() {
        let m = matrix(&["r"], &["c"], &[&[0.5]]);
        assert!(matches!(
            mcse_from_matrix(&m, 1, 3),
            Err(ScorerError::CountMismatch { m: 3, matched: 1, columns: 1 })
        ));
        assert!(matches!(
            mcse_from_matrix(&m, 0, 0),
            Err(ScorerError::EmptyCandidateTotal)
        ));
    }

    #[test]
    fn matrix_json_round_trips_and_validates() {
        let m = matrix(&["r1", "r2"], &["c1", "c2"], &[&[0.1, 0.2], &[0.3, 0.4]]);
        let json = serde_json::to_string(&m).unwrap();
        let parsed = SimilarityMatrix::<f64>::from_json_reader(json.as_bytes()).unwrap();
        assert_eq!(parsed, m);

        let bad = r#"{"reference":["r"],"candidate":["c"],"values":[[1.5]]}"#;
        assert!(matches!(
            SimilarityMatrix::<f64>::from_json_reader(bad.as_bytes()),
            Err(ScorerError::MalformedMatrix(_))
        ));
        let ragged = r#"{"reference":["r"],"candidate":["c"],"values":[[0.5,0.5]]}"#;
        assert!(SimilarityMatrix::<f64>::from_json_reader(ragged.as_bytes()).is_err());
    }

    #[test]
    fn identical_lists_score_exactly_one() {
        let store = store("edema 1 0\neffusion 0 1\n");
        let list = entities(&["edema", "effusion"]);
        let report = mcse(&list, &list, &store);
        assert_eq!(report.mcse, 1.0);
        assert_eq!(report.matched, 2);
        assert!(report.columns.is_empty());
    }

    #[test]
    fn empty_sides_follow_the_pinned_rules() {
        let store = store("edema 1 0\n");
        let some = entities(&["edema"]);
        let none: Vec<ClinicalEntity> = Vec::new();

        let both = mcse(&none, &none, &store);
        assert_eq!(both.mcse, 1.0);
        assert!(both.diagnostics.both_empty);

        let candidate_empty = mcse(&some, &none, &store);
        assert_eq!(candidate_empty.mcse, 0.0);
        assert!(candidate_empty.diagnostics.candidate_empty);
        assert!(!candidate_empty.diagnostics.both_empty);

        let reference_empty = mcse(&none, &some, &store);
        assert_eq!(reference_empty.mcse, 0.0);
        assert!(reference_empty.diagnostics.reference_empty);
        assert_eq!(reference_empty.columns.len(), 1);
        assert_eq!(reference_empty.columns[0].s, 0.0);
        assert_eq!(reference_empty.columns[0].best_reference, None);
    }

    #[test]
    fn oov_candidates_zero_their_columns() {
        let store = store("edema 1 0\neffusion 0 1\n");
        let report = mcse(
            &entities(&["edema"]),
            &entities(&["mystery finding"]),
            &store,
        );
        assert_eq!(report.diagnostics.candidate_oov, 1);
        assert_eq!(report.diagnostics.zero_columns, 1);
        assert_eq!(report.mcse, 0.0);
    }

    #[test]
    fn report_reproduces_the_formula() {
        let store = store("edema 0.9 0.1 0.2\neffusion 0.1 0.8 0.3\nopacity 0.4 0.4 0.6\nmild 0.5 0.2 0.1\n");
        let reference = entities(&["mild edema", "effusion", "opacity"]);
        let candidate = entities(&["effusion", "edema", "haziness"]);
        let report = mcse(&reference, &candidate, &store);

        assert_eq!(report.matched, 1);
        assert_eq!((report.m, report.n), (3, 3));
        let total: f64 = report.columns.iter().map(|c| c.s).sum();
        assert!(close(report.mcse, (1.0 + total) / 3.0));
        for column in &report.columns {
            assert!(column.s >= 0.0 && column.s < 1.0);
        }
        assert_eq!(report.diagnostics.candidate_oov, 1);
    }

    #[test]
    fn report_serializes_with_the_documented_keys() {
        let store = store("edema 1 0\n");
        let report = mcse(&entities(&["edema"]), &entities(&["edema"]), &store);
        let json = serde_json::to_value(&report).unwrap();
        for key in ["mcse", "matched", "m", "n", "columns", "diagnostics"] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
    }

    #[test]
    fn works_in_single_precision() {
        let m = SimilarityMatrix::<f32> {
            reference: vec!["r1".into(), "r2".into()],
            candidate: vec!["c".into()],
            values: vec![vec![0.6], vec![0.2]],
        };
        let score = mcse_from_matrix(&m, 1, 2).unwrap();
        assert!((score.mcse - 0.8).abs() < 1e-6);
    }
}
