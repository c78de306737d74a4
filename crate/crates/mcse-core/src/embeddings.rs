//! Word-embedding table: text-format loading, mean phrase vectors, and the
//! clamped cosine similarity the scorer runs on.
//!
//! The file format is one vector per line (`token v1 .. vd`), with an
//! optional `count dim` header line. A phrase vector is the arithmetic mean
//! of its tokens' vectors; out-of-vocabulary tokens are skipped, and a phrase
//! with no known token at all becomes the zero vector, which every similarity
//! treats as 0.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use crate::lexicon::normalize_term;
use crate::Scalar;

/// Errors from embedding-table loading.
#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("embedding file contains no vectors")]
    Empty,
    #[error("line {line}: expected {expected} components, got {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: component {value:?} is not a finite number")]
    BadComponent { line: usize, value: String },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
}

/// Immutable token-to-vector table with a fixed dimensionality.
#[derive(Debug, Clone)]
pub struct EmbeddingStore<S> {
    dim: usize,
    table: HashMap<String, Vec<S>>,
    warnings: Vec<String>,
}

impl<S: Scalar> EmbeddingStore<S> {
    /// Load from a text-format file on disk.
    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self, EmbeddingError> {
        load_embeddings(BufReader::new(File::open(path)?))
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.table.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Warnings accumulated while loading (duplicate tokens and the like).
    #[must_use]
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Look up one token, case-insensitively via lexicon normalization.
    #[must_use]
    pub fn get(&self, token: &str) -> Option<&[S]> {
        if let Some(v) = self.table.get(token) {
            return Some(v.as_slice());
        }
        self.table.get(&normalize_term(token)).map(Vec::as_slice)
    }
}

/// Parse a text-format embedding table.
///
/// A first line of exactly two integers is read as a `count dim` header.
/// Duplicate tokens keep the last vector and add a warning; dimension
/// mismatches and non-finite components are errors naming the line.
pub fn load_embeddings<S: Scalar, R: BufRead>(
    reader: R,
) -> Result<EmbeddingStore<S>, EmbeddingError> {
    let mut table: HashMap<String, Vec<S>> = HashMap::new();
    let mut warnings = Vec::new();
    let mut dim: Option<usize> = None;
    let mut declared_count: Option<usize> = None;

    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();

        if line_no == 1 && fields.len() == 2 {
            if let (Ok(count), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                declared_count = Some(count);
                dim = Some(d);
                continue;
            }
        }

        if fields.len() < 2 {
            return Err(EmbeddingError::MalformedLine {
                line: line_no,
                reason: "expected a token followed by vector components".into(),
            });
        }

        let token = normalize_term(fields[0]);
        if token.is_empty() {
            return Err(EmbeddingError::MalformedLine {
                line: line_no,
                reason: format!("token {:?} normalizes to nothing", fields[0]),
            });
        }

        let expected = *dim.get_or_insert(fields.len() - 1);
        if fields.len() - 1 != expected {
            return Err(EmbeddingError::DimensionMismatch {
                line: line_no,
                expected,
                found: fields.len() - 1,
            });
        }

        let mut vector = Vec::with_capacity(expected);
        for raw in &fields[1..] {
            let value: f64 = raw.parse().map_err(|_| EmbeddingError::BadComponent {
                line: line_no,
                value: (*raw).to_string(),
            })?;
            let converted = S::from_f64(value).filter(|v| v.is_finite());
            match converted {
                Some(v) if value.is_finite() => vector.push(v),
                _ => {
                    return Err(EmbeddingError::BadComponent {
                        line: line_no,
                        value: (*raw).to_string(),
                    })
                }
            }
        }

        if table.insert(token.clone(), vector).is_some() {
            warnings.push(format!(
                "line {line_no}: duplicate token {token:?} replaces the earlier vector"
            ));
        }
    }

    if table.is_empty() {
        return Err(EmbeddingError::Empty);
    }
    if let Some(declared) = declared_count {
        if declared != table.len() {
            warnings.push(format!(
                "header declared {declared} vectors, file contains {}",
                table.len()
            ));
        }
    }

    Ok(EmbeddingStore {
        dim: dim.unwrap_or(0),
        table,
        warnings,
    })
}

/// Mean vector of a phrase's in-vocabulary tokens plus how many tokens
/// contributed. Zero contributions leave the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseVector<S> {
    pub vector: Vec<S>,
    pub in_vocab: usize,
}

impl<S: Scalar> PhraseVector<S> {
    /// True when no token contributed (the vector is identically zero).
    #[must_use]
    pub fn is_zero(&self) -> bool {
        self.in_vocab == 0
    }
}

/// Build the mean vector for a phrase. The phrase is normalized first, so
/// `Pleural Effusion` and `pleural effusion` vectorize identically.
#[must_use]
pub fn phrase_vector<S: Scalar>(phrase: &str, store: &EmbeddingStore<S>) -> PhraseVector<S> {
    let mut vector = vec![S::zero(); store.dim()];
    let mut in_vocab = 0usize;
    for token in normalize_term(phrase).split_whitespace() {
        if let Some(embedding) = store.get(token) {
            for (slot, value) in vector.iter_mut().zip(embedding) {
                *slot = *slot + *value;
            }
            in_vocab += 1;
        }
    }
    if in_vocab > 0 {
        let count = S::from_usize(in_vocab).expect("token count fits the scalar");
        for slot in &mut vector {
            *slot = *slot / count;
        }
    }
    PhraseVector { vector, in_vocab }
}

/// Cosine similarity of two phrase vectors, clamped to `[0, 1]`. A zero
/// vector on either side yields 0.
#[must_use]
pub fn cosine<S: Scalar>(a: &PhraseVector<S>, b: &PhraseVector<S>) -> S {
    let mut dot = S::zero();
    let mut norm_a = S::zero();
    let mut norm_b = S::zero();
    for (x, y) in a.vector.iter().zip(&b.vector) {
        dot = dot + *x * *y;
        norm_a = norm_a + *x * *x;
        norm_b = norm_b + *y * *y;
    }
    if norm_a.is_zero() || norm_b.is_zero() {
        return S::zero();
    }
    let value = dot / (norm_a * norm_b).sqrt();
    value.max(S::zero()).min(S::one())
}

/// Similarity of two phrases under a store: clamped cosine of their mean
/// vectors.
#[must_use]
pub fn similarity<S: Scalar>(a: &str, b: &str, store: &EmbeddingStore<S>) -> S {
    cosine(&phrase_vector(a, store), &phrase_vector(b, store))
}
