//! Entity-level similarity scoring for clinical free-text reports.
//!
//! The pipeline has three stages:
//!
//! 1. [`lexicon`] loads a categorized medical vocabulary from TSV and compiles
//!    it into a token-sequence matcher.
//! 2. [`extraction`] segments a report into sentences, tokenizes them, finds
//!    lexicon entities, attaches preceding modifiers, marks negated mentions,
//!    and filters the result down to clinical findings.
//! 3. [`scorer`] compares a reference entity list against a candidate list:
//!    exact phrase matches are counted first, the residue is scored through
//!    embedding cosine similarity, and the column scores are folded into a
//!    single number in `[0, 1]` (the MCSE score).
//!
//! [`embeddings`] supplies the phrase vectors behind stage 3, and [`harness`]
//! holds the validation protocols built on top of the metric: annotated-entity
//! recall, label-sequence separation, and a BLEU baseline.
//!
//! Numeric code is generic over the scalar type; the aliases below fix the
//! double-precision instantiations used by the CLI and most tests.

pub mod embeddings;
pub mod extraction;
pub mod harness;
pub mod lexicon;
pub mod scorer;

use std::fmt;

/// Floating-point scalar the numeric modules are generic over.
///
/// Implemented by `f32` and `f64`. The extra bounds keep generic code able to
/// convert counts into scores and to appear in error messages.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: num_traits::Float
        + num_traits::FromPrimitive
        + fmt::Debug
        + fmt::Display
        + Send
        + Sync
        + 'static
{
}

/// Double-precision embedding table.
pub type EmbeddingStore = embeddings::EmbeddingStore<f64>;
/// Double-precision phrase vector.
pub type PhraseVector = embeddings::PhraseVector<f64>;
/// Double-precision similarity matrix.
pub type SimilarityMatrix = scorer::SimilarityMatrix<f64>;
/// Double-precision score report.
pub type ScoreReport = scorer::ScoreReport<f64>;
/// Double-precision matrix replay score.
pub type MatrixScore = scorer::MatrixScore<f64>;
/// Double-precision BLEU score.
pub type BleuScore = harness::BleuScore<f64>;
/// Double-precision separation report.
pub type SeparationReport = harness::SeparationReport<f64>;
