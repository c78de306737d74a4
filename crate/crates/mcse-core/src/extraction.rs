//! Clinical entity extraction: sentence segmentation, tokenization, lexicon
//! matching, modifier attachment, negation detection, and filtering.
//!
//! The pipeline is a straight line:
//!
//! ```text
//! text -> sentences -> tokens -> entity spans -> +modifiers -> +negation -> entities
//! ```
//!
//! Every stage is deterministic and pure. Matching never crosses a sentence
//! boundary, modifiers are only collected from the tokens directly in front
//! of a span, and negation is trigger-within-window with scope terminators
//! cutting it off.

use std::io::{self, BufRead};

use serde::{Deserialize, Serialize};

use crate::lexicon::{Category, EntityMatcher, MedicalLexicon};

/// Longest gap (in tokens) between a negation trigger and an entity head that
/// still negates the entity.
pub const NEGATION_WINDOW: usize = 6;

/// Most tokens a modifier run may attach to one entity, the connective `to`
/// included.
pub const MODIFIER_WINDOW: usize = 4;

/// One token: the raw slice, its normalized form, and its byte span in the
/// text it was cut from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub raw: String,
    pub norm: String,
    pub start: usize,
    pub end: usize,
}

/// One sentence with its tokens. `offset` locates the sentence in the source
/// text; token spans are absolute source offsets.
#[derive(Debug, Clone)]
pub struct SentenceTokens {
    pub text: String,
    pub offset: usize,
    pub tokens: Vec<Token>,
}

/// A report segmented and tokenized, ready for matching.
#[derive(Debug, Clone)]
pub struct TokenizedReport {
    pub sentences: Vec<SentenceTokens>,
}

/// One matched lexicon surface inside a sentence, before and after
/// enrichment. `start..end` index the sentence's tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySpan {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub head: String,
    pub category: Category,
    pub modifiers: Vec<String>,
    pub negated: bool,
}

/// Final extraction output: the full phrase (`no` prefix, modifiers, head),
/// the head surface alone, its category, and the negation flag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClinicalEntity {
    pub phrase: String,
    pub head: String,
    pub category: Category,
    pub negated: bool,
}

/// A `{"id", "text"}` record from a JSON-lines report file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub id: String,
    pub text: String,
}

/// Errors from reading report files. The extraction pipeline itself cannot
/// fail.
#[derive(Debug, thiserror::Error)]
pub enum ExtractionError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: malformed report record: {message}")]
    MalformedRecord { line: usize, message: String },
}

fn is_sentence_delimiter(c: char) -> bool {
    matches!(c, '.' | ';' | '!' | '?')
}

/// Split a report into sentences on `.`, `;`, `!`, `?`.
///
/// Two exceptions: a period between two digits is a decimal point, and a
/// segment consisting only of digits before a period is a numbered-list
/// marker (`1.`, `2.`, ...) and is dropped rather than emitted.
#[must_use]
pub fn segment_sentences(text: &str) -> Vec<String> {
    segment_with_offsets(text)
        .into_iter()
        .map(|(_, sentence)| sentence)
        .collect()
}

fn segment_with_offsets(text: &str) -> Vec<(usize, String)> {
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut prev: Option<char> = None;

    let mut iter = text.char_indices().peekable();
    while let Some((idx, c)) = iter.next() {
        if is_sentence_delimiter(c) {
            let next = iter.peek().map(|&(_, n)| n);
            let decimal_point = c == '.'
                && prev.is_some_and(|p| p.is_ascii_digit())
                && next.is_some_and(|n| n.is_ascii_digit());
            if !decimal_point {
                let segment = &text[start..idx];
                let trimmed = segment.trim();
                let list_marker =
                    c == '.' && !trimmed.is_empty() && trimmed.chars().all(|d| d.is_ascii_digit());
                if !trimmed.is_empty() && !list_marker {
                    let lead = segment.len() - segment.trim_start().len();
                    sentences.push((start + lead, trimmed.to_string()));
                }
                start = idx + c.len_utf8();
            }
        }
        prev = Some(c);
    }

    let tail = &text[start..];
    let trimmed = tail.trim();
    if !trimmed.is_empty() {
        let lead = tail.len() - tail.trim_start().len();
        sentences.push((start + lead, trimmed.to_string()));
    }
    sentences
}

/// Byte range of `word` with non-alphanumeric characters trimmed from both
/// ends; `None` when nothing alphanumeric remains.
fn trim_bounds(word: &str) -> Option<(usize, usize)> {
    let start = word.char_indices().find(|(_, c)| c.is_alphanumeric())?.0;
    let (last, c) = word.char_indices().rfind(|(_, c)| c.is_alphanumeric())?;
    Some((start, last + c.len_utf8()))
}

/// Tokenize one sentence: whitespace split, boundary punctuation stripped,
/// hyphens and slashes split into separate tokens and dropped. Token spans
/// index into `sentence`.
#[must_use]
pub fn tokenize(sentence: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word_start = None;

    let flush = |start: usize, end: usize, tokens: &mut Vec<Token>| {
        let word = &sentence[start..end];
        let Some((from, to)) = trim_bounds(word) else {
            return;
        };
        let core_start = start + from;
        let core = &sentence[core_start..start + to];
        let mut piece_start = 0usize;
        for (idx, c) in core.char_indices().chain([(core.len(), '-')]) {
            if c == '-' || c == '/' {
                let piece = &core[piece_start..idx];
                if let Some((f, t)) = trim_bounds(piece) {
                    let abs = core_start + piece_start;
                    let raw = &piece[f..t];
                    tokens.push(Token {
                        raw: raw.to_string(),
                        norm: raw.to_lowercase(),
                        start: abs + f,
                        end: abs + t,
                    });
                }
                piece_start = idx + c.len_utf8();
            }
        }
    };

    for (idx, c) in sentence.char_indices() {
        if c.is_whitespace() {
            if let Some(start) = word_start.take() {
                flush(start, idx, &mut tokens);
            }
        } else if word_start.is_none() {
            word_start = Some(idx);
        }
    }
    if let Some(start) = word_start {
        flush(start, sentence.len(), &mut tokens);
    }
    tokens
}

/// Segment and tokenize a whole report. Token spans are absolute into
/// `text`.
#[must_use]
pub fn tokenize_report(text: &str) -> TokenizedReport {
    let sentences = segment_with_offsets(text)
        .into_iter()
        .map(|(offset, sentence)| {
            let tokens = tokenize(&sentence)
                .into_iter()
                .map(|t| Token {
                    start: t.start + offset,
                    end: t.end + offset,
                    ..t
                })
                .collect();
            SentenceTokens {
                text: sentence,
                offset,
                tokens,
            }
        })
        .collect();
    TokenizedReport { sentences }
}

/// Run the matcher over every sentence and keep the hits whose surface has an
/// entity category (disease, chemical, anatomy, procedure, equipment).
/// Modifier, trigger, and terminator matches never become spans themselves.
#[must_use]
pub fn match_entities(report: &TokenizedReport, matcher: &EntityMatcher) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    for (sentence_idx, sentence) in report.sentences.iter().enumerate() {
        let norms: Vec<&str> = sentence.tokens.iter().map(|t| t.norm.as_str()).collect();
        for hit in matcher.scan(&norms) {
            let Some(category) = hit.categories.iter().copied().find(|c| c.is_entity()) else {
                continue;
            };
            spans.push(EntitySpan {
                sentence: sentence_idx,
                start: hit.start,
                end: hit.end,
                head: hit.surface.to_string(),
                category,
                modifiers: Vec::new(),
                negated: false,
            });
        }
    }
    spans
}

/// Attach the run of modifier-category tokens directly in front of each span.
///
/// The run grows leftward, stays inside the sentence, never exceeds
/// [`MODIFIER_WINDOW`] tokens, and may contain the connective `to` between
/// two modifiers. Tokens claimed by an entity span or an earlier attachment
/// stop the run: a token modifies at most one entity.
#[must_use]
pub fn attach_modifiers(
    mut spans: Vec<EntitySpan>,
    report: &TokenizedReport,
    lexicon: &MedicalLexicon,
) -> Vec<EntitySpan> {
    let mut claimed: Vec<Vec<bool>> = report
        .sentences
        .iter()
        .map(|s| vec![false; s.tokens.len()])
        .collect();
    for span in &spans {
        for slot in &mut claimed[span.sentence][span.start..span.end] {
            *slot = true;
        }
    }

    for span in &mut spans {
        let tokens = &report.sentences[span.sentence].tokens;
        let taken = &mut claimed[span.sentence];
        let mut picked: Vec<usize> = Vec::new();

        let mut pos = span.start;
        while pos > 0 && picked.len() < MODIFIER_WINDOW {
            let at = pos - 1;
            if taken[at] {
                break;
            }
            let norm = tokens[at].norm.as_str();
            let bridges = norm == "to"
                && !picked.is_empty()
                && picked.len() + 2 <= MODIFIER_WINDOW
                && at > 0
                && !taken[at - 1]
                && lexicon.has(tokens[at - 1].norm.as_str(), Category::Modifier);
            if lexicon.has(norm, Category::Modifier) || bridges {
                picked.push(at);
            } else {
                break;
            }
            pos = at;
        }

        picked.reverse();
        span.modifiers = picked
            .iter()
            .map(|&i| tokens[i].norm.clone())
            .collect();
        for &i in &picked {
            taken[i] = true;
        }
    }
    spans
}

/// Occurrences (token ranges) of any of `surfaces` in a token sequence.
fn occurrences(norms: &[&str], surfaces: &[Vec<&str>]) -> Vec<(usize, usize)> {
    let mut found = Vec::new();
    for pos in 0..norms.len() {
        for surface in surfaces {
            if norms[pos..].len() >= surface.len()
                && norms[pos..pos + surface.len()] == surface[..]
            {
                found.push((pos, pos + surface.len()));
            }
        }
    }
    found
}

/// Mark spans negated when a negation-trigger term ends at most
/// [`NEGATION_WINDOW`] tokens before the span's head in the same sentence,
/// with no scope terminator in between.
#[must_use]
pub fn detect_negation(
    mut spans: Vec<EntitySpan>,
    report: &TokenizedReport,
    lexicon: &MedicalLexicon,
) -> Vec<EntitySpan> {
    let triggers: Vec<Vec<&str>> = lexicon
        .surfaces(Category::NegationTrigger)
        .map(|s| s.split(' ').collect())
        .collect();
    let terminators: Vec<Vec<&str>> = lexicon
        .surfaces(Category::ScopeTerminator)
        .map(|s| s.split(' ').collect())
        .collect();
    if triggers.is_empty() {
        return spans;
    }

    for (sentence_idx, sentence) in report.sentences.iter().enumerate() {
        let norms: Vec<&str> = sentence.tokens.iter().map(|t| t.norm.as_str()).collect();
        let trigger_hits = occurrences(&norms, &triggers);
        if trigger_hits.is_empty() {
            continue;
        }
        let terminator_hits = occurrences(&norms, &terminators);

        for span in spans.iter_mut().filter(|s| s.sentence == sentence_idx) {
            span.negated = trigger_hits.iter().any(|&(_, te)| {
                te <= span.start
                    && span.start - te <= NEGATION_WINDOW
                    && !terminator_hits
                        .iter()
                        .any(|&(xs, xe)| xs >= te && xe <= span.start)
            });
        }
    }
    spans
}

/// Keep disease and chemical findings, drop everything else (equipment,
/// procedures, bare anatomy, and any span without an entity head), fold each
/// survivor into its phrase, and deduplicate exact phrases keeping first
/// occurrence. Output order follows source order.
#[must_use]
pub fn filter_and_finalize(spans: Vec<EntitySpan>) -> Vec<ClinicalEntity> {
    let mut seen = std::collections::HashSet::new();
    let mut entities = Vec::new();
    for span in spans {
        if !matches!(span.category, Category::Disease | Category::Chemical) {
            continue;
        }
        let mut parts: Vec<&str> = Vec::new();
        if span.negated {
            parts.push("no");
        }
        parts.extend(span.modifiers.iter().map(String::as_str));
        parts.push(&span.head);
        let phrase = parts.join(" ");
        if seen.insert(phrase.clone()) {
            entities.push(ClinicalEntity {
                phrase,
                head: span.head,
                category: span.category,
                negated: span.negated,
            });
        }
    }
    entities
}

/// Full pipeline: text in, deduplicated clinical entities out.
#[must_use]
pub fn extract(
    text: &str,
    lexicon: &MedicalLexicon,
    matcher: &EntityMatcher,
) -> Vec<ClinicalEntity> {
    let report = tokenize_report(text);
    let spans = match_entities(&report, matcher);
    let spans = attach_modifiers(spans, &report, lexicon);
    let spans = detect_negation(spans, &report, lexicon);
    filter_and_finalize(spans)
}

/// Normalize a report the way the pipeline sees it while keeping sentence
/// structure: lowercase, hyphens and slashes to spaces, boundary punctuation
/// stripped except that one trailing sentence delimiter per word survives.
/// Extraction output is identical before and after this transform.
#[must_use]
pub fn normalize_text(text: &str) -> String {
    let replaced = text.replace(['-', '/'], " ");
    let mut out = String::with_capacity(replaced.len());
    for word in replaced.split_whitespace() {
        let tail_start = word
            .char_indices()
            .rev()
            .take_while(|(_, c)| !c.is_alphanumeric())
            .last()
            .map_or(word.len(), |(i, _)| i);
        let delimiter = word[tail_start..].chars().find(|c| is_sentence_delimiter(*c));
        let core: String = word[..tail_start]
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        if core.is_empty() && delimiter.is_none() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&core);
        if let Some(d) = delimiter {
            out.push(d);
        }
    }
    out
}

/// Read a `{"id", "text"}` JSON-lines report file. Blank lines are skipped;
/// anything else malformed is an error naming the line.
pub fn read_reports_jsonl<R: BufRead>(reader: R) -> Result<Vec<ReportRecord>, ExtractionError> {
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ReportRecord =
            serde_json::from_str(&line).map_err(|e| ExtractionError::MalformedRecord {
                line: index + 1,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}
