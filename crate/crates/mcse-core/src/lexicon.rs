//! Categorized medical vocabulary and the token-sequence matcher built from it.
//!
//! A lexicon is a flat list of surface forms, each tagged with one of eight
//! categories. Surfaces are normalized on load so that `Mild-to-Moderate` and
//! `mild to moderate` are the same entry. [`compile_matcher`] turns the whole
//! vocabulary into a trie over token sequences; matching is leftmost-longest
//! over a sentence's normalized tokens, so a surface can never fire on a
//! partial word.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Role a lexicon surface plays during extraction.
///
/// The variant order doubles as precedence: when one surface carries several
/// categories, the smallest variant tags the match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Disease,
    Chemical,
    Anatomy,
    Procedure,
    Equipment,
    Modifier,
    NegationTrigger,
    ScopeTerminator,
}

impl Category {
    /// All categories, in precedence order.
    pub const ALL: [Category; 8] = [
        Category::Disease,
        Category::Chemical,
        Category::Anatomy,
        Category::Procedure,
        Category::Equipment,
        Category::Modifier,
        Category::NegationTrigger,
        Category::ScopeTerminator,
    ];

    /// True for categories that form entity spans (as opposed to modifiers,
    /// negation triggers, and scope terminators, which only steer the
    /// pipeline).
    #[must_use]
    pub fn is_entity(self) -> bool {
        matches!(
            self,
            Category::Disease
                | Category::Chemical
                | Category::Anatomy
                | Category::Procedure
                | Category::Equipment
        )
    }

    fn label(self) -> &'static str {
        match self {
            Category::Disease => "disease",
            Category::Chemical => "chemical",
            Category::Anatomy => "anatomy",
            Category::Procedure => "procedure",
            Category::Equipment => "equipment",
            Category::Modifier => "modifier",
            Category::NegationTrigger => "negation_trigger",
            Category::ScopeTerminator => "scope_terminator",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disease" => Ok(Category::Disease),
            "chemical" => Ok(Category::Chemical),
            "anatomy" => Ok(Category::Anatomy),
            "procedure" => Ok(Category::Procedure),
            "equipment" => Ok(Category::Equipment),
            "modifier" => Ok(Category::Modifier),
            "negation_trigger" => Ok(Category::NegationTrigger),
            "scope_terminator" => Ok(Category::ScopeTerminator),
            other => Err(other.to_string()),
        }
    }
}

/// One vocabulary row: a normalized surface form, its category, and an
/// optional canonical form carried through for downstream consumers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub surface: String,
    pub category: Category,
    pub canonical: Option<String>,
}

/// Errors from lexicon loading and matcher compilation.
#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("lexicon contains no entries")]
    Empty,
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: unknown category {label:?}")]
    UnknownCategory { line: usize, label: String },
}

/// Normalize a surface form or phrase: lowercase, hyphens and slashes become
/// single spaces, other punctuation is stripped at token boundaries, and
/// whitespace collapses to single spaces.
///
/// Interior punctuation survives (`1.5` stays `1.5`), so decimals and
/// possessives are not mangled.
#[must_use]
pub fn normalize_term(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for piece in raw.replace(['-', '/'], " ").split_whitespace() {
        if let Some(word) = clean_word(piece) {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&word);
        }
    }
    out
}

/// Lowercase a single word and trim non-alphanumeric characters from both
/// ends. Returns `None` when nothing is left.
#[must_use]
pub fn clean_word(piece: &str) -> Option<String> {
    let trimmed = piece.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_lowercase())
    }
}

/// Immutable categorized vocabulary.
///
/// Entries are deduplicated on `(surface, category)` (last definition wins)
/// and held in sorted order, so lexicons loaded from reordered files behave
/// identically.
#[derive(Debug, Clone)]
pub struct MedicalLexicon {
    entries: Vec<LexiconEntry>,
    by_category: BTreeMap<Category, BTreeSet<String>>,
    warnings: Vec<String>,
}

impl MedicalLexicon {
    /// Load from a TSV file on disk.
    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self, LexiconError> {
        load_lexicon(BufReader::new(File::open(path)?))
    }

    #[must_use]
    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Warnings accumulated while loading (duplicate rows and the like).
    #[must_use]
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// True when `surface` (already normalized) is listed under `category`.
    #[must_use]
    pub fn has(&self, surface: &str, category: Category) -> bool {
        self.by_category
            .get(&category)
            .is_some_and(|set| set.contains(surface))
    }

    /// Categories recorded for a normalized surface, in precedence order.
    #[must_use]
    pub fn categories_of(&self, surface: &str) -> Vec<Category> {
        Category::ALL
            .into_iter()
            .filter(|c| self.has(surface, *c))
            .collect()
    }

    /// All surfaces of one category, sorted.
    pub fn surfaces(&self, category: Category) -> impl Iterator<Item = &str> {
        self.by_category
            .get(&category)
            .into_iter()
            .flat_map(|set| set.iter().map(String::as_str))
    }

    /// Serialize back to TSV. Loading the output yields the same entries.
    pub fn write_tsv<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for entry in &self.entries {
            match &entry.canonical {
                Some(canonical) => writeln!(
                    writer,
                    "{}\t{}\t{}",
                    entry.surface, entry.category, canonical
                )?,
                None => writeln!(writer, "{}\t{}", entry.surface, entry.category)?,
            }
        }
        Ok(())
    }
}

/// Parse a lexicon from TSV: `surface<TAB>category[<TAB>canonical]`, with
/// `#` comment lines and blank lines ignored.
///
/// Duplicate `(surface, category)` rows keep the last definition and add a
/// warning. A file with no entries at all is an error.
pub fn load_lexicon<R: BufRead>(reader: R) -> Result<MedicalLexicon, LexiconError> {
    let mut rows: BTreeMap<(String, Category), Option<String>> = BTreeMap::new();
    let mut warnings = Vec::new();

    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }

        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(LexiconError::MalformedLine {
                line: line_no,
                reason: format!("expected 2 or 3 tab-separated fields, got {}", fields.len()),
            });
        }

        let surface = normalize_term(fields[0]);
        if surface.is_empty() {
            return Err(LexiconError::MalformedLine {
                line: line_no,
                reason: format!("surface {:?} normalizes to nothing", fields[0]),
            });
        }

        let category =
            Category::from_str(fields[1].trim()).map_err(|label| LexiconError::UnknownCategory {
                line: line_no,
                label,
            })?;

        let canonical = match fields.get(2) {
            Some(raw) => {
                let canonical = normalize_term(raw);
                if canonical.is_empty() {
                    return Err(LexiconError::MalformedLine {
                        line: line_no,
                        reason: format!("canonical {raw:?} normalizes to nothing"),
                    });
                }
                Some(canonical)
            }
            None => None,
        };

        let key = (surface, category);
        if rows.contains_key(&key) {
            warnings.push(format!(
                "line {line_no}: duplicate entry {:?}/{} replaces the earlier definition",
                key.0, key.1
            ));
        }
        rows.insert(key, canonical);
    }

    if rows.is_empty() {
        return Err(LexiconError::Empty);
    }

    let entries: Vec<LexiconEntry> = rows
        .into_iter()
        .map(|((surface, category), canonical)| LexiconEntry {
            surface,
            category,
            canonical,
        })
        .collect();

    let mut by_category: BTreeMap<Category, BTreeSet<String>> = BTreeMap::new();
    for entry in &entries {
        by_category
            .entry(entry.category)
            .or_default()
            .insert(entry.surface.clone());
    }

    Ok(MedicalLexicon {
        entries,
        by_category,
        warnings,
    })
}

/// One hit from [`EntityMatcher::scan`]: a half-open token range, the surface
/// it matched, and every category that surface is listed under (sorted by
/// precedence).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMatch<'m> {
    pub start: usize,
    pub end: usize,
    pub surface: &'m str,
    pub categories: &'m [Category],
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: HashMap<u32, u32>,
    pattern: Option<u32>,
}

struct PatternInfo {
    surface: String,
    categories: Vec<Category>,
}

/// Compiled token-sequence automaton over every lexicon surface.
///
/// Scanning is leftmost-longest and non-overlapping: at each position the
/// longest surface starting there wins, and the scan resumes after it.
pub struct EntityMatcher {
    token_ids: HashMap<String, u32>,
    nodes: Vec<TrieNode>,
    patterns: Vec<PatternInfo>,
}

/// Build an [`EntityMatcher`] from every surface in the lexicon. Compiling
/// the same lexicon twice yields identical match behavior.
pub fn compile_matcher(lexicon: &MedicalLexicon) -> Result<EntityMatcher, LexiconError> {
    if lexicon.is_empty() {
        return Err(LexiconError::Empty);
    }

    let mut matcher = EntityMatcher {
        token_ids: HashMap::new(),
        nodes: vec![TrieNode::default()],
        patterns: Vec::new(),
    };

    // Entries are sorted, so all categories of one surface are consecutive.
    for entry in lexicon.entries() {
        match matcher.patterns.last_mut() {
            Some(last) if last.surface == entry.surface => {
                last.categories.push(entry.category);
                continue;
            }
            _ => {}
        }
        let pattern_id = matcher.patterns.len() as u32;
        matcher.patterns.push(PatternInfo {
            surface: entry.surface.clone(),
            categories: vec![entry.category],
        });
        matcher.insert(&entry.surface, pattern_id);
    }

    Ok(matcher)
}

impl EntityMatcher {
    fn insert(&mut self, surface: &str, pattern_id: u32) {
        let mut node = 0u32;
        for token in surface.split(' ') {
            let next_id = self.token_ids.len() as u32;
            let token_id = *self
                .token_ids
                .entry(token.to_string())
                .or_insert(next_id);
            let existing = self.nodes[node as usize].children.get(&token_id).copied();
            node = match existing {
                Some(child) => child,
                None => {
                    let child = self.nodes.len() as u32;
                    self.nodes[node as usize].children.insert(token_id, child);
                    self.nodes.push(TrieNode::default());
                    child
                }
            };
        }
        self.nodes[node as usize].pattern = Some(pattern_id);
    }

    #[must_use]
    pub fn pattern_count(&self) -> usize {
        self.patterns.len()
    }

    /// Find all leftmost-longest, non-overlapping surface matches in a
    /// normalized token sequence.
    #[must_use]
    pub fn scan<'m, T: AsRef<str>>(&'m self, tokens: &[T]) -> Vec<RawMatch<'m>> {
        let ids: Vec<Option<u32>> = tokens
            .iter()
            .map(|t| self.token_ids.get(t.as_ref()).copied())
            .collect();

        let mut matches = Vec::new();
        let mut i = 0;
        while i < ids.len() {
            let mut node = 0u32;
            let mut best: Option<(usize, u32)> = None;
            for (offset, id) in ids[i..].iter().enumerate() {
                let Some(id) = id else { break };
                let Some(&next) = self.nodes[node as usize].children.get(id) else {
                    break;
                };
                node = next;
                if let Some(pattern) = self.nodes[node as usize].pattern {
                    best = Some((i + offset + 1, pattern));
                }
            }
            match best {
                Some((end, pattern)) => {
                    let pattern = &self.patterns[pattern as usize];
                    matches.push(RawMatch {
                        start: i,
                        end,
                        surface: &pattern.surface,
                        categories: &pattern.categories,
                    });
                    i = end;
                }
                None => i += 1,
            }
        }
        matches
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(tsv: &str) -> MedicalLexicon {
        load_lexicon(tsv.as_bytes()).expect("test lexicon loads")
    }

    #[test]
    fn normalizes_surfaces_on_load() {
        let lexicon = lex("Mild-to-Moderate\tmodifier\n");
        assert_eq!(
            lexicon.entries(),
            &[LexiconEntry {
                surface: "mild to moderate".into(),
                category: Category::Modifier,
                canonical: None,
            }]
        );
    }

    #[test]
    fn normalize_strips_boundary_punctuation_only() {
        assert_eq!(normalize_term("  Pleural  EFFUSION, (left)"), "pleural effusion left");
        assert_eq!(normalize_term("x-ray/CT."), "x ray ct");
        assert_eq!(normalize_term("1.5 cm"), "1.5 cm");
        assert_eq!(normalize_term("--- ,,, ..."), "");
    }

    #[test]
    fn keeps_canonical_field() {
        let lexicon = lex("effusions\tdisease\tEffusion\n");
        assert_eq!(lexicon.entries()[0].canonical.as_deref(), Some("effusion"));
    }

    #[test]
    fn skips_comments_and_blank_lines() {
        let lexicon = lex("# vocabulary\n\nedema\tdisease\n");
        assert_eq!(lexicon.len(), 1);
        assert!(lexicon.warnings().is_empty());
    }

    #[test]
    fn duplicate_entry_keeps_last_and_warns() {
        let lexicon = lex("edema\tdisease\tone\nEdema\tdisease\ttwo\n");
        assert_eq!(lexicon.len(), 1);
        assert_eq!(lexicon.entries()[0].canonical.as_deref(), Some("two"));
        assert_eq!(lexicon.warnings().len(), 1);
        assert!(lexicon.warnings()[0].contains("line 2"));
    }

    #[test]
    fn same_surface_may_carry_two_categories() {
        let lexicon = lex("aspiration\tdisease\naspiration\tprocedure\n");
        assert_eq!(lexicon.len(), 2);
        assert_eq!(
            lexicon.categories_of("aspiration"),
            vec![Category::Disease, Category::Procedure]
        );
    }

    #[test]
    fn line_order_does_not_matter() {
        let a = lex("edema\tdisease\nmild\tmodifier\n");
        let b = lex("mild\tmodifier\nedema\tdisease\n");
        assert_eq!(a.entries(), b.entries());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = load_lexicon("edema\tdisease\njust-one-field\n".as_bytes()).unwrap_err();
        match err {
            LexiconError::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_category_reports_line_and_label() {
        let err = load_lexicon("edema\tfinding\n".as_bytes()).unwrap_err();
        match err {
            LexiconError::UnknownCategory { line, label } => {
                assert_eq!(line, 1);
                assert_eq!(label, "finding");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            load_lexicon("# only comments\n".as_bytes()),
            Err(LexiconError::Empty)
        ));
    }

    #[test]
    fn tsv_round_trip_preserves_entries() {
        let lexicon = lex(
            "Pleural Effusion\tdisease\nmild\tmodifier\nno\tnegation_trigger\neffusions\tdisease\teffusion\n",
        );
        let mut buf = Vec::new();
        lexicon.write_tsv(&mut buf).unwrap();
        let reloaded = load_lexicon(buf.as_slice()).unwrap();
        assert_eq!(lexicon.entries(), reloaded.entries());
        assert!(reloaded.warnings().is_empty());
    }

    #[test]
    fn matcher_prefers_longest_surface() {
        let lexicon = lex("pleural effusion\tdisease\neffusion\tdisease\n");
        let matcher = compile_matcher(&lexicon).unwrap();
        let matches = matcher.scan(&["left", "pleural", "effusion"]);
        assert_eq!(matches.len(), 1);
        assert_eq!((matches[0].start, matches[0].end), (1, 3));
        assert_eq!(matches[0].surface, "pleural effusion");
        assert_eq!(matches[0].categories, &[Category::Disease]);
    }

    #[test]
    fn matcher_resumes_after_a_match() {
        let lexicon = lex("edema\tdisease\nno\tnegation_trigger\nacute\tmodifier\n");
        let matcher = compile_matcher(&lexicon).unwrap();
        let matches = matcher.scan(&["no", "acute", "edema", "today"]);
        let spans: Vec<(usize, usize, &str)> =
            matches.iter().map(|m| (m.start, m.end, m.surface)).collect();
        assert_eq!(spans, vec![(0, 1, "no"), (1, 2, "acute"), (2, 3, "edema")]);
    }

    #[test]
    fn matcher_is_leftmost_before_longest() {
        // "fluid overload" starts earlier than the longer "overload state".
        let lexicon = lex("fluid overload\tdisease\noverload state\tdisease\n");
        let matcher = compile_matcher(&lexicon).unwrap();
        let matches = matcher.scan(&["fluid", "overload", "state"]);
        assert_eq!(matches.len(), 1);
        assert_eq!((matches[0].start, matches[0].end), (0, 2));
        assert_eq!(matches[0].surface, "fluid overload");
    }

    #[test]
    fn matcher_backs_off_to_shorter_terminal() {
        // "pulmonary edema and" walks two tokens into the trie for the
        // three-token surface but must fall back to the two-token terminal.
        let lexicon = lex("pulmonary edema and fluid\tdisease\npulmonary edema\tdisease\n");
        let matcher = compile_matcher(&lexicon).unwrap();
        let matches = matcher.scan(&["pulmonary", "edema", "and", "rales"]);
        assert_eq!(matches.len(), 1);
        assert_eq!((matches[0].start, matches[0].end), (0, 2));
    }

    #[test]
    fn empty_lexicon_cannot_compile() {
        let lexicon = lex("edema\tdisease\n");
        let empty = MedicalLexicon {
            entries: Vec::new(),
            by_category: BTreeMap::new(),
            warnings: Vec::new(),
        };
        assert!(compile_matcher(&empty).is_err());
        assert!(compile_matcher(&lexicon).is_ok());
    }

    #[test]
    fn recompilation_matches_identically() {
        let lexicon = lex("pleural effusion\tdisease\npleural\tmodifier\neffusion\tdisease\n");
        let a = compile_matcher(&lexicon).unwrap();
        let b = compile_matcher(&lexicon).unwrap();
        let tokens = ["pleural", "effusion", "pleural", "space"];
        let spans_a: Vec<(usize, usize)> = a.scan(&tokens).iter().map(|m| (m.start, m.end)).collect();
        let spans_b: Vec<(usize, usize)> = b.scan(&tokens).iter().map(|m| (m.start, m.end)).collect();
        assert_eq!(spans_a, spans_b);
    }
}
