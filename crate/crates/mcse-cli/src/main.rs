//! Command-line front end for the report scoring pipeline.
//!
//! `extract` pulls clinical entities out of report text, `score` compares
//! candidates against references (with a BLEU baseline alongside),
//! `validate` runs the recall and label-separation protocols, and
//! `reproduce` replays the bundled worked scoring example. Identical inputs
//! and flags produce byte-identical machine output at any `--parallel`
//! setting; warnings go to standard error so they never dirty the payload.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mcse_core::extraction::{extract, read_reports_jsonl, tokenize_report, ClinicalEntity};
use mcse_core::harness::{
    bleu, entity_recall, evaluate_separation, read_annotations_jsonl, read_labels_csv,
    select_pairs, SeparationPoint, Smoothing,
};
use mcse_core::lexicon::{compile_matcher, EntityMatcher, MedicalLexicon};
use mcse_core::scorer::{mcse, mcse_from_matrix};
use mcse_core::{BleuScore, EmbeddingStore, ScoreReport, SimilarityMatrix};

/// The worked scoring example shipped with the repository.
const BUNDLED_MATRIX: &str = include_str!("../../../assets/table2_matrix.json");

#[derive(Parser)]
#[command(
    name = "mcse",
    version,
    about = "Entity-level similarity scoring for clinical free-text reports"
)]
struct Cli {
    #[command(flatten)]
    globals: Globals,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Globals {
    /// Categorized medical vocabulary (TSV) driving entity extraction.
    #[arg(long, global = true, value_name = "PATH")]
    lexicon: Option<PathBuf>,

    /// Token embedding table in text format ("count dim" header).
    #[arg(long, global = true, value_name = "PATH")]
    embeddings: Option<PathBuf>,

    /// Output encoding.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Write output to this file instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Worker threads for pair scoring; 0 means one per core.
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    parallel: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Extract clinical entities from report text.
    Extract {
        /// Plain-text file holding a single report. Reads standard input
        /// when neither this nor --reports is given.
        #[arg(long, value_name = "PATH", conflicts_with = "reports")]
        input: Option<PathBuf>,

        /// JSON-lines file of {"id", "text"} records.
        #[arg(long, value_name = "PATH")]
        reports: Option<PathBuf>,
    },

    /// Score candidate reports against references.
    Score {
        /// Reference report text given inline.
        #[arg(long, value_name = "TEXT", requires = "cand_text", conflicts_with = "pairs")]
        ref_text: Option<String>,

        /// Candidate report text given inline.
        #[arg(long, value_name = "TEXT", requires = "ref_text", conflicts_with = "pairs")]
        cand_text: Option<String>,

        /// JSON-lines file of {"id"?, "reference", "candidate"} records.
        #[arg(long, value_name = "PATH")]
        pairs: Option<PathBuf>,

        /// Largest n-gram order for the BLEU baseline.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..=9), value_name = "N")]
        bleu_order: u64,

        /// Numerator substituted for zero n-gram counts.
        #[arg(long, default_value_t = 1e-9, value_name = "EPS")]
        bleu_epsilon: f64,

        /// Turn BLEU smoothing off: any zero precision zeroes the score.
        #[arg(long)]
        bleu_unsmoothed: bool,
    },

    /// Check the pipeline against hand-labeled data.
    Validate {
        #[command(subcommand)]
        protocol: Validate,
    },

    /// Replay bundled worked examples.
    Reproduce {
        #[command(subcommand)]
        target: Reproduce,
    },
}

#[derive(Subcommand)]
enum Validate {
    /// Entity recall against annotated reports.
    Entities {
        /// JSON-lines file of {"id", "entities": [{"phrase", "presence"}]}.
        #[arg(long, value_name = "PATH")]
        annotations: PathBuf,

        /// JSON-lines file of {"id", "text"} records to extract from.
        #[arg(long, value_name = "PATH")]
        reports: PathBuf,
    },

    /// Score separation between same-label and opposite-label reports.
    Labels {
        /// CSV with an id column and the 14 observation label columns.
        #[arg(long, value_name = "PATH")]
        labels: PathBuf,

        /// JSON-lines file of {"id", "text"} records to extract from.
        #[arg(long, value_name = "PATH")]
        reports: PathBuf,

        /// Decision boundary between the two classes, exclusive in (0, 1).
        #[arg(long, default_value_t = 0.7, value_name = "T")]
        threshold: f64,
    },
}

#[derive(Subcommand)]
enum Reproduce {
    /// Fold the bundled example similarity matrix into its final score.
    Table2,
}

/// Usage and input problems exit 2; unexpected internal failures exit 1.
enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Internal(_) => 1,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(err) | Failure::Internal(err) => err,
        }
    }
}

type CmdResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}

fn run(cli: Cli) -> CmdResult<()> {
    let Cli { globals, command } = cli;
    match command {
        Command::Extract { input, reports } => {
            cmd_extract(&globals, input.as_deref(), reports.as_deref())
        }
        Command::Score {
            ref_text,
            cand_text,
            pairs,
            bleu_order,
            bleu_epsilon,
            bleu_unsmoothed,
        } => {
            let smoothing = if bleu_unsmoothed {
                Smoothing::None
            } else if bleu_epsilon.is_finite() && bleu_epsilon > 0.0 {
                Smoothing::Epsilon(bleu_epsilon)
            } else {
                return Err(Failure::Input(anyhow!(
                    "--bleu-epsilon must be a positive finite number, got {bleu_epsilon}"
                )));
            };
            cmd_score(
                &globals,
                ref_text.as_deref(),
                cand_text.as_deref(),
                pairs.as_deref(),
                bleu_order as usize,
                smoothing,
            )
        }
        Command::Validate { protocol } => match protocol {
            Validate::Entities {
                annotations,
                reports,
            } => cmd_validate_entities(&globals, &annotations, &reports),
            Validate::Labels {
                labels,
                reports,
                threshold,
            } => cmd_validate_labels(&globals, &labels, &reports, threshold),
        },
        Command::Reproduce { target } => match target {
            Reproduce::Table2 => cmd_reproduce_matrix(&globals),
        },
    }
}

fn load_lexicon(globals: &Globals) -> CmdResult<(MedicalLexicon, EntityMatcher)> {
    let path = globals
        .lexicon
        .as_deref()
        .ok_or_else(|| Failure::Input(anyhow!("--lexicon is required for this command")))?;
    let lexicon = MedicalLexicon::from_path(path)
        .with_context(|| format!("reading lexicon {}", path.display()))
        .map_err(Failure::Input)?;
    for warning in lexicon.warnings() {
        eprintln!("warning: {warning}");
    }
    let matcher = compile_matcher(&lexicon)
        .context("compiling lexicon matcher")
        .map_err(Failure::Input)?;
    Ok((lexicon, matcher))
}

fn load_store(globals: &Globals) -> CmdResult<EmbeddingStore> {
    let path = globals
        .embeddings
        .as_deref()
        .ok_or_else(|| Failure::Input(anyhow!("--embeddings is required for this command")))?;
    let store = EmbeddingStore::from_path(path)
        .with_context(|| format!("reading embeddings {}", path.display()))
        .map_err(Failure::Input)?;
    for warning in store.warnings() {
        eprintln!("warning: {warning}");
    }
    Ok(store)
}

fn open_buffered(path: &Path) -> CmdResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(Failure::Input)
}

fn read_report_records(path: &Path) -> CmdResult<Vec<mcse_core::extraction::ReportRecord>> {
    read_reports_jsonl(open_buffered(path)?)
        .with_context(|| format!("reading reports {}", path.display()))
        .map_err(Failure::Input)
}

fn emit(globals: &Globals, bytes: &[u8]) -> CmdResult<()> {
    match &globals.out {
        Some(path) => std::fs::write(path, bytes)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Input),
        None => io::stdout()
            .write_all(bytes)
            .context("writing standard output")
            .map_err(Failure::Internal),
    }
}

fn to_json<T: Serialize>(value: &T) -> CmdResult<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)
        .context("encoding output as JSON")
        .map_err(Failure::Internal)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn csv_bytes(
    build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
) -> CmdResult<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    build(&mut writer)
        .context("encoding output as CSV")
        .map_err(Failure::Internal)?;
    writer
        .into_inner()
        .context("flushing CSV output")
        .map_err(|err| Failure::Internal(anyhow!(err.to_string())))
}

fn cmd_extract(
    globals: &Globals,
    input: Option<&Path>,
    reports: Option<&Path>,
) -> CmdResult<()> {
    let (lexicon, matcher) = load_lexicon(globals)?;

    let (batch, extracted) = match (input, reports) {
        (_, Some(path)) => {
            let records = read_report_records(path)?;
            let extracted: Vec<(String, Vec<ClinicalEntity>)> = records
                .into_iter()
                .map(|record| (record.id, extract(&record.text, &lexicon, &matcher)))
                .collect();
            (true, extracted)
        }
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::Input)?;
            (false, vec![(String::new(), extract(&text, &lexicon, &matcher))])
        }
        (None, None) => {
            let mut text = String::new();
            io::stdin()
                .read_to_string(&mut text)
                .context("reading standard input")
                .map_err(Failure::Input)?;
            (false, vec![(String::new(), extract(&text, &lexicon, &matcher))])
        }
    };

    let bytes = match globals.format {
        Format::Json => {
            if batch {
                #[derive(Serialize)]
                struct Item<'a> {
                    id: &'a str,
                    entities: &'a [ClinicalEntity],
                }
                let items: Vec<Item> = extracted
                    .iter()
                    .map(|(id, entities)| Item { id, entities })
                    .collect();
                to_json(&items)?
            } else {
                to_json(&extracted[0].1)?
            }
        }
        Format::Csv => csv_bytes(|writer| {
            writer.write_record(["id", "phrase", "head", "category", "negated"])?;
            for (id, entities) in &extracted {
                for entity in entities {
                    writer.write_record([
                        id.as_str(),
                        &entity.phrase,
                        &entity.head,
                        &entity.category.to_string(),
                        if entity.negated { "true" } else { "false" },
                    ])?;
                }
            }
            Ok(())
        })?,
        Format::Text => {
            let mut text = String::new();
            for (id, entities) in &extracted {
                let indent = if batch {
                    let _ = writeln!(text, "{id}:");
                    "  "
                } else {
                    ""
                };
                for entity in entities {
                    let negated = if entity.negated { ", negated" } else { "" };
                    let _ = writeln!(text, "{indent}{} ({}{negated})", entity.phrase, entity.category);
                }
            }
            text.into_bytes()
        }
    };
    emit(globals, &bytes)
}

/// One line of a `--pairs` file.
#[derive(Deserialize)]
struct PairRecord {
    #[serde(default)]
    id: Option<String>,
    reference: String,
    candidate: String,
}

/// Scored pair: the full entity-level report plus the BLEU baseline.
#[derive(Serialize)]
struct PairReport {
    id: String,
    mcse: ScoreReport,
    bleu: BleuScore,
}

#[derive(Serialize)]
struct ScoreSummary {
    pairs: usize,
    mean_mcse: f64,
    mean_bleu: f64,
}

fn read_pairs(path: &Path) -> CmdResult<Vec<PairRecord>> {
    let reader = open_buffered(path)?;
    let mut pairs = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::Input)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}: line {}", path.display(), index + 1))
            .map_err(Failure::Input)?;
        pairs.push(record);
    }
    if pairs.is_empty() {
        return Err(Failure::Input(anyhow!(
            "{}: no report pairs found",
            path.display()
        )));
    }
    Ok(pairs)
}

/// Every normalized token of a report, in reading order.
fn report_tokens(text: &str) -> Vec<String> {
    tokenize_report(text)
        .sentences
        .into_iter()
        .flat_map(|sentence| sentence.tokens.into_iter().map(|token| token.norm))
        .collect()
}

fn cmd_score(
    globals: &Globals,
    ref_text: Option<&str>,
    cand_text: Option<&str>,
    pairs: Option<&Path>,
    bleu_order: usize,
    smoothing: Smoothing,
) -> CmdResult<()> {
    let (lexicon, matcher) = load_lexicon(globals)?;
    let store = load_store(globals)?;

    let (batch, records) = match (pairs, ref_text, cand_text) {
        (Some(path), _, _) => (true, read_pairs(path)?),
        (None, Some(reference), Some(candidate)) => (
            false,
            vec![PairRecord {
                id: None,
                reference: reference.to_string(),
                candidate: candidate.to_string(),
            }],
        ),
        _ => {
            return Err(Failure::Input(anyhow!(
                "either --pairs or both --ref-text and --cand-text are required"
            )))
        }
    };

    let score_one = |(index, record): (usize, &PairRecord)| -> PairReport {
        let reference = extract(&record.reference, &lexicon, &matcher);
        let candidate = extract(&record.candidate, &lexicon, &matcher);
        PairReport {
            id: record
                .id
                .clone()
                .unwrap_or_else(|| (index + 1).to_string()),
            mcse: mcse(&reference, &candidate, &store),
            bleu: bleu(
                &report_tokens(&record.reference),
                &report_tokens(&record.candidate),
                bleu_order,
                smoothing,
            ),
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(globals.parallel)
        .build()
        .context("building worker pool")
        .map_err(Failure::Internal)?;
    let reports: Vec<PairReport> =
        pool.install(|| records.par_iter().enumerate().map(score_one).collect());

    let summary = ScoreSummary {
        pairs: reports.len(),
        mean_mcse: reports.iter().map(|r| r.mcse.mcse).sum::<f64>() / reports.len() as f64,
        mean_bleu: reports.iter().map(|r| r.bleu.score).sum::<f64>() / reports.len() as f64,
    };

    let bytes = match globals.format {
        Format::Json => {
            if batch {
                #[derive(Serialize)]
                struct Output {
                    pairs: Vec<PairReport>,
                    summary: ScoreSummary,
                }
                to_json(&Output {
                    pairs: reports,
                    summary,
                })?
            } else {
                #[derive(Serialize)]
                struct Single<'a> {
                    mcse: &'a ScoreReport,
                    bleu: &'a BleuScore,
                }
                to_json(&Single {
                    mcse: &reports[0].mcse,
                    bleu: &reports[0].bleu,
                })?
            }
        }
        Format::Csv => csv_bytes(|writer| {
            writer.write_record(["id", "mcse", "matched", "m", "n", "bleu", "bleu_variant"])?;
            for report in &reports {
                writer.write_record([
                    if batch { report.id.as_str() } else { "" },
                    &report.mcse.mcse.to_string(),
                    &report.mcse.matched.to_string(),
                    &report.mcse.m.to_string(),
                    &report.mcse.n.to_string(),
                    &report.bleu.score.to_string(),
                    &report.bleu.variant,
                ])?;
            }
            Ok(())
        })?,
        Format::Text => {
            let mut text = String::new();
            for report in &reports {
                let prefix = if batch {
                    format!("{}: ", report.id)
                } else {
                    String::new()
                };
                let _ = writeln!(
                    text,
                    "{prefix}mcse {:.3} (matched {} of {} candidate entities), bleu {:.3} ({})",
                    report.mcse.mcse,
                    report.mcse.matched,
                    report.mcse.m,
                    report.bleu.score,
                    report.bleu.variant
                );
            }
            if batch {
                let _ = writeln!(
                    text,
                    "{} pairs: mean mcse {:.3}, mean bleu {:.3}",
                    summary.pairs, summary.mean_mcse, summary.mean_bleu
                );
            }
            text.into_bytes()
        }
    };
    emit(globals, &bytes)
}

fn cmd_validate_entities(
    globals: &Globals,
    annotations: &Path,
    reports: &Path,
) -> CmdResult<()> {
    let (lexicon, matcher) = load_lexicon(globals)?;
    let records = read_report_records(reports)?;
    let annotations = read_annotations_jsonl(open_buffered(annotations)?)
        .context("reading annotations")
        .map_err(Failure::Input)?;

    let extracted: BTreeMap<String, Vec<ClinicalEntity>> = records
        .into_iter()
        .map(|record| {
            let entities = extract(&record.text, &lexicon, &matcher);
            (record.id, entities)
        })
        .collect();
    let report = entity_recall(&extracted, &annotations).map_err(|err| Failure::Input(err.into()))?;

    let bytes = match globals.format {
        Format::Json => to_json(&report)?,
        Format::Csv => csv_bytes(|writer| {
            writer.write_record([
                "id",
                "present_annotated",
                "present_recognized",
                "absent_annotated",
                "absent_recognized",
            ])?;
            for counts in &report.per_report {
                writer.write_record([
                    counts.id.as_str(),
                    &counts.present.annotated.to_string(),
                    &counts.present.recognized.to_string(),
                    &counts.absent.annotated.to_string(),
                    &counts.absent.recognized.to_string(),
                ])?;
            }
            Ok(())
        })?,
        Format::Text => {
            let mut text = String::new();
            let line = |label: &str, recall: Option<f64>, counts: &mcse_core::harness::ClassCounts| {
                match recall {
                    Some(value) => format!(
                        "{label} recall: {value:.3} ({} of {})",
                        counts.recognized, counts.annotated
                    ),
                    None => format!("{label} recall: undefined (0 annotated)"),
                }
            };
            let _ = writeln!(text, "{}", line("present", report.present_recall, &report.present));
            let _ = writeln!(text, "{}", line("absent", report.absent_recall, &report.absent));
            text.into_bytes()
        }
    };
    emit(globals, &bytes)
}

fn cmd_validate_labels(
    globals: &Globals,
    labels: &Path,
    reports: &Path,
    threshold: f64,
) -> CmdResult<()> {
    let (lexicon, matcher) = load_lexicon(globals)?;
    let store = load_store(globals)?;

    let table = File::open(labels)
        .with_context(|| format!("opening {}", labels.display()))
        .map_err(Failure::Input)
        .and_then(|file| {
            read_labels_csv(file)
                .with_context(|| format!("reading labels {}", labels.display()))
                .map_err(Failure::Input)
        })?;
    for warning in &table.warnings {
        eprintln!("warning: {warning}");
    }

    let selection = select_pairs(&table.records);
    let texts: BTreeMap<String, String> = read_report_records(reports)?
        .into_iter()
        .map(|record| (record.id, record.text))
        .collect();

    let report = evaluate_separation(&texts, &selection, &lexicon, &matcher, &store, threshold)
        .map_err(|err| Failure::Input(err.into()))?;

    let bytes = match globals.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Summary {
                threshold: f64,
                same_total: usize,
                same_above: usize,
                same_below: usize,
                same_mean: Option<f64>,
                opposite_total: usize,
                opposite_above: usize,
                opposite_below: usize,
                opposite_mean: Option<f64>,
            }
            #[derive(Serialize)]
            struct Output<'a> {
                summary: Summary,
                points: &'a [SeparationPoint<f64>],
            }
            to_json(&Output {
                summary: Summary {
                    threshold: report.threshold,
                    same_total: report.same_total,
                    same_above: report.same_above,
                    same_below: report.same_below,
                    same_mean: report.same_mean(),
                    opposite_total: report.opposite_total,
                    opposite_above: report.opposite_above,
                    opposite_below: report.opposite_below,
                    opposite_mean: report.opposite_mean(),
                },
                points: &report.points,
            })?
        }
        Format::Csv => {
            let mut buffer = Vec::new();
            report
                .write_csv(&mut buffer)
                .context("encoding point series as CSV")
                .map_err(Failure::Internal)?;
            buffer
        }
        Format::Text => {
            let mut text = String::new();
            let mean = |value: Option<f64>| {
                value.map_or_else(|| "undefined".to_string(), |v| format!("{v:.3}"))
            };
            let _ = writeln!(text, "threshold: {threshold}");
            let _ = writeln!(
                text,
                "same-label groups: {} total, {} above, {} at or below, mean {}",
                report.same_total,
                report.same_above,
                report.same_below,
                mean(report.same_mean())
            );
            let _ = writeln!(
                text,
                "opposite-label pairings: {} total, {} above, {} at or below, mean {}",
                report.opposite_total,
                report.opposite_above,
                report.opposite_below,
                mean(report.opposite_mean())
            );
            text.into_bytes()
        }
    };
    emit(globals, &bytes)
}

fn cmd_reproduce_matrix(globals: &Globals) -> CmdResult<()> {
    let matrix = SimilarityMatrix::from_json_reader(BUNDLED_MATRIX.as_bytes())
        .context("parsing the bundled example matrix")
        .map_err(Failure::Internal)?;
    let score = mcse_from_matrix(&matrix, 0, matrix.cols())
        .context("folding the bundled example matrix")
        .map_err(Failure::Internal)?;

    let bytes = match globals.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Replay<'a> {
                candidates: &'a [String],
                column_scores: &'a [f64],
                matched: usize,
                m: usize,
                mcse: f64,
            }
            to_json(&Replay {
                candidates: &matrix.candidate,
                column_scores: &score.column_scores,
                matched: score.matched,
                m: score.m,
                mcse: score.mcse,
            })?
        }
        Format::Csv => csv_bytes(|writer| {
            writer.write_record(["name", "value"])?;
            for (candidate, column) in matrix.candidate.iter().zip(&score.column_scores) {
                writer.write_record([
                    format!("column_score:{candidate}").as_str(),
                    &column.to_string(),
                ])?;
            }
            writer.write_record(["matched", &score.matched.to_string()])?;
            writer.write_record(["m", &score.m.to_string()])?;
            writer.write_record(["mcse", &score.mcse.to_string()])?;
            Ok(())
        })?,
        Format::Text => {
            let mut text = String::from("column scores:\n");
            for (candidate, column) in matrix.candidate.iter().zip(&score.column_scores) {
                let _ = writeln!(text, "  {candidate}: {column:.3}");
            }
            let _ = writeln!(text, "mcse: {:.3}", score.mcse);
            text.into_bytes()
        }
    };
    emit(globals, &bytes)
}
