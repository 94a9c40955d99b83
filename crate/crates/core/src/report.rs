//! End-to-end analysis of binaries and report aggregation/rendering.
//!
//! Percentages are always computed over the total number of conditional
//! jumps, never over the fusible-pair count; corpus-level percentages come
//! from summed totals, never from averaging per-binary percentages. Both
//! conventions are load-bearing for comparability of the statistics.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{is_fusible_pair, ArchProfile};
use crate::insn::{decode_stream, find_adjacent_pairs};
use crate::loader::{load_function_symbols, load_sections, FormatHint, FunctionSymbol, LoadError};
use crate::placement::{classify, suggest_padding, terminates_on_boundary, PlacementClass};

/// Per-pair detail behind the aggregate counts.
///
/// Findings are recorded for pairs that classify slow and for fast pairs
/// whose jump terminates exactly on an exclusion boundary (a diagnostic
/// case the counting rule deliberately leaves fast); unremarkable fast
/// pairs carry no actionable detail and are only counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFinding {
    pub first_address: u64,
    pub jump_address: u64,
    pub first_mnemonic: String,
    pub jump_mnemonic: String,
    pub class: PlacementClass,
    pub terminates_on_boundary: bool,
    /// Smallest forward shift (1..=5) that makes the pair fast; present
    /// only when `class` is not fast, absent when no shift in budget helps.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub suggested_padding: Option<u32>,
    /// Enclosing function, when the binary carries usable symbols.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub function: Option<String>,
}

/// Analysis statistics for one binary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryReport {
    pub path: String,
    /// Every decoded conditional jump, fusible or not: the denominator for
    /// both percentages.
    pub cond_jump_total: u64,
    pub fusible_pair_total: u64,
    pub no_mfuse_count: u64,
    pub no_ucache_count: u64,
    pub no_mfuse_pct: f64,
    pub no_ucache_pct: f64,
    pub bytes_skipped: u64,
    pub findings: Vec<PairFinding>,
}

/// Summed counts over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub cond_jump_total: u64,
    pub fusible_pair_total: u64,
    pub no_mfuse_count: u64,
    pub no_ucache_count: u64,
    pub bytes_skipped: u64,
}

/// Percentages computed from the summed totals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregatePcts {
    pub no_mfuse_pct: f64,
    pub no_ucache_pct: f64,
}

/// Corpus-level rollup of per-binary reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub binaries: Vec<BinaryReport>,
    pub totals: Totals,
    pub aggregate_pcts: AggregatePcts,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("i/o error reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Knobs for [`analyze_bytes`] beyond the architecture profile.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyzeOptions {
    /// Attribute findings to enclosing functions via the symbol table.
    pub per_function: bool,
}

fn pct(count: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

/// Analyze one binary image already in memory.
///
/// `label` names the binary in the report (usually its path). Every
/// executable section is decoded; conditional jumps are counted across all
/// of them, fusible pairs are classified, and percentages follow the
/// all-conditional-jumps denominator rule.
pub fn analyze_bytes(
    label: &str,
    bytes: &[u8],
    profile: &ArchProfile,
    opts: &AnalyzeOptions,
) -> Result<BinaryReport, ReportError> {
    let sections = load_sections(bytes, label, FormatHint::Auto)?;
    let symbols = if opts.per_function {
        load_function_symbols(bytes).unwrap_or_default()
    } else {
        Vec::new()
    };

    let mut cond_jump_total = 0u64;
    let mut fusible_pair_total = 0u64;
    let mut no_mfuse_count = 0u64;
    let mut no_ucache_count = 0u64;
    let mut bytes_skipped = 0u64;
    let mut findings = Vec::new();

    for section in &sections {
        let stream = decode_stream(section);
        bytes_skipped += stream.bytes_skipped;
        cond_jump_total += stream.records.iter().filter(|r| r.is_cond_jump).count() as u64;
        for pair in find_adjacent_pairs(&stream.records) {
            if !is_fusible_pair(profile, &pair) {
                continue;
            }
            fusible_pair_total += 1;
            let class = classify(profile, &pair).expect("fusibility checked above");
            match class {
                PlacementClass::NoMfuse => no_mfuse_count += 1,
                PlacementClass::NoUcache => no_ucache_count += 1,
                PlacementClass::Fast => {}
            }
            let (first, jump) = (pair.first(), pair.jump());
            let terminates = terminates_on_boundary(profile, jump.address, u32::from(jump.length));
            if class == PlacementClass::Fast && !terminates {
                continue;
            }
            let suggested = if class == PlacementClass::Fast {
                None
            } else {
                suggest_padding(first.address, u32::from(first.length), u32::from(jump.length), profile)
                    .expect("pair classified slow")
            };
            findings.push(PairFinding {
                first_address: first.address,
                jump_address: jump.address,
                first_mnemonic: first.mnemonic.clone(),
                jump_mnemonic: jump.mnemonic.clone(),
                class,
                terminates_on_boundary: terminates,
                suggested_padding: suggested,
                function: enclosing_function(&symbols, jump.address),
            });
        }
    }

    Ok(BinaryReport {
        path: label.to_string(),
        cond_jump_total,
        fusible_pair_total,
        no_mfuse_count,
        no_ucache_count,
        no_mfuse_pct: pct(no_mfuse_count, cond_jump_total),
        no_ucache_pct: pct(no_ucache_count, cond_jump_total),
        bytes_skipped,
        findings,
    })
}

/// [`analyze_bytes`] over a file on disk.
pub fn analyze_path(
    path: &Path,
    profile: &ArchProfile,
    opts: &AnalyzeOptions,
) -> Result<BinaryReport, ReportError> {
    let bytes = std::fs::read(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    analyze_bytes(&path.to_string_lossy(), &bytes, profile, opts)
}

fn enclosing_function(symbols: &[FunctionSymbol], address: u64) -> Option<String> {
    if symbols.is_empty() {
        return None;
    }
    let idx = symbols.partition_point(|s| s.address <= address);
    let candidate = &symbols[idx.checked_sub(1)?];
    if candidate.size == 0 || address < candidate.address + candidate.size {
        Some(candidate.name.clone())
    } else {
        None
    }
}

/// Roll per-binary reports up into corpus totals.
///
/// Totals are exact sums and the aggregate percentages are computed from
/// those sums, so aggregation is order-independent and never averages
/// percentages.
pub fn aggregate(reports: Vec<BinaryReport>) -> CorpusReport {
    let mut totals = Totals::default();
    for r in &reports {
        totals.cond_jump_total += r.cond_jump_total;
        totals.fusible_pair_total += r.fusible_pair_total;
        totals.no_mfuse_count += r.no_mfuse_count;
        totals.no_ucache_count += r.no_ucache_count;
        totals.bytes_skipped += r.bytes_skipped;
    }
    let aggregate_pcts = AggregatePcts {
        no_mfuse_pct: pct(totals.no_mfuse_count, totals.cond_jump_total),
        no_ucache_pct: pct(totals.no_ucache_count, totals.cond_jump_total),
    };
    CorpusReport { binaries: reports, totals, aggregate_pcts }
}

/// Report serialization format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
    Text,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "text" => Ok(OutputFormat::Text),
            other => Err(format!("unknown format `{other}` (expected json, csv, or text)")),
        }
    }
}

pub const CSV_HEADER: &str = "library,cond_jumps,no_mfuse_pct,no_ucache_pct";

fn library_name(path: &str) -> String {
    Path::new(path)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_row(out: &mut String, name: &str, jumps: u64, mfuse_pct: f64, ucache_pct: f64) {
    writeln!(out, "{},{},{:.2},{:.2}", csv_field(name), jumps, mfuse_pct, ucache_pct)
        .expect("write to string");
}

/// Render one binary's report.
pub fn render_binary(report: &BinaryReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        OutputFormat::Csv => {
            let mut out = String::new();
            out.push_str(CSV_HEADER);
            out.push('\n');
            csv_row(
                &mut out,
                &library_name(&report.path),
                report.cond_jump_total,
                report.no_mfuse_pct,
                report.no_ucache_pct,
            );
            out
        }
        OutputFormat::Text => {
            let mut out = String::new();
            writeln!(out, "{}", report.path).unwrap();
            writeln!(out, "  conditional jumps: {}", report.cond_jump_total).unwrap();
            writeln!(out, "  fusible pairs:     {}", report.fusible_pair_total).unwrap();
            writeln!(
                out,
                "  noMFuse:           {} ({:.2}%)",
                report.no_mfuse_count, report.no_mfuse_pct
            )
            .unwrap();
            writeln!(
                out,
                "  no\u{b5}Cache:          {} ({:.2}%)",
                report.no_ucache_count, report.no_ucache_pct
            )
            .unwrap();
            writeln!(out, "  bytes skipped:     {}", report.bytes_skipped).unwrap();
            if !report.findings.is_empty() {
                writeln!(out, "  findings:").unwrap();
                for f in &report.findings {
                    let pad = match f.suggested_padding {
                        Some(s) => format!("pad {s}"),
                        None if f.class != PlacementClass::Fast => "no pad within budget".to_string(),
                        None => "ends on boundary".to_string(),
                    };
                    let function = f.function.as_deref().map(|n| format!(" in {n}")).unwrap_or_default();
                    writeln!(
                        out,
                        "    {:#x}: {} + {} -> {} ({}){}",
                        f.first_address, f.first_mnemonic, f.jump_mnemonic, f.class, pad, function
                    )
                    .unwrap();
                }
            }
            out
        }
    }
}

/// Render a corpus report.
///
/// CSV emits one row per binary in Table order plus a summary `total` row
/// computed from the summed counts.
pub fn render_corpus(report: &CorpusReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        OutputFormat::Csv => {
            let mut out = String::new();
            out.push_str(CSV_HEADER);
            out.push('\n');
            for b in &report.binaries {
                csv_row(&mut out, &library_name(&b.path), b.cond_jump_total, b.no_mfuse_pct, b.no_ucache_pct);
            }
            csv_row(
                &mut out,
                "total",
                report.totals.cond_jump_total,
                report.aggregate_pcts.no_mfuse_pct,
                report.aggregate_pcts.no_ucache_pct,
            );
            out
        }
        OutputFormat::Text => {
            let name_width = report
                .binaries
                .iter()
                .map(|b| library_name(&b.path).len())
                .chain(std::iter::once("total".len()))
                .max()
                .unwrap_or(5)
                .max("library".len());
            let mut out = String::new();
            writeln!(
                out,
                "{:<name_width$}  {:>10}  {:>9}  {:>9}",
                "library", "cond_jumps", "noMFuse%", "no\u{b5}Cache%"
            )
            .unwrap();
            for b in &report.binaries {
                writeln!(
                    out,
                    "{:<name_width$}  {:>10}  {:>9.2}  {:>9.2}",
                    library_name(&b.path),
                    b.cond_jump_total,
                    b.no_mfuse_pct,
                    b.no_ucache_pct
                )
                .unwrap();
            }
            writeln!(
                out,
                "{:<name_width$}  {:>10}  {:>9.2}  {:>9.2}",
                "total",
                report.totals.cond_jump_total,
                report.aggregate_pcts.no_mfuse_pct,
                report.aggregate_pcts.no_ucache_pct
            )
            .unwrap();
            out
        }
    }
}
