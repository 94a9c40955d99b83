//! Static analysis of conditional-jump placement in x86-64 binaries.
//!
//! Adjacent compare-and-branch pairs normally macro-fuse in the front end,
//! but two placement accidents break that: a jump whose address is 64-byte
//! aligned never fuses (`no_mfuse`), and a pair spanning a 32-byte boundary
//! is evicted from the decoded-µop cache by the JCC-erratum microcode
//! mitigation (`no_ucache`). This crate scans ELF/PE binaries for both
//! cases, provides the exact per-offset probability model behind them,
//! generates the countdown-loop microbenchmark that exhibits them on real
//! hardware, and simulates the timing covert channel they enable.
//!
//! Modules, in pipeline order:
//!
//! * [`loader`]: executable-section extraction from ELF and PE images.
//! * [`insn`]: linear-sweep decoding into instruction records and
//!   adjacent (instruction, conditional-jump) pairs.
//! * [`fusion`]: architecture profiles and the macro-fusion decision.
//! * [`placement`]: fast/`no_mfuse`/`no_ucache` classification, the
//!   brute-force offset oracle, and the closed-form probability bounds.
//! * [`report`]: per-binary and corpus statistics, rendering, padding
//!   advice.
//! * [`benchgen`]: offset-shifted microbenchmark generation.
//! * [`covert`]: Hamming-weight covert-channel simulation.

pub mod benchgen;
pub mod covert;
pub mod fusion;
pub mod insn;
pub mod loader;
pub mod placement;
pub mod report;

pub use fusion::{builtin_profile, is_fusible_pair, resolve_profile, ArchProfile, ProfileError};
pub use insn::{
    decode_stream, find_adjacent_pairs, AdjacentPair, Cond, DecodedStream, InstructionRecord,
    OperandTraits,
};
pub use loader::{load_sections, load_sections_from_path, CodeSection, FormatHint, LoadError};
pub use placement::{
    classify, probability_bounds, slow_offsets, suggest_padding, Fraction, OffsetAnalysis,
    PlacementClass, PlacementError,
};
pub use report::{
    aggregate, analyze_bytes, analyze_path, AnalyzeOptions, BinaryReport, CorpusReport,
    OutputFormat, PairFinding, ReportError,
};
