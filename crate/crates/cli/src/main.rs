//! Command-line front end: binary scanning, the offset oracle, benchmark
//! generation, covert-channel simulation, and profile management.
//!
//! Exit codes are part of the interface: 0 success, 1 operational error,
//! 2 threshold breach in linter mode. Nothing else is ever returned, and
//! output on the success path is byte-identical across runs for fixed
//! inputs and seeds.

use std::collections::BTreeSet;
use std::error::Error;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use jccscan_core::benchgen::{emit_assembly, emit_loop_bytes, sub_index, BenchSpec, DEFAULT_ITERATIONS};
use jccscan_core::covert::{run_channel, ChannelConfig, TimingModel, DEFAULT_WORD_LENGTH};
use jccscan_core::fusion::{resolve_profile, ArchProfile, BUILTIN_PROFILE_NAMES};
use jccscan_core::placement::slow_offsets;
use jccscan_core::report::{
    aggregate, analyze_path, render_binary, render_corpus, AnalyzeOptions, OutputFormat,
};

mod walk;

#[derive(Parser)]
#[command(name = "jccscan", version, about = "Find conditional-jump placements that fall off the x86-64 front-end fast path")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Architecture profile: a built-in name or a TOML file path
    #[arg(long, global = true, env = "JCCSCAN_PROFILE", default_value = "skylake_family")]
    profile: String,
    /// Report format
    #[arg(long, global = true, default_value = "text", value_parser = parse_format)]
    format: OutputFormat,
    /// Analysis threads (default: logical CPUs)
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,
    /// Exit 2 when the aggregate slow percentage exceeds this value
    #[arg(long, global = true, value_parser = parse_threshold)]
    fail_threshold: Option<f64>,
    /// Attribute findings to enclosing functions via symbol tables
    #[arg(long, global = true)]
    per_function: bool,
    /// Seed for every randomized simulation
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Scan binaries or directories for slow conditional-jump placements
    Analyze {
        /// Files or directories to scan
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Print the slow offsets and probabilities of a pair geometry
    Prob {
        /// First-instruction length in bytes
        first_len: u32,
        /// Jump length in bytes
        jump_len: u32,
    },
    /// Generate the offset-shifted countdown microbenchmark
    Genbench {
        /// Loop offset within a 64-byte cache line
        #[arg(value_parser = clap::value_parser!(u8).range(0..64))]
        offset: u8,
        #[arg(long, default_value_t = DEFAULT_ITERATIONS, value_parser = clap::value_parser!(u32).range(1..))]
        iterations: u32,
        #[arg(long, value_enum, default_value_t = BenchMode::Asm)]
        mode: BenchMode,
        /// Write the artifact here instead of stdout (required for bytes)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip the serialized timestamp reads around the loop
        #[arg(long)]
        no_instrument: bool,
    },
    /// Simulate the Hamming-weight timing channel
    Covert {
        #[command(subcommand)]
        command: CovertCommand,
    },
    /// Inspect or export architecture profiles
    Profiles {
        #[command(subcommand)]
        command: ProfilesCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMode {
    /// GNU assembler text
    Asm,
    /// Raw loop bytes plus a placement sidecar
    Bytes,
}

#[derive(Subcommand)]
enum CovertCommand {
    /// Run seeded transmissions and report the decode error rate
    Simulate {
        /// Bits per symbol (1..=8)
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u8).range(1..=8))]
        bits: u8,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u32).range(1..))]
        trials: u32,
        /// Gaussian jitter in cycles (default: the built-in model's value)
        #[arg(long)]
        sigma: Option<f64>,
        /// Emit a CSV sweep over every symbol width instead of one record
        #[arg(long)]
        sweep: bool,
    },
}

#[derive(Subcommand)]
enum ProfilesCommand {
    /// List the embedded profile names
    List,
    /// Print an embedded profile as a TOML document
    Export { name: String },
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    OutputFormat::from_str(s)
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    let value: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=100.0).contains(&value) {
        Ok(value)
    } else {
        Err(format!("threshold {value} outside [0, 100]"))
    }
}

fn main() -> ExitCode {
    // Die quietly on closed pipes like any other Unix filter instead of
    // panicking out of a print macro.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            eprint!("{err}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("jccscan: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn Error>> {
    match cli.command {
        Command::Analyze { paths } => cmd_analyze(&cli.global, &paths),
        Command::Prob { first_len, jump_len } => cmd_prob(&cli.global, first_len, jump_len),
        Command::Genbench { offset, iterations, mode, out, no_instrument } => {
            let spec = BenchSpec { offset_b: offset, iterations, instrument: !no_instrument };
            cmd_genbench(&cli.global, &spec, mode, out.as_deref())
        }
        Command::Covert { command: CovertCommand::Simulate { bits, trials, sigma, sweep } } => {
            cmd_covert(&cli.global, bits, trials, sigma, sweep)
        }
        Command::Profiles { command } => cmd_profiles(&command),
    }
}

fn load_profile(global: &GlobalOpts) -> Result<ArchProfile, Box<dyn Error>> {
    Ok(resolve_profile(&global.profile)?)
}

fn cmd_analyze(global: &GlobalOpts, paths: &[PathBuf]) -> Result<ExitCode, Box<dyn Error>> {
    let profile = load_profile(global)?;
    let files = walk::collect_candidates(paths);
    if files.is_empty() {
        eprintln!("jccscan: no analyzable binaries");
        return Ok(ExitCode::from(1));
    }

    let jobs = global
        .jobs
        .map(|j| j as usize)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let opts = AnalyzeOptions { per_function: global.per_function };
    let results: Vec<_> = pool.install(|| {
        use rayon::prelude::*;
        files.par_iter().map(|path| (path, analyze_path(path, &profile, &opts))).collect()
    });

    let mut reports = Vec::new();
    for (path, result) in results {
        match result {
            Ok(report) => reports.push(report),
            Err(err) => eprintln!("jccscan: skipping {}: {err}", path.display()),
        }
    }
    if reports.is_empty() {
        eprintln!("jccscan: no analyzable binaries");
        return Ok(ExitCode::from(1));
    }

    // A single explicitly named file renders as one report; anything wider
    // gets the corpus rollup.
    let single_file = reports.len() == 1 && paths.len() == 1 && paths[0].is_file();
    let (rendered, slow_pct) = if single_file {
        let report = &reports[0];
        let slow = report.no_mfuse_pct + report.no_ucache_pct;
        (render_binary(report, global.format), slow)
    } else {
        let corpus = aggregate(reports);
        let slow = corpus.aggregate_pcts.no_mfuse_pct + corpus.aggregate_pcts.no_ucache_pct;
        (render_corpus(&corpus, global.format), slow)
    };
    print!("{rendered}");

    if let Some(threshold) = global.fail_threshold {
        if slow_pct > threshold {
            eprintln!("jccscan: slow-pair percentage {slow_pct:.2} exceeds threshold {threshold}");
            return Ok(ExitCode::from(2));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn format_offsets(set: &BTreeSet<u8>) -> String {
    let mut out = String::from("{");
    for (i, b) in set.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{b}").unwrap();
    }
    out.push('}');
    out
}

fn cmd_prob(global: &GlobalOpts, first_len: u32, jump_len: u32) -> Result<ExitCode, Box<dyn Error>> {
    let profile = load_profile(global)?;
    let analysis = slow_offsets(first_len, jump_len, &profile)?;
    let mfuse = analysis.no_mfuse_fraction();
    let ucache = analysis.no_ucache_fraction();
    let fast = analysis.fast_fraction();
    println!(
        "geometry ({first_len}, {jump_len}): pair length {}, {} candidate offsets",
        first_len + jump_len,
        analysis.offset_count()
    );
    println!("noMFuse   {mfuse} ({}%)  offsets {}", mfuse.percent(), format_offsets(&analysis.no_mfuse_offsets));
    println!("no\u{b5}Cache  {ucache} ({}%)  offsets {}", ucache.percent(), format_offsets(&analysis.no_ucache_offsets));
    println!("fast      {fast} ({}%)", fast.percent());
    Ok(ExitCode::SUCCESS)
}

fn cmd_genbench(
    global: &GlobalOpts,
    spec: &BenchSpec,
    mode: BenchMode,
    out: Option<&std::path::Path>,
) -> Result<ExitCode, Box<dyn Error>> {
    let profile = load_profile(global)?;
    let oracle = slow_offsets(4, 2, &profile)?;
    match mode {
        BenchMode::Asm => {
            // The alignment directive pins the loop to offset_b exactly.
            let class = oracle.class_of(spec.offset_b);
            let text = emit_assembly(spec);
            match out {
                Some(path) => {
                    std::fs::write(path, text)?;
                    println!("expected class at offset {}: {class}", spec.offset_b);
                }
                None => {
                    print!("{text}");
                    eprintln!("expected class at offset {}: {class}", spec.offset_b);
                }
            }
        }
        BenchMode::Bytes => {
            let Some(path) = out else {
                eprintln!("jccscan: bytes mode requires --out");
                return Ok(ExitCode::from(1));
            };
            // The raw buffer carries the counter setup ahead of the loop.
            let class = oracle.class_of((sub_index(spec) % 64) as u8);
            std::fs::write(path, emit_loop_bytes(spec))?;
            let mut sidecar = path.as_os_str().to_owned();
            sidecar.push(".txt");
            std::fs::write(PathBuf::from(&sidecar), jccscan_core::benchgen::bytes_sidecar(spec))?;
            println!("expected class at loop offset {}: {class}", sub_index(spec) % 64);
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// One simulation outcome, serialized as the covert subcommand's record.
#[derive(Serialize)]
struct CovertRecord {
    bits: u8,
    trials: u32,
    sigma: f64,
    error_rate: f64,
    mean_cycles: f64,
    throughput_bps: f64,
}

fn covert_record(bits: u8, trials: u32, model: &TimingModel, seed: u64) -> Result<CovertRecord, Box<dyn Error>> {
    let config = ChannelConfig::new(bits, DEFAULT_WORD_LENGTH)?;
    let run = run_channel(&config, model, trials, seed);
    Ok(CovertRecord {
        bits,
        trials,
        sigma: model.noise_sigma,
        error_rate: run.error_rate,
        mean_cycles: run.mean_symbol_cycles,
        throughput_bps: run.throughput_bps,
    })
}

fn cmd_covert(
    global: &GlobalOpts,
    bits: u8,
    trials: u32,
    sigma: Option<f64>,
    sweep: bool,
) -> Result<ExitCode, Box<dyn Error>> {
    let mut model = TimingModel::default();
    if let Some(sigma) = sigma {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(format!("sigma must be finite and non-negative, got {sigma}").into());
        }
        model.noise_sigma = sigma;
    }
    if sweep {
        println!("bits,trials,sigma,error_rate,mean_cycles,throughput_bps");
        for k in 1u8..=8 {
            let r = covert_record(k, trials, &model, global.seed)?;
            println!(
                "{},{},{},{},{},{}",
                r.bits, r.trials, r.sigma, r.error_rate, r.mean_cycles, r.throughput_bps
            );
        }
    } else {
        let record = covert_record(bits, trials, &model, global.seed)?;
        println!("{}", serde_json::to_string_pretty(&record)?);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_profiles(command: &ProfilesCommand) -> Result<ExitCode, Box<dyn Error>> {
    match command {
        ProfilesCommand::List => {
            for name in BUILTIN_PROFILE_NAMES {
                println!("{name}");
            }
        }
        ProfilesCommand::Export { name } => {
            let profile = jccscan_core::fusion::builtin_profile(name)?;
            print!("{}", profile.to_toml_string());
        }
    }
    Ok(ExitCode::SUCCESS)
}
