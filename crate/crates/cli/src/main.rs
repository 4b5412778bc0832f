mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use prepartition::domain::SlotConfig;
use prepartition::experiment::run_experiment;
use prepartition::validation::{validate, ValidationConfig};
use prepartition::workload::{
    generate_from_catalog, read_swf, requests_to_json, trace_horizon, trace_to_requests, SyntheticSpec,
};

use config::{parse_synthetic, resolve, Format, RunFile};

#[derive(Parser)]
#[command(name = "prepart", version, about = "Slot-based VM placement simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an algorithm × k × repeat matrix and write one row per run.
    Run(Box<RunArgs>),
    /// Check capacity, structure and approximation properties on random instances.
    Validate(ValidateArgs),
    /// Write a synthetic workload as JSON.
    Gen(GenArgs),
    /// Convert an SWF trace to request JSON.
    Parse(ParseArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML file with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Synthetic workload as key=value pairs, e.g. `n=400,mu=864,sigma=288`.
    #[arg(long)]
    synthetic: Option<String>,
    /// SWF trace file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Comma-separated algorithm names, or `all`.
    #[arg(long)]
    algos: Option<String>,
    /// Number of PMs.
    #[arg(long)]
    m: Option<usize>,
    /// Partition values, comma-separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<u32>>,
    #[arg(long)]
    repeats: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    slot_minutes: Option<u32>,
    /// Processor count used to normalize trace demands.
    #[arg(long)]
    cluster_procs: Option<u32>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `csv` or `jsonl`.
    #[arg(long)]
    format: Option<String>,
    /// Utilization window: `capacity_makespan`, `fleet` or `busy_span`.
    #[arg(long)]
    window: Option<String>,
    /// Write zero wall-clock times so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    /// Fail when any run rejects more than this share of its requests.
    #[arg(long)]
    max_rejection_rate: Option<f64>,
    #[arg(long)]
    pmg_factor: Option<f64>,
    /// PMG donor order: `smallest` or `largest`.
    #[arg(long)]
    pmg_victims: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,10")]
    k: Vec<u32>,
    /// Random workloads for the capacity sweep; each runs every algorithm.
    #[arg(long, default_value_t = 50)]
    workloads: usize,
    #[arg(long, default_value_t = 400)]
    max_n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replace the schedulers with one that ignores capacity.
    #[arg(long)]
    inject_capacity_bug: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ParseArgs {
    trace: PathBuf,
    #[arg(long, default_value_t = 5)]
    slot_minutes: u32,
    #[arg(long)]
    cluster_procs: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let file = match &args.config {
        Some(path) => RunFile::load(path)?,
        None => RunFile::default(),
    };
    let flags = RunFile {
        synthetic: args.synthetic,
        trace: args.trace,
        algos: args.algos,
        m: args.m,
        k: args.k,
        repeats: args.repeats,
        seed: args.seed,
        slot_minutes: args.slot_minutes,
        cluster_procs: args.cluster_procs,
        out: args.out,
        format: args.format,
        window: args.window,
        record_timing: args.no_timing.then_some(false),
        max_rejection_rate: args.max_rejection_rate,
        pmg_factor: args.pmg_factor,
        pmg_victims: args.pmg_victims,
    };
    let resolved = resolve(file, flags)?;
    let table = run_experiment(&resolved.experiment)?;
    let mut out = output(resolved.out.as_deref())?;
    match resolved.format {
        Format::Csv => table.write_csv(&mut out)?,
        Format::Jsonl => table.write_jsonl(&mut out)?,
    }
    out.flush()?;

    let threshold = resolved.experiment.max_rejection_rate;
    let over = table.over_rejection(threshold);
    if over.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for row in &over {
        eprintln!(
            "{} k={} seed={}: rejected {} of {} requests ({:.1}% > {:.1}%)",
            row.algo,
            row.k.map_or("-".into(), |k| k.to_string()),
            row.seed,
            row.rejected,
            row.n_vms,
            100.0 * row.rejection_rate(),
            100.0 * threshold
        );
    }
    eprintln!("{} runs exceeded the rejection threshold; consider a larger fleet (--m)", over.len());
    Ok(ExitCode::from(2))
}

fn run_validate(args: ValidateArgs) -> Result<ExitCode> {
    let cfg = ValidationConfig {
        trials: args.trials,
        k_values: args.k,
        capacity_workloads: args.workloads,
        max_n: args.max_n,
        seed: args.seed,
        inject_capacity_bug: args.inject_capacity_bug,
    };
    let results = validate(&cfg)?;
    let mut failed = 0;
    for r in &results {
        let status = match (r.clean(), r.passed()) {
            (true, _) => "PASS",
            (false, true) => "EXPLAINED",
            (false, false) => "FAIL",
        };
        println!("{status:9} {} ({} checked, {} violations) {}", r.name, r.checked, r.violations, r.detail);
        if !r.passed() {
            failed += 1;
            if let Some(dump) = &r.counterexample {
                println!("  counterexample:\n{dump}");
            }
        }
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run_gen(args: GenArgs) -> Result<ExitCode> {
    let mut spec = match &args.synthetic {
        Some(text) => parse_synthetic(text)?,
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let requests = generate_from_catalog(&spec)?;
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "{}", requests_to_json(&requests)?)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn run_parse(args: ParseArgs) -> Result<ExitCode> {
    let trace = read_swf(&args.trace)?;
    let procs = args
        .cluster_procs
        .or(trace.cluster_procs())
        .context("trace is empty; pass --cluster-procs")?;
    let slots = SlotConfig::new(args.slot_minutes, trace_horizon(&trace.records, args.slot_minutes))?;
    let converted = trace_to_requests(&trace.records, &slots, procs)?;
    log::info!(
        "{} requests, {} skipped lines, {} oversized jobs",
        converted.requests.len(),
        trace.skipped,
        converted.oversized.len()
    );
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "{}", requests_to_json(&converted.requests)?)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PREPART_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(*args),
        Command::Validate(args) => run_validate(args),
        Command::Gen(args) => run_gen(args),
        Command::Parse(args) => run_parse(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
