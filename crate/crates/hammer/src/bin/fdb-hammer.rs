//! Benchmark driver. Without `--pattern` it runs one worker and prints its
//! record as a JSON line; with `--pattern` it runs writer and reader
//! processes and writes records, `summary.csv` and SVG charts.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;
use fdb_core::config::{BackendKind, Config};
use fdb_core::Fdb;
use fdb_hammer::aggregate::{self, format_mib_s};
use fdb_hammer::ids::default_schema;
use fdb_hammer::orchestrate::{Orchestrator, RECORDS_FILE};
use fdb_hammer::spec::{Mode, Pattern, PatternSpec, RunSpec};
use fdb_hammer::worker::{run_worker, Labels};
use fdb_hammer::{record, report};

#[derive(Parser, Debug)]
#[command(version, about = "fdb-hammer: archive/retrieve/list benchmark")]
struct Args {
    #[arg(long, value_enum, default_value = "archive")]
    mode: Mode,
    #[arg(long, default_value_t = 10)]
    nsteps: u32,
    #[arg(long, default_value_t = 10)]
    nparams: u32,
    #[arg(long, default_value_t = 20)]
    nlevels: u32,
    /// Ensemble member; orchestrated runs give each writer its own, counting up from here.
    #[arg(long, default_value_t = 1)]
    member: u32,
    #[arg(long, default_value_t = 4096)]
    field_size: usize,
    #[arg(long)]
    backend: Option<BackendKind>,
    /// Storage directory, when no config file is given.
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pattern: Option<Pattern>,
    /// Writer processes.
    #[arg(long, default_value_t = 1)]
    processes: u32,
    /// Reader processes; defaults to --processes.
    #[arg(long)]
    readers: Option<u32>,
    /// Contention writers re-archive the fields readers read.
    #[arg(long)]
    overwrite: bool,
    #[arg(long, default_value_t = 3)]
    repeat: u32,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    first_step: u32,
    /// Version stamped into written payloads.
    #[arg(long, default_value_t = 0)]
    field_version: u64,
    /// Retrieve each step across this many members.
    #[arg(long, default_value_t = 0)]
    transpose: u32,
    #[arg(long, default_value_t = 1)]
    passes: u32,
    #[arg(long, default_value_t = 0)]
    process_id: u32,
    /// Complete worker spec as JSON; set by the orchestrator.
    #[arg(long, hide = true)]
    run_spec: Option<String>,
}

fn config(args: &Args) -> anyhow::Result<Config> {
    let config = match (&args.config, args.backend, &args.root) {
        (Some(path), backend, None) => {
            let c = Config::load(path)?;
            if backend.is_some_and(|b| b != c.backend) {
                bail!("--backend {} contradicts {}", backend.unwrap(), path.display());
            }
            c
        }
        (None, Some(backend), Some(root)) => Config::new(backend, root),
        (Some(_), _, Some(_)) => bail!("give either --config or --root, not both"),
        _ => bail!("need --config, or --backend and --root"),
    };
    config.validate()?;
    Ok(config)
}

fn spec(args: &Args) -> anyhow::Result<RunSpec> {
    if let Some(json) = &args.run_spec {
        return serde_json::from_str(json).context("bad --run-spec");
    }
    let spec = RunSpec {
        mode: args.mode,
        process: args.process_id,
        nsteps: args.nsteps,
        nparams: args.nparams,
        nlevels: args.nlevels,
        member: args.member,
        field_size: args.field_size,
        first_step: args.first_step,
        version: args.field_version,
        transpose: args.transpose,
        passes: args.passes,
        ..Default::default()
    };
    spec.validate()?;
    Ok(spec)
}

fn worker(args: &Args, config: Config, spec: RunSpec) -> anyhow::Result<ExitCode> {
    let schema = config.load_schema()?.unwrap_or_else(default_schema);
    let labels = Labels {
        backend: config.backend.to_string(),
        pattern: String::new(),
        phase: spec.mode.as_str().to_string(),
    };
    let rec = run_worker(&spec, &labels, |p| Fdb::open_profiled(&config, schema, p));
    println!("{}", rec.to_line());
    if let Some(dir) = &args.output_dir {
        std::fs::create_dir_all(dir)?;
        record::append(&dir.join(RECORDS_FILE), std::slice::from_ref(&rec))?;
    }
    if let Some(e) = &rec.error {
        eprintln!("fdb-hammer: {e}");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn orchestrated(args: &Args, config: Config, pattern: Pattern, template: RunSpec) -> anyhow::Result<ExitCode> {
    let output_dir = args.output_dir.clone().unwrap_or_else(|| PathBuf::from("hammer-out"));
    let orch = Orchestrator {
        exe: std::env::current_exe().context("locating own executable")?,
        config,
        template,
        pattern: PatternSpec {
            pattern,
            writers: args.processes,
            readers: args.readers.unwrap_or(args.processes),
            overwrite: args.overwrite,
        },
        output_dir: output_dir.clone(),
        repetitions: args.repeat,
    };
    let outcome = orch.run();
    if let Err(fdb_hammer::HammerError::Usage(msg)) = &outcome {
        bail!("usage: {msg}");
    }
    // Whatever finished is reported, even if a worker failed.
    let records = record::read_all(&output_dir.join(RECORDS_FILE)).unwrap_or_default();
    if !records.is_empty() {
        let summaries = aggregate::aggregate(&records)?;
        for s in &summaries {
            println!(
                "{:<4} {:<14} {:<12} {:>3} procs {:>8} fields {:>12} bytes {:>9.3} s {:>10} MiB/s",
                s.backend,
                s.pattern,
                s.role_label(),
                s.processes,
                s.fields,
                s.bytes,
                s.seconds,
                format_mib_s(s.bandwidth)
            );
        }
        report::write_report(&summaries, &output_dir)?;
    }
    outcome?;
    if pattern == Pattern::Contention {
        for rep in 0..args.repeat {
            if aggregate::roles_overlap(&records, "contention", rep) == Some(false) {
                eprintln!("fdb-hammer: repetition {rep} invalid: writers and readers did not overlap");
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> anyhow::Result<ExitCode> {
    let args = Args::parse();
    let config = config(&args)?;
    let spec = spec(&args)?;
    match args.pattern {
        Some(pattern) if args.run_spec.is_none() => orchestrated(&args, config, pattern, spec),
        _ => worker(&args, config, spec),
    }
}
