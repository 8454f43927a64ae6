//! Command-line front end: run, validate, and sweep scenario files.
//!
//! Exit codes: 0 on success, 2 on a config or usage problem, 3 when more
//! than half of the executed rounds ended without consensus, 1 otherwise.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedveil::harness::{self, RunResult, Scenario};
use fedveil::Error;

#[derive(Parser)]
#[command(
    name = "fedveil",
    version,
    about = "Deterministic simulator for robust, privacy-preserving federated learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics.csv and reveals.csv.
    Run(RunArgs),
    /// Parse and validate a scenario file without running it.
    Validate {
        /// Scenario file (flat key=value lines, # comments).
        config: PathBuf,
    },
    /// Run a scenario once per value of a single varied key.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (flat key=value lines, # comments).
    config: PathBuf,
    /// Directory the CSV outputs are written into.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the arithmetic backend: ideal or shared.
    #[arg(long)]
    backend: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario file the sweep starts from.
    config: PathBuf,
    /// Key plus comma-separated values, e.g. --vary dp.sigma=0.5,1,2.
    #[arg(long)]
    vary: String,
    /// Directory that receives one subdirectory per swept value.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the arithmetic backend: ideal or shared.
    #[arg(long)]
    backend: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Validate { config } => cmd_validate(&config),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// Loads a scenario file, applies the flag overrides, and validates it.
fn load(config: &Path, seed: Option<u64>, backend: Option<&str>) -> fedveil::Result<Scenario> {
    let mut s = Scenario::from_file(config)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(b) = backend {
        s.set_key("backend", b)?;
    }
    s.validate()?;
    Ok(s)
}

fn write_outputs(dir: &Path, result: &RunResult) -> fedveil::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.csv"), harness::metrics_csv(&result.rows))?;
    std::fs::write(dir.join("reveals.csv"), harness::reveals_csv(&result.reveals))?;
    Ok(())
}

fn summarize(label: &str, result: &RunResult, dir: &Path) {
    let rounds = result.rows.len();
    let aborted = result.aborted_rounds;
    match result.rows.last() {
        Some(last) => println!(
            "{label}: rounds={rounds} aborted={aborted} ma_global={:.4} \
             ma_personalized={:.4} ba={:.4} eps_rdp={} -> {}",
            last.ma_global,
            last.ma_personalized,
            last.ba,
            last.eps_rdp,
            dir.display()
        ),
        None => println!("{label}: rounds=0 aborted=0 -> {}", dir.display()),
    }
}

fn cmd_run(args: &RunArgs) -> fedveil::Result<ExitCode> {
    let scenario = load(&args.config, args.seed, args.backend.as_deref())?;
    let result = harness::run_scenario(&scenario)?;
    write_outputs(&args.out, &result)?;
    summarize("run", &result, &args.out);
    Ok(if result.collapsed() {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_validate(config: &Path) -> fedveil::Result<ExitCode> {
    let s = Scenario::from_file(config)?;
    s.validate()?;
    println!("ok");
    Ok(ExitCode::SUCCESS)
}

/// Splits `key=v1,v2,...` into the key and its non-empty value list.
fn parse_vary(spec: &str) -> fedveil::Result<(String, Vec<String>)> {
    let Some((key, list)) = spec.split_once('=') else {
        return Err(Error::Config(format!(
            "--vary: expected key=v1,v2,..., got `{spec}`"
        )));
    };
    let values: Vec<String> = list
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .collect();
    if values.is_empty() {
        return Err(Error::Config(format!("--vary {key}: no values given")));
    }
    Ok((key.trim().to_string(), values))
}

/// Directory name for one swept value; path separators are not allowed
/// to escape the output root.
fn variant_dir(key: &str, value: &str) -> String {
    format!("{key}={value}").replace(['/', '\\'], "_")
}

fn cmd_sweep(args: &SweepArgs) -> fedveil::Result<ExitCode> {
    let (key, values) = parse_vary(&args.vary)?;
    let base = load(&args.config, args.seed, args.backend.as_deref())?;

    // Build and validate every variant up front so a bad value fails the
    // whole sweep before any run starts.
    let mut variants = Vec::with_capacity(values.len());
    for value in &values {
        let mut s = base.clone();
        s.set_key(&key, value)?;
        s.validate()?;
        variants.push((value.clone(), s));
    }

    let mut any_collapsed = false;
    for (value, scenario) in &variants {
        let result = harness::run_scenario(scenario)?;
        let dir = args.out.join(variant_dir(&key, value));
        write_outputs(&dir, &result)?;
        summarize(&format!("{key}={value}"), &result, &dir);
        any_collapsed |= result.collapsed();
    }
    Ok(if any_collapsed {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}
