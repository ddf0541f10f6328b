use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use bsquant::config::Format;
use bsquant::{report, Error, Execution, ExperimentConfig, ResultBundle, Runner};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

/// Environment variable that overrides the configured output directory.
const OUT_ENV: &str = "BSQUANT_OUT";

#[derive(Parser, Debug)]
#[command(name = "bsquant", version, about = "Quantization lattices vs. joint spectra of commuting Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline: hypotheses, invariants, spectra, matching, fits.
    Run(Args),
    /// Hypothesis checks only.
    Validate(Args),
    /// Classical side only: periods, actions, Maslov indices, Liouville mass.
    Invariants(Args),
    /// Quantum side only: joint spectra over the h grid.
    Spectrum(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    config: PathBuf,
    /// Output directory (overrides the config and BSQUANT_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random stage (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
    Both,
}

impl OutputFormat {
    fn formats(self) -> Vec<Format> {
        match self {
            OutputFormat::Json => vec![Format::Json],
            OutputFormat::Csv => vec![Format::Csv],
            OutputFormat::Both => vec![Format::Json, Format::Csv],
        }
    }
}

fn output_dir(args: &Args, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    match std::env::var_os(OUT_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(&cfg.outputs.directory),
    }
}

fn diagnostic(stage: &str, err: &Error) -> serde_json::Value {
    serde_json::json!({
        "status": "aborted",
        "stage": stage,
        "hypothesis": err.hypothesis(),
        "error": err.to_string(),
    })
}

fn summarize(bundle: &ResultBundle) {
    if let Some(v) = &bundle.validation {
        println!("level set: regular, bounded, connected (min singular value {:.3e})", v.report.min_singular_value);
    }
    if let Some(inv) = &bundle.invariants {
        println!("period basis: {:?}", inv.periods.basis);
        println!("actions: {:?}  Maslov: {:?}  subprincipal: {:?}", inv.cycles.alpha, inv.cycles.mu, inv.cycles.delta);
        if let Some(l0) = inv.l0 {
            println!("l0: {l0:.6}");
        }
    }
    for s in &bundle.steps {
        match &s.matches {
            Some(m) => println!(
                "h = {}: {} eigenvalues, {} matched, max deviation {:.3e}",
                s.h,
                s.spectrum.total_multiplicity(),
                m.pairs.len(),
                m.max_deviation
            ),
            None => println!("h = {}: {} eigenvalues", s.h, s.spectrum.total_multiplicity()),
        }
    }
    if let Some(fit) = &bundle.scaling {
        match fit.fitted_exponent {
            Some(p) => println!("deviation exponent: {p:.3} (fit residual {:.2e})", fit.fit_residual),
            None if fit.exact_match => println!("exact match at every h"),
            None => println!("too few nonzero deviations for a fit"),
        }
    }
}

fn execute(stage: &str, args: &Args) -> anyhow::Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    let execution = match args.jobs {
        Some(0) => anyhow::bail!("--jobs must be at least 1"),
        Some(1) => Execution::Sequential,
        Some(n) => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
            Execution::Parallel
        }
        None => Execution::default(),
    };
    let dir = output_dir(args, &cfg);
    let formats = args.format.map(OutputFormat::formats).unwrap_or_else(|| cfg.outputs.formats.clone());
    let runner = Runner::new(cfg).with_execution(execution);
    let started = Instant::now();
    let result = match stage {
        "run" => runner.run(),
        "validate" => runner.run_validate(),
        "invariants" => runner.run_invariants(),
        _ => runner.run_spectrum(),
    };
    match result {
        Ok(bundle) => {
            info!("{stage} finished in {:.2?}", started.elapsed());
            summarize(&bundle);
            for path in report::write_bundle(&bundle, &dir, &formats)? {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(err) => {
            let diag = diagnostic(stage, &err);
            eprintln!("{}", serde_json::to_string_pretty(&diag)?);
            write_diagnostic(&dir, &diag)?;
            Ok(if err.hypothesis().is_some() { ExitCode::from(2) } else { ExitCode::FAILURE })
        }
    }
}

fn write_diagnostic(dir: &Path, diag: &serde_json::Value) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("diagnostic.json");
    std::fs::write(&path, serde_json::to_string_pretty(diag)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (stage, args) = match &cli.command {
        Command::Run(a) => ("run", a),
        Command::Validate(a) => ("validate", a),
        Command::Invariants(a) => ("invariants", a),
        Command::Spectrum(a) => ("spectrum", a),
    };
    match execute(stage, args) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
