//! Config-driven experiment runner for the holographic register toolkit.

mod artifacts;
mod config;
mod studies;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use artifacts::{Summary, StudyOutput};
use config::{Experiment, ExperimentConfig, Target};

/// Exit status when a study ran but missed a threshold.
const EXIT_THRESHOLD: u8 = 1;
/// Exit status for usage and config errors; nothing is written.
const EXIT_CONFIG: u8 = 2;
/// Exit status for numeric failures.
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "holoreg", version, about = "Holographic molecular register studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Pattern orthogonality on lattices and random chains.
    Orthogonality(Common),
    /// √N collective enhancement of the Raman coupling.
    Enhancement(Common),
    /// Dark-state transfer of a stored pattern and back.
    Stirap(Common),
    /// Two-qubit storage walkthrough against the exact model.
    Multiplex(Common),
    /// Baseline SWAP and conditional-phase sweeps.
    Gates(Common),
    /// Pulse optimization of one gate.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Gate to optimize; overrides `optimize.target` in the config.
        #[arg(long, value_enum)]
        target: Option<Target>,
    },
    /// Operation count against the coherence limit.
    Budget(Common),
    /// Bell circuit through the full protocol.
    Endtoend(Common),
}

impl Command {
    fn parts(&self) -> (Experiment, &Common) {
        match self {
            Command::Orthogonality(c) => (Experiment::Orthogonality, c),
            Command::Enhancement(c) => (Experiment::Enhancement, c),
            Command::Stirap(c) => (Experiment::Stirap, c),
            Command::Multiplex(c) => (Experiment::Multiplex, c),
            Command::Gates(c) => (Experiment::Gates, c),
            Command::Optimize { common, .. } => (Experiment::Optimize, common),
            Command::Budget(c) => (Experiment::Budget, c),
            Command::Endtoend(c) => (Experiment::Endtoend, c),
        }
    }
}

fn run_study(cmd: &Command, cfg: &ExperimentConfig, seed: u64) -> holoreg::Result<StudyOutput> {
    let d = &cfg.device;
    match cmd {
        Command::Orthogonality(_) => studies::orthogonality(&cfg.orthogonality.clone().unwrap_or_default(), seed),
        Command::Enhancement(_) => studies::enhancement(&cfg.enhancement.clone().unwrap_or_default(), d),
        Command::Stirap(_) => studies::stirap(&cfg.stirap.clone().unwrap_or_default(), d),
        Command::Multiplex(_) => studies::multiplex(&cfg.multiplex.clone().unwrap_or_default(), d),
        Command::Gates(_) => studies::gates(&cfg.gates.clone().unwrap_or_default(), d),
        Command::Optimize { target, .. } => {
            let o = cfg.optimize.clone().unwrap_or_default();
            studies::optimize(&o, target.unwrap_or(o.target), d, seed)
        }
        Command::Budget(_) => studies::budget(&cfg.budget.clone().unwrap_or_default(), d, seed),
        Command::Endtoend(_) => studies::endtoend(&cfg.endtoend.clone().unwrap_or_default(), d, seed),
    }
}

fn short(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e5) {
        format!("{v:.4e}")
    } else {
        format!("{v:.6}")
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = cli.command.parts();

    let cfg = match ExperimentConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if cfg.experiment != kind {
        eprintln!(
            "error: {}: config is for experiment `{}`, not `{}`",
            common.config.display(),
            cfg.experiment.name(),
            kind.name()
        );
        return ExitCode::from(EXIT_CONFIG);
    }
    let Some(out_dir) = common.out.clone().or_else(|| cfg.output_dir.clone()) else {
        eprintln!("error: no output directory: pass --out or set `output_dir`");
        return ExitCode::from(EXIT_CONFIG);
    };
    let seed = common.seed.unwrap_or(cfg.seed);

    let started = artifacts::unix_seconds();
    let clock = Instant::now();
    let out = match run_study(&cli.command, &cfg, seed) {
        Ok(o) => o,
        Err(e) => {
            let diag = json!({
                "experiment": kind.name(),
                "seed": seed,
                "error": e.to_string(),
                "params": studies::params_json(&cfg.device),
            });
            eprintln!("{}", serde_json::to_string_pretty(&diag).unwrap_or_default());
            return ExitCode::from(EXIT_NUMERIC);
        }
    };
    let pass = out.checks.iter().all(|c| c.pass);
    let summary = Summary {
        experiment: kind.name(),
        seed,
        pass,
        checks: &out.checks,
        results: &out.results,
    };
    let metadata = json!({
        "experiment": kind.name(),
        "seed": seed,
        "config": common.config.display().to_string(),
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix_s": started,
        "elapsed_s": clock.elapsed().as_secs_f64(),
    });
    if let Err(e) = artifacts::write_all(&out_dir, &summary, &out, metadata) {
        eprintln!("error: writing artifacts to {}: {e}", out_dir.display());
        return ExitCode::from(EXIT_NUMERIC);
    }
    for c in &out.checks {
        println!(
            "{} {}: {} {} {} ({})",
            kind.name(),
            c.name,
            short(c.value),
            c.comparison,
            serde_json::to_string(&c.threshold).unwrap_or_default(),
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    println!("{}: {} -> {}", kind.name(), if pass { "PASS" } else { "FAIL" }, out_dir.display());
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_THRESHOLD)
    }
}
