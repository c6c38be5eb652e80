//! Experiment driver for `lawnsim`: layered configuration, named experiments
//! that write CSV tables, and optional SVG rendering of those tables.

pub mod config;
pub mod error;
pub mod experiments;
pub mod plots;

use std::fs;
use std::path::PathBuf;

use clap::Parser;

pub use config::Config;
pub use error::CliError;
pub use experiments::{Artifact, Experiment, Outcome};
pub use plots::PlotKind;

#[derive(Debug, Parser)]
#[command(name = "lawnsim", version, about = "Drone handover simulator with sensing-assisted triggers")]
pub struct Cli {
    /// TOML configuration file; missing keys keep their defaults.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `scenario.pilot_ratio=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, value_enum, required_unless_present = "render")]
    pub experiment: Option<Experiment>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (defaults to one per core).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also render an SVG for every plottable CSV.
    #[arg(long)]
    pub plots: bool,
    /// Add this amount to every analytic probability in `mc-validate`.
    #[arg(long, allow_hyphen_values = true)]
    pub perturb: Option<f64>,
    /// Render an existing CSV instead of running an experiment.
    #[arg(long, value_name = "CSV", conflicts_with = "experiment", requires = "kind")]
    pub render: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<PlotKind>,
}

/// Files written by a run, plus the experiment outcome.
#[derive(Debug)]
pub struct RunReport {
    pub written: Vec<PathBuf>,
    pub outcome: Option<Outcome>,
}

pub fn run(cli: &Cli) -> Result<RunReport, CliError> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.threads {
            if n == 0 {
                return Err(CliError::Usage("--threads must be at least 1".into()));
            }
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::Usage(e.to_string()))?
    };
    pool.install(|| run_inner(cli))
}

fn run_inner(cli: &Cli) -> Result<RunReport, CliError> {
    if let Some(csv) = &cli.render {
        let kind = cli.kind.ok_or_else(|| CliError::Usage("--render needs --kind".into()))?;
        let path = plots::emit_plotdata(csv, kind, &cli.out)?;
        return Ok(RunReport { written: vec![path], outcome: None });
    }
    let exp = cli.experiment.ok_or_else(|| CliError::Usage("--experiment is required".into()))?;
    let config = Config::load(cli.config.as_deref(), &cli.set)?;
    log::info!("running {} (config {}, seed {})", exp.name(), config.hash(), cli.seed);
    let ctx = experiments::Context { config: &config, seed: cli.seed, perturbation: cli.perturb };
    let outcome = experiments::run(exp, &ctx)?;

    // Render before writing so a plotting failure leaves no partial output.
    let mut svgs = Vec::new();
    if cli.plots {
        for a in &outcome.artifacts {
            if let Some(kind) = a.plot {
                let stem = a.file_name.trim_end_matches(".csv");
                svgs.push((format!("{stem}.svg"), plots::render(&a.bytes, kind)?));
            }
        }
    }
    fs::create_dir_all(&cli.out)?;
    let mut written = Vec::new();
    for a in &outcome.artifacts {
        let p = cli.out.join(&a.file_name);
        fs::write(&p, &a.bytes)?;
        written.push(p);
    }
    for (name, svg) in svgs {
        let p = cli.out.join(name);
        fs::write(&p, svg)?;
        written.push(p);
    }
    if outcome.validation_passed == Some(false) {
        return Err(CliError::Validation(outcome.summary.join("; ")));
    }
    Ok(RunReport { written, outcome: Some(outcome) })
}
