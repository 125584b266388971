//! Command line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use super::config::ExperimentConfig;
use super::scenarios::{run, validate};
use crate::error::{Error, Result};
use crate::measures::{hellinger, kl_divergence, total_variation, DiscreteMeasure};
use crate::metric_space::{build_grid_space, FiniteMetricSpace};
use crate::prob_metrics::{prokhorov, prokhorov_oracle, ORACLE_SUPPORT_LIMIT};

#[derive(Debug, Parser)]
#[command(name = "brittle", version, about = "Robustness experiments for Bayesian posteriors on finite grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write report.json and curves.csv.
    Run(RunArgs),
    /// Check a config and its preconditions without sampling.
    Validate(RunArgs),
    /// Compute every metric between two measures given in a JSON file.
    Oracle { measures: PathBuf },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(value_name = "CONFIG", required_unless_present = "config_flag", conflicts_with = "config_flag")]
    config: Option<PathBuf>,
    #[arg(long = "config", value_name = "PATH")]
    config_flag: Option<PathBuf>,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Root seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let path = self.config.as_ref().or(self.config_flag.as_ref()).expect("clap requires a config");
        let mut config = ExperimentConfig::load(path)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output = Some(out.clone());
        }
        Ok(config)
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let config = args.load()?;
            let report = with_threads(args.threads, || run(&config))?;
            let dir = config.output.clone().unwrap_or_else(|| PathBuf::from("results"));
            report.write_to(&dir)?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "wrote {} and {}", dir.join("report.json").display(), dir.join("curves.csv").display())?;
            for c in &report.criteria {
                let at = c.n.map_or("-".to_string(), |n| n.to_string());
                let value = c.value.map_or("missing".to_string(), |v| format!("{v:.6}"));
                let verdict = if c.passed { "pass" } else { "fail" };
                writeln!(out, "criterion {} at n = {at}: {value} {verdict}", c.criterion.diagnostic)?;
            }
            report.ensure_invariants()
        }
        Command::Validate(args) => {
            let config = args.load()?;
            let resolved = with_threads(args.threads, || validate(&config))?;
            println!("{}", serde_json::to_string_pretty(&resolved)?);
            Ok(())
        }
        Command::Oracle { measures } => {
            println!("{}", serde_json::to_string_pretty(&oracle(&measures)?)?);
            Ok(())
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(f),
    }
}

/// Input of the `oracle` subcommand: a space given by coordinates or a
/// distance matrix, and two weight vectors on it.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleInput {
    #[serde(default)]
    points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    distances: Option<Vec<Vec<f64>>>,
    mu: Vec<f64>,
    nu: Vec<f64>,
}

fn oracle(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let input: OracleInput = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let space = match (input.points, input.distances) {
        (Some(p), None) => build_grid_space(&p)?,
        (None, Some(d)) => FiniteMetricSpace::from_matrix(d)?,
        _ => return Err(Error::Config("give exactly one of points and distances".into())),
    };
    let space = Arc::new(space);
    let mu = DiscreteMeasure::new(space.clone(), input.mu)?;
    let nu = DiscreteMeasure::new(space, input.nu)?;
    let small = mu.support().len() <= ORACLE_SUPPORT_LIMIT && nu.support().len() <= ORACLE_SUPPORT_LIMIT;
    Ok(json!({
        "total_variation": total_variation(&mu, &nu)?,
        "hellinger": hellinger(&mu, &nu)?,
        // null when infinite
        "kl_mu_nu": finite(kl_divergence(&mu, &nu)?),
        "kl_nu_mu": finite(kl_divergence(&nu, &mu)?),
        "prokhorov": prokhorov(&mu, &nu)?,
        "prokhorov_oracle": if small { Some(prokhorov_oracle(&mu, &nu)?) } else { None },
    }))
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}
