use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dephlab::quadrature;
use dephlab::scenario::{self, Axis, Outcome, Scenario};

/// Batch runner for pure-dephasing scenarios.
#[derive(Debug, Parser)]
#[command(name = "dephlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Print quadrature counters to stderr when done.
    #[arg(long, global = true)]
    quadrature_stats: bool,

    /// Relative quadrature tolerance (overrides numerics.tolerance).
    #[arg(long, global = true, value_name = "REL")]
    tolerance: Option<f64>,

    /// Output directory (overrides `output`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario.
    Run { config: PathBuf },
    /// Run a scenario once per value of a parameter axis.
    Sweep {
        config: PathBuf,
        /// alpha0, log_power, T or z
        #[arg(long)]
        axis: String,
        /// Comma-separated values (overrides the [sweep] list).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
    },
}

fn load(path: &Path, cli: &Cli) -> Result<Scenario, String> {
    let mut s = Scenario::load(path).map_err(|e| e.to_string())?;
    if let Some(t) = cli.tolerance {
        s.numerics.tolerance = t;
    }
    if let Some(out) = &cli.out {
        s.output = out.display().to_string();
    }
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

fn execute(cli: &Cli) -> Result<(Outcome, PathBuf), String> {
    match &cli.command {
        Command::Run { config } => {
            let s = load(config, cli)?;
            Ok((scenario::run(&s), PathBuf::from(&s.output)))
        }
        Command::Sweep { config, axis, values } => {
            let mut s = load(config, cli)?;
            let axis = Axis::parse(axis).map_err(|e| e.to_string())?;
            if let Some(v) = values {
                s.set_axis_values(axis, v.clone());
            }
            let out = scenario::sweep(&s, axis).map_err(|e| e.to_string())?;
            Ok((out, PathBuf::from(&s.output)))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (outcome, dir) = match execute(&cli) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = outcome.write(&dir) {
        eprintln!("error: writing {}: {e}", dir.display());
        return ExitCode::from(1);
    }
    for (what, msg) in &outcome.failures {
        eprintln!("failed: {what}: {msg}");
    }
    if cli.quadrature_stats {
        let st = quadrature::stats();
        eprintln!(
            "quadrature: {} integrals, {} evaluations, {} oscillatory, {} failures",
            st.integrals, st.evaluations, st.oscillatory, st.failures
        );
    }
    ExitCode::from(outcome.exit_code() as u8)
}
