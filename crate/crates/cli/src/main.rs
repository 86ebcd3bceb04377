//! `esta`: derived units, trajectory export and the fidelity, robustness,
//! noise and deviation sweeps.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, RawConfig};

#[derive(Parser)]
#[command(name = "esta", version, about = "eSTA atom transport in an optical lattice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flat `key = value` file; see README for the keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also render SVG plots next to the CSV files.
    #[arg(long)]
    svg: bool,
    /// Override any config key, e.g. `--set dt_over_tau=0.00025`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the natural units derived from the physical parameters.
    Units {
        #[command(flatten)]
        common: Common,
    },
    /// Export q_c, q_0 and the eSTA trajectory Q for each configured family.
    Trajectory {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tf: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Compute the eSTA correction ε and the amplitudes G_n.
    Epsilon {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tf: Option<f64>,
        /// Trajectory family 1, 2 or 3.
        #[arg(long)]
        family: Option<usize>,
    },
    /// Transport fidelity of STA and eSTA trajectories over the t_f grid.
    Fidelity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tf_max: Option<f64>,
    },
    /// Sensitivity and error bound for systematic lattice errors.
    Robustness {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tf_max: Option<f64>,
        /// Comma-separated: correlated, amplitude, wavenumber.
        #[arg(long)]
        error_kind: Option<String>,
        #[arg(long)]
        f_reference: Option<f64>,
        /// Fidelity-vs-δ grid as min:max:step.
        #[arg(long)]
        delta_range: Option<String>,
    },
    /// Noise sensitivity and bound for white lattice noise.
    Noise {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tf_max: Option<f64>,
        /// Comma-separated: position, amplitude.
        #[arg(long)]
        noise_kind: Option<String>,
        #[arg(long)]
        f_reference: Option<f64>,
        /// Also estimate S_N by Monte Carlo with this many noise paths.
        #[arg(long)]
        mc_realizations: Option<usize>,
    },
    /// L1 deviation C_Q of the eSTA control per unit systematic error.
    Deviation {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tf_max: Option<f64>,
        #[arg(long)]
        error_kind: Option<String>,
        /// Use the closed-form ∂ε/∂δ instead of finite differences.
        #[arg(long)]
        analytic: bool,
    },
}

enum Failure {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

fn load(common: &Common, extra: &[(&str, Option<String>)]) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            key: "config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        raw.merge_text(&text)?;
    }
    for pair in &common.set {
        raw.set_pair(pair)?;
    }
    let flags = [
        ("out_dir", common.out_dir.as_ref().map(|p| p.display().to_string())),
        ("workers", common.workers.map(|w| w.to_string())),
        ("seed", common.seed.map(|s| s.to_string())),
        ("svg", common.svg.then(|| "true".to_string())),
    ];
    for (key, value) in flags.iter().chain(extra) {
        if let Some(v) = value {
            raw.set(key, v)?;
        }
    }
    Ok(raw)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let s = |x: Option<f64>| x.map(|v| v.to_string());
    let (common, extra): (&Common, Vec<(&str, Option<String>)>) = match &cli.command {
        Command::Units { common } => (common, vec![]),
        Command::Trajectory { common, tf, samples } => (common, vec![("tf", s(*tf)), ("samples", samples.map(|n| n.to_string()))]),
        Command::Epsilon { common, tf, family } => (common, vec![("tf", s(*tf)), ("family", family.map(|f| f.to_string()))]),
        Command::Fidelity { common, tf_max } => (common, vec![("tf_max", s(*tf_max))]),
        Command::Robustness { common, tf_max, error_kind, f_reference, delta_range } => (
            common,
            vec![
                ("tf_max", s(*tf_max)),
                ("error_kinds", error_kind.clone()),
                ("f_reference", s(*f_reference)),
                ("delta_range", delta_range.clone()),
            ],
        ),
        Command::Noise { common, tf_max, noise_kind, f_reference, mc_realizations } => (
            common,
            vec![
                ("tf_max", s(*tf_max)),
                ("noise_kinds", noise_kind.clone()),
                ("f_reference", s(*f_reference)),
                ("mc_realizations", mc_realizations.map(|n| n.to_string())),
            ],
        ),
        Command::Deviation { common, tf_max, error_kind, analytic } => (
            common,
            vec![
                ("tf_max", s(*tf_max)),
                ("deviation_kind", error_kind.clone()),
                ("derivative_method", analytic.then(|| "analytic".to_string())),
            ],
        ),
    };
    let cfg = load(common, &extra)?.build()?;
    if let Command::Units { .. } = cli.command {
        return commands::units(&cfg).map_err(Failure::Runtime);
    }
    let ctx = commands::Context::new(cfg).map_err(Failure::Runtime)?;
    let result = match cli.command {
        Command::Units { .. } => unreachable!(),
        Command::Trajectory { .. } => commands::trajectory(&ctx),
        Command::Epsilon { .. } => commands::epsilon(&ctx),
        Command::Fidelity { .. } => commands::fidelity(&ctx),
        Command::Robustness { .. } => commands::robustness(&ctx),
        Command::Noise { .. } => commands::noise(&ctx),
        Command::Deviation { .. } => commands::deviation(&ctx),
    };
    result.map_err(Failure::Runtime)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
