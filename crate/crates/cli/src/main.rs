mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, StepsSetting};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "levcycle", version, about = "Leverage-cycle skeleton maps, stability analysis and Monte Carlo runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Orbit of a deterministic map, or its fixed point and Jacobian spectrum.
    Skeleton {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fixed_point: bool,
    },
    /// Tabulates a scalar map and its derivative over the leverage domain.
    Map1d {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 400)]
        points: usize,
    },
    /// Attractor samples over a parameter grid.
    Bifurcate {
        #[command(flatten)]
        common: Common,
    },
    /// Largest Lyapunov exponent, at one point or over a grid.
    Lyapunov {
        #[command(flatten)]
        common: Common,
        /// Check the estimator on the logistic map at r = 4.
        #[arg(long)]
        validate_logistic: bool,
    },
    /// Flip and stationarity-exit memories.
    Boundaries {
        #[command(flatten)]
        common: Common,
    },
    /// Boundary memories over a two-parameter grid.
    Contour {
        #[command(flatten)]
        common: Common,
    },
    /// Linear-noise leverage envelope for a list of window lengths.
    Perturb {
        #[command(flatten)]
        common: Common,
    },
    /// One stochastic run.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// csv (per-period table) or json (full trajectory).
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Amplitude statistics over seeds.
    Ensemble {
        #[command(flatten)]
        common: Common,
    },
}

/// Flags shared by every subcommand. Each overrides the matching config key.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML file (or JSON when it ends in .json).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the effective configuration as JSON.
    #[arg(long)]
    pub emit_config: Option<PathBuf>,

    #[arg(long = "M")]
    pub assets: Option<u32>,
    #[arg(long = "N")]
    pub banks: Option<u32>,
    #[arg(long)]
    pub nim: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Idiosyncratic volatility sqrt(Sigma_eps).
    #[arg(long)]
    pub sigma_eps: Option<f64>,
    #[arg(long)]
    pub sigma_f_ratio: Option<f64>,
    #[arg(long = "A0")]
    pub a0: Option<f64>,
    #[arg(long = "E0")]
    pub e0: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    /// Fast steps per period, or "inf".
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub drift: Option<f64>,

    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub param: Option<String>,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    /// Number of grid points.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub y_param: Option<String>,
    #[arg(long)]
    pub y_from: Option<f64>,
    #[arg(long)]
    pub y_to: Option<f64>,
    #[arg(long)]
    pub y_steps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub n_values: Option<Vec<u32>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of seeds, counted up from --seed.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long = "T")]
    pub periods: Option<usize>,
    #[arg(long)]
    pub transient: Option<usize>,
    #[arg(long)]
    pub record: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// recapitalize or halt.
    #[arg(long)]
    pub insolvency: Option<String>,
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field.clone() { c.$field = v; } )* };
        }
        macro_rules! set_opt {
            ($($field:ident),*) => { $( if self.$field.is_some() { c.$field = self.$field.clone(); } )* };
        }
        set!(assets, banks, nim, gamma, sigma_eps, sigma_f_ratio, a0, c, alpha, omega, drift, seed, seeds);
        set_opt!(e0, kind, param, from, to, steps, y_param, y_from, y_to, y_steps, n_values, periods, transient, record, iterations, insolvency);
        if let Some(n) = &self.n {
            c.n = match n.parse::<u32>() {
                Ok(k) => StepsSetting::Count(k),
                Err(_) => StepsSetting::Label(n.clone()),
            };
        }
        Ok(c)
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("LEVCYCLE_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| CliError::Config(format!("LEVCYCLE_THREADS must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(CliError::Config("LEVCYCLE_THREADS must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let (common, bytes) = match &cli.command {
        Command::Skeleton { common, fixed_point } => (common, commands::skeleton(&common.resolve()?, *fixed_point)?),
        Command::Map1d { common, points } => (common, commands::map1d(&common.resolve()?, *points)?),
        Command::Bifurcate { common } => (common, commands::bifurcate(&common.resolve()?)?),
        Command::Lyapunov { common, validate_logistic } => (common, commands::lyapunov(&common.resolve()?, *validate_logistic)?),
        Command::Boundaries { common } => (common, commands::boundaries(&common.resolve()?)?),
        Command::Contour { common } => (common, commands::contour(&common.resolve()?)?),
        Command::Perturb { common } => (common, commands::perturb(&common.resolve()?)?),
        Command::Simulate { common, format } => (common, commands::simulate(&common.resolve()?, format)?),
        Command::Ensemble { common } => (common, commands::ensemble(&common.resolve()?)?),
    };
    if let Some(path) = &common.emit_config {
        std::fs::write(path, output::json(&common.resolve()?)?).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    match &common.out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().lock().write_all(&bytes).map_err(CliError::from)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
