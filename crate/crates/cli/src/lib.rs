//! Command-line front end for the depth-interval separation toolkit.

pub mod commands;
pub mod config;
pub mod inputs;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::Outcome;
use config::{Config, Overrides};

/// Exit code for a failed verification (e.g. a gradient check).
pub const EXIT_VERIFY: i32 = 1;
/// Exit code for bad usage or unreadable/invalid input.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "adisep", version, about = "Adaptive depth-interval separation toolkit")]
pub struct Cli {
    /// JSON configuration file; flags below take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Number of depth intervals.
    #[arg(long = "nd", global = true, value_name = "N")]
    pub n_d: Option<usize>,
    /// Maximum depth in metres.
    #[arg(long = "dmax", global = true, value_name = "M")]
    pub d_max: Option<f64>,
    /// Soft-separation temperature in metres.
    #[arg(long, global = true, value_name = "T")]
    pub tau: Option<f64>,
    /// Seed for the demo network weights and gradient checks.
    #[arg(long, global = true, value_name = "S")]
    pub seed: Option<u64>,
    /// Print the report as JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a depth PNG into per-interval sub-depth PNGs.
    Separate {
        depth: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Bypass the bound head and use evenly spaced bounds.
        #[arg(long)]
        uniform_bounds: bool,
        /// 8-bit grayscale image of the same size as the depth map.
        #[arg(long, value_name = "PNG")]
        image: Option<PathBuf>,
    },
    /// Export the per-pixel weight map U as an 8-bit PNG.
    Uncertainty {
        depth: PathBuf,
        #[arg(long, value_name = "PNG")]
        out: PathBuf,
        #[arg(long, value_name = "PNG")]
        image: Option<PathBuf>,
        /// Zero the uncertainty head so that U is 0.5 everywhere.
        #[arg(long)]
        zero_head: bool,
    },
    /// AP@40 (3D and BEV) of a results directory against a labels directory.
    Eval {
        #[arg(long, value_name = "DIR")]
        results: PathBuf,
        #[arg(long, value_name = "DIR")]
        labels: PathBuf,
        /// Evaluate only this class.
        #[arg(long)]
        class: Option<String>,
    },
    /// Back-project a depth PNG to an ASCII PLY point cloud.
    ExportCloud {
        depth: PathBuf,
        #[arg(long, value_name = "TXT")]
        calib: PathBuf,
        #[arg(long, value_name = "PLY")]
        out: PathBuf,
        /// Separate first and tag every point with its interval.
        #[arg(long)]
        separated: bool,
        #[arg(long)]
        uniform_bounds: bool,
        #[arg(long, value_name = "PNG")]
        image: Option<PathBuf>,
    },
    /// Finite-difference check of every backward pass.
    Gradcheck {
        /// Number of consecutive seeds, starting at --seed.
        #[arg(long, default_value_t = 20)]
        runs: usize,
        /// Perturb the analytic gradients; the check must then fail.
        #[arg(long)]
        corrupt: bool,
    },
    /// Separation statistics over a directory of depth PNGs for several n_d.
    SweepNd {
        dir: PathBuf,
        /// Comma-separated interval counts.
        #[arg(long, value_delimiter = ',', default_values_t = commands::sweep::DEFAULT_ND)]
        values: Vec<usize>,
    },
}

fn configure_threads() {
    if let Some(n) = std::env::var("ADISEP_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn execute(cli: &Cli) -> anyhow::Result<Outcome> {
    let overrides = Overrides {
        n_d: cli.n_d,
        d_max: cli.d_max,
        tau: cli.tau,
        seed: cli.seed,
    };
    let cfg = Config::load(cli.config.as_deref(), &overrides)?;
    match &cli.command {
        Command::Separate {
            depth,
            out,
            uniform_bounds,
            image,
        } => Outcome::new(&commands::separate::run(&cfg, depth, out, image.as_deref(), *uniform_bounds)?),
        Command::Uncertainty {
            depth,
            out,
            image,
            zero_head,
        } => Outcome::new(&commands::uncertainty::run(&cfg, depth, out, image.as_deref(), *zero_head)?),
        Command::Eval { results, labels, class } => {
            Outcome::new(&commands::eval::run(&cfg, results, labels, class.as_deref())?)
        }
        Command::ExportCloud {
            depth,
            calib,
            out,
            separated,
            uniform_bounds,
            image,
        } => Outcome::new(&commands::export::run(
            &cfg,
            depth,
            calib,
            out,
            *separated,
            *uniform_bounds,
            image.as_deref(),
        )?),
        Command::Gradcheck { runs, corrupt } => {
            let report = commands::gradcheck::run(cfg.seed, *runs, *corrupt)?;
            let mut outcome = Outcome::new(&report)?;
            outcome.verified = report.passed;
            Ok(outcome)
        }
        Command::SweepNd { dir, values } => Outcome::new(&commands::sweep::run(&cfg, dir, values)?),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    configure_threads();
    match execute(&cli) {
        Ok(outcome) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&outcome.json).expect("report serialises"));
            } else {
                println!("{}", outcome.text);
            }
            if outcome.verified {
                0
            } else {
                EXIT_VERIFY
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}
