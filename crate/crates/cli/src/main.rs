//! poltherm: vibronic film spectra, net low-frequency-vibration extraction,
//! polariton thermalization rates, and condensation kinetics from one TOML
//! config.

mod commands;
mod config;
mod output;
mod svg;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

use commands::Ctx;
use config::RunConfig;
use output::OutputDir;

const BUNDLED_CONFIG: &str = include_str!("melppp.toml");

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration (exit code 2).
    Usage(String),
    /// Well-posed request that the physics or numerics rejected (exit code 1).
    Domain(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "poltherm",
    version,
    about = "Vibronic spectra, polariton thermalization rates, and condensation simulation"
)]
struct Cli {
    /// TOML configuration; the bundled reference set is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/SVG files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Temperature override, e.g. 300K.
    #[arg(long = "T", global = true)]
    temperature: Option<String>,
    /// Seed for the threshold bracket jitter (outputs are otherwise exact).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Rayon worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also emit SVG plots where available.
    #[arg(long, global = true, default_value_t = false)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emission/absorption spectra of the bare film at one temperature.
    Spectra {
        /// exact | reduced | homogeneous | all
        #[arg(long, default_value = "all")]
        model: String,
    },
    /// Recover (Gamma, A1, A2) from a temperature series of spectra.
    Extract {
        /// Comma-separated temperatures in K for the generated series.
        #[arg(long)]
        temps: Option<String>,
        /// Import measured curves (CSV pairs) instead of generating them.
        #[arg(long)]
        import_dir: Option<PathBuf>,
        /// Model generating the series: reduced | exact.
        #[arg(long, default_value = "reduced")]
        series_model: String,
    },
    /// Polariton branch dispersion and Hopfield fractions.
    Dispersion {
        #[arg(long, default_value_t = 3.0)]
        kmax: f64,
        #[arg(long, default_value_t = 121)]
        points: usize,
    },
    /// Thermalization rates for a single (k, k') pair.
    Rates {
        #[arg(long)]
        k: f64,
        #[arg(long)]
        kprime: f64,
        /// flat_a1 | flat_a2
        #[arg(long, default_value = "flat_a1")]
        density: String,
    },
    /// Nearest-neighbor rate over a (Rabi, ground-state energy) grid.
    Map,
    /// Ground-to-k rates over a temperature grid.
    Ratevt,
    /// Integrate the condensation rate equations.
    Simulate,
    /// Bisect the condensation threshold pump amplitude.
    Threshold,
    /// Regenerate the reference outputs (fig1..fig5) end to end.
    Reproduce { figure: String },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    let (text, name) = match &cli.config {
        Some(path) => (
            std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?,
            path.display().to_string(),
        ),
        None => (BUNDLED_CONFIG.to_string(), "<bundled>".to_string()),
    };
    let cfg = RunConfig::parse(&text, &name)?;
    let subcommand = match &cli.command {
        Command::Spectra { .. } => "spectra",
        Command::Extract { .. } => "extract",
        Command::Dispersion { .. } => "dispersion",
        Command::Rates { .. } => "rates",
        Command::Map => "map",
        Command::Ratevt => "ratevt",
        Command::Simulate => "simulate",
        Command::Threshold => "threshold",
        Command::Reproduce { .. } => "reproduce",
    };
    let out = OutputDir::new(&cli.out, subcommand, &name, &cfg.source_text, cli.seed)?;
    let ctx = Ctx {
        cfg,
        out,
        temperature_flag: cli.temperature.clone(),
        seed: cli.seed,
        svg: cli.svg,
    };
    match &cli.command {
        Command::Spectra { model } => commands::cmd_spectra(&ctx, model),
        Command::Extract {
            temps,
            import_dir,
            series_model,
        } => commands::cmd_extract(&ctx, temps.as_deref(), import_dir.as_ref(), series_model),
        Command::Dispersion { kmax, points } => commands::cmd_dispersion(&ctx, *kmax, *points),
        Command::Rates { k, kprime, density } => commands::cmd_rates(&ctx, *k, *kprime, density),
        Command::Map => commands::cmd_map(&ctx, ""),
        Command::Ratevt => commands::cmd_ratevt(&ctx, ""),
        Command::Simulate => commands::cmd_simulate(&ctx, ""),
        Command::Threshold => commands::cmd_threshold(&ctx),
        Command::Reproduce { figure } => commands::cmd_reproduce(&ctx, figure),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}
