use std::path::PathBuf;
use std::process::ExitCode;

use botdr_core::Branch;
use clap::{Parser, Subcommand};

mod commands;
mod svg;

#[derive(Parser)]
#[command(name = "botdr", version, about = "Photon-counting BOTDR simulator and retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one branch of the interferometer voltage-to-frequency map.
    Calibrate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        branch: Branch,
        #[arg(long)]
        out: PathBuf,
        /// Free spectral range, MHz.
        #[arg(long, default_value_t = 4020.0)]
        fsr: f64,
        /// Peak threshold as a fraction of the trace maximum.
        #[arg(long, default_value_t = botdr_core::calibration::DEFAULT_MIN_PROMINENCE)]
        min_prominence: f64,
        /// Keep the other branch of an existing map at `--out`.
        #[arg(long)]
        merge: bool,
    },
    /// Write a synthetic calibration trace for one branch.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        branch: Branch,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a photon-count histogram.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Plan the scan with this calibration instead of the exact actuator
        /// response.
        #[arg(long)]
        cal: Option<PathBuf>,
        #[arg(long)]
        serial: bool,
    },
    /// Retrieve a temperature/strain profile from a histogram.
    Retrieve {
        #[arg(long)]
        hist: PathBuf,
        #[arg(long)]
        cal: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        serial: bool,
    },
    /// Calibrate, simulate and retrieve, then compare with the configured fiber.
    Roundtrip {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Plot a retrieved profile, optionally with fitted bin spectra.
    Report {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, requires = "cal")]
        hist: Option<PathBuf>,
        #[arg(long, requires = "hist")]
        cal: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Bins to overlay; defaults to four spread along the fiber.
        #[arg(long, value_delimiter = ',')]
        bins: Vec<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate {
            trace,
            branch,
            out,
            fsr,
            min_prominence,
            merge,
        } => commands::calibrate(&trace, branch, &out, fsr, min_prominence, merge),
        Command::Trace { config, branch, out } => commands::trace(&config, branch, &out),
        Command::Simulate {
            config,
            out,
            cal,
            serial,
        } => commands::simulate(&config, &out, cal.as_deref(), serial),
        Command::Retrieve {
            hist,
            cal,
            config,
            out,
            serial,
        } => commands::retrieve(&hist, &cal, &config, &out, serial),
        Command::Roundtrip { config, out_dir } => commands::roundtrip(&config, &out_dir),
        Command::Report {
            profile,
            out,
            hist,
            cal,
            config,
            bins,
        } => commands::report(&profile, &out, hist.as_deref(), cal.as_deref(), config.as_deref(), &bins),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.record());
            ExitCode::from(failure.exit_code())
        }
    }
}
