use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "curve-moments", version, about = "Truncated moment problems on plane curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide a problem file and write a solve report.
    Solve {
        /// Problem file (JSON).
        #[arg(long)]
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Write the problem file of a measure's moments.
    Synth {
        /// Measure file, or a solve report carrying a measure.
        #[arg(long)]
        measure: PathBuf,
        /// Truncation degree of the synthesized moments.
        #[arg(long)]
        degree: usize,
        /// Curve shorthand ("y=x^3", "y*x^2=1") or a JSON coefficient list ("[q0, q1, ...]").
        #[arg(long)]
        curve: String,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure how well a measure reproduces a problem file.
    Verify {
        /// Problem file (JSON).
        #[arg(long)]
        input: PathBuf,
        /// Measure file, or a solve report carrying a measure.
        #[arg(long)]
        measure: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Curve relations and moment matrix positivity, without solving.
    Check {
        /// Problem file (JSON).
        #[arg(long)]
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Write the Hankel completion LMI in SDPA sparse format.
    ExportSdpa {
        /// Problem file (JSON).
        #[arg(long)]
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tol: TolArgs,
    },
}

/// Overrides applied on top of the problem file's tolerances.
#[derive(Debug, Clone, Default, Args)]
pub struct TolArgs {
    /// Relative threshold for numerical rank.
    #[arg(long)]
    pub rank_tol: Option<f64>,
    /// Relative threshold for positive semidefiniteness.
    #[arg(long)]
    pub psd_tol: Option<f64>,
    /// Largest accepted relative moment residual.
    #[arg(long)]
    pub residual_tol: Option<f64>,
    /// Iteration cap of the completion solver.
    #[arg(long)]
    pub max_iter: Option<usize>,
}
