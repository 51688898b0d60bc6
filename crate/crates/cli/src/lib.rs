//! The `anglekit` command line: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
//! failure.

mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use args::{
    AdamArgs, AugmentMode, ExtractorArgs, HeadArgs, PreprocessArgs, SynthArgs, TrainArgs,
};

/// A command-line mistake found after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "anglekit", version, about = "Doppler angle estimation from B-mode images")]
pub struct Cli {
    /// Worker threads for batch math; 1 gives the reference single-threaded run
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Global seed
    #[arg(long, global = true, env = "ANGLEKIT_SEED", default_value_t = 0)]
    pub seed: u64,
    /// JSON object whose keys are flag names; its values replace the built-in defaults
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Log progress to standard error (repeat for more detail)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic vessel images with a manifest and a label file
    Synth {
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Split a manifest into train and test manifests, keeping each origin on one side
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Fraction of origins assigned to training
        #[arg(long, default_value_t = anglekit::config::RunConfig::default().train_fraction)]
        train_fraction: f64,
        /// Output directory for train.csv and test.csv
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a manifest of originals from an annotation label file
    Ingest {
        /// Label CSV with image_id,x1,y1,x2,y2,theta_deg
        #[arg(long)]
        labels: PathBuf,
        /// Directory holding <image_id>.png or <image_id>.pgm
        #[arg(long)]
        images: PathBuf,
        /// Output manifest path
        #[arg(long)]
        out: PathBuf,
    },
    /// Rotate originals and write the augmented images and manifest
    Augment {
        /// Manifest of originals
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = AugmentMode::Grid)]
        mode: AugmentMode,
        /// Random rotations per original (random mode)
        #[arg(long, default_value_t = 1)]
        copies: usize,
        /// Value written where a rotation samples outside the source image
        #[arg(long, default_value_t = args::default_fill())]
        fill: f64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract builtin features for a manifest, or import an external tensor
    Features {
        #[arg(long)]
        manifest: PathBuf,
        /// Output feature file
        #[arg(long)]
        out: PathBuf,
        /// Existing feature file to validate against the manifest and copy
        #[arg(long)]
        import: Option<PathBuf>,
        #[command(flatten)]
        preprocess: PreprocessArgs,
        #[command(flatten)]
        extractor: ExtractorArgs,
    },
    /// Train the regression head
    Train {
        /// Training manifest (augmented for grid-offline, originals for random-on-the-fly)
        #[arg(long)]
        manifest: PathBuf,
        /// Feature file aligned with the manifest (grid-offline)
        #[arg(long)]
        features: Option<PathBuf>,
        /// Output directory for model.akpt, history.csv and config.json
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        head: HeadArgs,
        #[command(flatten)]
        adam: AdamArgs,
        #[command(flatten)]
        preprocess: PreprocessArgs,
        #[command(flatten)]
        extractor: ExtractorArgs,
    },
    /// Predict angles for a manifest and write a predictions CSV
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Output predictions CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute metrics and binned errors from a predictions CSV
    Report {
        #[arg(long)]
        predictions: PathBuf,
        /// Output directory for report.json and scatter.csv
        #[arg(long)]
        out: PathBuf,
        /// Interior bin edges in degrees
        #[arg(long, value_delimiter = ',', default_values_t = args::default_bin_edges())]
        bin_edges: Vec<f64>,
        /// True angles below this many degrees make MAPE undefined
        #[arg(long, default_value_t = args::default_mape_floor())]
        mape_floor: f64,
        /// JSON file embedded in the report as its config (e.g. a training config.json)
        #[arg(long)]
        run_config: Option<PathBuf>,
    },
    /// Blood velocity from a Doppler shift and an insonation angle
    Velocity {
        /// Doppler shift, Hz
        #[arg(long, allow_negative_numbers = true)]
        fd: f64,
        /// Transmit frequency, Hz
        #[arg(long)]
        f0: f64,
        /// Speed of sound, m/s
        #[arg(long, default_value_t = 1540.0)]
        c: f64,
        /// Insonation angle, degrees
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
        /// Also print the relative velocity error for an angle error of this many degrees
        #[arg(long, allow_negative_numbers = true)]
        delta: Option<f64>,
    },
    /// Serve the annotation HTTP API
    Annotate {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Directory of images to annotate
        #[arg(long)]
        images: PathBuf,
        /// Label CSV, created on the first annotation
        #[arg(long)]
        labels: PathBuf,
        /// Built UI bundle served at /
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Errors are reported on standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cmd = match config::apply_defaults(Cli::command(), &argv) {
        Ok(cmd) => cmd,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    let cli = match cmd
        .try_get_matches_from(&argv)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

pub fn exit_code(e: &anyhow::Error) -> i32 {
    use anglekit::Error as E;
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        let core = cause
            .downcast_ref::<E>()
            .or_else(|| match cause.downcast_ref::<anglekit_annotate::StoreError>() {
                Some(anglekit_annotate::StoreError::Data(inner)) => Some(inner),
                _ => None,
            });
        match core {
            Some(E::InvalidArgument(_)) => return 1,
            Some(E::Numeric(_)) => return 3,
            Some(_) => return 2,
            None => {}
        }
    }
    2
}
