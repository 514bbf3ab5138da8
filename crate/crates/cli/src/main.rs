//! `octaq`: phantoms, degradation, quantification and image-set comparison from the shell.
//!
//! Exit codes: 0 success, 1 computation error, 2 argument error.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use report::Failure;

/// Seed used when neither `--seed` nor `OCTAQ_SEED` is given.
pub const DEFAULT_SEED: u64 = 2020;

#[derive(Debug, Parser)]
#[command(name = "octaq", version, about = "Quantitative tools for en-face OCT angiograms")]
struct Cli {
    /// Worker threads for per-image work; defaults to the number of cores.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sampling spacing and required A-line rate of a square raster scan.
    Protocol(ProtocolArgs),
    /// Emit a seeded phantom dataset (trainA/trainB/testA/testB + manifest).
    Phantom(PhantomArgs),
    /// Simulate low-sampling acquisition of one image.
    Degrade(DegradeArgs),
    /// Apply one seeded random augmentation to an image.
    Augment(AugmentArgs),
    /// Vessel maps and the five vascular indices of one image.
    Quantify(QuantifyArgs),
    /// FWHM widths and caliber discrepancy at vessel sites.
    Caliber(CaliberArgs),
    /// Parafoveal signal-to-noise ratio of one image.
    Snr(SnrArgs),
    /// FID and KID of original and generated sets against a reference set.
    Perceptual(PerceptualArgs),
    /// Full comparison of original, generated and reference image sets.
    Evaluate(EvaluateArgs),
    /// Phantoms, degradation, oracle restoration and evaluation in one seeded run.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SeedArg {
    /// Random seed.
    #[arg(long, env = "OCTAQ_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Png,
    Raw,
}

impl From<FormatArg> for octaq_core::RasterFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Png => octaq_core::RasterFormat::Png,
            FormatArg::Raw => octaq_core::RasterFormat::Raw,
        }
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(format!("must be a positive number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        Ok(v) => Err(format!("must be non-negative, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProtocolArgs {
    /// Field of view along one side, millimeters.
    #[arg(long, value_parser = positive)]
    pub fov_mm: f64,
    /// A-lines per transverse direction.
    #[arg(long, conflicts_with = "spacing_um", required_unless_present = "spacing_um",
          value_parser = clap::value_parser!(u32).range(2..))]
    pub samples: Option<u32>,
    /// Sampling spacing, micrometers.
    #[arg(long, value_parser = positive)]
    pub spacing_um: Option<f64>,
    /// Repeated B-scans per location.
    #[arg(long, default_value_t = octaq_core::protocol::DEFAULT_REPEATS,
          value_parser = clap::value_parser!(u32).range(1..))]
    pub repeats: u32,
    /// Acquisition window, seconds.
    #[arg(long, default_value_t = octaq_core::protocol::DEFAULT_DURATION_S, value_parser = positive)]
    pub duration_s: f64,
    /// Optical transverse resolution, micrometers, for the Nyquist check.
    #[arg(long, default_value_t = 15.0, value_parser = positive)]
    pub optical_resolution_um: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PhantomArgs {
    /// Dataset root to create.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 35)]
    pub n_train: usize,
    #[arg(long, default_value_t = 5)]
    pub n_test: usize,
    /// Augmented copies per training image.
    #[arg(long, default_value_t = 7)]
    pub augment_factor: usize,
    #[arg(long, value_enum, default_value_t = FormatArg::Png)]
    pub format: FormatArg,
    /// JSON phantom spec; missing fields take defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// JSON degradation parameters.
    #[arg(long)]
    pub degrade: Option<PathBuf>,
    /// JSON augmentation ranges.
    #[arg(long)]
    pub augment: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DegradeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output raster; `.png` or `.raw` selects the format.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 22.86, value_parser = positive)]
    pub coarse_spacing_um: f64,
    #[arg(long, default_value_t = 10.0, value_parser = non_negative)]
    pub psf_sigma_um: f64,
    #[arg(long, default_value_t = 0.04, value_parser = non_negative)]
    pub speckle_sigma: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AugmentArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON augmentation ranges; missing fields take defaults.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QuantifyArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// `auto` for the central 0.6 mm disc, otherwise a PNG mask.
    #[arg(long, default_value = "auto")]
    pub faz: String,
    /// Report path; standard output when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for area, skeleton and perimeter PNG maps.
    #[arg(long)]
    pub maps_dir: Option<PathBuf>,
    /// Adaptive-threshold sensitivity in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub sensitivity: f64,
    /// Odd adaptive-threshold window in pixels; derived from the image size when omitted.
    #[arg(long)]
    pub window_px: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CaliberArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// JSON list of sites `{"p0_um": [x, y], "p1_um": [x, y]}`.
    #[arg(long)]
    pub sites: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SnrArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = "auto")]
    pub faz: String,
    #[arg(long, default_value_t = 2500.0, value_parser = positive)]
    pub outer_um: f64,
    #[arg(long, default_value_t = 600.0, value_parser = positive)]
    pub inner_um: f64,
    /// Annulus center `x,y` in micrometers; the image center when omitted.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub center_um: Option<Vec<f64>>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PerceptualArgs {
    #[arg(long)]
    pub orig: Option<PathBuf>,
    #[arg(long)]
    pub gen: Option<PathBuf>,
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = octaq_core::evaluate::DEFAULT_DIMS)]
    pub dims: Vec<usize>,
    /// Read `<dir>/{original,generated,reference}/features_<d>.csv` instead of images.
    #[arg(long)]
    pub features_from: Option<PathBuf>,
    /// Write the built-in features in the `--features-from` layout.
    #[arg(long)]
    pub export_features: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write the metric table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub orig: PathBuf,
    #[arg(long)]
    pub gen: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// `auto` for the central 0.6 mm disc, otherwise a directory of `<stem>_faz.png` masks.
    #[arg(long, default_value = "auto")]
    pub faz: String,
    #[arg(long, value_delimiter = ',', default_values_t = octaq_core::evaluate::DEFAULT_DIMS)]
    pub dims: Vec<usize>,
    /// JSON caliber sites, each naming its image stem.
    #[arg(long)]
    pub sites: Option<PathBuf>,
    #[arg(long)]
    pub features_from: Option<PathBuf>,
    /// Directory for `bundle.json` and `summary.txt`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the biomarker and SNR table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DemoArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArg,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j as usize).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Protocol(a) => commands::protocol(a),
        Command::Phantom(a) => commands::phantom(a),
        Command::Degrade(a) => commands::degrade(a),
        Command::Augment(a) => commands::augment(a),
        Command::Quantify(a) => commands::quantify(a),
        Command::Caliber(a) => commands::caliber(a),
        Command::Snr(a) => commands::snr(a),
        Command::Perceptual(a) => commands::perceptual(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Demo(a) => commands::demo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
