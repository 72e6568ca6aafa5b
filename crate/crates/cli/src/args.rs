use std::fmt;
use std::ops::Range;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum, ValueHint};
use plumekit::spectral::SolarEnvelope;
use serde::{Serialize, Serializer};

#[derive(Debug, Parser)]
#[command(
    name = "plumekit",
    version,
    about = "Methane plume retrieval, synthesis, detection and scoring"
)]
pub struct Cli {
    /// JSON config; its keys fill flags not given on the command line
    #[arg(long, global = true, value_name = "JSON", value_hint = ValueHint::FilePath)]
    pub config: Option<PathBuf>,

    /// Worker threads (all cores when omitted); outputs do not depend on it
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Run-report path (defaults next to the primary output)
    #[arg(long, global = true, value_name = "JSON", value_hint = ValueHint::FilePath)]
    pub run_report: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit per-column wavelength offsets of a radiance cube
    Recalibrate(RecalibrateArgs),
    /// Matched-filter XCH4 enhancement map of a radiance cube
    Retrieve(RetrieveArgs),
    /// Build a plume-transfer dataset from a manifest
    Synth(SynthArgs),
    /// Gaussian-plume scene with ground truth
    Simulate(SimulateArgs),
    /// Hysteresis masks from a probability or XCH4 map
    Detect(DetectArgs),
    /// Score predicted masks against truth masks
    Evaluate(EvaluateArgs),
    /// Score every (low, high) hysteresis pair over a dataset
    Sweep(SweepArgs),
    /// Pick the best thresholds from a sweep table
    SelectBest(SelectBestArgs),
    /// Simulated scene through recalibration, retrieval, detection and scoring
    Pipeline(PipelineArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Recalibrate(_) => "recalibrate",
            Command::Retrieve(_) => "retrieve",
            Command::Synth(_) => "synth",
            Command::Simulate(_) => "simulate",
            Command::Detect(_) => "detect",
            Command::Evaluate(_) => "evaluate",
            Command::Sweep(_) => "sweep",
            Command::SelectBest(_) => "select-best",
            Command::Pipeline(_) => "pipeline",
        }
    }

    pub fn params(&self) -> serde_json::Value {
        let v = match self {
            Command::Recalibrate(a) => serde_json::to_value(a),
            Command::Retrieve(a) => serde_json::to_value(a),
            Command::Synth(a) => serde_json::to_value(a),
            Command::Simulate(a) => serde_json::to_value(a),
            Command::Detect(a) => serde_json::to_value(a),
            Command::Evaluate(a) => serde_json::to_value(a),
            Command::Sweep(a) => serde_json::to_value(a),
            Command::SelectBest(a) => serde_json::to_value(a),
            Command::Pipeline(a) => serde_json::to_value(a),
        };
        v.unwrap_or(serde_json::Value::Null)
    }
}

/// Half-open band range written `start:end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandWindow {
    pub start: usize,
    pub end: usize,
}

impl BandWindow {
    pub fn range(self) -> Range<usize> {
        self.start..self.end
    }
}

impl FromStr for BandWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected start:end, got {s:?}"))?;
        let start = a.trim().parse().map_err(|e| format!("bad window start {a:?}: {e}"))?;
        let end = b.trim().parse().map_err(|e| format!("bad window end {b:?}: {e}"))?;
        if start >= end {
            return Err(format!("window {s:?} is empty"));
        }
        Ok(Self { start, end })
    }
}

impl fmt::Display for BandWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

impl Serialize for BandWindow {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Solar {
    Flat,
    Sun,
}

impl Solar {
    pub fn envelope(self) -> SolarEnvelope {
        match self {
            Solar::Flat => SolarEnvelope::Flat,
            Solar::Sun => SolarEnvelope::SUN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionArg {
    Iou,
    F1,
}

impl From<CriterionArg> for plumekit::metrics::Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Iou => plumekit::metrics::Criterion::Iou,
            CriterionArg::F1 => plumekit::metrics::Criterion::F1,
        }
    }
}

fn connectivity(s: &str) -> Result<u8, String> {
    match s {
        "4" => Ok(4),
        "8" => Ok(8),
        _ => Err(format!("connectivity must be 4 or 8, got {s:?}")),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RecalibrateArgs {
    /// Radiance cube header (JSON)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub cube: Option<PathBuf>,
    /// Atmospheric transmittance CSV (wavelength_nm,value)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub transmittance: Option<PathBuf>,
    /// Illumination envelope of the reference spectrum
    #[arg(long, value_enum, default_value = "sun")]
    pub solar: Solar,
    /// Offset search interval is [-half_width, +half_width] nm
    #[arg(long, default_value_t = 4.0)]
    pub half_width: f64,
    /// Bands used for the fit, start:end (all when omitted)
    #[arg(long)]
    pub window: Option<BandWindow>,
    /// Per-column offsets (JSON)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub out: Option<PathBuf>,
    /// Methane cross-section CSV, optical depth per ppm
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub cross_section: Option<PathBuf>,
    /// Jacobian CSV at the scene-mean corrected calibration (needs --cross-section)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub jacobian_out: Option<PathBuf>,
    /// Copy of the cube carrying the corrected calibration
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub corrected_cube: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RetrieveArgs {
    /// Radiance cube header (JSON)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub cube: Option<PathBuf>,
    /// Unit absorption Jacobian CSV (band_index,k_per_ppb)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub jacobian: Option<PathBuf>,
    /// Covariance shrinkage toward the scaled identity, in [0, 1]
    #[arg(long, default_value_t = plumekit::matchedfilter::DEFAULT_SHRINKAGE)]
    pub shrinkage: f64,
    /// Bands used by the filter, start:end (all when omitted)
    #[arg(long)]
    pub window: Option<BandWindow>,
    /// XCH4 enhancement map header (JSON)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub out: Option<PathBuf>,
    /// Per-column retrieval diagnostics (JSON)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub report: Option<PathBuf>,
    /// Process columns one at a time
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// Dataset manifest (JSON, seed mandatory)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub manifest: Option<PathBuf>,
    /// Number of samples
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Scene spec (JSON, seed mandatory)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub spec: Option<PathBuf>,
    /// XCH4 enhancement map header (JSON)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub out: Option<PathBuf>,
    /// Ground-truth masks (JSON)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub truth: Option<PathBuf>,
    /// Per-instance SBR and warnings (JSON)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetectArgs {
    /// Probability map header (JSON)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub prob: Option<PathBuf>,
    /// XCH4 enhancement map header (JSON), scored with --baseline
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub xch4: Option<PathBuf>,
    /// Turn --xch4 into probabilities with the robust z-score baseline
    #[arg(long)]
    pub baseline: bool,
    /// Region-growing threshold
    #[arg(long, default_value_t = 0.5)]
    pub low: f64,
    /// Seed threshold
    #[arg(long, default_value_t = 0.9)]
    pub high: f64,
    /// Pixel neighbourhood: 4 or 8
    #[arg(long, default_value = "8", value_parser = connectivity)]
    pub connectivity: u8,
    /// Predicted masks (JSON)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub out: Option<PathBuf>,
    /// Baseline probability map header (JSON)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub prob_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Predicted mask files, one per scene
    #[arg(long, num_args = 1.., value_hint = ValueHint::FilePath)]
    pub pred: Vec<PathBuf>,
    /// Truth mask files, same order as --pred
    #[arg(long, num_args = 1.., value_hint = ValueHint::FilePath)]
    pub truth: Vec<PathBuf>,
    /// Scores (JSON); also printed to stdout
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Probability map headers, one per scene
    #[arg(long, num_args = 1.., value_hint = ValueHint::FilePath)]
    pub prob: Vec<PathBuf>,
    /// Truth mask files, same order as --prob
    #[arg(long, num_args = 1.., value_hint = ValueHint::FilePath)]
    pub truth: Vec<PathBuf>,
    /// Low thresholds, start:end:step or a single value
    #[arg(long, default_value = "0:1:0.05")]
    pub low_grid: String,
    /// High thresholds, start:end:step or a single value
    #[arg(long, default_value = "0:1:0.05")]
    pub high_grid: String,
    /// Pixel neighbourhood: 4 or 8
    #[arg(long, default_value = "8", value_parser = connectivity)]
    pub connectivity: u8,
    /// Sweep table (CSV)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectBestArgs {
    /// Sweep table (CSV)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub table: Option<PathBuf>,
    /// Score to maximize
    #[arg(long, value_enum, default_value = "iou")]
    pub criterion: CriterionArg,
    /// Selected row (JSON); also printed to stdout
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    /// Scene spec (JSON, seed mandatory)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub scene: Option<PathBuf>,
    /// Directory receiving every artifact
    #[arg(long, value_hint = ValueHint::DirPath)]
    pub out_dir: Option<PathBuf>,
    /// Seed for wavelength shifts and radiance noise
    #[arg(long)]
    pub seed: Option<u64>,
    /// Transmittance CSV (built-in toy atmosphere when omitted)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub transmittance: Option<PathBuf>,
    /// Methane cross-section CSV per ppm (built-in toy atmosphere when omitted)
    #[arg(long, value_hint = ValueHint::FilePath)]
    pub cross_section: Option<PathBuf>,
    /// Illumination envelope of the reference spectrum
    #[arg(long, value_enum, default_value = "sun")]
    pub solar: Solar,
    /// Number of bands
    #[arg(long, default_value_t = 40)]
    pub bands: usize,
    /// First band centre (nm)
    #[arg(long, default_value_t = 2150.0)]
    pub band_start: f64,
    /// Last band centre (nm)
    #[arg(long, default_value_t = 2420.0)]
    pub band_end: f64,
    /// Band FWHM in nm (1.1 band spacings when omitted)
    #[arg(long)]
    pub fwhm: Option<f64>,
    /// True per-column shifts are uniform in [-max_shift, +max_shift] nm
    #[arg(long, default_value_t = 1.5)]
    pub max_shift: f64,
    /// Radiance noise std relative to the mean band radiance
    #[arg(long, default_value_t = 0.002)]
    pub radiance_noise: f64,
    /// Recalibration search half-width (nm)
    #[arg(long, default_value_t = 4.0)]
    pub half_width: f64,
    /// Covariance shrinkage, in [0, 1]
    #[arg(long, default_value_t = plumekit::matchedfilter::DEFAULT_SHRINKAGE)]
    pub shrinkage: f64,
    /// Bands used by recalibration and retrieval, start:end
    #[arg(long)]
    pub window: Option<BandWindow>,
    /// Region-growing threshold
    #[arg(long, default_value_t = 0.5)]
    pub low: f64,
    /// Seed threshold
    #[arg(long, default_value_t = 0.9)]
    pub high: f64,
    /// Pixel neighbourhood: 4 or 8
    #[arg(long, default_value = "8", value_parser = connectivity)]
    pub connectivity: u8,
    /// Low thresholds of the sweep table
    #[arg(long, default_value = "0:1:0.05")]
    pub low_grid: String,
    /// High thresholds of the sweep table
    #[arg(long, default_value = "0:1:0.05")]
    pub high_grid: String,
}
