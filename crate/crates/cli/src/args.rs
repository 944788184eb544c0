use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::error::{Failure, Outcome};

#[derive(Parser, Debug)]
#[command(
    name = "densetrack",
    version,
    about = "Turn sparse video box annotations into dense ones by bidirectional tracking"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic clips with dense ground truth and sparse seeds
    Synth(SynthArgs),
    /// Track every sparse seed forwards and backwards into dense pseudo labels
    Densify(DensifyArgs),
    /// Fuse detection files from several models with joint NMS
    Ensemble(EnsembleArgs),
    /// Score detections against ground truth at several IoU thresholds
    Eval(EvalArgs),
    /// Print anchor-free regression targets and loss for a JSON problem
    FcosTargets(FcosArgs),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Synth(a) => &a.common,
            Command::Densify(a) => &a.common,
            Command::Ensemble(a) => &a.common,
            Command::Eval(a) => &a.common,
            Command::FcosTargets(a) => &a.common,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// File of `key = value` lines giving defaults for this subcommand's flags
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads [default: logical cores]
    #[arg(long, value_name = "N")]
    pub parallel: Option<NonZeroUsize>,
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn keep_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1]"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be a finite non-negative number"))
    }
}

#[derive(Args, Debug, Clone)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Number of clips
    #[arg(long, default_value_t = 1)]
    pub clips: usize,
    /// Frames per clip
    #[arg(long, default_value_t = 60, value_parser = clap::value_parser!(u32).range(1..))]
    pub frames: u32,
    /// Objects per clip
    #[arg(long, default_value_t = 3)]
    pub objects: usize,
    /// Number of object classes
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub classes: u32,
    /// Fraction of each object's frames kept as sparse seeds
    #[arg(long, default_value_t = 0.1, value_parser = keep_fraction)]
    pub keep: f64,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
    pub width: u32,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u32).range(1..))]
    pub height: u32,
    /// Largest object speed in px/frame
    #[arg(long, default_value_t = 3.0, value_parser = non_negative)]
    pub max_speed: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackerKind {
    /// Normalised cross-correlation template matching
    Ncc,
    /// Replays ground-truth tracks (needs --gt)
    Oracle,
}

#[derive(Args, Debug, Clone)]
#[command(args_override_self = true)]
pub struct DensifyArgs {
    /// Sparse seed CSV
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    /// Directory holding one frame directory per clip id
    #[arg(long, value_name = "DIR")]
    pub frames: PathBuf,
    /// Output dense JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Minimum tracker score for a tracked frame
    #[arg(long, default_value_t = 0.8, value_parser = unit_interval)]
    pub rho1: f64,
    /// Minimum IoU between consecutive tracked boxes
    #[arg(long, default_value_t = 0.4, value_parser = unit_interval)]
    pub rho2: f64,
    /// IoU at which same-class labels on a frame are merged
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    pub tau_dup: f64,
    #[arg(long, value_enum, default_value_t = TrackerKind::Ncc)]
    pub tracker: TrackerKind,
    /// Ground truth with object ids, for the oracle tracker
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// NCC search radius in pixels [default: larger template side]
    #[arg(long, value_name = "PX")]
    pub search_radius: Option<u32>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
#[command(args_override_self = true)]
pub struct EnsembleArgs {
    /// Detection file of one model; repeat once per model
    #[arg(long = "det", value_name = "JSON", required = true, action = ArgAction::Append)]
    pub dets: Vec<PathBuf>,
    /// Output detection JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Suppress boxes overlapping a kept box by more than this IoU
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    pub nms_iou: f64,
    /// Boxes kept per model and image before fusion
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u64).range(1..))]
    pub top_k: u64,
    /// Drop boxes scoring below this before fusion
    #[arg(long, default_value_t = 0.0, value_parser = unit_interval)]
    pub score_floor: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    /// Detection JSON (a dense pseudo-label file is accepted too)
    #[arg(long, value_name = "JSON")]
    pub det: PathBuf,
    /// Ground-truth JSON
    #[arg(long, value_name = "JSON")]
    pub gt: PathBuf,
    /// Also write the report as JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated IoU thresholds
    #[arg(
        long,
        value_delimiter = ',',
        default_values_t = densetrack_core::eval::DEFAULT_THRESHOLDS,
        value_parser = unit_interval
    )]
    pub thresholds: Vec<f64>,
    /// Whether a match needs IoU above the threshold or also accepts equality
    #[arg(long, value_enum, default_value_t = Comparison::Strict)]
    pub iou_comparison: Comparison,
    /// PR-curve interpolation
    #[arg(long, value_enum, default_value_t = Interp::AllPoint)]
    pub interpolation: Interp,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// IoU > threshold
    Strict,
    /// IoU >= threshold
    Inclusive,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    /// Area under the precision envelope
    AllPoint,
    /// Mean envelope precision at recall 0, 0.1, ..., 1
    ElevenPoint,
}

#[derive(Args, Debug, Clone)]
#[command(args_override_self = true)]
pub struct FcosArgs {
    /// Problem description JSON
    #[arg(long = "in", value_name = "JSON")]
    pub input: PathBuf,
    /// Write the result here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

/// Reads `key = value` lines; `#` starts a comment line.
pub fn read_config_file(path: &Path) -> Outcome<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::usage(format!("{}:{}: expected key = value", path.display(), i + 1)));
        };
        let (key, value) = (key.trim().replace('_', "-"), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Failure::usage(format!("{}:{}: empty key or value", path.display(), i + 1)));
        }
        entries.push((key, value.to_string()));
    }
    Ok(entries)
}

/// Finds `--config` in the arguments following the subcommand name.
fn config_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(2);
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn flag_given(argv: &[String], long: &str) -> bool {
    let flag = format!("--{long}");
    argv.iter()
        .skip(2)
        .take_while(|a| *a != "--")
        .any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
}

/// Parsed command line together with the config-file entries that fed it.
pub struct Resolved {
    pub cli: Cli,
    pub file_entries: Vec<(String, String)>,
}

/// Parses `argv`, layering the subcommand's `--config` file underneath the
/// explicit flags. Config values go through the same validation as flags.
pub fn parse(argv: Vec<String>) -> Result<Resolved, ParseFailure> {
    let mut file_entries = Vec::new();
    let mut full = argv.clone();
    if let (Some(path), Some(sub)) = (config_path(&argv), argv.get(1)) {
        file_entries = read_config_file(&path).map_err(ParseFailure::Config)?;
        let root = Cli::command();
        let cmd = root
            .find_subcommand(sub)
            .ok_or_else(|| ParseFailure::Config(Failure::usage(format!("unknown subcommand {sub:?}"))))?;
        let mut injected = Vec::new();
        for (key, value) in &file_entries {
            let arg = cmd
                .get_arguments()
                .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
                .ok_or_else(|| {
                    ParseFailure::Config(Failure::usage(format!(
                        "{}: unknown key {key:?} for {sub}",
                        path.display()
                    )))
                })?;
            // Repeatable flags given on the command line replace the file's list.
            if matches!(arg.get_action(), ArgAction::Append) && flag_given(&argv, key) {
                continue;
            }
            injected.push(format!("--{key}={value}"));
        }
        full = argv[..2].iter().cloned().chain(injected).chain(argv[2..].iter().cloned()).collect();
    }
    let matches = Cli::command().try_get_matches_from(full).map_err(ParseFailure::Clap)?;
    let cli = Cli::from_arg_matches(&matches).map_err(ParseFailure::Clap)?;
    Ok(Resolved { cli, file_entries })
}

pub enum ParseFailure {
    Clap(clap::Error),
    Config(Failure),
}
