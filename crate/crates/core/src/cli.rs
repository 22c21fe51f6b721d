//! Command-line front end: `synth`, `features`, `dist`, `eval` and
//! `spectrogram-export`.
//!
//! Settings come from an optional `--config` file (JSON, or TOML when the
//! extension is `.toml`); command flags override it. Exit status is 0 on
//! success, 1 on runtime failures and 2 on usage or contract violations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use crate::classify::{evaluate_with_table, render_confusion, DistanceTable};
use crate::envelope::{extract_envelopes, FeatureMode, RatioMode};
use crate::error::{invalid, Error, Result};
use crate::metrics::{dtw_distance, DistanceKind};
use crate::pipeline::{features_from_manifest, synthesize_dataset, EvalReport, FeatureFile, PipelineConfig, SynthGrid};
use crate::segmentation::{power_burst_curve, segment_motions, smooth};
use crate::signals::{read_signal, MotionClass};
use crate::tfr::spectrogram;

#[derive(Debug, Parser)]
#[command(name = "microdoppler", version, about = "Arm-gesture classification from CW-radar micro-Doppler envelopes")]
pub struct Cli {
    /// Pipeline configuration file (JSON, or TOML for `.toml`).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a labelled dataset over the class × speed × angle grid.
    Synth(SynthArgs),
    /// Extract envelope feature vectors from every recording of a manifest.
    Features(FeaturesArgs),
    /// Distance between two numeric sequences stored as CSV.
    Dist(DistArgs),
    /// Monte-Carlo nearest-neighbour evaluation of a feature file.
    Eval(EvalArgs),
    /// Write the spectrogram, power burst curve and envelopes of one recording as CSV.
    SpectrogramExport(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Repetitions per class, speed and angle.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Classes by name or letter, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_class)]
    pub classes: Option<Vec<MotionClass>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub speeds: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub angles: Option<Vec<f64>>,
    /// Recording length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Nominal gesture start in seconds.
    #[arg(long)]
    pub start: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr: Option<f64>,
    /// Timing jitter in seconds.
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// `basic` or `augmented`.
    #[arg(long, value_parser = parse_name::<FeatureMode>)]
    pub mode: Option<FeatureMode>,
    /// Envelope samples per feature block.
    #[arg(long)]
    pub downsample: Option<usize>,
    /// `fixed_sigma` or `constant_ratio`.
    #[arg(long, value_parser = parse_name::<RatioMode>)]
    pub ratio_mode: Option<RatioMode>,
    #[arg(long)]
    pub active_floor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// `l1`, `l2`, `dtw` or `frechet`.
    #[arg(long, default_value = "dtw", value_parser = parse_name::<DistanceKind>)]
    pub metric: DistanceKind,
    /// Include the optimal warping path (DTW only).
    #[arg(long)]
    pub path: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    /// Directory for `result.json`, `confusion.csv` and `timing.json`.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_name::<DistanceKind>)]
    pub metric: Option<DistanceKind>,
    #[arg(long, value_parser = parse_name::<FeatureMode>)]
    pub mode: Option<FeatureMode>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training fraction of every class.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Sum the metric over feature blocks instead of the whole vector.
    #[arg(long)]
    pub per_segment: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Recording in the `.iq` format.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Keep spectrogram bins with |f| at most this many Hz; 0 keeps all.
    #[arg(long, default_value_t = 1000.0)]
    pub max_hz: f64,
}

/// Parses a serde `snake_case` enum name.
fn parse_name<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_ascii_lowercase())).map_err(|e| e.to_string())
}

fn parse_class(s: &str) -> std::result::Result<MotionClass, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit status for a failed command.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::Range(_) => 2,
        _ => 1,
    }
}

/// Parses the process arguments, runs the command and reports errors on stderr.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

pub fn run(cli: &Cli, out: &mut impl Write) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    match &cli.command {
        Command::Synth(args) => cmd_synth(cfg, args, out),
        Command::Features(args) => cmd_features(cfg, args, out),
        Command::Dist(args) => cmd_dist(args, out),
        Command::Eval(args) => cmd_eval(cli.config.is_some().then_some(cfg), args, out),
        Command::SpectrogramExport(args) => cmd_export(cfg, args, out),
    }
}

fn say(out: &mut impl Write, path: &Path, line: std::fmt::Arguments) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io(path, e))
}

pub fn cmd_synth(cfg: PipelineConfig, args: &SynthArgs, out: &mut impl Write) -> Result<()> {
    cfg.validate()?;
    let mut grid = SynthGrid::default();
    if let Some(v) = args.reps {
        grid.reps = v;
    }
    if let Some(v) = &args.classes {
        grid.classes = v.clone();
    }
    if let Some(v) = &args.speeds {
        grid.speeds = v.clone();
    }
    if let Some(v) = &args.angles {
        grid.angles_deg = v.clone();
    }
    if let Some(v) = args.duration {
        grid.duration_s = v;
    }
    if let Some(v) = args.start {
        grid.start_offset_s = v;
    }
    if let Some(v) = args.snr {
        grid.snr_db = v;
    }
    if let Some(v) = args.jitter {
        grid.jitter_s = v;
    }
    if let Some(v) = args.seed {
        grid.seed = v;
    }
    let entries = synthesize_dataset(&grid, &cfg.rig, &args.out)?;
    let manifest = args.out.join("manifest.json");
    say(out, &manifest, format_args!("wrote {} recordings, manifest {}", entries.len(), manifest.display()))
}

pub fn cmd_features(mut cfg: PipelineConfig, args: &FeaturesArgs, out: &mut impl Write) -> Result<()> {
    if let Some(v) = args.mode {
        cfg.eval.feature_mode = v;
    }
    if let Some(v) = args.downsample {
        cfg.envelope.downsample_to = v;
    }
    if let Some(v) = args.ratio_mode {
        cfg.envelope.ratio_mode = v;
    }
    if let Some(v) = args.active_floor {
        cfg.envelope.active_floor = v;
    }
    let file = features_from_manifest(&args.manifest, &cfg, cfg.eval.feature_mode)?;
    file.save(&args.out)?;
    for s in &file.skipped {
        eprintln!("skipped {}: {}", s.path.display(), s.reason);
    }
    say(
        out,
        &args.out,
        format_args!("{} feature vectors, {} recordings skipped", file.items.len(), file.skipped.len()),
    )
}

/// Numbers separated by commas, whitespace or line breaks.
pub fn read_sequence(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| invalid(format!("{}: '{t}' is not a finite number", path.display())))
        })
        .collect()
}

pub fn cmd_dist(args: &DistArgs, out: &mut impl Write) -> Result<()> {
    let x = read_sequence(&args.a)?;
    let y = read_sequence(&args.b)?;
    if x.len() != y.len() {
        return Err(invalid(format!(
            "length mismatch: {} has {} values, {} has {}",
            args.a.display(),
            x.len(),
            args.b.display(),
            y.len()
        )));
    }
    if args.path && args.metric != DistanceKind::Dtw {
        return Err(invalid("--path is only available for the dtw metric"));
    }
    let mut result = serde_json::Map::new();
    result.insert("metric".into(), args.metric.name().into());
    if args.path {
        let (cost, path) = dtw_distance(&x, &y)?;
        result.insert("cost".into(), cost.into());
        result.insert("path".into(), serde_json::to_value(&path.steps).expect("path serializes"));
    } else {
        result.insert("cost".into(), args.metric.distance(&x, &y)?.into());
    }
    let json = serde_json::Value::Object(result);
    say(out, &args.b, format_args!("{json}"))
}

pub fn cmd_eval(config: Option<PipelineConfig>, args: &EvalArgs, out: &mut impl Write) -> Result<()> {
    let started = Instant::now();
    let file = FeatureFile::load(&args.features)?;
    let mut cfg = file.config.clone();
    if let Some(c) = config {
        cfg.eval = c.eval;
    }
    let eval = &mut cfg.eval;
    if let Some(v) = args.metric {
        eval.metric = v;
    }
    if let Some(v) = args.mode {
        eval.feature_mode = v;
    }
    if let Some(v) = args.trials {
        eval.trials = v;
    }
    if let Some(v) = args.seed {
        eval.seed = v;
    }
    if let Some(v) = args.fraction {
        eval.train_fraction = v;
    }
    if args.per_segment {
        eval.per_segment = true;
    }
    cfg.validate()?;

    let data = file.dataset()?.to_mode(cfg.eval.feature_mode);
    let load_s = started.elapsed().as_secs_f64();
    let t = Instant::now();
    let table = DistanceTable::compute(&data, cfg.eval.metric())?;
    let table_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let evaluation = evaluate_with_table(&data.labels(), &table, &cfg.eval)?;
    let trials_s = t.elapsed().as_secs_f64();

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let confusion = render_confusion(&evaluation.confusion)?;
    let report = EvalReport::new(cfg.clone(), evaluation);
    write_file(&args.out.join("result.json"), report.to_json().as_bytes())?;
    write_file(&args.out.join("confusion.csv"), confusion.as_bytes())?;
    let timing = serde_json::json!({
        "load_s": load_s,
        "distance_table_s": table_s,
        "trials_s": trials_s,
        "total_s": started.elapsed().as_secs_f64(),
    });
    write_file(&args.out.join("timing.json"), format!("{timing:#}\n").as_bytes())?;
    say(
        out,
        &args.out,
        format_args!(
            "accuracy {:.2}% ({}, {}, {} items, {} trials)",
            100.0 * report.accuracy,
            cfg.eval.metric.name(),
            mode_name(cfg.eval.feature_mode),
            data.len(),
            cfg.eval.trials
        ),
    )
}

fn mode_name(mode: FeatureMode) -> &'static str {
    match mode {
        FeatureMode::Basic => "basic",
        FeatureMode::Augmented => "augmented",
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn cmd_export(cfg: PipelineConfig, args: &ExportArgs, out: &mut impl Write) -> Result<()> {
    cfg.validate()?;
    if !(args.max_hz >= 0.0) {
        return Err(invalid(format!("--max-hz must be >= 0, got {}", args.max_hz)));
    }
    let mut signal = read_signal(&args.input)?;
    if cfg.preprocess.remove_static {
        signal = signal.without_static();
    }
    let spec = spectrogram(&signal, &cfg.tfr)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    let path = args.out.join("spectrogram.csv");
    let keep: Vec<usize> = (0..spec.n_bins())
        .filter(|&b| args.max_hz == 0.0 || spec.bin_freqs_hz()[b].abs() <= args.max_hz)
        .collect();
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    write!(w, "time_s").map_err(io)?;
    for &b in &keep {
        write!(w, ",{}", spec.bin_freqs_hz()[b]).map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (t, row) in spec.frame_times_s().iter().zip(spec.frames()) {
        write!(w, "{t}").map_err(io)?;
        for &b in &keep {
            write!(w, ",{}", row[b]).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let path = args.out.join("pbc.csv");
    let pbc = power_burst_curve(&spec, &cfg.pbc)?;
    let smoothed = smooth(&pbc, cfg.pbc.smooth_len)?;
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "time_s,pbc,smoothed").map_err(io)?;
    for ((t, p), s) in spec.frame_times_s().iter().zip(&pbc).zip(&smoothed) {
        writeln!(w, "{t},{p},{s}").map_err(io)?;
    }
    w.flush().map_err(io)?;

    let path = args.out.join("envelopes.csv");
    let mut w = create(&path)?;
    extract_envelopes(&spec, &cfg.envelope)?
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))?;

    let segments = segment_motions(&spec, &cfg.pbc)?;
    let path = args.out.join("segments.json");
    let json = serde_json::to_string_pretty(&segments).expect("segments serialize") + "\n";
    write_file(&path, json.as_bytes())?;
    say(
        out,
        &path,
        format_args!("{} frames, {} motions, written to {}", spec.n_frames(), segments.len(), args.out.display()),
    )
}
