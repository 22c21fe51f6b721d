//! End-to-end processing: resolved configuration, dataset synthesis grids,
//! recording → feature extraction, feature files and evaluation reports.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{ConfusionMatrix, EvalConfig, Evaluation, ItemMeta, LabeledDataset, LabeledItem};
use crate::envelope::{capture_features_in, EnvelopeConfig, FeatureMode, FeatureVector};
use crate::error::{invalid, Error, Result};
use crate::segmentation::{capture_span, segment_motions, MotionSegment, PbcConfig};
use crate::signals::{
    read_manifest, read_signal, synthesize_motion, IqSignal, ManifestEntry, MotionClass, SynthesisParams,
    DEFAULT_CARRIER_HZ, DEFAULT_SAMPLE_RATE_HZ,
};
use crate::tfr::{spectrogram, StftParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    pub sample_rate_hz: f64,
    pub carrier_hz: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            carrier_hz: DEFAULT_CARRIER_HZ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Subtract each recording's static return before any analysis.
    pub remove_static: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { remove_static: true }
    }
}

/// Every tunable of the pipeline. Missing fields in a config file take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub rig: RigConfig,
    pub preprocess: PreprocessConfig,
    pub tfr: StftParams,
    pub pbc: PbcConfig,
    pub envelope: EnvelopeConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rig.sample_rate_hz.is_finite() && self.rig.sample_rate_hz > 0.0) {
            return Err(invalid("rig.sample_rate_hz must be positive"));
        }
        if !(self.rig.carrier_hz.is_finite() && self.rig.carrier_hz > 0.0) {
            return Err(invalid("rig.carrier_hz must be positive"));
        }
        self.tfr.validate()?;
        self.pbc.validate()?;
        self.envelope.validate()?;
        self.eval.validate()
    }

    /// Parses JSON, or TOML when the path ends in `.toml`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let format_err = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| format_err(e.to_string()))
        } else {
            serde_json::from_str(&text).map_err(|e| format_err(e.to_string()))
        }
    }
}

/// One motion found in a recording and its feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub segment: MotionSegment,
    pub features: FeatureVector,
}

/// Optional static-return removal → spectrogram → PBC segmentation → centred captures → envelope features.
pub fn extract_features(signal: &IqSignal, cfg: &PipelineConfig, mode: FeatureMode) -> Result<Vec<Capture>> {
    let centred;
    let signal = if cfg.preprocess.remove_static {
        centred = signal.without_static();
        &centred
    } else {
        signal
    };
    let spec = spectrogram(signal, &cfg.tfr)?;
    let segments = segment_motions(&spec, &cfg.pbc)?;
    // Captures start on a hop boundary so their frames can be taken straight
    // from the recording's spectrogram.
    let hop = cfg.tfr.hop;
    segments
        .into_iter()
        .map(|segment| {
            let (start, len) = capture_span(signal.len(), signal.sample_rate_hz(), &segment, cfg.pbc.capture_s, hop)?;
            let count = cfg.tfr.frame_count(len);
            if count == 0 {
                return Err(invalid("capture is shorter than one analysis window"));
            }
            let first = start / hop;
            Ok(Capture {
                segment,
                features: capture_features_in(&spec, first..first + count, &cfg.envelope, mode)?,
            })
        })
        .collect()
}

/// The class × speed × angle × repetition grid of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthGrid {
    pub classes: Vec<MotionClass>,
    pub speeds: Vec<f64>,
    pub angles_deg: Vec<f64>,
    pub reps: usize,
    pub duration_s: f64,
    pub start_offset_s: f64,
    pub snr_db: f64,
    pub jitter_s: f64,
    pub seed: u64,
}

impl Default for SynthGrid {
    fn default() -> Self {
        Self {
            classes: MotionClass::ALL.to_vec(),
            speeds: vec![0.6, 1.0],
            angles_deg: vec![-20.0, -10.0, 0.0, 10.0, 20.0],
            reps: 5,
            duration_s: 6.5,
            start_offset_s: 1.0,
            snr_db: 15.0,
            jitter_s: 0.25,
            seed: 0,
        }
    }
}

impl SynthGrid {
    /// Synthesis parameters in class, speed, angle, repetition order. Item
    /// seeds are drawn from a generator seeded with `self.seed`.
    pub fn params(&self) -> Vec<SynthesisParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.classes.len() * self.speeds.len() * self.angles_deg.len() * self.reps);
        for &motion in &self.classes {
            for &speed in &self.speeds {
                for &angle in &self.angles_deg {
                    for _ in 0..self.reps {
                        out.push(SynthesisParams {
                            motion,
                            duration_s: self.duration_s,
                            speed_scale: speed,
                            orientation_deg: angle,
                            snr_db: self.snr_db,
                            start_offset_s: self.start_offset_s,
                            jitter_s: self.jitter_s,
                            seed: rng.random(),
                            ..SynthesisParams::new(motion)
                        });
                    }
                }
            }
        }
        out
    }
}

pub fn file_stem(p: &SynthesisParams, index: usize) -> String {
    format!("{index:05}_{}", p.motion.letter())
}

/// Writes every recording of the grid plus `manifest.json` into `out_dir`.
pub fn synthesize_dataset(grid: &SynthGrid, rig: &RigConfig, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let params = grid.params();
    let entries = params
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let signal = synthesize_motion(p, rig.sample_rate_hz, rig.carrier_hz)?;
            let name = PathBuf::from(format!("{}.iq", file_stem(p, i)));
            crate::signals::write_signal(&signal, out_dir.join(&name))?;
            Ok(ManifestEntry {
                path: name,
                label: p.motion,
                speed: p.speed_scale,
                angle_deg: p.orientation_deg,
                seed: p.seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    crate::signals::write_manifest(&entries, out_dir.join("manifest.json"))?;
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecording {
    pub path: PathBuf,
    pub reason: String,
}

/// Labelled feature vectors of a dataset and the recordings that yielded none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFile {
    /// Settings the features were extracted with.
    pub config: PipelineConfig,
    pub mode: FeatureMode,
    pub source_len: usize,
    pub items: Vec<LabeledItem>,
    pub skipped: Vec<SkippedRecording>,
}

impl FeatureFile {
    pub fn dataset(&self) -> Result<LabeledDataset> {
        LabeledDataset::new(self.items.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("feature file serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Self = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        for (i, it) in file.items.iter().enumerate() {
            if it.features.mode != file.mode || it.features.source_len != file.source_len {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("item {i} does not match the declared mode and length"),
                });
            }
        }
        Ok(file)
    }
}

/// Runs [`extract_features`] over every manifest entry. Recordings without a
/// detected motion are reported in `skipped`; unreadable files are errors.
pub fn features_from_manifest(manifest: &Path, cfg: &PipelineConfig, mode: FeatureMode) -> Result<FeatureFile> {
    cfg.validate()?;
    let entries = read_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let results: Vec<Result<Vec<Capture>>> = entries
        .par_iter()
        .map(|e| {
            let signal = read_signal(base.join(&e.path))?;
            extract_features(&signal, cfg, mode)
        })
        .collect();
    let mut file = FeatureFile {
        config: cfg.clone(),
        mode,
        source_len: cfg.envelope.downsample_to,
        items: Vec::new(),
        skipped: Vec::new(),
    };
    for (entry, result) in entries.iter().zip(results) {
        let captures = match result {
            Ok(c) => c,
            Err(err @ (Error::Io { .. } | Error::Parse(_) | Error::Format { .. })) => return Err(err),
            Err(err) => {
                file.skipped.push(SkippedRecording {
                    path: entry.path.clone(),
                    reason: err.to_string(),
                });
                continue;
            }
        };
        if captures.is_empty() {
            file.skipped.push(SkippedRecording {
                path: entry.path.clone(),
                reason: "no motion detected".into(),
            });
        }
        for c in captures {
            file.items.push(LabeledItem {
                features: c.features,
                label: entry.label,
                meta: ItemMeta {
                    speed: entry.speed,
                    angle_deg: entry.angle_deg,
                    seed: entry.seed,
                },
            });
        }
    }
    Ok(file)
}

/// Persisted outcome of an evaluation run. Timing is kept out so that
/// reruns produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: PipelineConfig,
    pub version: String,
    pub accuracy: f64,
    pub confusion_counts: ConfusionMatrix,
    pub per_class_rates: Vec<f64>,
}

impl EvalReport {
    pub fn new(config: PipelineConfig, eval: Evaluation) -> Self {
        Self {
            config,
            version: VERSION.to_string(),
            accuracy: eval.accuracy,
            per_class_rates: eval.per_class_rates.to_vec(),
            confusion_counts: eval.confusion,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::capture_features;
    use crate::segmentation::segment_motions;

    #[test]
    fn grid_size_and_determinism() {
        let grid = SynthGrid::default();
        let a = grid.params();
        assert_eq!(a.len(), 6 * 2 * 5 * 5);
        assert_eq!(a, grid.params());
        let empty = SynthGrid { reps: 0, ..grid };
        assert!(empty.params().is_empty());
    }

    #[test]
    fn noiseless_recording_gives_one_capture() {
        let cfg = PipelineConfig::default();
        for motion in MotionClass::ALL {
            let p = SynthesisParams {
                duration_s: 6.5,
                ..SynthesisParams::new(motion)
            };
            let s = synthesize_motion(&p, cfg.rig.sample_rate_hz, cfg.rig.carrier_hz).unwrap();
            let caps = extract_features(&s, &cfg, FeatureMode::Basic).unwrap();
            assert_eq!(caps.len(), 1, "{motion}: {:?}", caps.iter().map(|c| c.segment).collect::<Vec<_>>());
            assert_eq!(caps[0].features.len(), 400);
            let aug = extract_features(&s, &cfg, FeatureMode::Augmented).unwrap();
            assert_eq!(aug[0].features.len(), 600);
        }
    }

    #[test]
    fn captures_reuse_recording_frames() {
        let cfg = PipelineConfig::default();
        let p = SynthesisParams {
            duration_s: 6.5,
            snr_db: 20.0,
            jitter_s: 0.25,
            seed: 3,
            ..SynthesisParams::new(MotionClass::PushOpen)
        };
        let signal = synthesize_motion(&p, cfg.rig.sample_rate_hz, cfg.rig.carrier_hz).unwrap().without_static();
        let spec = spectrogram(&signal, &cfg.tfr).unwrap();
        let seg = segment_motions(&spec, &cfg.pbc).unwrap()[0];
        let (start, len) = capture_span(signal.len(), signal.sample_rate_hz(), &seg, 5.0, cfg.tfr.hop).unwrap();
        assert_eq!(start % cfg.tfr.hop, 0);
        let direct = spectrogram(&signal.slice(start, len).unwrap(), &cfg.tfr).unwrap();
        let reused = spec.frame_range(start / cfg.tfr.hop, direct.n_frames()).unwrap();
        assert_eq!(direct, reused);
        let caps = extract_features(&signal, &PipelineConfig { preprocess: PreprocessConfig { remove_static: false }, ..cfg.clone() }, FeatureMode::Basic).unwrap();
        assert_eq!(caps[0].features, capture_features(&direct, &cfg.envelope, FeatureMode::Basic).unwrap());
    }

    #[test]
    fn config_round_trips_through_json_and_toml() {
        let cfg = PipelineConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&json).unwrap(), cfg);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<PipelineConfig>(&text).unwrap(), cfg);
        let partial: PipelineConfig = serde_json::from_str(r#"{"eval": {"trials": 3, "train_fraction": 0.7, "metric": "l1", "feature_mode": "basic", "seed": 9}}"#).unwrap();
        assert_eq!(partial.eval.trials, 3);
        assert_eq!(partial.tfr, StftParams::default());
    }
}
