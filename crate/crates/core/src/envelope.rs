//! Maximum instantaneous Doppler envelopes by energy-based thresholding and
//! the feature vectors built from them.
//!
//! The spectrogram is split into its positive-frequency half (bins
//! `K/2..K`, zero Doppler included) and negative half (bins `0..K/2`). Each
//! frame's threshold is its half-band energy times a scale factor sigma; the
//! envelope is the outermost bin, scanning from the band edge toward zero
//! Doppler, whose value reaches the threshold.

use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::segmentation::EnergyLaw;
use crate::tfr::Spectrogram;

const SIGMA_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    FixedSigma,
    #[default]
    ConstantRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeConfig {
    /// Used as-is in `FixedSigma` mode.
    pub sigma_pos: f64,
    pub sigma_neg: f64,
    pub ratio_mode: RatioMode,
    pub downsample_to: usize,
    pub energy: EnergyLaw,
    /// A bin counts as active for calibration when it reaches this fraction
    /// of the largest value in its half of the spectrogram.
    pub active_floor: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            sigma_pos: 0.05,
            sigma_neg: 0.05,
            ratio_mode: RatioMode::ConstantRatio,
            downsample_to: 200,
            energy: EnergyLaw::Linear,
            active_floor: 0.02,
        }
    }
}

impl EnvelopeConfig {
    pub fn validate(&self) -> Result<()> {
        for s in [self.sigma_pos, self.sigma_neg] {
            check_sigma(s)?;
        }
        if self.downsample_to == 0 {
            return Err(invalid("downsample_to must be >= 1"));
        }
        if !(self.active_floor > 0.0 && self.active_floor <= 1.0) {
            return Err(invalid(format!("active_floor must lie in (0, 1], got {}", self.active_floor)));
        }
        Ok(())
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("sigma must lie strictly inside (0, 1), got {sigma}")))
    }
}

/// Positive (`e_pos ≥ 0`) and negative (`e_neg ≤ 0`) envelopes in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePair {
    pub e_pos: Vec<f64>,
    pub e_neg: Vec<f64>,
    pub frame_times_s: Vec<f64>,
}

impl EnvelopePair {
    pub fn len(&self) -> usize {
        self.e_pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_pos.is_empty()
    }

    /// Block-mean decimation of both envelopes; times take the block means too.
    pub fn downsampled(&self, target_len: usize) -> Result<Self> {
        Ok(Self {
            e_pos: downsample(&self.e_pos, target_len)?,
            e_neg: downsample(&self.e_neg, target_len)?,
            frame_times_s: downsample(&self.frame_times_s, target_len)?,
        })
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "time_s,e_pos_hz,e_neg_hz")?;
        for ((t, p), n) in self.frame_times_s.iter().zip(&self.e_pos).zip(&self.e_neg) {
            writeln!(w, "{t},{p},{n}")?;
        }
        Ok(())
    }
}

/// Consecutive frames of a spectrogram, borrowed.
#[derive(Clone, Copy)]
struct Frames<'a> {
    spec: &'a Spectrogram,
    first: usize,
    count: usize,
}

impl<'a> Frames<'a> {
    fn new(spec: &'a Spectrogram, frames: Range<usize>) -> Result<Self> {
        let k = spec.fft_size();
        if !k.is_multiple_of(2) {
            return Err(invalid(format!("fft_size must be even, got {k}")));
        }
        if frames.start >= frames.end || frames.end > spec.n_frames() {
            return Err(invalid(format!("frames {frames:?} outside 0..{}", spec.n_frames())));
        }
        Ok(Self {
            spec,
            first: frames.start,
            count: frames.end - frames.start,
        })
    }

    fn all(spec: &'a Spectrogram) -> Result<Self> {
        Self::new(spec, 0..spec.n_frames())
    }

    fn rows(self) -> impl Iterator<Item = &'a [f64]> {
        (self.first..self.first + self.count).map(move |n| self.spec.frame(n))
    }

    /// Bins of the positive half (zero Doppler included) and negative half.
    fn halves(self) -> (Range<usize>, Range<usize>) {
        let k = self.spec.fft_size();
        (k / 2..k, 0..k / 2)
    }

    fn energies(self, law: EnergyLaw) -> (Vec<f64>, Vec<f64>) {
        let (pos, neg) = self.halves();
        let sum = |row: &[f64]| row.iter().map(|&v| law.apply(v)).sum::<f64>();
        self.rows().map(|row| (sum(&row[pos.clone()]), sum(&row[neg.clone()]))).unzip()
    }

    fn calibrate(self, law: EnergyLaw, active_floor: f64) -> Result<(f64, f64)> {
        let (pos, neg) = self.halves();
        let (e_pos, e_neg) = self.energies(law);
        let sigma_pos = self
            .calibrate_half(pos, true, &e_pos, active_floor)
            .map_err(|e| Error::Calibration(format!("positive half: {e}")))?;
        let sigma_neg = self
            .calibrate_half(neg, false, &e_neg, active_floor)
            .map_err(|e| Error::Calibration(format!("negative half: {e}")))?;
        Ok((sigma_pos, sigma_neg))
    }

    /// `from_top`: the band edge is the highest bin of `half`, otherwise the lowest.
    fn calibrate_half(self, half: Range<usize>, from_top: bool, energy: &[f64], floor: f64) -> Result<f64, String> {
        let peak = self
            .rows()
            .map(|row| row[half.clone()].iter().copied().fold(0.0f64, f64::max))
            .fold(0.0f64, f64::max);
        if peak <= 0.0 {
            return Err("no energy".into());
        }
        let level = floor * peak;
        // Outermost active bin per frame; keep the most extreme, earliest frame.
        let mut best: Option<(usize, usize)> = None;
        for (n, row) in self.rows().enumerate() {
            let band = &row[half.clone()];
            let hit = if from_top {
                band.iter().rposition(|&v| v >= level).map(|i| band.len() - 1 - i)
            } else {
                band.iter().position(|&v| v >= level)
            };
            if let Some(depth) = hit {
                if best.is_none_or(|(d, _)| depth < d) {
                    best = Some((depth, n));
                }
            }
        }
        let (depth, n) = best.ok_or("no active bin")?;
        let bin = if from_top { half.end - 1 - depth } else { half.start + depth };
        let value = self.spec.get(self.first + n, bin);
        let sigma = value / energy[n];
        if !sigma.is_finite() {
            return Err(format!("degenerate ratio {value} / {}", energy[n]));
        }
        Ok(sigma.clamp(SIGMA_EPS, 1.0 - SIGMA_EPS))
    }

    fn envelopes(self, cfg: &EnvelopeConfig) -> Result<EnvelopePair> {
        cfg.validate()?;
        let (pos, neg) = self.halves();
        let (sigma_pos, sigma_neg) = match cfg.ratio_mode {
            RatioMode::FixedSigma => (cfg.sigma_pos, cfg.sigma_neg),
            RatioMode::ConstantRatio => self.calibrate(cfg.energy, cfg.active_floor)?,
        };
        let (e_pos, e_neg) = self.energies(cfg.energy);
        let t_pos = thresholds(&e_pos, sigma_pos)?;
        let t_neg = thresholds(&e_neg, sigma_neg)?;
        let freqs = self.spec.bin_freqs_hz();
        let times = self.spec.frame_times_s();
        let t0 = times[self.first] - times[0];

        let mut env = EnvelopePair {
            e_pos: Vec::with_capacity(self.count),
            e_neg: Vec::with_capacity(self.count),
            frame_times_s: times[self.first..self.first + self.count].iter().map(|t| t - t0).collect(),
        };
        for (n, row) in self.rows().enumerate() {
            let up = row[pos.clone()].iter().rposition(|&v| qualifies(v, t_pos[n]));
            let down = row[neg.clone()].iter().position(|&v| qualifies(v, t_neg[n]));
            env.e_pos.push(up.map_or(0.0, |i| freqs[pos.start + i]));
            env.e_neg.push(down.map_or(0.0, |i| freqs[neg.start + i]));
        }
        Ok(env)
    }
}

/// Per-frame energies of the positive and negative halves.
pub fn band_energies(spec: &Spectrogram, law: EnergyLaw) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok(Frames::all(spec)?.energies(law))
}

pub fn thresholds(energy: &[f64], sigma: f64) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    Ok(energy.iter().map(|e| e * sigma).collect())
}

/// Chooses sigma so that the threshold equals the spectrogram value at the
/// maximum active Doppler frequency, in the frame where that maximum occurs.
pub fn calibrate_sigma(spec: &Spectrogram, law: EnergyLaw, active_floor: f64) -> Result<(f64, f64)> {
    Frames::all(spec)?.calibrate(law, active_floor)
}

/// Outermost threshold crossing per frame for each half; 0 Hz where no bin
/// qualifies.
pub fn extract_envelopes(spec: &Spectrogram, cfg: &EnvelopeConfig) -> Result<EnvelopePair> {
    Frames::all(spec)?.envelopes(cfg)
}

/// [`extract_envelopes`] restricted to `frames`, timed from the first of them.
pub fn extract_envelopes_in(spec: &Spectrogram, frames: Range<usize>, cfg: &EnvelopeConfig) -> Result<EnvelopePair> {
    Frames::new(spec, frames)?.envelopes(cfg)
}

/// Empty bins never qualify, so a silent frame maps to 0 Hz even though its
/// threshold is zero.
fn qualifies(value: f64, threshold: f64) -> bool {
    value >= threshold && value > 0.0
}

/// Block-mean decimation to `target_len` values. Block `i` covers
/// `[⌊i·n/t⌋, ⌊(i+1)·n/t⌋)`, so equal blocks when `t` divides `n`.
pub fn downsample(values: &[f64], target_len: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if target_len == 0 || target_len > n {
        return Err(invalid(format!("cannot downsample {n} values to {target_len}")));
    }
    Ok((0..target_len)
        .map(|i| {
            let block = &values[i * n / target_len..(i + 1) * n / target_len];
            block.iter().sum::<f64>() / block.len() as f64
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// `[e_pos, e_neg]`
    Basic,
    /// `[e_pos, e_neg, e_pos − e_neg]`
    #[default]
    Augmented,
}

impl FeatureMode {
    pub fn blocks(self) -> usize {
        match self {
            FeatureMode::Basic => 2,
            FeatureMode::Augmented => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub mode: FeatureMode,
    pub source_len: usize,
}

impl FeatureVector {
    /// Checks the length invariant for the declared mode.
    pub fn new(values: Vec<f64>, mode: FeatureMode, source_len: usize) -> Result<Self> {
        if values.len() != mode.blocks() * source_len {
            return Err(invalid(format!(
                "{mode:?} feature of source length {source_len} needs {} values, got {}",
                mode.blocks() * source_len,
                values.len()
            )));
        }
        Ok(Self {
            values,
            mode,
            source_len,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Consecutive `source_len` blocks: e_pos, e_neg and (augmented) the difference.
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.source_len.max(1))
    }

    pub fn e_pos(&self) -> &[f64] {
        &self.values[..self.source_len]
    }

    pub fn e_neg(&self) -> &[f64] {
        &self.values[self.source_len..2 * self.source_len]
    }

    /// The same envelopes in another layout.
    pub fn to_mode(&self, mode: FeatureMode) -> Self {
        if mode == self.mode {
            return self.clone();
        }
        from_parts(self.e_pos(), self.e_neg(), mode)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

fn from_parts(e_pos: &[f64], e_neg: &[f64], mode: FeatureMode) -> FeatureVector {
    let n = e_pos.len();
    let mut values = Vec::with_capacity(mode.blocks() * n);
    values.extend_from_slice(e_pos);
    values.extend_from_slice(e_neg);
    if mode == FeatureMode::Augmented {
        values.extend(e_pos.iter().zip(e_neg).map(|(p, q)| p - q));
    }
    FeatureVector {
        values,
        mode,
        source_len: n,
    }
}

pub fn feature_vector(pair: &EnvelopePair, mode: FeatureMode) -> Result<FeatureVector> {
    if pair.e_pos.len() != pair.e_neg.len() {
        return Err(invalid(format!(
            "envelope lengths differ: {} vs {}",
            pair.e_pos.len(),
            pair.e_neg.len()
        )));
    }
    Ok(from_parts(&pair.e_pos, &pair.e_neg, mode))
}

/// Envelopes of a capture's spectrogram, downsampled and laid out as a feature.
pub fn capture_features(spec: &Spectrogram, cfg: &EnvelopeConfig, mode: FeatureMode) -> Result<FeatureVector> {
    capture_features_in(spec, 0..spec.n_frames(), cfg, mode)
}

/// [`capture_features`] over a range of frames.
pub fn capture_features_in(
    spec: &Spectrogram,
    frames: Range<usize>,
    cfg: &EnvelopeConfig,
    mode: FeatureMode,
) -> Result<FeatureVector> {
    let env = extract_envelopes_in(spec, frames, cfg)?;
    feature_vector(&env.downsampled(cfg.downsample_to)?, mode)
}
