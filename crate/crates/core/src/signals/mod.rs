//! CW-radar returns: the I/Q container, the six arm-motion classes, a
//! two-rod point-scatterer synthesizer and the on-disk signal format.

mod io;
mod kinematics;

use std::fmt;
use std::str::FromStr;

use num_complex::{Complex, Complex32};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use io::{
    decode_signal, encode_signal, read_manifest, read_signal, write_manifest, write_signal,
    ManifestEntry, SignalHeader, SIGNAL_FORMAT_VERSION,
};
pub use kinematics::{gesture_duration_s, synthesize_motion, SynthesisParams, MAX_DESIGN_DOPPLER_HZ};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default radar carrier (Hz).
pub const DEFAULT_CARRIER_HZ: f64 = 25e9;

/// Default baseband sampling rate (Hz).
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 12_800.0;

/// The six arm motions, in the fixed a–f order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionClass {
    /// (a) pushing arms and pulling back
    PushPull,
    /// (b) crossing arms and opening
    CrossOpen,
    /// (c) crossing arms
    Cross,
    /// (d) rolling arms
    Roll,
    /// (e) stop sign
    StopSign,
    /// (f) pushing arms and opening
    PushOpen,
}

impl MotionClass {
    pub const ALL: [MotionClass; 6] = [
        MotionClass::PushPull,
        MotionClass::CrossOpen,
        MotionClass::Cross,
        MotionClass::Roll,
        MotionClass::StopSign,
        MotionClass::PushOpen,
    ];

    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Table letter, `a` through `f`.
    pub fn letter(self) -> char {
        (b'a' + self as u8) as char
    }

    pub fn name(self) -> &'static str {
        match self {
            MotionClass::PushPull => "push_pull",
            MotionClass::CrossOpen => "cross_open",
            MotionClass::Cross => "cross",
            MotionClass::Roll => "roll",
            MotionClass::StopSign => "stop_sign",
            MotionClass::PushOpen => "push_open",
        }
    }
}

impl fmt::Display for MotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionClass {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        MotionClass::ALL
            .into_iter()
            .find(|c| c.name() == s || (s.len() == 1 && s.starts_with(c.letter())))
            .ok_or_else(|| invalid(format!("unknown motion class '{s}'")))
    }
}

/// Complex baseband samples plus the rig metadata needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSignal {
    samples: Vec<Complex32>,
    sample_rate_hz: f64,
    carrier_hz: f64,
    label: Option<MotionClass>,
}

impl IqSignal {
    pub fn new(
        samples: Vec<Complex32>,
        sample_rate_hz: f64,
        carrier_hz: f64,
        label: Option<MotionClass>,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(invalid(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
            return Err(invalid(format!("carrier must be positive, got {carrier_hz}")));
        }
        if samples.is_empty() {
            return Err(invalid("signal must contain at least one sample"));
        }
        if let Some(pos) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(invalid(format!("non-finite sample at index {pos}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            carrier_hz,
            label,
        })
    }

    pub fn samples(&self) -> &[Complex32] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn carrier_hz(&self) -> f64 {
        self.carrier_hz
    }

    pub fn label(&self) -> Option<MotionClass> {
        self.label
    }

    pub fn with_label(mut self, label: Option<MotionClass>) -> Self {
        self.label = label;
        self
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Mean of |s(n)|².
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr() as f64).sum::<f64>() / self.samples.len() as f64
    }

    /// Copy with the static return removed: the component-wise median of
    /// the samples is subtracted. Unlike the mean, the median is barely
    /// pulled by the moving part of a recording.
    pub fn without_static(&self) -> Self {
        let median = |mut v: Vec<f32>| {
            let mid = v.len() / 2;
            *v.select_nth_unstable_by(mid, f32::total_cmp).1
        };
        let c = Complex32::new(
            median(self.samples.iter().map(|s| s.re).collect()),
            median(self.samples.iter().map(|s| s.im).collect()),
        );
        Self {
            samples: self.samples.iter().map(|s| s - c).collect(),
            ..self.clone_meta()
        }
    }

    /// Copy of samples `[start, start + len)` with the same metadata.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        let end = start
            .checked_add(len)
            .filter(|&end| end <= self.samples.len() && len > 0)
            .ok_or_else(|| {
                invalid(format!(
                    "slice [{start}, {start}+{len}) outside signal of {} samples",
                    self.samples.len()
                ))
            })?;
        Ok(Self {
            samples: self.samples[start..end].to_vec(),
            ..self.clone_meta()
        })
    }

    fn clone_meta(&self) -> Self {
        Self {
            samples: Vec::new(),
            sample_rate_hz: self.sample_rate_hz,
            carrier_hz: self.carrier_hz,
            label: self.label,
        }
    }
}

/// CW Doppler shift `2·v·f_c/c`; approaching targets (v > 0) give positive shifts.
pub fn doppler_shift(radial_velocity_mps: f64, carrier_hz: f64) -> Result<f64> {
    if !radial_velocity_mps.is_finite() || !carrier_hz.is_finite() {
        return Err(invalid("doppler_shift requires finite inputs"));
    }
    if carrier_hz <= 0.0 {
        return Err(invalid(format!("carrier must be positive, got {carrier_hz}")));
    }
    Ok(2.0 * radial_velocity_mps * carrier_hz / SPEED_OF_LIGHT)
}

/// Adds circular white Gaussian noise at the requested SNR relative to the
/// signal's own mean power. `f64::INFINITY` means no noise.
pub fn add_noise(signal: &IqSignal, snr_db: f64, seed: u64) -> Result<IqSignal> {
    if signal.is_empty() {
        return Err(invalid("cannot add noise to an empty signal"));
    }
    if snr_db.is_nan() {
        return Err(invalid("snr_db is NaN"));
    }
    let noise_power = signal.mean_power() / 10f64.powf(snr_db / 10.0);
    add_noise_power(signal, noise_power, seed)
}

pub(crate) fn add_noise_power(signal: &IqSignal, noise_power: f64, seed: u64) -> Result<IqSignal> {
    if !(noise_power.is_finite() && noise_power >= 0.0) {
        return Err(invalid(format!("noise power must be finite and >= 0, got {noise_power}")));
    }
    if noise_power == 0.0 {
        return Ok(signal.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (noise_power / 2.0).sqrt())
        .map_err(|e| invalid(format!("noise distribution: {e}")))?;
    let samples = signal
        .samples
        .iter()
        .map(|s| {
            let n = Complex::new(normal.sample(&mut rng), normal.sample(&mut rng));
            Complex32::new((s.re as f64 + n.re) as f32, (s.im as f64 + n.im) as f32)
        })
        .collect();
    Ok(IqSignal {
        samples,
        ..signal.clone_meta()
    })
}

/// One constant-Doppler burst for segmentation fixtures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Burst {
    pub start_s: f64,
    pub end_s: f64,
    pub doppler_hz: f64,
}

/// Unit-amplitude tones active only inside each burst interval, with noise
/// at `snr_db` relative to a unit-power tone.
pub fn synthesize_bursts(
    bursts: &[Burst],
    duration_s: f64,
    sample_rate_hz: f64,
    carrier_hz: f64,
    snr_db: f64,
    seed: u64,
) -> Result<IqSignal> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(invalid(format!("duration must be positive, got {duration_s}")));
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    let mut samples = vec![Complex32::new(0.0, 0.0); n.max(1)];
    for b in bursts {
        if !(b.start_s < b.end_s) || b.doppler_hz.abs() > sample_rate_hz / 2.0 {
            return Err(invalid(format!("bad burst {b:?}")));
        }
        let first = (b.start_s * sample_rate_hz).round().max(0.0) as usize;
        let last = ((b.end_s * sample_rate_hz).round() as usize).min(samples.len());
        for (i, s) in samples.iter_mut().enumerate().take(last).skip(first) {
            let phase = 2.0 * std::f64::consts::PI * b.doppler_hz * i as f64 / sample_rate_hz;
            *s += Complex32::new(phase.cos() as f32, phase.sin() as f32);
        }
    }
    let clean = IqSignal::new(samples, sample_rate_hz, carrier_hz, None)?;
    add_noise_power(&clean, 1.0 / 10f64.powf(snr_db / 10.0), seed)
}
