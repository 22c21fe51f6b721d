//! Spectrogram: squared-magnitude short-time Fourier transform with a
//! frequency-shifted bin layout (most negative Doppler at bin 0, zero
//! Doppler at bin `fft_size / 2`).

use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, ParseError, Result};
use crate::signals::IqSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Rectangular,
    Hann,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Rectangular => vec![1.0; len],
            WindowKind::Hann if len == 1 => vec![1.0],
            WindowKind::Hann => (0..len)
                .map(|m| {
                    0.5 * (1.0 - (2.0 * std::f64::consts::PI * m as f64 / (len - 1) as f64).cos())
                })
                .collect(),
        }
    }
}

/// STFT framing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftParams {
    pub window_len: usize,
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftParams {
    /// 2048-sample rectangular window (0.16 s at 12.8 kHz), 4096-point FFT,
    /// hop of 32 samples (≈2000 frames per 5 s capture).
    fn default() -> Self {
        Self {
            window_len: 2048,
            fft_size: 4096,
            hop: 32,
            window: WindowKind::Rectangular,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 {
            return Err(invalid("window_len must be >= 1"));
        }
        if self.fft_size < self.window_len {
            return Err(invalid(format!(
                "fft_size {} is smaller than window_len {}",
                self.fft_size, self.window_len
            )));
        }
        if self.hop == 0 {
            return Err(invalid("hop must be >= 1"));
        }
        Ok(())
    }

    /// Number of complete frames in a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }
}

/// Time × frequency power matrix, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    power: Vec<f64>,
    n_frames: usize,
    n_bins: usize,
    frame_times_s: Vec<f64>,
    bin_freqs_hz: Vec<f64>,
    window_len: usize,
    hop: usize,
    sample_rate_hz: f64,
}

impl Spectrogram {
    /// Builds a spectrogram directly from per-frame power rows. Frame times
    /// follow the same `(n·hop + window_len/2)/fs` rule as computed ones.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        sample_rate_hz: f64,
        window_len: usize,
        hop: usize,
    ) -> Result<Self> {
        let n_frames = rows.len();
        let n_bins = rows.first().map_or(0, Vec::len);
        if n_frames == 0 || n_bins == 0 {
            return Err(invalid("spectrogram needs at least one frame and one bin"));
        }
        if rows.iter().any(|r| r.len() != n_bins) {
            return Err(invalid("ragged spectrogram rows"));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) || hop == 0 {
            return Err(invalid("sample rate and hop must be positive"));
        }
        let power: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(v) = power.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!("power entries must be finite and >= 0, got {v}")));
        }
        Ok(Self::assemble(power, n_frames, n_bins, window_len, hop, sample_rate_hz))
    }

    fn assemble(
        power: Vec<f64>,
        n_frames: usize,
        n_bins: usize,
        window_len: usize,
        hop: usize,
        sample_rate_hz: f64,
    ) -> Self {
        let frame_times_s = (0..n_frames)
            .map(|n| (n * hop) as f64 / sample_rate_hz + window_len as f64 / 2.0 / sample_rate_hz)
            .collect();
        let bin_freqs_hz = (0..n_bins)
            .map(|b| bin_to_freq_unchecked(b, sample_rate_hz, n_bins))
            .collect();
        Self {
            power,
            n_frames,
            n_bins,
            frame_times_s,
            bin_freqs_hz,
            window_len,
            hop,
            sample_rate_hz,
        }
    }

    /// Frames `first..first + count` as a spectrogram of their own, timed as
    /// if the signal began at the first retained frame. Equals the
    /// spectrogram of the matching signal slice when that slice starts on a
    /// hop boundary.
    pub fn frame_range(&self, first: usize, count: usize) -> Result<Self> {
        if count == 0 || first + count > self.n_frames {
            return Err(invalid(format!(
                "frames {first}..{} outside 0..{}",
                first + count,
                self.n_frames
            )));
        }
        let rows = &self.power[first * self.n_bins..(first + count) * self.n_bins];
        Ok(Self::assemble(
            rows.to_vec(),
            count,
            self.n_bins,
            self.window_len,
            self.hop,
            self.sample_rate_hz,
        ))
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Also the DFT length.
    pub fn fft_size(&self) -> usize {
        self.n_bins
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn frame_times_s(&self) -> &[f64] {
        &self.frame_times_s
    }

    pub fn bin_freqs_hz(&self) -> &[f64] {
        &self.bin_freqs_hz
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        &self.power[n * self.n_bins..(n + 1) * self.n_bins]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.power.chunks_exact(self.n_bins)
    }

    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.power[frame * self.n_bins + bin]
    }

    /// Every entry multiplied by `c` (must be positive and finite).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid(format!("scale must be positive, got {c}")));
        }
        Ok(Self {
            power: self.power.iter().map(|p| p * c).collect(),
            ..self.clone()
        })
    }

    /// Applies `f(bin_freq_hz, value)` to every entry.
    pub fn map_bins(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let rows = self
            .frames()
            .map(|row| row.iter().zip(&self.bin_freqs_hz).map(|(&v, &hz)| f(hz, v)).collect())
            .collect();
        Self::from_rows(rows, self.sample_rate_hz, self.window_len, self.hop)
    }

    /// CSV: a header of bin frequencies, then `time, power...` per frame.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "time_s")?;
        for f in &self.bin_freqs_hz {
            write!(w, ",{f}")?;
        }
        writeln!(w)?;
        for (t, row) in self.frame_times_s.iter().zip(self.frames()) {
            write!(w, "{t}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Binary form: JSON header line, then little-endian `f64` power values.
    pub fn encode(&self) -> Vec<u8> {
        let header = SpectrogramHeader {
            version: SPECTROGRAM_FORMAT_VERSION,
            kind: "spectrogram".into(),
            sample_rate_hz: self.sample_rate_hz,
            n_frames: self.n_frames,
            n_bins: self.n_bins,
            window_len: self.window_len,
            hop: self.hop,
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        for v in &self.power {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.is_empty() {
            return Err(ParseError::Empty.into());
        }
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| ParseError::MalformedHeader("missing header terminator".into()))?;
        let header: SpectrogramHeader = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| ParseError::MalformedHeader(e.to_string()))?;
        if header.version != SPECTROGRAM_FORMAT_VERSION {
            return Err(ParseError::UnknownVersion(header.version).into());
        }
        let payload = &bytes[newline + 1..];
        let expected = header.n_frames * header.n_bins * 8;
        if payload.len() < expected {
            return Err(ParseError::Truncated {
                expected,
                found: payload.len(),
            }
            .into());
        }
        if payload.len() > expected {
            return Err(ParseError::TrailingData(payload.len() - expected).into());
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let rows = values.chunks(header.n_bins.max(1)).map(<[f64]>::to_vec).collect();
        Self::from_rows(rows, header.sample_rate_hz, header.window_len, header.hop)
    }
}

const SPECTROGRAM_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct SpectrogramHeader {
    version: u64,
    kind: String,
    sample_rate_hz: f64,
    n_frames: usize,
    n_bins: usize,
    window_len: usize,
    hop: usize,
}

/// Computes `S(n, k) = |Σ_m s(n·hop + m)·h(m)·e^{-j2πmk/K}|²` for every
/// complete frame; frames that would run past the end are dropped.
pub fn spectrogram(signal: &IqSignal, params: &StftParams) -> Result<Spectrogram> {
    params.validate()?;
    if signal.len() < params.window_len {
        return Err(invalid(format!(
            "window of {} samples is longer than the signal ({} samples)",
            params.window_len,
            signal.len()
        )));
    }
    let k = params.fft_size;
    let n_frames = params.frame_count(signal.len());
    let window = params.window.coefficients(params.window_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(k);
    let samples = signal.samples();
    let half = k / 2;

    let mut power = vec![0.0f64; n_frames * k];
    power.par_chunks_mut(k).enumerate().for_each_init(
        || {
            (
                vec![Complex::new(0.0, 0.0); k],
                vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            )
        },
        |(buf, scratch), (n, row)| {
            let start = n * params.hop;
            for (m, slot) in buf.iter_mut().enumerate() {
                *slot = if m < params.window_len {
                    let s = samples[start + m];
                    Complex::new(s.re as f64 * window[m], s.im as f64 * window[m])
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            fft.process_with_scratch(buf, scratch);
            for (b, out) in row.iter_mut().enumerate() {
                *out = buf[(b + half) % k].norm_sqr();
            }
        },
    );
    Ok(Spectrogram::assemble(
        power,
        n_frames,
        k,
        params.window_len,
        params.hop,
        signal.sample_rate_hz(),
    ))
}

/// Bin index holding `freq_hz` in the shifted layout. `+fs/2` aliases onto
/// bin 0 together with `-fs/2`.
pub fn freq_to_bin(freq_hz: f64, sample_rate_hz: f64, fft_size: usize) -> Result<usize> {
    if fft_size == 0 || !(sample_rate_hz > 0.0) {
        return Err(invalid("fft_size and sample rate must be positive"));
    }
    if !freq_hz.is_finite() || freq_hz.abs() > sample_rate_hz / 2.0 {
        return Err(Error::Range(format!(
            "{freq_hz} Hz lies outside ±{} Hz",
            sample_rate_hz / 2.0
        )));
    }
    let offset = (freq_hz * fft_size as f64 / sample_rate_hz).round() as i64;
    let bin = (fft_size / 2) as i64 + offset;
    Ok(bin.rem_euclid(fft_size as i64) as usize)
}

pub fn bin_to_freq(bin: usize, sample_rate_hz: f64, fft_size: usize) -> Result<f64> {
    if bin >= fft_size {
        return Err(Error::Range(format!("bin {bin} outside 0..{fft_size}")));
    }
    Ok(bin_to_freq_unchecked(bin, sample_rate_hz, fft_size))
}

fn bin_to_freq_unchecked(bin: usize, sample_rate_hz: f64, fft_size: usize) -> f64 {
    (bin as f64 - (fft_size / 2) as f64) * sample_rate_hz / fft_size as f64
}
