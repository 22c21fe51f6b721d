//! Motion segmentation from the power burst curve (PBC): in-band spectrogram
//! energy per frame, smoothed, thresholded at a fraction of its dynamic range.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signals::IqSignal;
use crate::tfr::Spectrogram;

/// How spectrogram entries enter an energy sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyLaw {
    /// `Σ S(n,k)²`: the spectrogram value, itself a squared magnitude, is
    /// squared again.
    Squared,
    /// `Σ S(n,k)`.
    #[default]
    Linear,
}

impl EnergyLaw {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            EnergyLaw::Squared => v * v,
            EnergyLaw::Linear => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PbcConfig {
    /// Negative Doppler band `(low, high)` in Hz, inclusive.
    pub neg_band_hz: (f64, f64),
    pub pos_band_hz: (f64, f64),
    pub alpha: f64,
    /// Moving-average length in frames.
    pub smooth_len: usize,
    pub capture_s: f64,
    /// Segments shorter than this many frames are discarded.
    pub min_segment_frames: usize,
    /// Segments separated by less than this are merged.
    pub merge_gap_s: f64,
    pub energy: EnergyLaw,
}

impl Default for PbcConfig {
    fn default() -> Self {
        Self {
            neg_band_hz: (-500.0, -20.0),
            pos_band_hz: (20.0, 500.0),
            alpha: 0.1,
            smooth_len: 25,
            capture_s: 5.0,
            min_segment_frames: 10,
            merge_gap_s: 1.0,
            energy: EnergyLaw::Linear,
        }
    }
}

impl PbcConfig {
    pub fn validate(&self) -> Result<()> {
        let (nl, nh) = self.neg_band_hz;
        let (pl, ph) = self.pos_band_hz;
        if !(nl < nh && nh <= -20.0 && 20.0 <= pl && pl < ph) {
            return Err(invalid(format!(
                "bands {:?} / {:?} must be ordered and exclude (-20, 20) Hz",
                self.neg_band_hz, self.pos_band_hz
            )));
        }
        if !(0.01..=0.2).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0.01, 0.2], got {}", self.alpha)));
        }
        if self.smooth_len == 0 {
            return Err(invalid("smooth_len must be >= 1"));
        }
        if !(self.capture_s.is_finite() && self.capture_s > 0.0) {
            return Err(invalid("capture_s must be positive"));
        }
        if !(self.merge_gap_s.is_finite() && self.merge_gap_s >= 0.0) {
            return Err(invalid("merge_gap_s must be >= 0"));
        }
        Ok(())
    }
}

/// One detected motion. `offset_frame` is the first frame back below the
/// threshold (or the last frame when the motion runs to the end).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSegment {
    pub onset_frame: usize,
    pub offset_frame: usize,
    pub onset_s: f64,
    pub offset_s: f64,
}

impl MotionSegment {
    pub fn midpoint_s(&self) -> f64 {
        0.5 * (self.onset_s + self.offset_s)
    }

    pub fn frames(&self) -> usize {
        self.offset_frame - self.onset_frame
    }
}

/// Per-frame energy over the negative and positive Doppler bands.
pub fn power_burst_curve(spec: &Spectrogram, cfg: &PbcConfig) -> Result<Vec<f64>> {
    let nyquist = spec.sample_rate_hz() / 2.0;
    let freqs = spec.bin_freqs_hz();
    for (lo, hi) in [cfg.neg_band_hz, cfg.pos_band_hz] {
        if lo < -nyquist || hi >= nyquist || lo >= hi {
            return Err(Error::Range(format!(
                "band [{lo}, {hi}] Hz outside spectrogram range [{}, {})",
                -nyquist, nyquist
            )));
        }
    }
    let in_band = |f: f64| {
        (cfg.neg_band_hz.0..=cfg.neg_band_hz.1).contains(&f)
            || (cfg.pos_band_hz.0..=cfg.pos_band_hz.1).contains(&f)
    };
    let bins: Vec<usize> = (0..spec.n_bins()).filter(|&b| in_band(freqs[b])).collect();
    Ok(spec
        .frames()
        .map(|row| bins.iter().map(|&b| cfg.energy.apply(row[b])).sum())
        .collect())
}

/// Centered moving average; the window shrinks at the edges.
pub fn smooth(values: &[f64], smooth_len: usize) -> Result<Vec<f64>> {
    if smooth_len == 0 {
        return Err(invalid("smooth_len must be >= 1"));
    }
    if smooth_len == 1 {
        return Ok(values.to_vec());
    }
    let before = (smooth_len - 1) / 2;
    let after = smooth_len - 1 - before;
    Ok((0..values.len())
        .map(|i| {
            let window = &values[i.saturating_sub(before)..(i + after + 1).min(values.len())];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect())
}

/// `min + alpha·(max − min)` of the smoothed curve.
pub fn event_threshold(values: &[f64], alpha: f64) -> Result<f64> {
    let (min, max) = min_max(values)?;
    Ok(min + alpha * (max - min))
}

fn min_max(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(invalid("empty sequence"));
    }
    Ok(values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))))
}

/// Threshold crossings: a segment opens at the first value above the
/// threshold and closes at the next value below it. A flat sequence yields
/// no segments.
pub fn detect_events(values: &[f64], alpha: f64, frame_times_s: &[f64]) -> Result<Vec<MotionSegment>> {
    if frame_times_s.len() != values.len() {
        return Err(invalid(format!(
            "{} frame times for {} values",
            frame_times_s.len(),
            values.len()
        )));
    }
    let (min, max) = min_max(values)?;
    if min == max {
        return Ok(Vec::new());
    }
    let threshold = min + alpha * (max - min);
    let segment = |on: usize, off: usize| MotionSegment {
        onset_frame: on,
        offset_frame: off,
        onset_s: frame_times_s[on],
        offset_s: frame_times_s[off],
    };
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match open {
            None if v > threshold => open = Some(i),
            Some(on) if v < threshold => {
                out.push(segment(on, i));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(on) = open {
        let last = values.len() - 1;
        if on < last {
            out.push(segment(on, last));
        }
    }
    Ok(out)
}

/// Merges segments separated by less than `merge_gap_s`, then drops those
/// shorter than `min_frames`.
pub fn refine_segments(segments: &[MotionSegment], merge_gap_s: f64, min_frames: usize) -> Vec<MotionSegment> {
    let mut merged: Vec<MotionSegment> = Vec::with_capacity(segments.len());
    for seg in segments {
        match merged.last_mut() {
            Some(prev) if seg.onset_s - prev.offset_s < merge_gap_s => {
                prev.offset_frame = seg.offset_frame;
                prev.offset_s = seg.offset_s;
            }
            _ => merged.push(*seg),
        }
    }
    merged.retain(|s| s.frames() >= min_frames);
    merged
}

/// PBC → smoothing → threshold crossings → merge/filter.
pub fn segment_motions(spec: &Spectrogram, cfg: &PbcConfig) -> Result<Vec<MotionSegment>> {
    cfg.validate()?;
    let pbc = power_burst_curve(spec, cfg)?;
    let smoothed = smooth(&pbc, cfg.smooth_len)?;
    let raw = detect_events(&smoothed, cfg.alpha, spec.frame_times_s())?;
    Ok(refine_segments(&raw, cfg.merge_gap_s, cfg.min_segment_frames))
}

/// A `capture_s`-long slice centered on the segment midpoint, shifted inward
/// when it would cross either end of the signal.
pub fn capture_window(signal: &IqSignal, segment: &MotionSegment, capture_s: f64) -> Result<IqSignal> {
    let (start, len) = capture_span(signal.len(), signal.sample_rate_hz(), segment, capture_s, 1)?;
    signal.slice(start, len)
}

/// Start and length in samples of the capture for `segment`, with the start
/// rounded to a multiple of `align`.
pub fn capture_span(
    signal_len: usize,
    sample_rate_hz: f64,
    segment: &MotionSegment,
    capture_s: f64,
    align: usize,
) -> Result<(usize, usize)> {
    let len = (capture_s * sample_rate_hz).round();
    if !(len >= 1.0) || align == 0 {
        return Err(invalid(format!("capture of {capture_s} s is empty")));
    }
    let len = len as usize;
    if len > signal_len {
        return Err(invalid(format!(
            "signal of {signal_len} samples is shorter than the {len}-sample capture"
        )));
    }
    let ideal = segment.midpoint_s() * sample_rate_hz - (len / 2) as f64;
    let slots = ((ideal / align as f64).round().max(0.0) as usize).min((signal_len - len) / align);
    Ok((slots * align, len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex32;

    fn idx_times(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    fn one_frame(values: &[(f64, f64)]) -> Spectrogram {
        // 8 bins over ±64 Hz: bins are 16 Hz apart, centre bin 4 = 0 Hz.
        let mut row = vec![0.0; 8];
        for &(hz, v) in values {
            row[(4 + (hz / 16.0) as isize) as usize] = v;
        }
        Spectrogram::from_rows(vec![row], 128.0, 8, 1).unwrap()
    }

    fn small_band_cfg() -> PbcConfig {
        PbcConfig {
            neg_band_hz: (-64.0, -20.0),
            pos_band_hz: (20.0, 60.0),
            ..PbcConfig::default()
        }
    }

    #[test]
    fn pbc_squares_entries() {
        let spec = one_frame(&[(32.0, 2.0)]);
        let squared = PbcConfig {
            energy: EnergyLaw::Squared,
            ..small_band_cfg()
        };
        assert_eq!(power_burst_curve(&spec, &squared).unwrap(), vec![4.0]);
        assert_eq!(power_burst_curve(&spec, &small_band_cfg()).unwrap(), vec![2.0]);
    }

    #[test]
    fn pbc_ignores_zero_doppler_band() {
        let spec = one_frame(&[(0.0, 9.0), (16.0, 5.0), (-16.0, 3.0)]);
        assert_eq!(power_burst_curve(&spec, &small_band_cfg()).unwrap(), vec![0.0]);
        let zero = one_frame(&[]);
        assert_eq!(power_burst_curve(&zero, &small_band_cfg()).unwrap(), vec![0.0]);
    }

    #[test]
    fn pbc_band_outside_range() {
        let spec = one_frame(&[]);
        assert!(matches!(power_burst_curve(&spec, &PbcConfig::default()), Err(Error::Range(_))));
    }

    #[test]
    fn smoothing_examples() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0];
        assert_eq!(smooth(&x, 1).unwrap(), x);
        assert_eq!(smooth(&[2.5; 7], 5).unwrap(), vec![2.5; 7]);
        assert_eq!(smooth(&[0.0, 0.0, 9.0, 0.0, 0.0], 3).unwrap(), vec![0.0, 3.0, 3.0, 3.0, 0.0]);
        assert!(smooth(&x, 0).is_err());
        assert_eq!(smooth(&[1.0, 2.0, 3.0, 4.0], 4).unwrap(), vec![2.0, 2.5, 3.0, 3.5]);
    }

    #[test]
    fn threshold_substitution() {
        assert_eq!(event_threshold(&[0.0, 10.0, 4.0], 0.1).unwrap(), 1.0);
    }

    #[test]
    fn single_plateau_event() {
        let v = [0.0, 0.0, 5.0, 5.0, 0.0, 0.0];
        let ev = detect_events(&v, 0.1, &idx_times(6)).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].onset_frame, ev[0].offset_frame), (2, 4));
        assert_eq!(ev[0].frames(), 2);
    }

    #[test]
    fn flat_sequence_has_no_events() {
        assert!(detect_events(&[3.0; 10], 0.1, &idx_times(10)).unwrap().is_empty());
        assert!(detect_events(&[], 0.1, &[]).is_err());
    }

    #[test]
    fn open_event_closes_at_end() {
        let v = [0.0, 0.0, 5.0, 6.0, 7.0];
        let ev = detect_events(&v, 0.1, &idx_times(5)).unwrap();
        assert_eq!((ev[0].onset_frame, ev[0].offset_frame), (2, 4));
        // Only the final value above threshold: no room for a segment.
        assert!(detect_events(&[0.0, 0.0, 1.0], 0.1, &idx_times(3)).unwrap().is_empty());
    }

    #[test]
    fn value_equal_to_threshold_neither_opens_nor_closes() {
        // T = 1.0 exactly.
        let v = [0.0, 1.0, 10.0, 1.0, 10.0, 0.0];
        let ev = detect_events(&v, 0.1, &idx_times(6)).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].onset_frame, ev[0].offset_frame), (2, 5));
    }

    #[test]
    fn refine_merges_and_filters() {
        let seg = |a: usize, b: usize| MotionSegment {
            onset_frame: a,
            offset_frame: b,
            onset_s: a as f64 * 0.01,
            offset_s: b as f64 * 0.01,
        };
        let raw = [seg(0, 30), seg(40, 60), seg(200, 205), seg(300, 400)];
        let out = refine_segments(&raw, 0.25, 10);
        assert_eq!(out, vec![seg(0, 60), seg(300, 400)]);
    }

    fn ramp_signal(seconds: f64) -> IqSignal {
        let n = (seconds * 100.0) as usize;
        let samples = (0..n).map(|i| Complex32::new(i as f32, 0.0)).collect();
        IqSignal::new(samples, 100.0, 25e9, None).unwrap()
    }

    fn at(mid: f64) -> MotionSegment {
        MotionSegment {
            onset_frame: 0,
            offset_frame: 1,
            onset_s: mid - 0.5,
            offset_s: mid + 0.5,
        }
    }

    #[test]
    fn capture_is_centered() {
        let s = ramp_signal(40.0);
        let c = capture_window(&s, &at(20.0), 5.0).unwrap();
        assert_eq!(c.len(), 500);
        assert_eq!(c.samples()[0].re, 1750.0);
        assert_eq!(c.samples()[499].re, 2249.0);
    }

    #[test]
    fn capture_clamps_to_bounds() {
        let s = ramp_signal(40.0);
        let c = capture_window(&s, &at(1.0), 5.0).unwrap();
        assert_eq!(c.samples()[0].re, 0.0);
        let c = capture_window(&s, &at(39.5), 5.0).unwrap();
        assert_eq!(c.samples()[499].re, 3999.0);
        assert!(capture_window(&ramp_signal(4.0), &at(2.0), 5.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PbcConfig::default().validate().is_ok());
        let bad_alpha = PbcConfig {
            alpha: 0.5,
            ..PbcConfig::default()
        };
        assert!(bad_alpha.validate().is_err());
        let bad_band = PbcConfig {
            pos_band_hz: (10.0, 500.0),
            ..PbcConfig::default()
        };
        assert!(bad_band.validate().is_err());
    }
}
