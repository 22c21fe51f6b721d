//! Two-rod arm model.
//!
//! Each arm is an upper-arm rod hinged at the shoulder and a forearm rod
//! hinged at the elbow. A pose is (shoulder elevation, plane azimuth, elbow
//! flexion); gestures are keyframe sequences whose joint angles move with a
//! raised-cosine velocity profile. Point scatterers sit evenly along both
//! rods of both arms and the return is the coherent sum of their echoes.

use std::f64::consts::PI;

use num_complex::{Complex, Complex32};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{add_noise_power, IqSignal, MotionClass, SPEED_OF_LIGHT};
use crate::error::{invalid, Result};

/// Upper bound on the Doppler produced by any class at `speed_scale = 1`.
pub const MAX_DESIGN_DOPPLER_HZ: f64 = 500.0;

const UPPER_ARM_M: f64 = 0.30;
const FOREARM_M: f64 = 0.35;
const SHOULDER_HALF_WIDTH_M: f64 = 0.18;
const RADAR_RANGE_M: f64 = 3.0;
/// Radar sits at table height, below the shoulders.
const RADAR_HEIGHT_M: f64 = -0.35;
/// Samples between exact kinematic evaluations.
const NODE_STEP: usize = 8;

/// Parameters of one synthesized recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisParams {
    pub motion: MotionClass,
    pub duration_s: f64,
    /// 1.0 is normal speed, below 1.0 is slow.
    pub speed_scale: f64,
    pub orientation_deg: f64,
    /// SNR against the boresight signal power; `inf` disables noise.
    pub snr_db: f64,
    /// Time at which the gesture begins.
    pub start_offset_s: f64,
    /// Scatterers per rod.
    pub scatterer_count: usize,
    /// Timing jitter magnitude: start offset, inter-stroke gaps and the lag
    /// between the two arms are perturbed by uniform draws scaled by this.
    pub jitter_s: f64,
    pub seed: u64,
}

impl SynthesisParams {
    pub fn new(motion: MotionClass) -> Self {
        Self {
            motion,
            duration_s: 5.0,
            speed_scale: 1.0,
            orientation_deg: 0.0,
            snr_db: f64::INFINITY,
            start_offset_s: 1.0,
            scatterer_count: 15,
            jitter_s: 0.0,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid(format!("duration_s must be > 0, got {}", self.duration_s)));
        }
        if !(self.speed_scale.is_finite() && self.speed_scale > 0.0) {
            return Err(invalid(format!("speed_scale must be > 0, got {}", self.speed_scale)));
        }
        if !(-20.0..=20.0).contains(&self.orientation_deg) {
            return Err(invalid(format!(
                "orientation_deg must lie in [-20, 20], got {}",
                self.orientation_deg
            )));
        }
        if self.snr_db.is_nan() {
            return Err(invalid("snr_db is NaN"));
        }
        if !(self.start_offset_s.is_finite() && self.start_offset_s >= 0.0) {
            return Err(invalid(format!("start_offset_s must be >= 0, got {}", self.start_offset_s)));
        }
        if self.scatterer_count < 2 {
            return Err(invalid("scatterer_count must be at least 2"));
        }
        if !(self.jitter_s.is_finite() && self.jitter_s >= 0.0) {
            return Err(invalid(format!("jitter_s must be >= 0, got {}", self.jitter_s)));
        }
        Ok(())
    }
}

/// Joint angles in degrees: shoulder elevation from hanging down, azimuth of
/// the arm plane (positive = outward), elbow flexion.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Pose {
    elevation: f64,
    azimuth: f64,
    elbow: f64,
}

const fn pose(elevation: f64, azimuth: f64, elbow: f64) -> Pose {
    Pose {
        elevation,
        azimuth,
        elbow,
    }
}

const REST: Pose = pose(15.0, 10.0, 75.0);
const PUSH: Pose = pose(85.0, 0.0, 5.0);
const WIDE: Pose = pose(80.0, 85.0, 5.0);
const CROSSED: Pose = pose(75.0, -80.0, 20.0);
const STOP: Pose = pose(95.0, 10.0, 85.0);
const ROLL: [Pose; 4] = [
    pose(40.0, -10.0, 50.0),
    pose(60.0, -10.0, 5.0),
    pose(75.0, -10.0, 45.0),
    pose(55.0, -10.0, 95.0),
];

#[derive(Debug, Clone, Copy)]
struct Stroke {
    right: Pose,
    left: Pose,
    duration_s: f64,
    gap_after_s: f64,
}

const fn both(to: Pose, duration_s: f64, gap_after_s: f64) -> Stroke {
    Stroke {
        right: to,
        left: to,
        duration_s,
        gap_after_s,
    }
}

const fn right_only(to: Pose, duration_s: f64, gap_after_s: f64) -> Stroke {
    Stroke {
        right: to,
        left: REST,
        duration_s,
        gap_after_s,
    }
}

fn strokes(motion: MotionClass) -> Vec<Stroke> {
    match motion {
        MotionClass::PushPull => vec![both(PUSH, 0.32, 0.05), both(REST, 0.36, 0.0)],
        MotionClass::CrossOpen => vec![
            both(CROSSED, 0.55, 0.10),
            both(WIDE, 0.95, 0.10),
            both(REST, 0.60, 0.0),
        ],
        MotionClass::Cross => vec![
            both(WIDE, 0.55, 0.10),
            both(CROSSED, 0.95, 0.10),
            both(REST, 0.60, 0.0),
        ],
        MotionClass::Roll => {
            // Two full loops with the arms half a cycle apart.
            let mut out = vec![Stroke {
                right: ROLL[0],
                left: ROLL[2],
                duration_s: 0.6,
                gap_after_s: 0.0,
            }];
            for k in 1..=8 {
                out.push(Stroke {
                    right: ROLL[k % 4],
                    left: ROLL[(k + 2) % 4],
                    duration_s: 0.17,
                    gap_after_s: 0.0,
                });
            }
            out.push(both(REST, 0.6, 0.0));
            out
        }
        // One raised hand, palm toward the radar.
        MotionClass::StopSign => vec![right_only(STOP, 0.45, 0.15), right_only(REST, 0.70, 0.0)],
        MotionClass::PushOpen => vec![
            both(PUSH, 0.32, 0.05),
            both(WIDE, 0.62, 0.10),
            both(REST, 0.65, 0.0),
        ],
    }
}

/// Nominal active duration of a gesture without jitter.
pub fn gesture_duration_s(motion: MotionClass, speed_scale: f64) -> f64 {
    strokes(motion)
        .iter()
        .map(|s| s.duration_s + s.gap_after_s)
        .sum::<f64>()
        / speed_scale
}

/// Fraction of a raised-cosine velocity stroke completed at normalized time `u`.
fn raised_cosine_progress(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u - (2.0 * PI * u).sin() / (2.0 * PI)
    }
}

/// A scheduled joint-angle change for one arm.
struct Segment {
    start_s: f64,
    duration_s: f64,
    from: Pose,
    to: Pose,
}

struct ArmTrack {
    /// -1 for the right arm, +1 for the left.
    side: f64,
    segments: Vec<Segment>,
}

impl ArmTrack {
    fn pose_at(&self, t: f64) -> Pose {
        let mut p = REST;
        for seg in &self.segments {
            let w = raised_cosine_progress((t - seg.start_s) / seg.duration_s);
            if w == 0.0 {
                continue;
            }
            p.elevation += w * (seg.to.elevation - seg.from.elevation);
            p.azimuth += w * (seg.to.azimuth - seg.from.azimuth);
            p.elbow += w * (seg.to.elbow - seg.from.elbow);
        }
        p
    }

    /// Writes scatterer positions (shoulder→elbow rod, then elbow→hand rod).
    fn scatterers(&self, t: f64, per_rod: usize, out: &mut Vec<[f64; 3]>) {
        let p = self.pose_at(t);
        let (el, az, fo) = (
            p.elevation.to_radians(),
            p.azimuth.to_radians(),
            (p.elevation + p.elbow).to_radians(),
        );
        let h = [az.cos(), self.side * az.sin(), 0.0];
        let upper = [el.sin() * h[0], el.sin() * h[1], -el.cos()];
        let fore = [fo.sin() * h[0], fo.sin() * h[1], -fo.cos()];
        let shoulder = [0.0, self.side * SHOULDER_HALF_WIDTH_M, 0.0];
        let elbow: [f64; 3] = std::array::from_fn(|i| shoulder[i] + UPPER_ARM_M * upper[i]);
        for k in 1..=per_rod {
            let f = k as f64 / per_rod as f64;
            out.push(std::array::from_fn(|i| shoulder[i] + f * UPPER_ARM_M * upper[i]));
        }
        for k in 1..=per_rod {
            let f = k as f64 / per_rod as f64;
            out.push(std::array::from_fn(|i| elbow[i] + f * FOREARM_M * fore[i]));
        }
    }
}

fn schedule(params: &SynthesisParams, rng: &mut ChaCha8Rng) -> [ArmTrack; 2] {
    let plan = strokes(params.motion);
    let j = params.jitter_s;
    let mut uniform = |scale: f64| {
        if scale > 0.0 {
            rng.random_range(-scale..=scale)
        } else {
            0.0
        }
    };
    let start = (params.start_offset_s + uniform(j)).max(0.0);
    let left_lag = uniform(0.25 * j);

    let mut starts = Vec::with_capacity(plan.len());
    let mut t = start;
    for (i, s) in plan.iter().enumerate() {
        starts.push(t);
        let duration = s.duration_s / params.speed_scale;
        // Only designed pauses stretch or shrink; continuous strokes stay joined.
        let mut gap = s.gap_after_s / params.speed_scale;
        if s.gap_after_s > 0.0 {
            gap += uniform(0.5 * j);
        }
        if let Some(next) = plan.get(i + 1) {
            // Strokes may overlap by at most half of the shorter one.
            let min_gap = -0.5 * duration.min(next.duration_s / params.speed_scale);
            gap = gap.max(min_gap);
        }
        t += duration + gap;
    }

    let track = |side: f64, lag: f64, pick: fn(&Stroke) -> Pose| {
        let mut from = REST;
        let segments = plan
            .iter()
            .zip(&starts)
            .map(|(s, &st)| {
                let to = pick(s);
                let seg = Segment {
                    start_s: st + lag,
                    duration_s: s.duration_s / params.speed_scale,
                    from,
                    to,
                };
                from = to;
                seg
            })
            .collect();
        ArmTrack { side, segments }
    };
    [
        track(-1.0, 0.0, |s| s.right),
        track(1.0, left_lag, |s| s.left),
    ]
}

/// Beam-pattern amplitude factor: -1 dB at 10 degrees, -4 dB at 20 degrees.
fn beam_amplitude(orientation_deg: f64) -> f64 {
    let gain_db = -(orientation_deg / 10.0).powi(2);
    10f64.powf(gain_db / 20.0)
}

/// Synthesizes the CW return of one arm gesture.
///
/// The echo of each scatterer is `a·exp(-j·4π·r(t)/λ)` so that a shrinking
/// range yields a positive Doppler frequency. Orientation scales every range
/// rate by `cos(angle)` and every amplitude by the beam factor; noise is
/// referenced to the boresight signal power so off-axis captures have lower
/// SNR.
pub fn synthesize_motion(
    params: &SynthesisParams,
    sample_rate_hz: f64,
    carrier_hz: f64,
) -> Result<IqSignal> {
    params.validate()?;
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(invalid(format!("sample rate must be positive, got {sample_rate_hz}")));
    }
    if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
        return Err(invalid(format!("carrier must be positive, got {carrier_hz}")));
    }
    let n = (params.duration_s * sample_rate_hz).round() as usize;
    if n == 0 {
        return Err(invalid("duration shorter than one sample"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let arms = schedule(params, &mut rng);
    let noise_seed: u64 = rng.random();

    let wavelength = SPEED_OF_LIGHT / carrier_hz;
    let k = 4.0 * PI / wavelength;
    let cos_angle = params.orientation_deg.to_radians().cos();
    let scatterers = 4 * params.scatterer_count;
    let amplitude = beam_amplitude(params.orientation_deg) / (scatterers as f64).sqrt();
    let radar = [RADAR_RANGE_M, 0.0, RADAR_HEIGHT_M];
    let reference_range = (radar[0].powi(2) + radar[2].powi(2)).sqrt();

    let node_ranges = |t: f64, points: &mut Vec<[f64; 3]>, out: &mut Vec<f64>| {
        points.clear();
        for arm in &arms {
            arm.scatterers(t, params.scatterer_count, points);
        }
        out.clear();
        out.extend(points.iter().map(|p| {
            let r = ((p[0] - radar[0]).powi(2) + (p[1] - radar[1]).powi(2) + (p[2] - radar[2]).powi(2)).sqrt();
            reference_range + cos_angle * (r - reference_range)
        }));
    };

    // Ranges are evaluated exactly every NODE_STEP samples; in between the
    // range is linear, so each echo is advanced by a constant phase rotation.
    let mut points = Vec::with_capacity(scatterers);
    let (mut r0, mut r1) = (Vec::with_capacity(scatterers), Vec::with_capacity(scatterers));
    node_ranges(0.0, &mut points, &mut r0);
    let mut max_rate = 0.0f64;
    let mut samples = Vec::with_capacity(n);
    let mut block = [Complex::new(0.0f64, 0.0); NODE_STEP];
    for start in (0..n).step_by(NODE_STEP) {
        let end = start + NODE_STEP;
        node_ranges(end as f64 / sample_rate_hz, &mut points, &mut r1);
        block.fill(Complex::new(0.0, 0.0));
        for (&a, &b) in r0.iter().zip(&r1) {
            max_rate = max_rate.max((b - a).abs() * sample_rate_hz / NODE_STEP as f64);
            let mut z = Complex::from_polar(1.0, -k * a);
            let w = Complex::from_polar(1.0, -k * (b - a) / NODE_STEP as f64);
            for acc in block.iter_mut() {
                *acc += z;
                z *= w;
            }
        }
        let take = NODE_STEP.min(n - start);
        samples.extend(
            block[..take]
                .iter()
                .map(|c| Complex32::new((amplitude * c.re) as f32, (amplitude * c.im) as f32)),
        );
        std::mem::swap(&mut r0, &mut r1);
    }

    let max_doppler = 2.0 * max_rate / wavelength;
    if sample_rate_hz < 4.0 * max_doppler {
        return Err(invalid(format!(
            "sample rate {sample_rate_hz} Hz is below 4x the peak Doppler {max_doppler:.1} Hz"
        )));
    }

    let clean = IqSignal::new(samples, sample_rate_hz, carrier_hz, Some(params.motion))?;
    if params.snr_db == f64::INFINITY {
        return Ok(clean);
    }
    let boresight_power = clean.mean_power() / beam_amplitude(params.orientation_deg).powi(2);
    let noise_power = boresight_power / 10f64.powf(params.snr_db / 10.0);
    add_noise_power(&clean, noise_power, noise_seed)
}

/// Peak |Doppler| of a noiseless synthesis, from range differences.
#[cfg(test)]
pub(crate) fn peak_doppler_hz(params: &SynthesisParams, sample_rate_hz: f64, carrier_hz: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let arms = schedule(params, &mut rng);
    let radar = [RADAR_RANGE_M, 0.0, RADAR_HEIGHT_M];
    let wavelength = SPEED_OF_LIGHT / carrier_hz;
    let cos_angle = params.orientation_deg.to_radians().cos();
    let n = (params.duration_s * sample_rate_hz).round() as usize;
    let mut points = Vec::new();
    let mut prev: Vec<f64> = Vec::new();
    let mut peak = 0.0f64;
    for i in 0..n {
        points.clear();
        for arm in &arms {
            arm.scatterers(i as f64 / sample_rate_hz, params.scatterer_count, &mut points);
        }
        let ranges: Vec<f64> = points
            .iter()
            .map(|p| {
                cos_angle
                    * ((p[0] - radar[0]).powi(2) + (p[1] - radar[1]).powi(2) + (p[2] - radar[2]).powi(2))
                        .sqrt()
            })
            .collect();
        if !prev.is_empty() {
            for (r, q) in ranges.iter().zip(&prev) {
                peak = peak.max(2.0 * (r - q).abs() * sample_rate_hz / wavelength);
            }
        }
        prev = ranges;
    }
    peak
}
