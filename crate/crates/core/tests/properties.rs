use proptest::prelude::*;

use microdoppler::classify::{nearest_index, nn_classify, ConfusionMatrix, ItemMeta, LabeledDataset, LabeledItem};
use microdoppler::envelope::{
    band_energies, calibrate_sigma, extract_envelopes, feature_vector, thresholds, EnvelopeConfig, EnvelopePair,
    FeatureMode, FeatureVector, RatioMode,
};
use microdoppler::metrics::DistanceKind;
use microdoppler::segmentation::{detect_events, power_burst_curve, PbcConfig};
use microdoppler::signals::{doppler_shift, MotionClass};
use microdoppler::tfr::Spectrogram;

/// 64 bins at 4 Hz spacing: -128..124 Hz.
const K: usize = 64;
const FS: f64 = 256.0;

fn spec_from(rows: Vec<Vec<f64>>) -> Spectrogram {
    Spectrogram::from_rows(rows, FS, K, 1).unwrap()
}

fn rows(frames: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    let value = prop_oneof![Just(0.0), 0.0..100.0f64, 1e-3..1.0f64];
    prop::collection::vec(prop::collection::vec(value, K), frames)
}

fn pbc_cfg() -> PbcConfig {
    PbcConfig {
        neg_band_hz: (-100.0, -20.0),
        pos_band_hz: (20.0, 100.0),
        ..PbcConfig::default()
    }
}

fn bounded(spec: &Spectrogram, env: &EnvelopePair, sigma: (f64, f64), cfg: &EnvelopeConfig) -> bool {
    let (e_pos, e_neg) = band_energies(spec, cfg.energy).unwrap();
    let t_pos = thresholds(&e_pos, sigma.0).unwrap();
    let t_neg = thresholds(&e_neg, sigma.1).unwrap();
    let f = spec.bin_freqs_hz();
    spec.frames().enumerate().all(|(n, row)| {
        let below = |v: f64, t: f64| v < t || v <= 0.0;
        (K / 2..K).filter(|&k| f[k] > env.e_pos[n]).all(|k| below(row[k], t_pos[n]))
            && (0..K / 2).filter(|&k| f[k] < env.e_neg[n]).all(|k| below(row[k], t_neg[n]))
    })
}

proptest! {
    #[test]
    fn doppler_is_odd_and_linear(v in -50.0..50.0f64, fc in 1e9..1e11f64) {
        let f = doppler_shift(v, fc).unwrap();
        prop_assert_eq!(doppler_shift(-v, fc).unwrap(), -f);
        prop_assert_eq!(doppler_shift(2.0 * v, fc).unwrap(), 2.0 * f);
    }

    #[test]
    fn pbc_ignores_content_near_zero_doppler(rows in rows(6), extra in prop::collection::vec(0.0..1e6f64, 9)) {
        let spec = spec_from(rows.clone());
        let freqs = spec.bin_freqs_hz().to_vec();
        let inner: Vec<usize> = (0..K).filter(|&k| freqs[k].abs() < 20.0).collect();
        prop_assert_eq!(inner.len(), 9);
        let mut bumped = rows;
        for row in &mut bumped {
            for (&k, e) in inner.iter().zip(&extra) {
                row[k] += e;
            }
        }
        let a = power_burst_curve(&spec, &pbc_cfg()).unwrap();
        let b = power_burst_curve(&spec_from(bumped), &pbc_cfg()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn events_are_ordered_crossings(values in prop::collection::vec(0.0..10.0f64, 1..80), alpha in 0.01..0.99f64, shift in -8i32..8) {
        let times: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
        let segs = detect_events(&values, alpha, &times).unwrap();
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let t = lo + alpha * (hi - lo);
        let last = values.len() - 1;
        for (i, s) in segs.iter().enumerate() {
            prop_assert!(s.onset_frame < s.offset_frame);
            if let Some(next) = segs.get(i + 1) {
                prop_assert!(s.offset_frame <= next.onset_frame);
            }
            prop_assert!(values[s.onset_frame] > t);
            prop_assert!(s.onset_frame == 0 || values[s.onset_frame - 1] <= t);
            prop_assert!(values[s.onset_frame..s.offset_frame].iter().all(|&v| v >= t));
            prop_assert!(values[s.offset_frame] < t || s.offset_frame == last);
        }
        // Power-of-two scaling keeps every comparison exact.
        let c = 2f64.powi(shift);
        let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
        prop_assert_eq!(detect_events(&scaled, alpha, &times).unwrap(), segs);
    }

    #[test]
    fn envelopes_bound_the_spectrogram(rows in rows(5), sigma in 0.001..0.5f64, ratio in any::<bool>()) {
        let spec = spec_from(rows);
        let cfg = EnvelopeConfig {
            ratio_mode: if ratio { RatioMode::ConstantRatio } else { RatioMode::FixedSigma },
            sigma_pos: sigma,
            sigma_neg: sigma,
            ..EnvelopeConfig::default()
        };
        let sigmas = match cfg.ratio_mode {
            RatioMode::FixedSigma => (sigma, sigma),
            RatioMode::ConstantRatio => match calibrate_sigma(&spec, cfg.energy, cfg.active_floor) {
                Ok(s) => s,
                Err(_) => return Ok(()),
            },
        };
        let env = extract_envelopes(&spec, &cfg).unwrap();
        prop_assert!(env.e_pos.iter().all(|&f| f >= 0.0));
        prop_assert!(env.e_neg.iter().all(|&f| f <= 0.0));
        prop_assert!(bounded(&spec, &env, sigmas, &cfg));
    }

    #[test]
    fn raising_sigma_never_raises_the_envelope(rows in rows(5), a in 0.001..0.9f64, b in 0.001..0.9f64) {
        let spec = spec_from(rows);
        let (lo, hi) = (a.min(b), a.max(b));
        let env = |s: f64| {
            let cfg = EnvelopeConfig { ratio_mode: RatioMode::FixedSigma, sigma_pos: s, sigma_neg: s, ..EnvelopeConfig::default() };
            extract_envelopes(&spec, &cfg).unwrap()
        };
        let (low, high) = (env(lo), env(hi));
        prop_assert!(high.e_pos.iter().zip(&low.e_pos).all(|(h, l)| h <= l));
    }

    #[test]
    fn envelopes_ignore_amplitude(rows in rows(5), k in -20i32..20, ratio in any::<bool>()) {
        let spec = spec_from(rows);
        let cfg = EnvelopeConfig {
            ratio_mode: if ratio { RatioMode::ConstantRatio } else { RatioMode::FixedSigma },
            ..EnvelopeConfig::default()
        };
        let Ok(env) = extract_envelopes(&spec, &cfg) else { return Ok(()) };
        let scaled = spec.scaled(2f64.powi(k)).unwrap();
        prop_assert_eq!(extract_envelopes(&scaled, &cfg).unwrap(), env);
    }

    #[test]
    fn augmented_block_is_the_difference(pos in prop::collection::vec(0.0..500.0f64, 1..30), seed in any::<u64>()) {
        let neg: Vec<f64> = pos.iter().enumerate().map(|(i, p)| -((p * 0.37 + (seed % 97) as f64 + i as f64) % 400.0)).collect();
        let pair = EnvelopePair { frame_times_s: vec![0.0; pos.len()], e_pos: pos.clone(), e_neg: neg.clone() };
        let v = feature_vector(&pair, FeatureMode::Augmented).unwrap();
        let n = pos.len();
        prop_assert_eq!(v.len(), 3 * n);
        for i in 0..n {
            prop_assert_eq!(v.values[2 * n + i], v.values[i] - v.values[n + i]);
        }
    }

    #[test]
    fn fixed_index_metric_predicts_its_label(n in 1usize..40, pick in any::<prop::sample::Index>()) {
        let target = pick.index(n);
        prop_assert_eq!(nearest_index(n, |k| if k == target { 0.0 } else { 1.0 }), Some(target));
    }

    #[test]
    fn accuracy_is_trace_over_total(pairs in prop::collection::vec((0usize..6, 0usize..6), 1..200)) {
        let mut cm = ConfusionMatrix::new(1);
        for &(t, p) in &pairs {
            cm.record(MotionClass::ALL[t], MotionClass::ALL[p]);
        }
        let trace = pairs.iter().filter(|(t, p)| t == p).count();
        prop_assert_eq!(cm.accuracy(), trace as f64 / pairs.len() as f64);
    }

    #[test]
    fn nn_prediction_ignores_positive_scaling(
        train in prop::collection::vec((prop::collection::vec(-50.0..50.0f64, 8), 0usize..6), 2..12),
        query in prop::collection::vec(-50.0..50.0f64, 8),
        k in -6i32..6,
    ) {
        let item = |v: &[f64], c: usize| LabeledItem {
            features: FeatureVector::new(v.to_vec(), FeatureMode::Basic, 4).unwrap(),
            label: MotionClass::ALL[c],
            meta: ItemMeta::default(),
        };
        let data = LabeledDataset::new(train.iter().map(|(v, c)| item(v, *c)).collect()).unwrap();
        let q = FeatureVector::new(query, FeatureMode::Basic, 4).unwrap();
        let c = 2f64.powi(k);
        for metric in DistanceKind::ALL {
            prop_assert_eq!(
                nn_classify(&q, &data, metric).unwrap(),
                nn_classify(&q.scaled(c), &data.scaled(c), metric).unwrap()
            );
        }
    }
}
