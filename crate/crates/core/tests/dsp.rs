mod common;

use std::f64::consts::PI;

use jamloc::dsp::features::{IQ_CHANNELS, SNAPSHOT_LEN};
use jamloc::dsp::{
    aoa_features, cfo_accumulated, featurize, fft, ifft, minmax_db, naive_dft, spectrogram, stft, welch_psd,
    NormalizationSpec, SPEC_MAX_DB, SPEC_MIN_DB,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noise(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

fn tone(n: usize, cycles_per_sample: f64, amp: f64) -> Vec<Complex64> {
    (0..n).map(|i| Complex64::from_polar(amp, 2.0 * PI * cycles_per_sample * i as f64)).collect()
}

#[test]
fn fft_matches_naive_dft_at_1024() {
    let x = noise(1024, 1);
    let fast = fft(&x).unwrap();
    let slow = naive_dft(&x);
    let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-9 * 1024.0, "max abs error {err}");
}

#[test]
fn parseval_holds_at_1024() {
    let x = noise(1024, 2);
    let time: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    let freq: f64 = fft(&x).unwrap().iter().map(|v| v.norm_sqr()).sum::<f64>() / 1024.0;
    assert!((time - freq).abs() / time < 1e-9);
}

proptest! {
    #[test]
    fn fft_agrees_with_dft_for_every_power_of_two(log2 in 0u32..10, seed in any::<u64>()) {
        let n = 1usize << log2;
        let x = noise(n, seed);
        let err = fft(&x).unwrap().iter().zip(naive_dft(&x)).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9 * n as f64);
        let back = ifft(&fft(&x).unwrap()).unwrap();
        let rt = back.iter().zip(&x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(rt < 1e-12 * n as f64);
    }

    #[test]
    fn clamp_map_stays_in_unit_interval(v in -400.0f64..100.0) {
        let m = minmax_db(v, SPEC_MIN_DB, SPEC_MAX_DB);
        prop_assert!((0.0..=1.0).contains(&m));
    }
}

#[test]
fn clamp_map_endpoints_are_exact() {
    assert_eq!(minmax_db(-195.69, SPEC_MIN_DB, SPEC_MAX_DB), 0.0);
    assert_eq!(minmax_db(-19.89, SPEC_MIN_DB, SPEC_MAX_DB), 1.0);
    assert_eq!(minmax_db(-500.0, SPEC_MIN_DB, SPEC_MAX_DB), 0.0);
    assert_eq!(minmax_db(0.0, SPEC_MIN_DB, SPEC_MAX_DB), 1.0);
}

#[test]
fn tone_lands_in_its_shifted_bin() {
    let k = 100;
    // 10 log10(N a^2) = -30 dB keeps the peak inside the clamp range.
    let amp = (1e-3f64 / 1024.0).sqrt();
    let ch = tone(1024, k as f64 / 1024.0, amp);
    let spec = spectrogram(&[ch], SPEC_MIN_DB, SPEC_MAX_DB).unwrap();
    let peak = spec.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(peak, 512 + k);
    let expected = minmax_db(-30.0, SPEC_MIN_DB, SPEC_MAX_DB);
    assert!((spec[peak] as f64 - expected).abs() < 1e-6);
}

#[test]
fn welch_of_white_noise_is_flat() {
    let psd = welch_psd(&noise(1 << 16, 3), 64, 32).unwrap();
    let mean = psd.iter().sum::<f64>() / psd.len() as f64;
    let worst = psd.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    assert!(worst < 0.5, "deviation {worst} dB");
    // Unit-variance complex noise has a PSD of 2 per bin.
    assert!((mean - 10.0 * 2f64.log10()).abs() < 0.2, "mean {mean} dB");
}

#[test]
fn welch_finds_a_tone() {
    let mut x = noise(8192, 4);
    for (v, t) in x.iter_mut().zip(tone(8192, -0.25, 10.0)) {
        *v += t;
    }
    let psd = welch_psd(&x, 128, 64).unwrap();
    let peak = psd.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(peak, 64 - 32);
}

#[test]
fn chirp_stft_peak_rises_frame_by_frame() {
    let n = SNAPSHOT_LEN;
    let (f0, f1) = (-0.4, 0.4);
    let rate = (f1 - f0) / n as f64;
    let x: Vec<Complex64> = (0..n)
        .map(|i| {
            let t = i as f64;
            Complex64::from_polar(1.0, 2.0 * PI * (f0 * t + 0.5 * rate * t * t))
        })
        .collect();
    let (mag, f, t) = stft(&x, 128, 64).unwrap();
    assert_eq!((f, t), (128, 15));
    let peaks: Vec<usize> = (0..t)
        .map(|j| (0..f).max_by(|&a, &b| mag[a * t + j].total_cmp(&mag[b * t + j])).unwrap())
        .collect();
    assert!(peaks.windows(2).all(|w| w[1] > w[0]), "{peaks:?}");
}

#[test]
fn cfo_of_a_tone_is_a_line_through_the_origin() {
    let f = 0.0123;
    let acc = cfo_accumulated(&tone(1024, f, 0.7));
    assert_eq!(acc[0], 0.0);
    for (n, v) in acc.iter().enumerate() {
        assert!((v - 2.0 * PI * f * n as f64).abs() < 1e-9, "n = {n}");
    }
}

#[test]
fn aoa_features_ignore_a_global_phase() {
    let snap = &common::snapshots(1, 5)[0];
    let chans = snap.channels_f64();
    let base = aoa_features(&chans).unwrap();
    for theta in [0.3, 1.7, -2.9] {
        let rot = Complex64::from_polar(1.0, theta);
        let turned: Vec<Vec<Complex64>> = chans.iter().map(|c| c.iter().map(|v| v * rot).collect()).collect();
        let f = aoa_features(&turned).unwrap();
        for (i, (a, b)) in base.iter().zip(&f).enumerate() {
            assert!((a - b).abs() < 1e-9, "feature {i}: {a} vs {b}");
        }
    }
}

#[test]
fn iq_standardization_on_the_fit_split() {
    let items = common::bundles(6, 6);
    let norm = NormalizationSpec::fit(&items).unwrap();
    let rows: Vec<Vec<f64>> = items.iter().map(|b| norm.apply_iq(&b.iq)).collect();
    for c in 0..IQ_CHANNELS {
        let vals: Vec<f64> = rows.iter().flat_map(|r| r[c * SNAPSHOT_LEN..(c + 1) * SNAPSHOT_LEN].iter().copied()).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9, "channel {c} mean {mean}");
        assert!((std - 1.0).abs() < 1e-9, "channel {c} std {std}");
    }
}

#[test]
fn featurized_maps_are_bounded() {
    for b in common::bundles(3, 7) {
        assert!(b.spectrogram.iter().chain(&b.stft).all(|v| (0.0..=1.0).contains(v)));
        assert!(b.aoa.iter().chain(&b.cfo).chain(&b.iq).all(|v| v.is_finite()));
    }
}

#[test]
fn featurize_rejects_wrong_lengths() {
    let mut snap = common::snapshots(1, 8).remove(0);
    for ch in &mut snap.samples {
        ch.truncate(512);
    }
    assert!(featurize(&snap).is_err());
}
