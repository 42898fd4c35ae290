//! The 22 per-patch features consumed by the AoA branch.
//!
//! Layout per patch (index: feature):
//!
//! | idx | group | feature |
//! |-----|-------|---------|
//! | 0 | temporal | mean of \|x\| |
//! | 1 | temporal | std of \|x\| |
//! | 2 | temporal | skewness of \|x\| |
//! | 3 | temporal | kurtosis of \|x\| |
//! | 4 | temporal | RMS |
//! | 5 | temporal | zero-crossing rate of \|x\| - mean\|x\| |
//! | 6 | spectral | centroid (cycles/sample) |
//! | 7 | spectral | spread |
//! | 8 | spectral | flatness |
//! | 9 | spectral | 85% rolloff frequency |
//! | 10 | spectral | argmax frequency |
//! | 11 | spectral | normalized entropy |
//! | 12 | energy | total energy (dB) |
//! | 13 | energy | peak-to-average power ratio |
//! | 14 | energy | fraction of energy with \|f\| < 1/4 |
//! | 15 | envelope | envelope mean |
//! | 16 | envelope | envelope std |
//! | 17 | envelope | envelope max |
//! | 18 | envelope | crest factor |
//! | 19 | phase | circular mean of arg(x conj(x0)) |
//! | 20 | phase | circular std of arg(x conj(x0)) |
//! | 21 | phase | mean instantaneous-frequency difference to patch 0 |
//!
//! The envelope is a 16-sample moving average of |x|.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::fft::{fft_in_place, fftshift};
use crate::error::{invalid, Result};

pub const N_AOA_FEATURES: usize = 22;
pub const ENVELOPE_SPAN: usize = 16;

/// Features for every channel, row-major `[channel][feature]`.
pub fn aoa_features(channels: &[Vec<Complex64>]) -> Result<Vec<f64>> {
    if channels.is_empty() {
        return invalid("aoa_features needs at least one channel");
    }
    let n = channels[0].len();
    if n < 2 || !n.is_power_of_two() || channels.iter().any(|c| c.len() != n) {
        return invalid("aoa_features needs equal power-of-two channel lengths");
    }
    let mut out = Vec::with_capacity(channels.len() * N_AOA_FEATURES);
    for (k, ch) in channels.iter().enumerate() {
        out.extend(patch_features(ch)?);
        if k == 0 {
            out.extend([0.0; 3]);
        } else {
            out.extend(phase_features(ch, &channels[0]));
        }
    }
    Ok(out)
}

/// Relative spread below which a magnitude sequence counts as constant.
/// Samples are stored as f32, so smaller fluctuations are quantization noise
/// and their shape statistics would be dominated by rounding.
const FLAT_REL_STD: f64 = 1e-6;

fn is_flat(mean: f64, std: f64) -> bool {
    std <= FLAT_REL_STD * mean.abs()
}

fn moments(v: &[f64]) -> (f64, f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if is_flat(mean, std) {
        return (mean, std, 0.0, 0.0);
    }
    let skew = v.iter().map(|a| ((a - mean) / std).powi(3)).sum::<f64>() / n;
    let kurt = v.iter().map(|a| ((a - mean) / std).powi(4)).sum::<f64>() / n;
    (mean, std, skew, kurt)
}

fn patch_features(x: &[Complex64]) -> Result<[f64; 19]> {
    let n = x.len();
    let nf = n as f64;
    let mag: Vec<f64> = x.iter().map(|v| v.norm()).collect();
    let pow: Vec<f64> = x.iter().map(|v| v.norm_sqr()).collect();
    let energy: f64 = pow.iter().sum();
    let mut f = [0.0; 19];
    f[12] = 10.0 * (energy + 1e-30).log10();
    if energy == 0.0 {
        log::warn!("aoa_features: zero-energy channel, features set to 0");
        f[12] = -300.0;
        return Ok(f);
    }

    let (mean, std, skew, kurt) = moments(&mag);
    f[0] = mean;
    f[1] = std;
    f[2] = skew;
    f[3] = kurt;
    f[4] = (energy / nf).sqrt();
    if !is_flat(mean, std) {
        let crossings = mag.windows(2).filter(|w| ((w[0] - mean) >= 0.0) != ((w[1] - mean) >= 0.0)).count();
        f[5] = crossings as f64 / (nf - 1.0);
    }

    let mut spec = x.to_vec();
    fft_in_place(&mut spec, false)?;
    let p: Vec<f64> = fftshift(&spec).iter().map(|v| v.norm_sqr()).collect();
    let total: f64 = p.iter().sum();
    let freq = |k: usize| (k as f64 - nf / 2.0) / nf;
    let centroid = p.iter().enumerate().map(|(k, &v)| freq(k) * v).sum::<f64>() / total;
    f[6] = centroid;
    f[7] = (p.iter().enumerate().map(|(k, &v)| (freq(k) - centroid).powi(2) * v).sum::<f64>() / total).sqrt();
    let mean_p = total / nf;
    let eps = 1e-12 * mean_p;
    let log_mean = p.iter().map(|v| (v + eps).ln()).sum::<f64>() / nf;
    f[8] = log_mean.exp() / (mean_p + eps);
    let mut cum = 0.0;
    let mut roll = n - 1;
    for (k, &v) in p.iter().enumerate() {
        cum += v;
        if cum >= 0.85 * total {
            roll = k;
            break;
        }
    }
    f[9] = freq(roll);
    let argmax = p
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
        .0;
    f[10] = freq(argmax);
    f[11] = -p
        .iter()
        .map(|&v| v / total)
        .filter(|&q| q > 0.0)
        .map(|q| q * q.ln())
        .sum::<f64>()
        / nf.ln();

    f[13] = pow.iter().cloned().fold(0.0, f64::max) / (energy / nf);
    f[14] = p.iter().enumerate().filter(|(k, _)| freq(*k).abs() < 0.25).map(|(_, v)| v).sum::<f64>() / total;

    let span = ENVELOPE_SPAN.min(n);
    let mut env = Vec::with_capacity(n - span + 1);
    let mut run: f64 = mag[..span].iter().sum();
    env.push(run / span as f64);
    for i in span..n {
        run += mag[i] - mag[i - span];
        env.push(run / span as f64);
    }
    let (emean, estd, _, _) = moments(&env);
    let emax = env.iter().cloned().fold(0.0, f64::max);
    let erms = (env.iter().map(|v| v * v).sum::<f64>() / env.len() as f64).sqrt();
    f[15] = emean;
    f[16] = estd;
    f[17] = emax;
    f[18] = if erms > 0.0 { emax / erms } else { 0.0 };
    Ok(f)
}

fn wrap(a: f64) -> f64 {
    let mut v = (a + PI).rem_euclid(2.0 * PI) - PI;
    if v <= -PI {
        v += 2.0 * PI;
    }
    v
}

fn phase_features(x: &[Complex64], reference: &[Complex64]) -> [f64; 3] {
    let units: Vec<Complex64> = x
        .iter()
        .zip(reference)
        .map(|(a, b)| a * b.conj())
        .filter(|z| z.norm() > 0.0)
        .map(|z| z / z.norm())
        .collect();
    if units.is_empty() {
        return [0.0; 3];
    }
    let mean_vec = units.iter().sum::<Complex64>() / units.len() as f64;
    // 1 - R^2 as the mean squared distance to the mean phasor, which stays
    // accurate when the phases barely spread (R close to 1).
    let spread = units.iter().map(|u| (u - mean_vec).norm_sqr()).sum::<f64>() / units.len() as f64;
    let circ_std = if spread < 1.0 { (-(-spread).ln_1p()).max(0.0).sqrt() } else { 0.0 };

    let mut inst = 0.0;
    let mut m = 0usize;
    for n in 1..x.len() {
        let zx = x[n] * x[n - 1].conj();
        let zr = reference[n] * reference[n - 1].conj();
        if zx.norm_sqr() > 0.0 && zr.norm_sqr() > 0.0 {
            inst += wrap(zx.arg() - zr.arg());
            m += 1;
        }
    }
    let inst = if m > 0 { inst / m as f64 } else { 0.0 };
    [mean_vec.arg(), circ_std, inst]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize, f: f64, amp: f64, phase: f64) -> Vec<Complex64> {
        (0..n).map(|i| Complex64::from_polar(amp, 2.0 * PI * f * i as f64 + phase)).collect()
    }

    #[test]
    fn shape_and_reference_patch() {
        let chans: Vec<_> = (0..4).map(|k| tone(256, 0.1, 1.0, k as f64)).collect();
        let f = aoa_features(&chans).unwrap();
        assert_eq!(f.len(), 4 * N_AOA_FEATURES);
        assert_eq!(&f[19..22], &[0.0, 0.0, 0.0]);
        // patch 1 leads patch 0 by 1 rad
        assert!((f[22 + 19] - 1.0).abs() < 1e-12);
        assert!(f[22 + 20].abs() < 1e-6);
    }

    #[test]
    fn tone_spectral_features() {
        let chans = vec![tone(256, 0.125, 1.0, 0.0)];
        let f = aoa_features(&chans).unwrap();
        assert!((f[10] - 0.125).abs() < 1e-12);
        assert!((f[6] - 0.125).abs() < 1e-9);
        assert!(f[11] < 1e-6);
        assert!((f[4] - 1.0).abs() < 1e-12);
        assert_eq!(f[14], 1.0);
    }

    #[test]
    fn zero_channel_is_defined() {
        let chans = vec![vec![Complex64::default(); 64]; 2];
        let f = aoa_features(&chans).unwrap();
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn constant_envelope_has_no_shape_statistics() {
        let f = aoa_features(&[tone(256, 0.05, 0.3, 0.2)]).unwrap();
        assert_eq!(&f[2..4], &[0.0, 0.0]);
        assert_eq!(f[5], 0.0);
    }

    #[test]
    fn circular_std_matches_the_resultant_length() {
        let reference = tone(512, 0.1, 1.0, 0.0);
        let mut rng_phase = 0.37f64;
        let x: Vec<Complex64> = reference
            .iter()
            .map(|r| {
                rng_phase = (rng_phase * 7.13 + 0.11).fract();
                r * Complex64::from_polar(2.0, 0.8 * (rng_phase - 0.5))
            })
            .collect();
        let [_, std, _] = phase_features(&x, &reference);
        let r = x.iter().zip(&reference).map(|(a, b)| { let z = a * b.conj(); z / z.norm() }).sum::<Complex64>().norm() / 512.0;
        assert!((std - (-2.0 * r.ln()).sqrt()).abs() < 1e-9);
        assert!(std > 0.1);
    }

    #[test]
    fn wrap_range() {
        assert!((wrap(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap(-0.5) + 0.5).abs() < 1e-15);
    }
}
