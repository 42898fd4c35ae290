use std::f64::consts::PI;

use num_complex::Complex64;

use super::fft::{fft_in_place, fftshift};
use crate::error::{invalid, Result};

pub const SPEC_MIN_DB: f64 = -195.69;
pub const SPEC_MAX_DB: f64 = -19.89;
pub const DB_EPS: f64 = 1e-20;
pub const SPEC_SIDE: usize = 32;

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// `10 log10(|X|^2 / N + eps)` for every bin of one FFT, in natural bin order.
pub fn power_db(x: &[Complex64]) -> Result<Vec<f64>> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf, false)?;
    let n = buf.len() as f64;
    Ok(buf.iter().map(|v| 10.0 * (v.norm_sqr() / n + DB_EPS).log10()).collect())
}

/// Clamps to `[lo, hi]` and maps linearly onto `[0, 1]`.
pub fn minmax_db(v: f64, lo: f64, hi: f64) -> f64 {
    (v.clamp(lo, hi) - lo) / (hi - lo)
}

/// One 1024-bin spectrum per channel, normalized, shifted and laid out as a
/// 32x32 row-major plane. Output length is `channels * 1024`.
pub fn spectrogram(channels: &[Vec<Complex64>], lo: f64, hi: f64) -> Result<Vec<f32>> {
    let side2 = SPEC_SIDE * SPEC_SIDE;
    let mut out = Vec::with_capacity(channels.len() * side2);
    for ch in channels {
        if ch.len() != side2 {
            return invalid(format!("spectrogram expects {side2} samples per channel, got {}", ch.len()));
        }
        let db = fftshift(&power_db(ch)?);
        out.extend(db.iter().map(|&v| minmax_db(v, lo, hi) as f32));
    }
    Ok(out)
}

/// Welch PSD estimate in dB, Hann windowed, bins fftshifted so index 0 is
/// `-fs/2` and index `segment/2` is DC.
pub fn welch_psd(x: &[Complex64], segment: usize, overlap: usize) -> Result<Vec<f64>> {
    if segment == 0 || !segment.is_power_of_two() {
        return invalid(format!("welch segment {segment} must be a power of two"));
    }
    if segment > x.len() {
        return invalid(format!("welch segment {segment} longer than input {}", x.len()));
    }
    if overlap >= segment {
        return invalid(format!("welch overlap {overlap} must be below segment {segment}"));
    }
    let hop = segment - overlap;
    let w = hann(segment);
    let wpow: f64 = w.iter().map(|v| v * v).sum();
    let mut acc = vec![0.0; segment];
    let mut count = 0usize;
    let mut buf = vec![Complex64::default(); segment];
    let mut start = 0;
    while start + segment <= x.len() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = x[start + i] * w[i];
        }
        fft_in_place(&mut buf, false)?;
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    let psd: Vec<f64> = acc.iter().map(|a| 10.0 * (a / (count as f64 * wpow) + DB_EPS).log10()).collect();
    Ok(fftshift(&psd))
}

/// STFT magnitudes, Hann window, laid out `[F][T]` row-major with rows
/// fftshifted (row `F/2` is DC). Returns `(data, F, T)`.
pub fn stft(x: &[Complex64], window: usize, hop: usize) -> Result<(Vec<f64>, usize, usize)> {
    if hop == 0 {
        return invalid("stft hop must be positive");
    }
    if window == 0 || !window.is_power_of_two() {
        return invalid(format!("stft window {window} must be a power of two"));
    }
    if window > x.len() {
        return invalid(format!("stft window {window} longer than input {}", x.len()));
    }
    let frames = 1 + (x.len() - window) / hop;
    let w = hann(window);
    let mut out = vec![0.0; window * frames];
    let mut buf = vec![Complex64::default(); window];
    for t in 0..frames {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = x[t * hop + i] * w[i];
        }
        fft_in_place(&mut buf, false)?;
        let shifted = fftshift(&buf);
        for (f, v) in shifted.iter().enumerate() {
            out[f * frames + t] = v.norm();
        }
    }
    Ok((out, window, frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_map_endpoints() {
        assert_eq!(minmax_db(SPEC_MIN_DB, SPEC_MIN_DB, SPEC_MAX_DB), 0.0);
        assert_eq!(minmax_db(SPEC_MAX_DB, SPEC_MIN_DB, SPEC_MAX_DB), 1.0);
        assert_eq!(minmax_db(-300.0, SPEC_MIN_DB, SPEC_MAX_DB), 0.0);
        assert_eq!(minmax_db(10.0, SPEC_MIN_DB, SPEC_MAX_DB), 1.0);
    }

    #[test]
    fn stft_default_shape() {
        let x = vec![Complex64::new(1.0, 0.0); 1024];
        let (_, f, t) = stft(&x, 128, 64).unwrap();
        assert_eq!((f, t), (128, 15));
        assert!(stft(&x, 128, 0).is_err());
        assert!(stft(&x, 100, 50).is_err());
    }

    #[test]
    fn welch_rejects_long_segment() {
        let x = vec![Complex64::new(1.0, 0.0); 128];
        assert!(welch_psd(&x, 256, 128).is_err());
    }

    #[test]
    fn welch_zero_signal_sits_at_floor() {
        let x = vec![Complex64::default(); 1024];
        let psd = welch_psd(&x, 256, 128).unwrap();
        assert!(psd.iter().all(|&v| (v - 10.0 * DB_EPS.log10()).abs() < 1e-9));
    }
}
