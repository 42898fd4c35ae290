//! Power-of-two FFT wrappers plus the O(N^2) definition used as a test oracle.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT, `X[k] = sum_n x[n] exp(-2 pi i k n / N)`.
pub fn fft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf, false)?;
    Ok(buf)
}

/// Inverse DFT including the `1/N` factor.
pub fn ifft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf, true)?;
    let inv = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|v| *v *= inv);
    Ok(buf)
}

pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) -> Result<()> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return invalid(format!("fft length {n} is not a power of two"));
    }
    let plan = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    });
    plan.process(buf);
    Ok(())
}

/// Direct evaluation of the DFT definition.
pub fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| {
                    // reduce k*t mod n first so the angle stays accurate
                    let e = ((k * t) % n) as f64;
                    v * Complex64::from_polar(1.0, -2.0 * PI * e / n as f64)
                })
                .sum()
        })
        .collect()
}

/// Moves the zero-frequency bin to the centre (index `N/2`).
pub fn fftshift<T: Clone>(x: &[T]) -> Vec<T> {
    let n = x.len();
    let h = n / 2;
    x[n - h..].iter().chain(&x[..n - h]).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&r| Complex64::new(r, 0.0)).collect()
    }

    #[test]
    fn dc_only() {
        let out = fft(&c(&[1.0, 1.0, 1.0, 1.0])).unwrap();
        let expect = [4.0, 0.0, 0.0, 0.0];
        for (o, e) in out.iter().zip(expect) {
            assert!((o - Complex64::new(e, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn impulse_is_flat() {
        let out = fft(&c(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(out.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(fft(&c(&[1.0, 2.0, 3.0])).is_err());
        assert!(fft(&[]).is_err());
    }

    #[test]
    fn inverse_round_trip() {
        let x: Vec<Complex64> = (0..64).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let back = ifft(&fft(&x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn shift_centres_dc() {
        assert_eq!(fftshift(&[0, 1, 2, 3]), vec![2, 3, 0, 1]);
        assert_eq!(fftshift(&[0, 1, 2, 3, 4]), vec![3, 4, 0, 1, 2]);
    }
}
