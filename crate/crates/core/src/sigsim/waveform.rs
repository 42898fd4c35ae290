use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::types::{JammerClass, JammerProfile};
use crate::dsp::fft::fft_in_place;
use crate::error::{invalid, Result};

/// Unit mean-power complex baseband waveform of `n` samples.
pub fn gen_baseband<R: Rng + ?Sized>(profile: &JammerProfile, n: usize, fs: f64, rng: &mut R) -> Result<Vec<Complex64>> {
    profile.validate()?;
    let b = profile.bandwidth_hz;
    if b >= fs {
        return invalid(format!("bandwidth {b} Hz must be below the sample rate {fs} Hz"));
    }
    if n == 0 {
        return invalid("waveform length must be positive");
    }
    let mut x = match profile.class {
        JammerClass::Chirp => chirp(n, b / fs, rng.random_range(0.0..2.0 * PI)),
        JammerClass::FrequencyHopping => hopping(n, b / fs, profile.hops, rng),
        JammerClass::Multitone => multitone(n, b / fs, profile.tones, rng),
        JammerClass::Pulsed => pulsed(n, b / fs, profile.duty_cycle, rng),
        JammerClass::Noise => band_noise(n, b / fs, rng)?,
        JammerClass::Modulated => qpsk(n, b / fs, rng),
    };
    let p = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
    if p <= 0.0 {
        return invalid("generated waveform has zero power");
    }
    let s = 1.0 / p.sqrt();
    x.iter_mut().for_each(|v| *v *= s);
    Ok(x)
}

/// Linear sweep from `-bw/2` to `+bw/2` (cycles/sample) across `n` samples.
fn chirp(n: usize, bw: f64, phase0: f64) -> Vec<Complex64> {
    let rate = bw / n as f64;
    (0..n)
        .map(|i| {
            let t = i as f64;
            Complex64::from_polar(1.0, phase0 + 2.0 * PI * (-0.5 * bw * t + 0.5 * rate * t * t))
        })
        .collect()
}

fn hopping<R: Rng + ?Sized>(n: usize, bw: f64, hops: usize, rng: &mut R) -> Vec<Complex64> {
    let seg = n.div_ceil(hops);
    let mut phase = rng.random_range(0.0..2.0 * PI);
    let mut f = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i % seg == 0 {
            f = rng.random_range(-0.5 * bw..0.5 * bw);
        }
        out.push(Complex64::from_polar(1.0, phase));
        phase += 2.0 * PI * f;
    }
    out
}

fn multitone<R: Rng + ?Sized>(n: usize, bw: f64, tones: usize, rng: &mut R) -> Vec<Complex64> {
    let phases: Vec<f64> = (0..tones).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let freqs: Vec<f64> = (0..tones).map(|m| -0.5 * bw + bw * (m as f64 + 0.5) / tones as f64).collect();
    (0..n)
        .map(|i| {
            freqs
                .iter()
                .zip(&phases)
                .map(|(f, p)| Complex64::from_polar(1.0, 2.0 * PI * f * i as f64 + p))
                .sum()
        })
        .collect()
}

/// Gated chirp: four pulse periods, each on for `duty` of its length.
fn pulsed<R: Rng + ?Sized>(n: usize, bw: f64, duty: f64, rng: &mut R) -> Vec<Complex64> {
    let mut x = chirp(n, bw, rng.random_range(0.0..2.0 * PI));
    let period = (n / 4).max(1);
    let on = ((period as f64 * duty).round() as usize).clamp(1, period);
    let offset = rng.random_range(0..period);
    for (i, v) in x.iter_mut().enumerate() {
        if (i + offset) % period >= on {
            *v = Complex64::default();
        }
    }
    x
}

fn band_noise<R: Rng + ?Sized>(n: usize, bw: f64, rng: &mut R) -> Result<Vec<Complex64>> {
    let m = n.next_power_of_two();
    let mut buf: Vec<Complex64> = (0..m)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    fft_in_place(&mut buf, false)?;
    for (k, v) in buf.iter_mut().enumerate() {
        let f = if k < m / 2 { k as f64 } else { k as f64 - m as f64 } / m as f64;
        if f.abs() > 0.5 * bw {
            *v = Complex64::default();
        }
    }
    fft_in_place(&mut buf, true)?;
    buf.truncate(n);
    Ok(buf)
}

/// QPSK with rectangular pulses at symbol rate `bw/2`, so the main lobe spans `bw`.
fn qpsk<R: Rng + ?Sized>(n: usize, bw: f64, rng: &mut R) -> Vec<Complex64> {
    let rate = bw / 2.0;
    let offset: f64 = rng.random_range(0.0..1.0);
    let phase0 = rng.random_range(0.0..2.0 * PI);
    let mut sym = usize::MAX;
    let mut cur = Complex64::default();
    (0..n)
        .map(|i| {
            let s = (i as f64 * rate + offset).floor() as usize;
            if s != sym {
                sym = s;
                let q: u32 = rng.random_range(0..4);
                cur = Complex64::from_polar(1.0, phase0 + PI / 4.0 + q as f64 * PI / 2.0);
            }
            cur
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_power_for_every_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for class in JammerClass::ALL {
            for bw in [0.2e6, 5e6, 20e6, 60e6] {
                let p = JammerProfile::new(class, bw, 0.0);
                let x = gen_baseband(&p, 1057, 1e8, &mut rng).unwrap();
                let pw = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
                assert!((pw - 1.0).abs() < 1e-6, "{class:?} {bw}: {pw}");
            }
        }
    }

    #[test]
    fn bandwidth_must_be_below_sample_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = JammerProfile::new(JammerClass::Noise, 50e6, 0.0);
        assert!(gen_baseband(&p, 64, 40e6, &mut rng).is_err());
    }

    #[test]
    fn chirp_spans_bandwidth() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fs = 1e8;
        let p = JammerProfile::new(JammerClass::Chirp, 20e6, 0.0);
        let x = gen_baseband(&p, 1024, fs, &mut rng).unwrap();
        let inst = |i: usize| (x[i + 1] * x[i].conj()).arg() / (2.0 * PI) * fs;
        let span = inst(x.len() - 2) - inst(0);
        assert!((span - 20e6).abs() < 0.1e6, "span {span}");
    }

    #[test]
    fn qpsk_has_constant_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = JammerProfile::new(JammerClass::Modulated, 10e6, 0.0);
        let x = gen_baseband(&p, 512, 1e8, &mut rng).unwrap();
        assert!(x.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }
}
