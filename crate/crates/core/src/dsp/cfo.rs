use num_complex::Complex64;

/// Cumulative sum of the per-sample phase increment `arg(x[n] conj(x[n-1]))`.
/// Increments involving a zero-magnitude sample are taken as 0.
pub fn cfo_accumulated(x: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for n in 0..x.len() {
        if n > 0 {
            let z = x[n] * x[n - 1].conj();
            if z.norm_sqr() > 0.0 {
                acc += z.arg();
            }
        }
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_constant_is_zero() {
        let x = vec![Complex64::new(0.7, 0.0); 32];
        assert!(cfo_accumulated(&x).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_samples_contribute_nothing() {
        let x = vec![
            Complex64::new(1.0, 0.0),
            Complex64::default(),
            Complex64::new(0.0, 1.0),
        ];
        assert_eq!(cfo_accumulated(&x), vec![0.0, 0.0, 0.0]);
    }
}
