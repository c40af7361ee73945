use super::SignalError;

/// Minimum number of samples accepted by the filter.
pub const MIN_SAMPLES: usize = 10;

/// Second-order recursive coefficients for one filter pass:
/// `y[n] = a0 x[n] + a1 x[n-1] + a2 x[n-2] + b1 y[n-1] + b2 y[n-2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfcCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
}

/// Channel-class Butterworth coefficients for sample interval `dt_ms`.
pub fn cfc_coefficients(cfc: f64, dt_ms: f64) -> Result<CfcCoefficients, SignalError> {
    let t = dt_ms * 1e-3;
    let wd = 2.0 * std::f64::consts::PI * cfc * 2.0775;
    if !(dt_ms > 0.0) || !(cfc > 0.0) || wd * t >= std::f64::consts::PI {
        return Err(SignalError::BadSampling { dt_ms, cfc });
    }
    let wa = (wd * t / 2.0).tan();
    let s2 = std::f64::consts::SQRT_2;
    let den = 1.0 + s2 * wa + wa * wa;
    let a0 = wa * wa / den;
    Ok(CfcCoefficients {
        a0,
        a1: 2.0 * a0,
        a2: a0,
        b1: -2.0 * (wa * wa - 1.0) / den,
        b2: (-1.0 + s2 * wa - wa * wa) / den,
    })
}

/// One causal pass, started from the steady state of the first sample.
fn pass(c: &CfcCoefficients, x: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(x.len());
    let x0 = x[0];
    let (mut x1, mut x2, mut y1, mut y2) = (x0, x0, x0, x0);
    for &xn in x {
        let yn = c.a0 * xn + c.a1 * x1 + c.a2 * x2 + c.b1 * y1 + c.b2 * y2;
        y.push(yn);
        x2 = x1;
        x1 = xn;
        y2 = y1;
        y1 = yn;
    }
    y
}

/// Index into an even mirror extension of a length-`n` signal. Repeats the
/// reflection when the padding is longer than the signal.
fn fold(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let r = i.rem_euclid(period);
    if r < n as isize {
        r as usize
    } else {
        (period - r) as usize
    }
}

/// Phaseless two-pass channel-class filter with mirror padding of `10/CFC`
/// seconds on both ends.
pub fn cfc_filter(signal: &[f64], dt_ms: f64, cfc: f64) -> Result<Vec<f64>, SignalError> {
    if signal.len() < MIN_SAMPLES {
        return Err(SignalError::TooShort { min: MIN_SAMPLES, got: signal.len() });
    }
    let c = cfc_coefficients(cfc, dt_ms)?;
    let n = signal.len();
    let pad = ((10.0 / cfc) / (dt_ms * 1e-3)).round() as isize;
    let padded: Vec<f64> = (-pad..n as isize + pad).map(|i| signal[fold(i, n)]).collect();
    let mut fwd = pass(&c, &padded);
    fwd.reverse();
    let mut out = pass(&c, &fwd);
    out.reverse();
    Ok(out[pad as usize..pad as usize + n].to_vec())
}

pub fn cfc60(signal: &[f64], dt_ms: f64) -> Result<Vec<f64>, SignalError> {
    cfc_filter(signal, dt_ms, 60.0)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn dc_gain_is_one() {
        let x = vec![3.25; 400];
        let y = cfc60(&x, 0.1).unwrap();
        assert!(y.iter().all(|v| (v - 3.25).abs() < 1e-9));
    }

    #[test]
    fn hundred_hertz_attenuation_matches_two_pass_response() {
        let dt_ms = 0.1;
        let n = 4000;
        let f = 100.0;
        let x: Vec<f64> =
            (0..n).map(|k| (2.0 * std::f64::consts::PI * f * k as f64 * dt_ms * 1e-3).sin()).collect();
        let y = cfc60(&x, dt_ms).unwrap();
        let amp = y[n / 4..3 * n / 4].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // bilinear map of the analog prototype: |H|² = 1 / (1 + (Ω/ω_a)⁴) with
        // Ω = tan(π f T), and two passes give |H|².
        let t = dt_ms * 1e-3;
        let omega = (std::f64::consts::PI * f * t).tan();
        let wa = (std::f64::consts::PI * 60.0 * 2.0775 * t).tan();
        let expect = 1.0 / (1.0 + (omega / wa).powi(4));
        assert!((expect - 0.70725).abs() < 1e-4, "{expect}");
        assert!((amp - expect).abs() < 0.05, "{amp} vs {expect}");
    }

    #[test]
    fn transfer_function_gain_matches_coefficients() {
        let c = cfc_coefficients(60.0, 0.1).unwrap();
        let w = 2.0 * std::f64::consts::PI * 100.0 * 1e-4;
        let (cw, sw, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num = (c.a0 + c.a1 * cw + c.a2 * c2, -(c.a1 * sw + c.a2 * s2));
        let den = (1.0 - c.b1 * cw - c.b2 * c2, c.b1 * sw + c.b2 * s2);
        let h2 = (num.0 * num.0 + num.1 * num.1) / (den.0 * den.0 + den.1 * den.1);
        assert!((h2 - 0.70725).abs() < 1e-4, "{h2}");
    }

    #[test]
    fn time_reversal_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut xr = x.clone();
        xr.reverse();
        let y = cfc60(&x, 0.1).unwrap();
        let mut yr = cfc60(&xr, 0.1).unwrap();
        yr.reverse();
        for (a, b) in y.iter().zip(&yr) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn linearity_on_random_signals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(10..400);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let mix: Vec<f64> = x.iter().zip(&z).map(|(p, q)| a * p + b * q).collect();
            let fx = cfc60(&x, 0.1).unwrap();
            let fz = cfc60(&z, 0.1).unwrap();
            let fm = cfc60(&mix, 0.1).unwrap();
            for k in 0..n {
                assert!((fm[k] - (a * fx[k] + b * fz[k])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_short_or_coarse_signals() {
        assert!(matches!(cfc60(&[1.0; 9], 0.1), Err(SignalError::TooShort { .. })));
        // ω_d·T ≥ π at T ≥ 1/(2·60·2.0775) s ≈ 4.01 ms
        assert!(matches!(cfc60(&[1.0; 20], 5.0), Err(SignalError::BadSampling { .. })));
        assert!(cfc60(&[1.0; 20], 4.0).is_ok());
    }

    #[test]
    fn mirror_fold_wraps() {
        let idx: Vec<usize> = (-5..9).map(|i| fold(i, 4)).collect();
        assert_eq!(idx, vec![1, 2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1, 2]);
    }
}
