//! Kaiser-windowed sinc lowpass design shared by the resampler and the codec
//! simulator.

use std::f64::consts::PI;

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser's empirical shape parameter for a stopband attenuation in dB.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Odd tap count meeting `atten_db` over a transition band of
/// `transition` cycles/sample.
pub fn kaiser_len(atten_db: f64, transition: f64) -> usize {
    let n = ((atten_db - 7.95) / (2.285 * 2.0 * PI * transition)).ceil() as usize + 1;
    n | 1
}

/// Linear-phase lowpass with the -6 dB point at `cutoff` cycles/sample.
/// Taps sum to one.
pub fn design_lowpass(num_taps: usize, cutoff: f64, beta: f64) -> Vec<f64> {
    assert!(num_taps % 2 == 1, "tap count must be odd");
    let center = (num_taps - 1) as f64 / 2.0;
    let norm = bessel_i0(beta);
    let mut taps: Vec<f64> = (0..num_taps)
        .map(|n| {
            let m = n as f64 - center;
            let sinc = if m == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * m).sin() / (PI * m)
            };
            let r = m / center;
            let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm;
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Zero-phase filtering with an odd-length linear-phase kernel; output has the
/// input's length, samples outside the input are treated as zero.
pub fn filter_centered(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() - 1) / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            let lo = (i + half + 1).saturating_sub(n);
            let hi = (i + half).min(taps.len() - 1);
            let mut acc = 0.0;
            for k in lo..=hi {
                acc += taps[k] * x[i + half - k];
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn response_db(taps: &[f64], freq: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, t) in taps.iter().enumerate() {
            re += t * (2.0 * PI * freq * n as f64).cos();
            im -= t * (2.0 * PI * freq * n as f64).sin();
        }
        20.0 * (re.hypot(im)).log10()
    }

    #[test]
    fn i0_matches_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-12);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_44).abs() < 1e-9);
    }

    #[test]
    fn lowpass_meets_attenuation() {
        let atten = 70.0;
        let n = kaiser_len(atten, 0.02);
        let taps = design_lowpass(n, 0.2, kaiser_beta(atten));
        assert!(response_db(&taps, 0.0).abs() < 1e-9);
        assert!(response_db(&taps, 0.18).abs() < 0.01);
        for k in 0..50 {
            let f = 0.21 + k as f64 * (0.5 - 0.21) / 50.0;
            assert!(response_db(&taps, f) < -65.0, "f={f}");
        }
    }

    #[test]
    fn centered_filter_identity_kernel() {
        let x = [1.0, -2.0, 3.0];
        assert_eq!(filter_centered(&x, &[0.0, 1.0, 0.0]), x.to_vec());
    }
}
