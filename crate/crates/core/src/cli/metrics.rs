use crate::error::{Error, Result};
use crate::stft::{stft, FrameSpec, ZEROED_LOW_BINS};

pub const SI_SDR_CAP_DB: f64 = 60.0;
const POWER_FLOOR: f64 = 1e-12;

fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v - mean).collect()
}

/// Zero-mean scale-invariant SDR in dB, capped at [`SI_SDR_CAP_DB`]. Both
/// signals are cut to the shorter length.
pub fn si_sdr(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    let n = reference.len().min(estimate.len());
    if n == 0 {
        return Err(Error::Empty("signal"));
    }
    let r = centered(&reference[..n]);
    let e = centered(&estimate[..n]);
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        return Err(Error::InvalidParam("si-sdr reference is silent".into()));
    }
    let alpha = r.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / rr;
    let target = alpha * alpha * rr;
    let noise: f64 = r
        .iter()
        .zip(&e)
        .map(|(a, b)| (b - alpha * a).powi(2))
        .sum();
    if noise <= target * 10f64.powf(-SI_SDR_CAP_DB / 10.0) {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / noise).log10()).min(SI_SDR_CAP_DB))
}

/// Frame-averaged RMS difference of log power spectra in dB, over bins
/// above the zeroed band.
pub fn log_spectral_distance(reference: &[f64], estimate: &[f64], spec: FrameSpec) -> Result<f64> {
    let n = reference.len().min(estimate.len());
    let r = stft(&reference[..n], spec)?;
    let e = stft(&estimate[..n], spec)?;
    if r.frames == 0 {
        return Err(Error::Empty("signal shorter than one frame"));
    }
    let bins = r.bins - ZEROED_LOW_BINS;
    let total: f64 = (0..r.frames)
        .map(|k| {
            let ss: f64 = r.frame(k)[ZEROED_LOW_BINS..]
                .iter()
                .zip(&e.frame(k)[ZEROED_LOW_BINS..])
                .map(|(a, b)| {
                    let d = 10.0 * ((a.norm_sqr() + POWER_FLOOR) / (b.norm_sqr() + POWER_FLOOR)).log10();
                    d * d
                })
                .sum();
            (ss / bins as f64).sqrt()
        })
        .sum();
    Ok(total / r.frames as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn tone(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.05).sin() + 0.3 * (i as f64 * 0.31).sin()).collect()
    }

    #[test]
    fn identical_and_scaled_hit_the_cap() {
        let x = tone(8000);
        assert_eq!(si_sdr(&x, &x).unwrap(), SI_SDR_CAP_DB);
        let half: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        assert_eq!(si_sdr(&x, &half).unwrap(), SI_SDR_CAP_DB);
        assert_eq!(log_spectral_distance(&x, &x, FrameSpec::default()).unwrap(), 0.0);
    }

    #[test]
    fn ten_db_noise() {
        let x = tone(32000);
        let px = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut noise: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let pn = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
        noise.iter_mut().for_each(|v| *v *= (px / pn / 10.0).sqrt());
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + b).collect();
        assert!((si_sdr(&x, &y).unwrap() - 10.0).abs() < 0.5);
        assert!(log_spectral_distance(&x, &y, FrameSpec::default()).unwrap() > 1.0);
    }

    #[test]
    fn silent_reference_errors() {
        assert!(si_sdr(&[0.0; 10], &[1.0; 10]).is_err());
        assert!(si_sdr(&[], &[]).is_err());
    }
}
