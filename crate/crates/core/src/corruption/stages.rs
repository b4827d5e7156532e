//! Individual length-preserving corruption operators.

use std::f64::consts::PI;

use rand::Rng;
use rustfft::FftPlanner;

use crate::audio_io::fir::{design_lowpass, filter_centered, kaiser_beta, kaiser_len};
use crate::audio_io::{mean_square, AudioBuffer};
use crate::error::{Error, Result};
use crate::stft::Complex64;

pub const PACKET_MS: f64 = 20.0;
pub const LOSS_FADE_MS: f64 = 2.0;
const MU: f64 = 255.0;
const CODEC_ATTEN_DB: f64 = 70.0;
const CODEC_TRANSITION: f64 = 0.15;

fn check_rate(a: &AudioBuffer, b: &AudioBuffer, what: &str) -> Result<()> {
    if a.rate != b.rate {
        return Err(Error::InvalidParam(format!(
            "{what} rate {} differs from signal rate {}",
            b.rate, a.rate
        )));
    }
    Ok(())
}

/// Full linear convolution with `rir`, advanced by the direct-path delay
/// (index of the largest-magnitude tap) and truncated to the input length.
pub fn apply_reverb(x: &AudioBuffer, rir: &AudioBuffer) -> Result<AudioBuffer> {
    if rir.is_empty() {
        return Err(Error::Empty("room impulse response"));
    }
    check_rate(x, rir, "rir")?;
    if x.is_empty() {
        return Ok(x.clone());
    }
    let direct = direct_path_index(&rir.samples);
    let full = fft_convolve(&x.samples, &rir.samples);
    Ok(AudioBuffer::new(
        full[direct..direct + x.len()].to_vec(),
        x.rate,
    ))
}

pub fn direct_path_index(rir: &[f64]) -> usize {
    rir.iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, v)| {
            if v.abs() > bv {
                (i, v.abs())
            } else {
                (bi, bv)
            }
        })
        .0
}

fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() + b.len() - 1;
    let size = n.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |v: &[f64]| {
        let mut out: Vec<Complex64> = v.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        out.resize(size, Complex64::default());
        out
    };
    let mut fa = pad(a);
    let mut fb = pad(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..n].iter().map(|z| z.re * scale).collect()
}

/// Adds `noise` (looped or cropped to the signal length) scaled so the
/// full-length SNR equals `snr_db`. A silent signal is returned unchanged.
pub fn add_noise(x: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<AudioBuffer> {
    check_rate(x, noise, "noise")?;
    if noise.is_empty() || noise.power() == 0.0 {
        return Err(Error::InvalidParam("noise has zero power".into()));
    }
    let fitted: Vec<f64> = noise.samples.iter().copied().cycle().take(x.len()).collect();
    let pn = mean_square(&fitted);
    if pn == 0.0 {
        return Err(Error::InvalidParam("noise segment has zero power".into()));
    }
    let px = x.power();
    if px == 0.0 {
        return Ok(x.clone());
    }
    let beta = (px / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(AudioBuffer::new(
        x.samples
            .iter()
            .zip(&fitted)
            .map(|(s, n)| s + beta * n)
            .collect(),
        x.rate,
    ))
}

pub fn clip(x: &AudioBuffer, threshold: f64) -> Result<AudioBuffer> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParam("clip threshold must be positive".into()));
    }
    Ok(x.map(|s| s.clamp(-threshold, threshold)))
}

pub fn gain_reduce(x: &AudioBuffer, db: f64) -> Result<AudioBuffer> {
    if db > 0.0 {
        return Err(Error::InvalidParam("gain reduction must be <= 0 dB".into()));
    }
    let g = 10f64.powf(db / 20.0);
    Ok(x.map(|s| s * g))
}

/// Two-state Gilbert chain transition probabilities `(good->bad, bad->good)`
/// for a stationary loss rate and mean burst length in packets.
///
/// When the requested burst is too short for the loss rate (p > 1), bursts
/// are lengthened so that the stationary rate is kept.
pub fn gilbert_transitions(loss_rate: f64, burst_mean_packets: f64) -> (f64, f64) {
    if loss_rate <= 0.0 {
        return (0.0, 1.0);
    }
    let q = 1.0 / burst_mean_packets.max(1.0);
    let p = loss_rate * q / (1.0 - loss_rate);
    if p <= 1.0 {
        (p, q)
    } else {
        (1.0, (1.0 - loss_rate) / loss_rate)
    }
}

/// Per-packet loss mask drawn from the Gilbert chain, started in its
/// stationary distribution.
pub fn gilbert_mask(
    packets: usize,
    loss_rate: f64,
    burst_mean_packets: f64,
    rng: &mut impl Rng,
) -> Vec<bool> {
    let (p, q) = gilbert_transitions(loss_rate, burst_mean_packets);
    let mut lost = rng.random::<f64>() < loss_rate;
    (0..packets)
        .map(|_| {
            let cur = lost;
            let u: f64 = rng.random();
            lost = if lost { u >= q } else { u < p };
            cur
        })
        .collect()
}

/// Zeroes lost 20 ms packets; the received audio next to each loss burst is
/// faded out/in with a 2 ms half-cosine.
pub fn packet_loss(
    x: &AudioBuffer,
    loss_rate: f64,
    burst_mean_packets: f64,
    rng: &mut impl Rng,
) -> Result<AudioBuffer> {
    if !(0.0..1.0).contains(&loss_rate) {
        return Err(Error::InvalidParam(format!(
            "loss rate {loss_rate} outside [0, 1)"
        )));
    }
    let plen = ((x.rate as f64 * PACKET_MS / 1000.0).round() as usize).max(1);
    let packets = x.len().div_ceil(plen);
    let mask = gilbert_mask(packets, loss_rate, burst_mean_packets, rng);
    let fade = (x.rate as f64 * LOSS_FADE_MS / 1000.0).round() as usize;
    let mut out = x.samples.clone();
    let n = out.len();
    let mut k = 0;
    while k < packets {
        if !mask[k] {
            k += 1;
            continue;
        }
        let start_pkt = k;
        while k < packets && mask[k] {
            k += 1;
        }
        let start = start_pkt * plen;
        let end = (k * plen).min(n);
        out[start..end].iter_mut().for_each(|s| *s = 0.0);
        for i in 0..fade.min(start) {
            // i = 0 is the sample just before the burst
            let g = 0.5 * (1.0 - (PI * (i + 1) as f64 / (fade + 1) as f64).cos());
            out[start - 1 - i] *= g;
        }
        for i in 0..fade.min(n - end) {
            let g = 0.5 * (1.0 - (PI * (i + 1) as f64 / (fade + 1) as f64).cos());
            out[end + i] *= g;
        }
    }
    Ok(AudioBuffer::new(out, x.rate))
}

/// Lowpass whose stopband begins at `bandwidth_hz`.
pub fn codec_lowpass(bandwidth_hz: f64, rate: u32) -> Vec<f64> {
    let transition = CODEC_TRANSITION * bandwidth_hz / rate as f64;
    let cutoff = (bandwidth_hz / rate as f64) - transition / 2.0;
    let n = kaiser_len(CODEC_ATTEN_DB, transition);
    design_lowpass(n, cutoff, kaiser_beta(CODEC_ATTEN_DB))
}

pub fn mu_law_quantize(s: f64, bits: u32) -> f64 {
    let s = s.clamp(-1.0, 1.0);
    let levels = ((1u64 << (bits - 1)) - 1) as f64;
    let companded = s.signum() * (1.0 + MU * s.abs()).ln() / (1.0 + MU).ln();
    let q = (companded * levels).round() / levels;
    q.signum() * ((1.0 + MU).powf(q.abs()) - 1.0) / MU
}

/// Band-limit then mu-law quantise at `bits` bits per sample.
pub fn codec_sim(x: &AudioBuffer, bandwidth_hz: f64, bits: u32) -> Result<AudioBuffer> {
    if !(6..=16).contains(&bits) {
        return Err(Error::InvalidParam(format!("codec bits {bits} outside [6, 16]")));
    }
    let nyquist = x.rate as f64 / 2.0;
    if !(bandwidth_hz > 0.0) || bandwidth_hz > nyquist.max(16_000.0) {
        return Err(Error::InvalidParam(format!(
            "codec bandwidth {bandwidth_hz} Hz out of range"
        )));
    }
    let filtered = if bandwidth_hz >= nyquist {
        x.samples.clone()
    } else {
        filter_centered(&x.samples, &codec_lowpass(bandwidth_hz, x.rate))
    };
    Ok(AudioBuffer::new(
        filtered.iter().map(|&s| mu_law_quantize(s, bits)).collect(),
        x.rate,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(len: usize, seed: u64) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioBuffer::new(
            (0..len).map(|_| StandardNormal.sample(&mut rng)).collect(),
            32000,
        )
    }

    fn snr_db(clean: &AudioBuffer, noisy: &AudioBuffer) -> f64 {
        let pn = mean_square(
            &clean
                .samples
                .iter()
                .zip(&noisy.samples)
                .map(|(a, b)| b - a)
                .collect::<Vec<_>>(),
        );
        10.0 * (clean.power() / pn).log10()
    }

    #[test]
    fn reverb_identity_and_delayed_impulse() {
        let x = noise(500, 1);
        let mut delta = vec![0.0; 40];
        delta[0] = 1.0;
        let y = apply_reverb(&x, &AudioBuffer::new(delta, 32000)).unwrap();
        for (a, b) in x.samples.iter().zip(&y.samples) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut delayed = vec![0.0; 40];
        delayed[17] = 0.6;
        let y = apply_reverb(&x, &AudioBuffer::new(delayed, 32000)).unwrap();
        for (a, b) in x.samples.iter().zip(&y.samples) {
            assert!((0.6 * a - b).abs() < 1e-12);
        }
        assert!(apply_reverb(&x, &AudioBuffer::zeros(0, 32000)).is_err());
    }

    #[test]
    fn reverb_matches_direct_sum() {
        let x = noise(700, 2);
        let mut rir = noise(90, 3);
        rir.samples[5] = 10.0;
        let y = apply_reverb(&x, &rir).unwrap();
        let d = 5;
        let oracle: Vec<f64> = (0..x.len())
            .map(|n| {
                (0..rir.len())
                    .filter(|&k| n + d >= k && n + d - k < x.len())
                    .map(|k| rir.samples[k] * x.samples[n + d - k])
                    .sum()
            })
            .collect();
        let e_fft: f64 = y.samples.iter().map(|v| v * v).sum();
        let e_ref: f64 = oracle.iter().map(|v| v * v).sum();
        assert!((e_fft - e_ref).abs() / e_ref < 1e-6);
        for (a, b) in y.samples.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_at_requested_snr() {
        let x = noise(10000, 4);
        for snr in [-5.0, 0.0, 7.3, 20.0] {
            let y = add_noise(&x, &noise(3000, 5), snr).unwrap();
            assert!((snr_db(&x, &y) - snr).abs() < 0.01);
        }
        let y = add_noise(&x, &noise(3000, 5), 0.0).unwrap();
        let pn = mean_square(
            &x.samples
                .iter()
                .zip(&y.samples)
                .map(|(a, b)| b - a)
                .collect::<Vec<_>>(),
        );
        assert!((pn - x.power()).abs() / x.power() < 1e-9);
        let y = add_noise(&x, &noise(3000, 5), 120.0).unwrap();
        assert!(snr_db(&x, &y) > 110.0);
        assert!(add_noise(&x, &AudioBuffer::zeros(10, 32000), 0.0).is_err());
    }

    #[test]
    fn clip_and_gain() {
        let x = AudioBuffer::new(vec![0.3, 0.8, -0.9], 32000);
        assert_eq!(clip(&x, 0.5).unwrap().samples, vec![0.3, 0.5, -0.5]);
        let c = clip(&x, 0.5).unwrap();
        assert_eq!(clip(&c, 0.5).unwrap(), c);
        let g = gain_reduce(&x, -20.0).unwrap();
        for (a, b) in x.samples.iter().zip(&g.samples) {
            assert!((a * 0.1 - b).abs() < 1e-15);
        }
        assert!(clip(&x, 0.0).is_err());
        assert!(gain_reduce(&x, 3.0).is_err());
    }

    #[test]
    fn packet_loss_zero_rate_is_identity() {
        let x = noise(5000, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(packet_loss(&x, 0.0, 2.0, &mut rng).unwrap(), x);
    }

    #[test]
    fn packet_loss_near_one_zeroes_almost_everything() {
        let x = noise(64000, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = packet_loss(&x, 0.999, 1.0, &mut rng).unwrap();
        let zeros = y.samples.iter().filter(|&&v| v == 0.0).count();
        assert!(zeros as f64 > 0.95 * x.len() as f64);
    }

    #[test]
    fn lost_packets_are_zero_and_boundaries_faded() {
        let x = AudioBuffer::new(vec![1.0; 640 * 50], 32000);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mask_rng = rng.clone();
        let y = packet_loss(&x, 0.3, 2.0, &mut rng).unwrap();
        let mask = gilbert_mask(50, 0.3, 2.0, &mut mask_rng);
        for (k, &lost) in mask.iter().enumerate() {
            let pkt = &y.samples[k * 640..(k + 1) * 640];
            if lost {
                assert!(pkt.iter().all(|&v| v == 0.0));
            } else {
                assert!(pkt.iter().all(|&v| v > 0.0));
            }
        }
        // smooth: no jump larger than the fade slope allows
        let max_step = y.samples.windows(2).fold(0.0f64, |m, w| m.max((w[1] - w[0]).abs()));
        assert!(max_step < 0.05, "{max_step}");
    }

    #[test]
    fn gilbert_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mask = gilbert_mask(100_000, 0.1, 3.0, &mut rng);
        let rate = mask.iter().filter(|&&l| l).count() as f64 / mask.len() as f64;
        assert!((rate - 0.1).abs() < 0.01, "{rate}");
        let mut bursts = Vec::new();
        let mut run = 0;
        for &l in &mask {
            if l {
                run += 1;
            } else if run > 0 {
                bursts.push(run);
                run = 0;
            }
        }
        let mean = bursts.iter().sum::<usize>() as f64 / bursts.len() as f64;
        assert!((mean - 3.0).abs() < 0.15, "{mean}");
    }

    #[test]
    fn codec_transparent_at_full_band_16_bits() {
        let x = noise(8000, 8).map(|v| 0.2 * v);
        let y = codec_sim(&x, 16000.0, 16).unwrap();
        assert!(snr_db(&x, &y) >= 60.0, "{}", snr_db(&x, &y));
        assert_eq!(mu_law_quantize(0.0, 8), 0.0);
    }

    #[test]
    fn codec_attenuates_above_bandwidth() {
        let len = 16000;
        let x = AudioBuffer::new(
            (0..len)
                .map(|n| 0.5 * (2.0 * PI * 5000.0 * n as f64 / 32000.0).sin())
                .collect(),
            32000,
        );
        let y = filter_centered(&x.samples, &codec_lowpass(4000.0, 32000));
        let p_in = mean_square(&x.samples[2000..14000]);
        let p_out = mean_square(&y[2000..14000]);
        assert!(10.0 * (p_out / p_in).log10() <= -60.0);
        assert!(codec_sim(&x, 4000.0, 5).is_err());
    }
}
