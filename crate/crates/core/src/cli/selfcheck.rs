use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::RunConfig;
use crate::agc::{apply_agc, AgcState};
use crate::diffusion::{complex_noise_like, sample_forward};
use crate::error::{Error, Result};
use crate::scorenet::{ParamTensors, ScoreNet};
use crate::stft::{
    compress_amplitude, istft, stft, zero_low_bins, AmplitudeTransform, Complex64, FrameSpec,
    Spectrogram,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn from(name: &'static str, r: Result<String>) -> Self {
        match r {
            Ok(detail) => Self {
                name,
                passed: true,
                detail,
            },
            Err(e) => Self {
                name,
                passed: false,
                detail: e.to_string(),
            },
        }
    }
}

fn check(ok: bool, detail: String) -> Result<String> {
    if ok {
        Ok(detail)
    } else {
        Err(Error::Check(detail))
    }
}

/// Initial weights plus Gaussian jitter on every tensor, so no path
/// (including the zero-initialized output layer) is silent.
pub fn jittered_params(net: &ScoreNet, seed: u64, scale: f64) -> ParamTensors {
    let mut p = net.init_params(seed).tensors;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(5);
    let d = Normal::new(0.0, scale).expect("positive scale");
    for t in p.values_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += d.sample(&mut rng));
    }
    p
}

/// Streaming normalization front end: STFT, low-bin removal, AGC.
pub fn front_end(signal: &[f64], config: &RunConfig) -> Result<Spectrogram> {
    let spec = zero_low_bins(&stft(signal, config.io.frame)?);
    let mut agc = AgcState::new(config.agc, config.io.frame)?;
    Ok(apply_agc(&spec, &mut agc)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOutcome {
    pub prefix_frames: usize,
    /// Largest deviation of the prefix front end from the full one.
    pub front_end_max_diff: f64,
    /// Whether the network's prefix output equals the full output bit for bit.
    pub network_bitwise: bool,
}

/// Runs `signal` and `signal[..prefix_len]` through front end and network
/// and compares the shared leading frames.
pub fn causality_probe(
    net: &ScoreNet,
    params: &ParamTensors,
    config: &RunConfig,
    signal: &[f64],
    prefix_len: usize,
    seed: u64,
) -> Result<ProbeOutcome> {
    let amp = AmplitudeTransform::default();
    let full = front_end(signal, config)?;
    let part = front_end(&signal[..prefix_len], config)?;
    let n = part.frames;
    if n == 0 {
        return Err(Error::InvalidParam("prefix shorter than one frame".into()));
    }
    let front_end_max_diff = full
        .slice_frames(0, n)
        .data
        .iter()
        .zip(&part.data)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_full = complex_noise_like(&full, &mut rng);
    let t = rng.random_range(0.05..1.0);
    let y_full = compress_amplitude(&full, &amp)?;
    let y_part = compress_amplitude(&part, &amp)?;
    let out_full = net.forward(params, &x_full, &y_full, t)?;
    let out_part = net.forward(params, &x_full.slice_frames(0, n), &y_part, t)?;
    let lead = out_full.slice_frames(0, n);
    let network_bitwise = lead
        .data
        .iter()
        .zip(&out_part.data)
        .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits());
    Ok(ProbeOutcome {
        prefix_frames: n,
        front_end_max_diff,
        network_bitwise,
    })
}

/// A speech-like probe: a gated harmonic tone over low-level noise.
pub fn probe_signal(len: usize, rate: u32, rng: &mut impl Rng) -> Vec<f64> {
    let f0 = rng.random_range(100.0..300.0);
    let onset = rng.random_range(0..len / 3 + 1);
    (0..len)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let noise: f64 = StandardNormal.sample(rng);
            let tone = if i >= onset {
                (1..4)
                    .map(|h| (std::f64::consts::TAU * f0 * h as f64 * t).sin() / h as f64)
                    .sum::<f64>()
            } else {
                0.0
            };
            0.3 * tone + 0.01 * noise
        })
        .collect()
}

pub fn latency_check(frame: &FrameSpec) -> Result<String> {
    frame.validate()?;
    Ok(format!("latency {} ms", frame.latency_ms()))
}

fn round_trip_check(frame: FrameSpec) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let len = frame.rate as usize / 2;
    let x: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let back = istft(&stft(&x, frame)?)?;
    let lo = frame.window_len;
    let hi = back.len().min(len).saturating_sub(frame.window_len);
    if hi <= lo {
        return Err(Error::InvalidParam("probe too short for the window".into()));
    }
    let sig: f64 = x[lo..hi].iter().map(|v| v * v).sum();
    let err: f64 = x[lo..hi].iter().zip(&back[lo..hi]).map(|(a, b)| (a - b).powi(2)).sum();
    let snr = 10.0 * (sig / err.max(f64::MIN_POSITIVE)).log10();
    check(snr >= 60.0, format!("interior snr {snr:.1} dB"))
}

fn causality_check(config: &RunConfig) -> Result<String> {
    config.validate()?;
    let net = ScoreNet::new(config.net.clone())?;
    let params = jittered_params(&net, 1, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let frame = config.io.frame;
    let len = frame.window_len + 40 * frame.hop;
    let mut worst = 0.0f64;
    for probe in 0..3u64 {
        let signal = probe_signal(len, frame.rate, &mut rng);
        let prefix = rng.random_range(frame.window_len..len);
        let o = causality_probe(&net, &params, config, &signal, prefix, probe)?;
        worst = worst.max(o.front_end_max_diff);
        if !o.network_bitwise || o.front_end_max_diff > 1e-6 {
            return Err(Error::Check(format!(
                "prefix of {} frames: network bitwise {} front end diff {:.3e}",
                o.prefix_frames, o.network_bitwise, o.front_end_max_diff
            )));
        }
    }
    Ok(format!("3 prefixes bitwise, front end diff {worst:.1e}"))
}

fn kernel_check(config: &RunConfig) -> Result<String> {
    let sde = &config.sde;
    sde.validate()?;
    let frame = FrameSpec::default();
    let mut x0 = Spectrogram::zeros(1, frame);
    let mut y = Spectrogram::zeros(1, frame);
    x0.data.iter_mut().for_each(|z| *z = Complex64::new(1.0, 0.5));
    y.data.iter_mut().for_each(|z| *z = Complex64::new(0.6, -0.2));
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let draws = 10_000usize.div_ceil(frame.bins());
    let mut report = Vec::new();
    for &t in &[0.1, 0.5, 1.0] {
        let w = sde.mean_weight(t);
        let mu = x0.data[0] * w + y.data[0] * (1.0 - w);
        let mut samples = Vec::with_capacity(draws * frame.bins());
        for _ in 0..draws {
            samples.extend(sample_forward(&x0, &y, t, sde, &mut rng)?.0.data);
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<Complex64>() / n;
        let std = (samples.iter().map(|s| (s - mean).norm_sqr()).sum::<f64>() / n).sqrt();
        let mean_err = (mean - mu).norm() / mu.norm();
        let std_err = (std - sde.std(t)).abs() / sde.std(t);
        if mean_err > 0.05 || std_err > 0.05 {
            return Err(Error::Check(format!(
                "t={t}: mean error {mean_err:.3} std error {std_err:.3}"
            )));
        }
        report.push(format!("t={t} mean {mean_err:.3} std {std_err:.3}"));
    }
    Ok(report.join(", "))
}

/// Returns every check; callers treat any failure as exit code 2.
pub fn cmd_selfcheck(config: &RunConfig) -> Vec<CheckResult> {
    vec![
        CheckResult::from("latency", latency_check(&config.io.frame)),
        CheckResult::from("stft_round_trip", round_trip_check(config.io.frame)),
        CheckResult::from("causality", causality_check(config)),
        CheckResult::from("perturbation_kernel", kernel_check(config)),
    ]
}
