use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::audio_io::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompressorConfig {
    pub threshold_db: f64,
    pub ratio: f64,
    pub attack_ms: f64,
    /// How long the detector holds a peak before releasing.
    pub hold_ms: f64,
    pub release_ms: f64,
}

impl Default for CompressorConfig {
    fn default() -> Self {
        Self {
            threshold_db: -1.0,
            ratio: 20.0,
            attack_ms: 1.0,
            hold_ms: 20.0,
            release_ms: 100.0,
        }
    }
}

impl CompressorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio >= 1.0) {
            return Err(Error::InvalidParam("compressor ratio must be >= 1".into()));
        }
        if self.attack_ms < 0.0 || self.hold_ms < 0.0 || self.release_ms < 0.0 {
            return Err(Error::InvalidParam(
                "compressor time constants must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

fn one_pole(time_ms: f64, rate: u32) -> f64 {
    if time_ms <= 0.0 {
        0.0
    } else {
        (-1000.0 / (time_ms * rate as f64)).exp()
    }
}

/// Feed-forward peak compressor with a hard-knee static curve in dB.
///
/// The envelope is a decoupled peak detector: the maximum of `|x|` over the
/// last `hold_ms` decays with the one-pole release, and the held value is followed
/// with the one-pole attack.
pub fn compress_peaks(input: &AudioBuffer, config: &CompressorConfig) -> Result<AudioBuffer> {
    config.validate()?;
    let attack = one_pole(config.attack_ms, input.rate);
    let release = one_pole(config.release_ms, input.rate);
    let slope = 1.0 - 1.0 / config.ratio;
    let hold = (config.hold_ms * input.rate as f64 / 1000.0).round() as usize;
    let hold = hold.max(1);
    let (mut held, mut env) = (0.0f64, 0.0f64);
    // monotonic deque of (index, level) giving the max of the last `hold` samples
    let mut window: VecDeque<(usize, f64)> = VecDeque::new();
    let samples = input
        .samples
        .iter()
        .enumerate()
        .map(|(n, &x)| {
            let level = x.abs();
            while window.back().is_some_and(|&(_, v)| v <= level) {
                window.pop_back();
            }
            window.push_back((n, level));
            while window.front().is_some_and(|&(i, _)| i + hold <= n) {
                window.pop_front();
            }
            let peak = window.front().map_or(level, |&(_, v)| v);
            held = peak.max(release * held + (1.0 - release) * peak);
            env = attack * env + (1.0 - attack) * held;
            let env_db = 20.0 * env.max(1e-12).log10();
            let over = env_db - config.threshold_db;
            if over > 0.0 {
                x * 10f64.powf(-over * slope / 20.0)
            } else {
                x
            }
        })
        .collect();
    Ok(AudioBuffer::new(samples, input.rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn below_threshold_is_identity() {
        let x = AudioBuffer::new(
            (0..1000).map(|n| 0.5 * (n as f64 * 0.05).sin()).collect(),
            32000,
        );
        let y = compress_peaks(&x, &CompressorConfig::default()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn static_curve_on_step() {
        let mut s = vec![0.0; 100];
        s.extend(vec![1.0; 32000]);
        let cfg = CompressorConfig {
            threshold_db: -6.0,
            ratio: 4.0,
            ..Default::default()
        };
        let y = compress_peaks(&AudioBuffer::new(s, 32000), &cfg).unwrap();
        let db = 20.0 * y.samples.last().unwrap().log10();
        assert!((db + 4.5).abs() < 1e-6, "{db}");
    }

    #[test]
    fn causal() {
        let a: Vec<f64> = (0..4000).map(|n| (n as f64 * 0.1).sin()).collect();
        let mut b = a.clone();
        for v in &mut b[2000..] {
            *v *= 3.0;
        }
        let cfg = CompressorConfig::default();
        let ya = compress_peaks(&AudioBuffer::new(a, 32000), &cfg).unwrap();
        let yb = compress_peaks(&AudioBuffer::new(b, 32000), &cfg).unwrap();
        assert_eq!(ya.samples[..2000], yb.samples[..2000]);
    }

    #[test]
    fn limits_full_scale_tone() {
        let x: Vec<f64> = (0..32000)
            .map(|n| (2.0 * PI * 440.0 * n as f64 / 32000.0).sin())
            .collect();
        let y = compress_peaks(&AudioBuffer::new(x, 32000), &CompressorConfig::default()).unwrap();
        let settled = y.samples[16000..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(20.0 * settled.log10() <= -0.9, "{}", 20.0 * settled.log10());
    }

    #[test]
    fn ratio_below_one_rejected() {
        let cfg = CompressorConfig {
            ratio: 0.5,
            ..Default::default()
        };
        assert!(compress_peaks(&AudioBuffer::zeros(4, 32000), &cfg).is_err());
    }
}
