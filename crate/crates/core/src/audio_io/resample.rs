use super::fir::{design_lowpass, kaiser_beta, kaiser_len};
use super::{AudioBuffer, EXTERNAL_RATE, PROCESSING_RATE};
use crate::error::{Error, Result};

const PASSBAND_HZ: f64 = 14_000.0;
const STOPBAND_HZ: f64 = 16_000.0;
const STOPBAND_ATTEN_DB: f64 = 70.0;

/// Rational polyphase resampler for the 48 kHz <-> 32 kHz pair.
///
/// The prototype lowpass runs at the common upsampled rate of 96 kHz and is
/// applied zero-phase, so output sample `n` is aligned with input time
/// `n / target_rate`.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    delay: usize,
    /// `phases[p][j]` multiplies input sample `(base - p) / up - j`.
    phases: Vec<Vec<f64>>,
    from: u32,
    to: u32,
}

impl Resampler {
    pub fn new(from: u32, to: u32) -> Result<Self> {
        let (up, down) = match (from, to) {
            (EXTERNAL_RATE, PROCESSING_RATE) => (2, 3),
            (PROCESSING_RATE, EXTERNAL_RATE) => (3, 2),
            _ => return Err(Error::UnsupportedRatio { from, to }),
        };
        let fast_rate = from as f64 * up as f64;
        let transition = (STOPBAND_HZ - PASSBAND_HZ) / fast_rate;
        let cutoff = 0.5 * (STOPBAND_HZ + PASSBAND_HZ) / fast_rate;
        let n = kaiser_len(STOPBAND_ATTEN_DB, transition);
        let taps = design_lowpass(n, cutoff, kaiser_beta(STOPBAND_ATTEN_DB));
        let mut phases: Vec<Vec<f64>> = (0..up)
            .map(|p| taps.iter().skip(p).step_by(up).copied().collect())
            .collect();
        for phase in &mut phases {
            let sum: f64 = phase.iter().sum();
            phase.iter_mut().for_each(|t| *t /= sum);
        }
        Ok(Self {
            up,
            down,
            delay: (n - 1) / 2,
            phases,
            from,
            to,
        })
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up + self.down / 2) / self.down
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        let out_len = self.output_len(input.len());
        (0..out_len)
            .map(|n| {
                let base = n * self.down + self.delay;
                let p = base % self.up;
                let first = (base - p) / self.up;
                let mut acc = 0.0;
                for (j, &h) in self.phases[p].iter().enumerate() {
                    if j > first {
                        break;
                    }
                    if let Some(&x) = input.get(first - j) {
                        acc += h * x;
                    }
                }
                acc
            })
            .collect()
    }

    pub fn from_rate(&self) -> u32 {
        self.from
    }

    pub fn to_rate(&self) -> u32 {
        self.to
    }
}

/// Converts between 48 kHz and 32 kHz. Same-rate calls return a copy.
pub fn resample(buffer: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if buffer.rate == target_rate {
        return Ok(buffer.clone());
    }
    let r = Resampler::new(buffer.rate, target_rate)?;
    Ok(AudioBuffer::new(r.process(&buffer.samples), target_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, rate: u32, len: usize, amp: f64) -> Vec<f64> {
        (0..len)
            .map(|n| amp * (2.0 * PI * freq * n as f64 / rate as f64).sin())
            .collect()
    }

    /// Least-squares fit of `a sin + b cos` at a known frequency.
    fn fit_amplitude(x: &[f64], freq: f64, rate: u32) -> f64 {
        let (mut ss, mut cc, mut sc, mut xs, mut xc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (n, &v) in x.iter().enumerate() {
            let w = 2.0 * PI * freq * n as f64 / rate as f64;
            let (s, c) = w.sin_cos();
            ss += s * s;
            cc += c * c;
            sc += s * c;
            xs += v * s;
            xc += v * c;
        }
        let det = ss * cc - sc * sc;
        let a = (xs * cc - xc * sc) / det;
        let b = (xc * ss - xs * sc) / det;
        a.hypot(b)
    }

    #[test]
    fn lengths() {
        let b = AudioBuffer::zeros(48000, 48000);
        assert_eq!(resample(&b, 32000).unwrap().len(), 32000);
        let b = AudioBuffer::zeros(1001, 32000);
        assert_eq!(resample(&b, 48000).unwrap().len(), 1502);
        let b = AudioBuffer::zeros(1000, 48000);
        assert_eq!(resample(&b, 32000).unwrap().len(), 667);
    }

    #[test]
    fn unsupported_ratio() {
        let b = AudioBuffer::zeros(10, 44100);
        assert!(matches!(
            resample(&b, 32000),
            Err(Error::UnsupportedRatio { .. })
        ));
    }

    #[test]
    fn sine_amplitude_preserved() {
        let x = AudioBuffer::new(tone(1000.0, 48000, 48000, 0.5), 48000);
        let y = resample(&x, 32000).unwrap();
        let interior = &y.samples[2000..30000];
        let amp = fit_amplitude(interior, 1000.0, 32000);
        assert!((amp - 0.5).abs() / 0.5 < 0.01, "{amp}");
    }

    #[test]
    fn dc_gain_is_unity() {
        for (from, to) in [(48000, 32000), (32000, 48000)] {
            let x = AudioBuffer::new(vec![0.7; 6000], from);
            let y = resample(&x, to).unwrap();
            let n = y.len();
            for &v in &y.samples[n / 4..3 * n / 4] {
                assert!((v - 0.7).abs() <= 0.001, "{v}");
            }
        }
    }

    #[test]
    fn passband_ripple_and_stopband() {
        for (from, to) in [(48000u32, 32000u32), (32000, 48000)] {
            for f in [100.0, 3000.0, 8000.0, 12000.0, 14000.0] {
                let x = tone(f, from, from as usize / 2, 0.5);
                let y = resample(&AudioBuffer::new(x, from), to).unwrap();
                let n = y.len();
                let amp = fit_amplitude(&y.samples[n / 8..7 * n / 8], f, to);
                let ripple_db = 20.0 * (amp / 0.5).log10();
                assert!(ripple_db.abs() <= 0.1, "{from}->{to} {f} Hz: {ripple_db} dB");
            }
        }
        // 20 kHz at 48 kHz would alias onto 12 kHz at 32 kHz.
        let x = tone(20000.0, 48000, 24000, 0.5);
        let y = resample(&AudioBuffer::new(x, 48000), 32000).unwrap();
        let amp = fit_amplitude(&y.samples[2000..14000], 12000.0, 32000);
        assert!(20.0 * (amp / 0.5).log10() <= -60.0, "{amp}");
        // Images of a 12 kHz tone land at 20 kHz after 32 -> 48.
        let x = tone(12000.0, 32000, 16000, 0.5);
        let y = resample(&AudioBuffer::new(x, 32000), 48000).unwrap();
        let amp = fit_amplitude(&y.samples[3000..21000], 20000.0, 48000);
        assert!(20.0 * (amp / 0.5).log10() <= -60.0, "{amp}");
    }
}
