use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LATENCY_LIMIT_MS: f64 = 20.0;

/// Frame geometry. The window length fixes the algorithmic latency, which must
/// stay below [`LATENCY_LIMIT_MS`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSpec {
    pub rate: u32,
    pub window_len: usize,
    pub hop: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            rate: 32_000,
            window_len: 638,
            hop: 160,
        }
    }
}

impl FrameSpec {
    pub fn new(rate: u32, window_len: usize, hop: usize) -> Result<Self> {
        let spec = Self {
            rate,
            window_len,
            hop,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rate == 0 || self.hop == 0 || self.window_len < 2 {
            return Err(Error::InvalidParam(format!("degenerate frame spec {self:?}")));
        }
        if self.window_len % 2 != 0 {
            return Err(Error::InvalidParam(format!(
                "window length {} must be even",
                self.window_len
            )));
        }
        if self.hop >= self.window_len {
            return Err(Error::InvalidParam(format!(
                "hop {} must be shorter than the window {}",
                self.hop, self.window_len
            )));
        }
        let latency_ms = self.latency_ms();
        if latency_ms >= LATENCY_LIMIT_MS {
            return Err(Error::Latency {
                window_len: self.window_len,
                rate: self.rate,
                latency_ms,
            });
        }
        Ok(())
    }

    /// FFT size equals the window length.
    pub fn fft_len(&self) -> usize {
        self.window_len
    }

    pub fn bins(&self) -> usize {
        self.fft_len() / 2 + 1
    }

    /// Algorithmic latency of the frame path in milliseconds.
    pub fn latency_ms(&self) -> f64 {
        self.window_len as f64 * 1000.0 / self.rate as f64
    }

    pub fn frame_ms(&self) -> f64 {
        self.hop as f64 * 1000.0 / self.rate as f64
    }

    /// Periodic (DFT-even) Hann window.
    pub fn window(&self) -> Vec<f64> {
        let n = self.window_len as f64;
        (0..self.window_len)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
            .collect()
    }

    /// Frames fully contained in `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    pub fn bin_hz(&self) -> f64 {
        self.rate as f64 / self.fft_len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry() {
        let s = FrameSpec::default();
        s.validate().unwrap();
        assert_eq!(s.bins(), 320);
        assert_eq!(s.latency_ms(), 19.9375);
        assert_eq!(s.frame_ms(), 5.0);
    }

    #[test]
    fn latency_violation() {
        let err = FrameSpec::new(32_000, 700, 160).unwrap_err();
        match err {
            Error::Latency { latency_ms, .. } => assert!((latency_ms - 21.875).abs() < 1e-12),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn hop_must_be_shorter_than_window() {
        assert!(FrameSpec::new(32_000, 160, 160).is_err());
    }

    #[test]
    fn window_is_periodic_hann() {
        let w = FrameSpec::default().window();
        assert_eq!(w[0], 0.0);
        assert!((w[319] - 1.0).abs() < 1e-15);
        // DFT-even: w[n] == w[N - n]
        for n in 1..638 {
            assert!((w[n] - w[638 - n]).abs() < 1e-12);
        }
    }
}
