//! WAV ingestion/emission and the 48 kHz <-> 32 kHz resampler.

pub mod fir;
mod resample;
mod wav;

pub use resample::{resample, Resampler};
pub use wav::{read_wav, write_wav};

/// Processing rate of the whole pipeline.
pub const PROCESSING_RATE: u32 = 32_000;
/// Rate of the external world (challenge files).
pub const EXTERNAL_RATE: u32 = 48_000;

/// Mono audio at full scale [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, rate: u32) -> Self {
        Self { samples, rate }
    }

    pub fn zeros(len: usize, rate: u32) -> Self {
        Self::new(vec![0.0; len], rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.samples.iter().map(|&s| f(s)).collect(), self.rate)
    }
}

pub(crate) fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64
}
