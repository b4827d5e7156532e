use serde::{Deserialize, Serialize};

use super::{Complex64, FrameSpec};
use crate::error::{Error, Result};

/// Bins 0 and 1 (below ~100 Hz) are removed before enhancement.
pub const ZEROED_LOW_BINS: usize = 2;

/// Complex time-frequency matrix, row-major `[frames x bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Vec<Complex64>,
    pub frames: usize,
    pub bins: usize,
    pub spec: FrameSpec,
    /// Whether the amplitude transform has been applied.
    pub compressed: bool,
}

impl Spectrogram {
    pub fn zeros(frames: usize, spec: FrameSpec) -> Self {
        let bins = spec.bins();
        Self {
            data: vec![Complex64::new(0.0, 0.0); frames * bins],
            frames,
            bins,
            spec,
            compressed: false,
        }
    }

    pub fn from_frames(frames: &[Vec<Complex64>], spec: FrameSpec) -> Result<Self> {
        let bins = spec.bins();
        let mut data = Vec::with_capacity(frames.len() * bins);
        for (k, f) in frames.iter().enumerate() {
            if f.len() != bins {
                return Err(Error::Shape(format!(
                    "frame {k} has {} bins, expected {bins}",
                    f.len()
                )));
            }
            data.extend_from_slice(f);
        }
        Ok(Self {
            data,
            frames: frames.len(),
            bins,
            spec,
            compressed: false,
        })
    }

    pub fn frame(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.bins..(k + 1) * self.bins]
    }

    pub fn frame_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.data[k * self.bins..(k + 1) * self.bins]
    }

    pub fn frames_iter(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.bins)
    }

    pub fn frames_iter_mut(&mut self) -> impl Iterator<Item = &mut [Complex64]> {
        self.data.chunks_exact_mut(self.bins)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }

    pub fn same_shape(&self, other: &Spectrogram) -> bool {
        self.shape() == other.shape()
    }

    /// Frames `[start, start + len)`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Self {
        let mut out = self.clone();
        out.data = self.data[start * self.bins..(start + len) * self.bins].to_vec();
        out.frames = len;
        out
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Mean magnitude over all bins of frame `k`.
    pub fn frame_mean_magnitude(&self, k: usize) -> f64 {
        self.frame(k).iter().map(|z| z.norm()).sum::<f64>() / self.bins as f64
    }

    pub fn scale(&mut self, gain: f64) {
        self.data.iter_mut().for_each(|z| *z *= gain);
    }
}

pub fn zero_low_bins(spec: &Spectrogram) -> Spectrogram {
    let mut out = spec.clone();
    for frame in out.frames_iter_mut() {
        for z in frame.iter_mut().take(ZEROED_LOW_BINS) {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    out
}

/// Magnitude power-law compression `c |z|^a e^{i angle(z)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeTransform {
    pub exponent: f64,
    pub factor: f64,
}

impl Default for AmplitudeTransform {
    fn default() -> Self {
        Self {
            exponent: 0.5,
            factor: 0.15,
        }
    }
}

impl AmplitudeTransform {
    pub fn compress(&self, z: Complex64) -> Complex64 {
        let mag = z.norm();
        if mag == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        z * (self.factor * mag.powf(self.exponent - 1.0))
    }

    pub fn expand(&self, w: Complex64) -> Complex64 {
        let mag = w.norm();
        if mag == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        w * ((mag / self.factor).powf(1.0 / self.exponent) / mag)
    }
}

pub fn compress_amplitude(spec: &Spectrogram, t: &AmplitudeTransform) -> Result<Spectrogram> {
    if spec.compressed {
        return Err(Error::InvalidParam("spectrogram is already compressed".into()));
    }
    let mut out = spec.clone();
    out.data.iter_mut().for_each(|z| *z = t.compress(*z));
    out.compressed = true;
    Ok(out)
}

pub fn expand_amplitude(spec: &Spectrogram, t: &AmplitudeTransform) -> Result<Spectrogram> {
    if !spec.compressed {
        return Err(Error::InvalidParam("spectrogram is not compressed".into()));
    }
    let mut out = spec.clone();
    out.data.iter_mut().for_each(|z| *z = t.expand(*z));
    out.compressed = false;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ones(frames: usize) -> Spectrogram {
        let mut s = Spectrogram::zeros(frames, FrameSpec::default());
        s.data.iter_mut().for_each(|z| *z = Complex64::new(1.0, 0.0));
        s
    }

    #[test]
    fn zeroing_low_bins() {
        let s = ones(3);
        let z = zero_low_bins(&s);
        for frame in z.frames_iter() {
            assert_eq!(frame[0], Complex64::new(0.0, 0.0));
            assert_eq!(frame[1], Complex64::new(0.0, 0.0));
            assert!(frame[2..].iter().all(|v| *v == Complex64::new(1.0, 0.0)));
        }
        assert_eq!(zero_low_bins(&z), z);
        assert_eq!(z.energy(), s.energy() - 2.0 * 3.0);
    }

    #[test]
    fn compression_values() {
        let t = AmplitudeTransform::default();
        assert_eq!(t.compress(Complex64::new(0.0, 0.0)), Complex64::new(0.0, 0.0));
        assert_eq!(t.expand(Complex64::new(0.0, 0.0)), Complex64::new(0.0, 0.0));
        let w = t.compress(Complex64::from_polar(1.0, 0.7));
        assert!((w.norm() - 0.15).abs() < 1e-15);
        assert!((w.arg() - 0.7).abs() < 1e-12);
        let w = t.compress(Complex64::new(4.0, 0.0));
        assert!((w.re - 0.3).abs() < 1e-15);
    }

    #[test]
    fn compress_flag_guard() {
        let t = AmplitudeTransform::default();
        let s = ones(1);
        assert!(expand_amplitude(&s, &t).is_err());
        let c = compress_amplitude(&s, &t).unwrap();
        assert!(compress_amplitude(&c, &t).is_err());
    }

    proptest! {
        #[test]
        fn compress_expand_inverse(re in -1e3f64..1e3, im in -1e3f64..1e3) {
            let t = AmplitudeTransform::default();
            let z = Complex64::new(re, im);
            let back = t.expand(t.compress(z));
            prop_assert!((back - z).norm() <= 1e-6 * z.norm().max(1e-300));
        }
    }
}
