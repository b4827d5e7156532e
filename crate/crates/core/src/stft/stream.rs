use std::collections::VecDeque;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::{Complex64, FrameSpec, Spectrogram};
use crate::error::{Error, Result};

/// Overlap normalizers are floored at this fraction of their steady-state
/// mean so that the sparsely covered edges are attenuated, not amplified.
const SYNTH_NORM_FLOOR_FRACTION: f64 = 0.1;

struct Analyzer {
    spec: FrameSpec,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Analyzer {
    fn new(spec: FrameSpec) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(spec.fft_len());
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Self {
            window: spec.window(),
            spec,
            fft,
            scratch,
        }
    }

    fn frame(&mut self, samples: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(samples.len(), self.spec.window_len);
        let mut buf: Vec<Complex64> = samples
            .iter()
            .zip(&self.window)
            .map(|(s, w)| Complex64::new(s * w, 0.0))
            .collect();
        self.fft.process_with_scratch(&mut buf, &mut self.scratch);
        buf.truncate(self.spec.bins());
        buf
    }
}

/// Streaming analysis. Frame `k` covers samples `[k * hop, k * hop + window)`
/// and is emitted as soon as its last sample has been pushed.
pub struct StftStream {
    analyzer: Analyzer,
    pending: VecDeque<f64>,
    emitted: usize,
}

impl StftStream {
    pub fn new(spec: FrameSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            analyzer: Analyzer::new(spec),
            pending: VecDeque::with_capacity(spec.window_len * 2),
            emitted: 0,
        })
    }

    pub fn spec(&self) -> FrameSpec {
        self.analyzer.spec
    }

    pub fn frames_emitted(&self) -> usize {
        self.emitted
    }

    pub fn push(&mut self, block: &[f64]) -> Vec<Vec<Complex64>> {
        let FrameSpec {
            window_len, hop, ..
        } = self.analyzer.spec;
        let mut out = Vec::new();
        let mut buf = vec![0.0; window_len];
        for &s in block {
            self.pending.push_back(s);
            if self.pending.len() == window_len {
                for (dst, src) in buf.iter_mut().zip(&self.pending) {
                    *dst = *src;
                }
                out.push(self.analyzer.frame(&buf));
                self.pending.drain(..hop);
                self.emitted += 1;
            }
        }
        out
    }
}

/// Streaming weighted overlap-add synthesis with the analysis window and
/// per-sample normalisation by the summed squared window.
///
/// After frame `k` is pushed, samples `[k * hop, (k + 1) * hop)` are final and
/// returned; [`IstftStream::finish`] flushes the tail of the last frame.
pub struct IstftStream {
    spec: FrameSpec,
    window: Vec<f64>,
    ifft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    acc: VecDeque<f64>,
    norm: VecDeque<f64>,
    floor: f64,
}

impl IstftStream {
    pub fn new(spec: FrameSpec) -> Result<Self> {
        spec.validate()?;
        let ifft = FftPlanner::new().plan_fft_inverse(spec.fft_len());
        let scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];
        let window = spec.window();
        let floor = SYNTH_NORM_FLOOR_FRACTION * window.iter().map(|w| w * w).sum::<f64>() / spec.hop as f64;
        Ok(Self {
            floor,
            window,
            spec,
            ifft,
            scratch,
            acc: VecDeque::from(vec![0.0; spec.window_len]),
            norm: VecDeque::from(vec![0.0; spec.window_len]),
        })
    }

    pub fn push(&mut self, frame: &[Complex64]) -> Result<Vec<f64>> {
        let n = self.spec.fft_len();
        let bins = self.spec.bins();
        if frame.len() != bins {
            return Err(Error::Shape(format!(
                "frame has {} bins, expected {bins}",
                frame.len()
            )));
        }
        let mut full = vec![Complex64::default(); n];
        full[..bins].copy_from_slice(frame);
        // Real signal: enforce Hermitian symmetry, DC and Nyquist are real.
        full[0].im = 0.0;
        full[n / 2].im = 0.0;
        for k in 1..n / 2 {
            full[n - k] = frame[k].conj();
        }
        self.ifft.process_with_scratch(&mut full, &mut self.scratch);
        let inv_n = 1.0 / n as f64;
        for i in 0..n {
            let w = self.window[i];
            self.acc[i] += full[i].re * inv_n * w;
            self.norm[i] += w * w;
        }
        let hop = self.spec.hop;
        let out = (0..hop)
            .map(|_| {
                let a = self.acc.pop_front().unwrap_or(0.0);
                let m = self.norm.pop_front().unwrap_or(0.0);
                self.acc.push_back(0.0);
                self.norm.push_back(0.0);
                a / m.max(self.floor)
            })
            .collect();
        Ok(out)
    }

    /// Remaining `window - hop` samples covered by already pushed frames.
    pub fn finish(&mut self) -> Vec<f64> {
        let tail = self.spec.window_len - self.spec.hop;
        (0..tail)
            .map(|i| self.acc[i] / self.norm[i].max(self.floor))
            .collect()
    }
}

/// Whole-signal analysis; only complete frames are produced.
pub fn stft(signal: &[f64], spec: FrameSpec) -> Result<Spectrogram> {
    spec.validate()?;
    let mut analyzer = Analyzer::new(spec);
    let frames: Vec<Vec<Complex64>> = (0..spec.num_frames(signal.len()))
        .map(|k| analyzer.frame(&signal[k * spec.hop..k * spec.hop + spec.window_len]))
        .collect();
    Spectrogram::from_frames(&frames, spec)
}

/// Whole-spectrogram synthesis; output has `(frames - 1) * hop + window`
/// samples (zero frames give an empty signal).
pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    if spec.frames == 0 {
        return Ok(Vec::new());
    }
    let mut stream = IstftStream::new(spec.spec)?;
    let mut out = Vec::with_capacity(spec.frames * spec.spec.hop + spec.spec.window_len);
    for frame in spec.frames_iter() {
        out.extend(stream.push(frame)?);
    }
    out.extend(stream.finish());
    Ok(out)
}
