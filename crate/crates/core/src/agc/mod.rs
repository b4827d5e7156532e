//! Causal adaptive gain control.
//!
//! Per frame: a speech presence probability (SPP) is estimated against a
//! recursively tracked noise PSD, smoothed by a causal moving average and
//! compared to `tau`. Once the smoothed probability has stayed above `tau` for
//! `hold_ms`, gain tracking starts and never stops. From then on the running
//! maximum of the frame-mean magnitude is followed by a one-pole ramp and its
//! reciprocal is the gain.

mod compressor;
mod spp;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use compressor::{compress_peaks, CompressorConfig};
pub use spp::{posterior_h1, NoiseTracker};

use crate::error::{Error, Result};
use crate::stft::{Complex64, FrameSpec, Spectrogram};

const MIN_DIVISOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgcConfig {
    /// SPP threshold for voice activity.
    pub tau: f64,
    /// How long the smoothed SPP must stay above `tau`.
    pub hold_ms: f64,
    pub spp_smooth_frames: usize,
    /// One-pole time constant of the ramp to a new maximum; 0 jumps.
    pub ramp_time_ms: f64,
    /// Fixed a-priori SNR under speech presence.
    pub xi_h1_db: f64,
    pub psd_alpha: f64,
    /// Leading frames averaged into the initial noise PSD.
    pub noise_init_frames: usize,
    pub compressor: CompressorConfig,
}

impl Default for AgcConfig {
    fn default() -> Self {
        Self {
            tau: 0.8,
            hold_ms: 100.0,
            spp_smooth_frames: 10,
            ramp_time_ms: 50.0,
            xi_h1_db: 15.0,
            psd_alpha: 0.8,
            noise_init_frames: 5,
            compressor: CompressorConfig::default(),
        }
    }
}

impl AgcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(format!("agc: {m}")));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.hold_ms > 0.0) {
            return bad("hold_ms must be positive");
        }
        if !(self.psd_alpha > 0.0 && self.psd_alpha < 1.0) {
            return bad("psd_alpha must lie in (0, 1)");
        }
        if self.spp_smooth_frames == 0 {
            return bad("spp_smooth_frames must be at least 1");
        }
        if self.ramp_time_ms < 0.0 {
            return bad("ramp_time_ms must be nonnegative");
        }
        self.compressor.validate()
    }

    /// `ceil(hold_ms / frame_ms)`; 20 frames for 100 ms at a 5 ms hop.
    pub fn hold_frames(&self, spec: &FrameSpec) -> usize {
        (self.hold_ms * spec.rate as f64 / (spec.hop as f64 * 1000.0) - 1e-9).ceil() as usize
    }

    pub fn ramp_frames(&self, spec: &FrameSpec) -> f64 {
        self.ramp_time_ms / spec.frame_ms()
    }

    pub fn xi_h1(&self) -> f64 {
        10f64.powf(self.xi_h1_db / 10.0)
    }
}

/// Divisor ramp toward the current maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub divisor: f64,
    pub target: f64,
}

/// Single-stream AGC state.
#[derive(Debug, Clone)]
pub struct AgcState {
    config: AgcConfig,
    spec: FrameSpec,
    pub noise: NoiseTracker,
    spp_history: VecDeque<f64>,
    pub smoothed_spp: f64,
    pub hold_counter: usize,
    pub tracking: bool,
    pub current_max: f64,
    pub ramp: Ramp,
    hold_frames: usize,
    ramp_decay: f64,
}

impl AgcState {
    pub fn new(config: AgcConfig, spec: FrameSpec) -> Result<Self> {
        config.validate()?;
        let ramp_frames = config.ramp_frames(&spec);
        Ok(Self {
            noise: NoiseTracker::new(spec.bins(), &config),
            spp_history: VecDeque::from(vec![0.0; config.spp_smooth_frames]),
            smoothed_spp: 0.0,
            hold_counter: 0,
            tracking: false,
            current_max: 0.0,
            ramp: Ramp {
                divisor: 1.0,
                target: 1.0,
            },
            hold_frames: config.hold_frames(&spec),
            ramp_decay: if ramp_frames > 0.0 {
                (-1.0 / ramp_frames).exp()
            } else {
                0.0
            },
            config,
            spec,
        })
    }

    pub fn config(&self) -> &AgcConfig {
        &self.config
    }

    pub fn hold_frames(&self) -> usize {
        self.hold_frames
    }

    /// Frame-level speech presence probability in [0, 1].
    pub fn estimate_spp(&mut self, magnitudes: &[f64]) -> f64 {
        self.noise.observe(magnitudes)
    }

    /// Feeds one frame probability; returns whether voice activity holds.
    pub fn update_vad(&mut self, p: f64) -> bool {
        let n = self.config.spp_smooth_frames as f64;
        self.spp_history.pop_front();
        self.spp_history.push_back(p.clamp(0.0, 1.0));
        self.smoothed_spp = self.spp_history.iter().sum::<f64>() / n;
        if self.smoothed_spp > self.config.tau {
            self.hold_counter += 1;
        } else {
            self.hold_counter = 0;
        }
        self.hold_counter >= self.hold_frames
    }

    /// Gain for the current frame given its magnitudes and the VAD decision.
    pub fn track_gain(&mut self, magnitudes: &[f64], vad_active: bool) -> f64 {
        if !self.tracking {
            if !vad_active {
                return 1.0;
            }
            self.tracking = true;
            let m = frame_mean(magnitudes).max(MIN_DIVISOR);
            self.current_max = m;
            self.ramp = Ramp {
                divisor: m,
                target: m,
            };
            return 1.0 / m;
        }
        let m = frame_mean(magnitudes);
        if m > self.current_max {
            self.current_max = m;
            self.ramp.target = m;
        }
        let r = &mut self.ramp;
        r.divisor = r.target - (r.target - r.divisor) * self.ramp_decay;
        1.0 / r.divisor.max(MIN_DIVISOR)
    }

    /// Runs SPP, VAD and gain tracking on one frame and scales it in place.
    pub fn process_frame(&mut self, frame: &mut [Complex64]) -> f64 {
        let mags: Vec<f64> = frame.iter().map(|z| z.norm()).collect();
        let p = self.estimate_spp(&mags);
        let active = self.update_vad(p);
        let gain = self.track_gain(&mags, active);
        frame.iter_mut().for_each(|z| *z *= gain);
        gain
    }

    pub fn spec(&self) -> &FrameSpec {
        &self.spec
    }
}

fn frame_mean(magnitudes: &[f64]) -> f64 {
    if magnitudes.is_empty() {
        return 0.0;
    }
    magnitudes.iter().sum::<f64>() / magnitudes.len() as f64
}

/// Applies the AGC frame by frame; returns the output and per-frame gains.
pub fn apply_agc(spec: &Spectrogram, state: &mut AgcState) -> Result<(Spectrogram, Vec<f64>)> {
    if spec.compressed {
        return Err(Error::InvalidParam(
            "agc operates on uncompressed magnitudes".into(),
        ));
    }
    let mut out = spec.clone();
    let gains = out.frames_iter_mut().map(|f| state.process_frame(f)).collect();
    Ok((out, gains))
}
