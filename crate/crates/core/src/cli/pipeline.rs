use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::RunConfig;
use crate::agc::{apply_agc, compress_peaks, AgcState};
use crate::audio_io::{resample, AudioBuffer, PROCESSING_RATE};
use crate::diffusion::enhance_spectrogram;
use crate::error::{Error, Result};
use crate::scorenet::{load_checkpoint, NetScore, ParamTensors, ScoreNet};
use crate::stft::{
    compress_amplitude, expand_amplitude, istft, zero_low_bins, AmplitudeTransform, Spectrogram,
};

/// Network and EMA weights ready for inference.
pub struct Enhancer {
    pub config: RunConfig,
    pub net: ScoreNet,
    pub weights: ParamTensors,
}

impl Enhancer {
    pub fn new(config: RunConfig, weights: ParamTensors) -> Result<Self> {
        config.validate()?;
        let net = ScoreNet::new(config.net.clone())?;
        net.check_params(&weights)?;
        Ok(Self {
            config,
            net,
            weights,
        })
    }

    /// Uses the checkpoint's EMA shadow.
    pub fn from_checkpoint(config: RunConfig, path: &Path) -> Result<Self> {
        config.validate()?;
        let net = ScoreNet::new(config.net.clone())?;
        let params = load_checkpoint(path, &net)?;
        Ok(Self {
            config,
            net,
            weights: params.ema,
        })
    }

    pub fn latency_ms(&self) -> f64 {
        self.config.io.frame.latency_ms()
    }

    /// STFT, low-bin removal and streaming AGC of a processing-rate signal.
    pub fn normalize(&self, signal: &[f64]) -> Result<Spectrogram> {
        super::front_end(signal, &self.config)
    }

    pub fn enhance(&self, input: &AudioBuffer, seed: u64) -> Result<AudioBuffer> {
        enhance_audio(self, input, seed)
    }
}

pub fn enhance_audio(enhancer: &Enhancer, input: &AudioBuffer, seed: u64) -> Result<AudioBuffer> {
    let cfg = &enhancer.config;
    let x = resample(input, PROCESSING_RATE)?;
    if cfg.io.frame.num_frames(x.len()) == 0 {
        return Err(Error::Empty("input shorter than one frame"));
    }
    let amp = AmplitudeTransform::default();
    let y = compress_amplitude(&enhancer.normalize(&x.samples)?, &amp)?;
    let model = NetScore {
        net: &enhancer.net,
        params: &enhancer.weights,
        sde: &cfg.sde,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = enhance_spectrogram(&y, &model, &cfg.sde, &mut rng)?;
    let x0 = zero_low_bins(&expand_amplitude(&x0, &amp)?);
    let mut loudness = AgcState::new(cfg.agc, cfg.io.frame)?;
    let (x0, _) = apply_agc(&x0, &mut loudness)?;
    let mut samples = istft(&x0)?;
    samples.resize(x.len(), 0.0);
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("enhanced signal".into()));
    }
    let out = compress_peaks(&AudioBuffer::new(samples, PROCESSING_RATE), &cfg.agc.compressor)?;
    let mut out = resample(&out, input.rate)?;
    out.samples.resize(input.len(), 0.0);
    Ok(out)
}
