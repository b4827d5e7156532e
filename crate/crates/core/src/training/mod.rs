//! Denoising score matching: training pairs, loss, optimizer and loop.

mod optim;

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use optim::{adam_step, ema_update, AdamConfig, AdamMoments};

use crate::audio_io::AudioBuffer;
use crate::corruption::{apply_chain, sample_chain, AssetLibrary, ChainGrammar, CorruptionChain};
use crate::diffusion::{sample_forward, ScoreModel, SdeParams};
use crate::error::{Error, Result};
use crate::scorenet::graph::{self, Var};
use crate::scorenet::{
    gradients, prior_score, save_checkpoint, stack_input, ParamTensors, ParamVars, ScoreNet, ScoreNetParams,
    Tensor,
};
use crate::stft::{compress_amplitude, stft, zero_low_bins, AmplitudeTransform, FrameSpec, Spectrogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub ema_decay: f64,
    /// Use `min(decay, (1 + n) / (10 + n))` at step `n`.
    pub ema_warmup: bool,
    pub steps: u64,
    pub seed: u64,
    pub crop_frames: usize,
    /// Metrics line every `log_every` steps.
    pub log_every: u64,
    /// Intermediate checkpoints every `checkpoint_every` steps; 0 disables.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 8,
            lr: adam.lr,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            ema_decay: 0.999,
            ema_warmup: false,
            steps: 1000,
            seed: 0,
            crop_frames: 128,
            log_every: 10,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train: {m}")));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return bad("ema_decay must lie in (0, 1)");
        }
        if !(self.lr > 0.0 && self.adam_eps > 0.0) {
            return bad("lr and adam_eps must be positive");
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.crop_frames == 0 || self.log_every == 0 {
            return bad("crop_frames and log_every must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn ema_decay_at(&self, step: u64) -> f64 {
        if self.ema_warmup {
            let n = step as f64;
            self.ema_decay.min((1.0 + n) / (10.0 + n))
        } else {
            self.ema_decay
        }
    }
}

/// Clean target and corrupted conditioner, both compressed and divided by
/// the same gain.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub x0: Spectrogram,
    pub y: Spectrogram,
    /// Linear factor applied to both spectrograms before compression.
    pub norm_gain: f64,
}

/// Largest frame-mean magnitude of a linear spectrogram.
pub fn max_frame_mean(spec: &Spectrogram) -> f64 {
    (0..spec.frames)
        .map(|k| spec.frame_mean_magnitude(k))
        .fold(0.0, f64::max)
}

/// Corrupts `clean`, crops a random segment of `crop_frames` frames and
/// normalizes both signals so the corrupted crop peaks at frame-mean
/// magnitude one.
pub fn make_training_pair(
    clean: &AudioBuffer,
    chain: &CorruptionChain,
    assets: &AssetLibrary,
    seed: u64,
    frame: FrameSpec,
    crop_frames: usize,
) -> Result<TrainingPair> {
    if clean.rate != frame.rate {
        return Err(Error::InvalidParam(format!(
            "clean audio at {} Hz, expected {}",
            clean.rate, frame.rate
        )));
    }
    let corrupted = apply_chain(clean, chain, assets, seed)?;
    let x = stft(&clean.samples, frame)?;
    let y = stft(&corrupted.samples, frame)?;
    if x.frames < crop_frames {
        return Err(Error::InvalidParam(format!(
            "clean audio has {} frames, crop needs {crop_frames}",
            x.frames
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let start = rng.random_range(0..=x.frames - crop_frames);
    let mut x = zero_low_bins(&x.slice_frames(start, crop_frames));
    let mut y = zero_low_bins(&y.slice_frames(start, crop_frames));
    let peak = max_frame_mean(&y);
    let norm_gain = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    x.scale(norm_gain);
    y.scale(norm_gain);
    let t = AmplitudeTransform::default();
    Ok(TrainingPair {
        x0: compress_amplitude(&x, &t)?,
        y: compress_amplitude(&y, &t)?,
        norm_gain,
    })
}

/// One perturbation draw for a pair.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub t: f64,
    pub x_t: Spectrogram,
    pub z: Spectrogram,
}

/// `t ~ U[t_eps, T]` then `x_t = mu(t) + sigma(t) z`.
pub fn draw_perturbation(pair: &TrainingPair, sde: &SdeParams, rng: &mut impl Rng) -> Result<Perturbation> {
    let t = rng.random_range(sde.t_eps..=sde.t_horizon);
    let (x_t, z) = sample_forward(&pair.x0, &pair.y, t, sde, rng)?;
    Ok(Perturbation { t, x_t, z })
}

/// `mean over bins of |sigma s + z|^2`.
pub fn residual_loss(score: &Spectrogram, z: &Spectrogram, sigma: f64) -> f64 {
    let sum: f64 = score
        .data
        .iter()
        .zip(&z.data)
        .map(|(s, z)| ((s + z / sigma) * sigma).norm_sqr())
        .sum();
    sum / score.data.len() as f64
}

/// Batch-mean DSM loss of an arbitrary score model.
pub fn dsm_loss<M: ScoreModel>(
    batch: &[TrainingPair],
    model: &M,
    sde: &SdeParams,
    rng: &mut impl Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = 0.0;
    for (i, pair) in batch.iter().enumerate() {
        let p = draw_perturbation(pair, sde, rng)?;
        let s = model.score(&p.x_t, &pair.y, p.t)?;
        let l = residual_loss(&s, &p.z, sde.std(p.t));
        if !l.is_finite() {
            return Err(Error::NonFinite(format!("dsm loss of batch item {i}")));
        }
        total += l;
    }
    Ok(total / batch.len() as f64)
}

/// Differentiable DSM loss of one item through the network. With the
/// score taken as `D / sigma(t)` the residual is `D + z`.
pub fn dsm_item_graph(
    net: &ScoreNet,
    vars: &ParamVars,
    pair: &TrainingPair,
    p: &Perturbation,
    sde: &SdeParams,
) -> Result<Var> {
    let input = Var::constant(stack_input(&p.x_t, &pair.y)?);
    let out = net.forward_var(vars, &input, p.t)?;
    let n = p.z.data.len();
    // constant part of the residual: z + sigma * prior score
    let mut target = p.z.clone();
    if let Some(v) = net.config().prior_var {
        let prior = prior_score(&p.x_t, &pair.y, p.t, v, sde);
        let s = sde.std(p.t);
        target.data.iter_mut().zip(&prior.data).for_each(|(a, b)| *a += b * s);
    }
    let mut zt = vec![0.0; 2 * n];
    for (i, z) in target.data.iter().enumerate() {
        zt[i] = z.re;
        zt[n + i] = z.im;
    }
    let z = Var::constant(Tensor::from_vec(out.value().shape(), zt));
    let resid = graph::add(&out, &z)?;
    Ok(graph::scale(&graph::sum_squares(&resid), 1.0 / n as f64))
}

/// Everything a training run needs besides the clean data.
#[derive(Debug, Clone, Copy)]
pub struct TrainJob<'a> {
    pub net: &'a ScoreNet,
    pub sde: &'a SdeParams,
    pub frame: FrameSpec,
    pub grammar: &'a ChainGrammar,
    pub assets: &'a AssetLibrary,
    pub config: &'a TrainConfig,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Batch loss of every step.
    pub losses: Vec<f64>,
    pub params: ScoreNetParams,
}

/// Runs the training loop and writes the final checkpoint.
///
/// Gradients of the batch items are summed in item order, so a run is
/// bitwise reproducible from `config.seed`.
pub fn train(
    job: &TrainJob,
    clean: &[AudioBuffer],
    checkpoint: &Path,
    metrics: Option<&Path>,
) -> Result<TrainReport> {
    let cfg = job.config;
    cfg.validate()?;
    job.sde.validate()?;
    if clean.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let need = (cfg.crop_frames - 1) * job.frame.hop + job.frame.window_len;
    if let Some(i) = clean.iter().position(|c| c.len() < need) {
        return Err(Error::InvalidParam(format!(
            "training file {i} has {} samples, crop needs {need}",
            clean[i].len()
        )));
    }
    job.grammar.validate(Some(job.assets))?;

    let mut log = match metrics {
        Some(p) => Some(File::create(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };
    let mut params = job.net.init_params(cfg.seed);
    let mut moments = AdamMoments::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let adam = cfg.adam();
    let mut losses = Vec::with_capacity(cfg.steps as usize);
    let scale = 1.0 / cfg.batch_size as f64;

    for step in 1..=cfg.steps {
        let mut acc: Option<ParamTensors> = None;
        let mut loss = 0.0;
        for item in 0..cfg.batch_size {
            let idx = rng.random_range(0..clean.len());
            let chain = sample_chain(job.grammar, job.assets, rng.random())?;
            let pair = make_training_pair(
                &clean[idx],
                &chain,
                job.assets,
                rng.random(),
                job.frame,
                cfg.crop_frames,
            )?;
            let p = draw_perturbation(&pair, job.sde, &mut rng)?;
            let (l, g) = gradients(job.net, &params.tensors, |v| {
                dsm_item_graph(job.net, v, &pair, &p, job.sde)
            })
            .map_err(|e| match e {
                Error::NonFinite(m) => {
                    Error::NonFinite(format!("step {step} batch item {item}: {m}"))
                }
                e => e,
            })?;
            loss += l * scale;
            match acc.as_mut() {
                None => {
                    let mut g = g;
                    g.values_mut().for_each(|t| t.scale_assign(scale));
                    acc = Some(g);
                }
                Some(a) => {
                    for (name, mut t) in g {
                        t.scale_assign(scale);
                        a.get_mut(&name).expect("same parameter set").add_assign(&t);
                    }
                }
            }
        }
        let grads = acc.expect("batch_size >= 1");
        adam_step(&mut params.tensors, &grads, &mut moments, step, &adam);
        ema_update(&mut params.ema, &params.tensors, cfg.ema_decay_at(step));
        losses.push(loss);
        if step % cfg.log_every == 0 || step == cfg.steps {
            let line = format!("step {step} loss {loss:.6}");
            log::info!("{line}");
            if let Some(f) = log.as_mut() {
                writeln!(f, "{line}").map_err(|e| Error::io(metrics.expect("open log"), e))?;
            }
        }
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            save_checkpoint(checkpoint, job.net, &params)?;
        }
    }
    save_checkpoint(checkpoint, job.net, &params)?;
    Ok(TrainReport { losses, params })
}

/// Harmonic tones with random pitch, partial count and short fades,
/// peaking at 0.5.
pub fn synthetic_tones(count: usize, rate: u32, secs: f64, seed: u64) -> Vec<AudioBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (secs * rate as f64).round() as usize;
    let fade = (0.02 * rate as f64) as usize;
    (0..count)
        .map(|_| {
            let f0 = rng.random_range(120.0..400.0);
            let partials = rng.random_range(2..=6);
            let phases: Vec<f64> = (0..partials)
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect();
            let mut s: Vec<f64> = (0..n)
                .map(|i| {
                    let t = i as f64 / rate as f64;
                    phases
                        .iter()
                        .enumerate()
                        .map(|(k, ph)| {
                            let h = (k + 1) as f64;
                            (std::f64::consts::TAU * f0 * h * t + ph).sin() / h
                        })
                        .sum()
                })
                .collect();
            for i in 0..fade.min(n / 2) {
                let g = i as f64 / fade as f64;
                s[i] *= g;
                s[n - 1 - i] *= g;
            }
            let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > 0.0 {
                s.iter_mut().for_each(|v| *v *= 0.5 / peak);
            }
            AudioBuffer::new(s, rate)
        })
        .collect()
}
