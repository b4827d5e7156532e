//! Noise and room-impulse-response libraries.
//!
//! The synthetic library is generated from a seed; real corpora can be loaded
//! from manifests (one WAV path per line, ids are file stems).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio_io::{read_wav, resample, AudioBuffer, PROCESSING_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NoiseAsset {
    pub audio: AudioBuffer,
    pub stationary: bool,
}

#[derive(Debug, Clone, Default)]
pub struct AssetLibrary {
    pub noises: BTreeMap<String, NoiseAsset>,
    pub rirs: BTreeMap<String, AudioBuffer>,
}

const SYNTH_NOISE_SECS: f64 = 4.0;

impl AssetLibrary {
    /// White, pink and babble-like noise plus three exponential-decay RIRs.
    pub fn synthetic(rate: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = (SYNTH_NOISE_SECS * rate as f64) as usize;
        let white: Vec<f64> = (0..len).map(|_| gauss(&mut rng)).collect();
        let pink = pink_noise(len, &mut rng);
        let babble = babble_noise(len, rate, &mut rng);
        let mut noises = BTreeMap::new();
        for (id, samples, stationary) in [
            ("white", white, true),
            ("pink", pink, true),
            ("babble", babble, false),
        ] {
            noises.insert(
                id.to_string(),
                NoiseAsset {
                    audio: AudioBuffer::new(normalize_rms(samples, 0.1), rate),
                    stationary,
                },
            );
        }
        let mut rirs = BTreeMap::new();
        for (id, rt60) in [("room_small", 0.25), ("room_medium", 0.5), ("room_large", 0.9)] {
            rirs.insert(id.to_string(), synthetic_rir(rate, rt60, &mut rng));
        }
        Self { noises, rirs }
    }

    /// Only white noise and no RIRs.
    pub fn white_only(rate: u32, seed: u64) -> Self {
        let mut lib = Self::synthetic(rate, seed);
        lib.noises.retain(|k, _| k == "white");
        lib.rirs.clear();
        lib
    }

    /// Loads manifests; noises are tagged non-stationary.
    pub fn from_manifests(noise_manifest: Option<&Path>, rir_manifest: Option<&Path>) -> Result<Self> {
        let mut lib = Self::default();
        if let Some(m) = noise_manifest {
            for path in read_manifest(m)? {
                let audio = load_at_processing_rate(&path)?;
                lib.noises.insert(
                    stem(&path),
                    NoiseAsset {
                        audio,
                        stationary: false,
                    },
                );
            }
        }
        if let Some(m) = rir_manifest {
            for path in read_manifest(m)? {
                lib.rirs.insert(stem(&path), load_at_processing_rate(&path)?);
            }
        }
        Ok(lib)
    }

    pub fn noise(&self, id: &str) -> Result<&NoiseAsset> {
        self.noises
            .get(id)
            .ok_or_else(|| Error::UnknownAsset(format!("noise/{id}")))
    }

    pub fn rir(&self, id: &str) -> Result<&AudioBuffer> {
        self.rirs
            .get(id)
            .ok_or_else(|| Error::UnknownAsset(format!("rir/{id}")))
    }

    pub fn noise_ids(&self) -> Vec<String> {
        self.noises.keys().cloned().collect()
    }

    pub fn rir_ids(&self) -> Vec<String> {
        self.rirs.keys().cloned().collect()
    }
}

/// Non-empty, non-comment lines of a manifest, resolved relative to its
/// directory.
pub fn read_manifest(path: &Path) -> Result<Vec<std::path::PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = Path::new(l);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        })
        .collect())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn load_at_processing_rate(path: &Path) -> Result<AudioBuffer> {
    let a = read_wav(path)?;
    resample(&a, PROCESSING_RATE)
}

fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normalize_rms(mut x: Vec<f64>, rms: f64) -> Vec<f64> {
    let cur = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if cur > 0.0 {
        x.iter_mut().for_each(|v| *v *= rms / cur);
    }
    x
}

/// Paul Kellet's refined pinking filter.
fn pink_noise(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    (0..len)
        .map(|_| {
            let w = gauss(rng);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let out = b[..6].iter().sum::<f64>() + b[6] + w * 0.5362;
            b[6] = w * 0.115926;
            out
        })
        .collect()
}

/// Several pink "talkers" with independent syllable-rate envelopes.
fn babble_noise(len: usize, rate: u32, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for _ in 0..6 {
        let voice = pink_noise(len, rng);
        let syl_hz = rng.random_range(3.0..6.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        for (n, (o, v)) in out.iter_mut().zip(voice).enumerate() {
            let t = n as f64 / rate as f64;
            let env = (0.5 + 0.5 * (2.0 * PI * syl_hz * t + phase).sin()).powi(2);
            *o += env * v;
        }
    }
    out
}

/// Unit direct path at index 0 followed by an exponentially decaying
/// Gaussian tail starting 2.5 ms later.
pub fn synthetic_rir(rate: u32, rt60: f64, rng: &mut impl Rng) -> AudioBuffer {
    let len = (rt60 * 1.2 * rate as f64) as usize;
    let onset = direct_window(rate);
    let mut rir = vec![0.0; len.max(onset + 1)];
    rir[0] = 1.0;
    let decay = 6.907_755 / (rt60 * rate as f64);
    for (n, v) in rir.iter_mut().enumerate().skip(onset) {
        *v = 0.3 * gauss(rng) * (-decay * n as f64).exp();
    }
    AudioBuffer::new(rir, rate)
}

/// Samples after the direct path that still count as direct sound (2.5 ms).
pub fn direct_window(rate: u32) -> usize {
    (rate as f64 * 0.0025).round() as usize
}

/// Rescales the reverberant tail so the direct-to-reverberant ratio equals
/// `drr_db`.
pub fn with_drr(rir: &AudioBuffer, drr_db: f64) -> AudioBuffer {
    let d = super::stages::direct_path_index(&rir.samples);
    let w = direct_window(rir.rate);
    let lo = d.saturating_sub(w);
    let hi = (d + w + 1).min(rir.len());
    let direct: f64 = rir.samples[lo..hi].iter().map(|v| v * v).sum();
    let tail: f64 = rir
        .samples
        .iter()
        .enumerate()
        .filter(|(i, _)| *i < lo || *i >= hi)
        .map(|(_, v)| v * v)
        .sum();
    if tail == 0.0 {
        return rir.clone();
    }
    let scale = (direct / (tail * 10f64.powf(drr_db / 10.0))).sqrt();
    let samples = rir
        .samples
        .iter()
        .enumerate()
        .map(|(i, &v)| if i < lo || i >= hi { v * scale } else { v })
        .collect();
    AudioBuffer::new(samples, rir.rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_library_is_deterministic() {
        let a = AssetLibrary::synthetic(32000, 9);
        let b = AssetLibrary::synthetic(32000, 9);
        assert_eq!(a.noise("pink").unwrap().audio, b.noise("pink").unwrap().audio);
        assert_eq!(a.rir("room_large").unwrap(), b.rir("room_large").unwrap());
        assert!(a.noise("white").unwrap().stationary);
        assert!(!a.noise("babble").unwrap().stationary);
        assert!(a.noise("missing").is_err());
    }

    #[test]
    fn drr_is_met() {
        let lib = AssetLibrary::synthetic(32000, 1);
        let r = with_drr(lib.rir("room_medium").unwrap(), 6.0);
        let w = direct_window(32000);
        let direct: f64 = r.samples[..=w].iter().map(|v| v * v).sum();
        let tail: f64 = r.samples[w + 1..].iter().map(|v| v * v).sum();
        assert!((10.0 * (direct / tail).log10() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let wav = dir.path().join("hum.wav");
        crate::audio_io::write_wav(&wav, &AudioBuffer::new(vec![0.1, -0.1, 0.2], 32000)).unwrap();
        let m = dir.path().join("noises.txt");
        std::fs::write(&m, "# comment\n\nhum.wav\n").unwrap();
        let lib = AssetLibrary::from_manifests(Some(&m), None).unwrap();
        assert_eq!(lib.noise_ids(), vec!["hum".to_string()]);
    }
}
