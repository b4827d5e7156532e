//! Corruption model: random chains of degradations turning clean speech into
//! training inputs.

mod assets;
mod sidecar;
pub mod stages;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use assets::{direct_window, read_manifest, synthetic_rir, with_drr, AssetLibrary, NoiseAsset};
pub use sidecar::{format_sidecar, parse_sidecar};
pub use stages::{
    add_noise, apply_reverb, clip, codec_sim, gain_reduce, gilbert_mask, packet_loss,
};

use crate::audio_io::AudioBuffer;
use crate::error::{Error, Result};

pub const MAX_CHAIN_LEN: usize = 4;

/// One concrete corruption with all parameters fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorruptionStage {
    Reverb { rir_id: String, drr_db: f64 },
    Noise { noise_id: String, snr_db: f64, stationary: bool },
    Clip { threshold: f64 },
    GainReduce { db: f64 },
    PacketLoss { loss_rate: f64, burst_mean_packets: f64 },
    Codec { bandwidth_hz: f64, bits: u32 },
}

impl CorruptionStage {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Reverb { .. } => "reverb",
            Self::Noise { .. } => "noise",
            Self::Clip { .. } => "clip",
            Self::GainReduce { .. } => "gain_reduce",
            Self::PacketLoss { .. } => "packet_loss",
            Self::Codec { .. } => "codec",
        }
    }

    /// Parameters as `(key, value)` text pairs.
    pub fn params(&self) -> Vec<(&'static str, String)> {
        match self {
            Self::Reverb { rir_id, drr_db } => {
                vec![("rir_id", rir_id.clone()), ("drr_db", drr_db.to_string())]
            }
            Self::Noise {
                noise_id,
                snr_db,
                stationary,
            } => vec![
                ("noise_id", noise_id.clone()),
                ("snr_db", snr_db.to_string()),
                ("stationary", stationary.to_string()),
            ],
            Self::Clip { threshold } => vec![("threshold", threshold.to_string())],
            Self::GainReduce { db } => vec![("db", db.to_string())],
            Self::PacketLoss {
                loss_rate,
                burst_mean_packets,
            } => vec![
                ("loss_rate", loss_rate.to_string()),
                ("burst_mean_packets", burst_mean_packets.to_string()),
            ],
            Self::Codec { bandwidth_hz, bits } => vec![
                ("bandwidth_hz", bandwidth_hz.to_string()),
                ("bits", bits.to_string()),
            ],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorruptionChain {
    pub stages: Vec<CorruptionStage>,
}

/// Closed interval sampled uniformly; `lo == hi` is a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span(pub f64, pub f64);

impl Span {
    pub fn fixed(v: f64) -> Self {
        Span(v, v)
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            rng.random_range(self.0..=self.1)
        }
    }

    fn valid(&self) -> bool {
        self.0.is_finite() && self.1.is_finite() && self.0 <= self.1
    }
}

/// Stage type with parameter ranges. Empty id lists mean "any asset".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageTemplate {
    Reverb {
        #[serde(default)]
        rir_ids: Vec<String>,
        drr_db: Span,
    },
    Noise {
        #[serde(default)]
        noise_ids: Vec<String>,
        snr_db: Span,
    },
    Clip { threshold: Span },
    GainReduce { db: Span },
    PacketLoss { loss_rate: Span, burst_mean_packets: Span },
    Codec { bandwidth_hz: Span, bits: (u32, u32) },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainCandidate {
    pub stages: Vec<StageTemplate>,
    pub weight: f64,
}

/// Plausible corruption chains and their selection probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainGrammar {
    pub candidates: Vec<ChainCandidate>,
}

impl Default for ChainGrammar {
    fn default() -> Self {
        use StageTemplate as T;
        let noise = || T::Noise {
            noise_ids: vec![],
            snr_db: Span(0.0, 20.0),
        };
        let reverb = || T::Reverb {
            rir_ids: vec![],
            drr_db: Span(-3.0, 12.0),
        };
        let chains = vec![
            vec![noise()],
            vec![reverb()],
            vec![reverb(), noise()],
            vec![
                noise(),
                T::Clip {
                    threshold: Span(0.05, 0.3),
                },
            ],
            vec![
                reverb(),
                noise(),
                T::PacketLoss {
                    loss_rate: Span(0.02, 0.15),
                    burst_mean_packets: Span(1.0, 3.0),
                },
            ],
            vec![T::Codec {
                bandwidth_hz: Span(2000.0, 8000.0),
                bits: (6, 10),
            }],
            vec![
                T::GainReduce {
                    db: Span(-30.0, -10.0),
                },
                noise(),
            ],
        ];
        let w = 1.0 / chains.len() as f64;
        Self {
            candidates: chains
                .into_iter()
                .map(|stages| ChainCandidate { stages, weight: w })
                .collect(),
        }
    }
}

impl ChainGrammar {
    /// A single candidate chain with weight one.
    pub fn single(stages: Vec<StageTemplate>) -> Self {
        Self {
            candidates: vec![ChainCandidate {
                stages,
                weight: 1.0,
            }],
        }
    }

    /// White noise at an SNR drawn from `snr_db`.
    pub fn white_noise(snr_db: Span) -> Self {
        Self::single(vec![StageTemplate::Noise {
            noise_ids: vec!["white".into()],
            snr_db,
        }])
    }

    pub fn validate(&self, assets: Option<&AssetLibrary>) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::Empty("corruption grammar"));
        }
        let mut total = 0.0;
        for (i, c) in self.candidates.iter().enumerate() {
            let bad = |m: String| Err(Error::InvalidParam(format!("grammar candidate {i}: {m}")));
            if !(c.weight >= 0.0) {
                return bad(format!("negative weight {}", c.weight));
            }
            total += c.weight;
            if c.stages.len() > MAX_CHAIN_LEN {
                return bad(format!("{} stages exceed {MAX_CHAIN_LEN}", c.stages.len()));
            }
            for s in &c.stages {
                let spans: Vec<Span> = match s {
                    StageTemplate::Reverb { drr_db, .. } => vec![*drr_db],
                    StageTemplate::Noise { snr_db, .. } => vec![*snr_db],
                    StageTemplate::Clip { threshold } => vec![*threshold],
                    StageTemplate::GainReduce { db } => vec![*db],
                    StageTemplate::PacketLoss {
                        loss_rate,
                        burst_mean_packets,
                    } => vec![*loss_rate, *burst_mean_packets],
                    StageTemplate::Codec { bandwidth_hz, bits } => {
                        if bits.0 > bits.1 {
                            return bad("codec bit range reversed".into());
                        }
                        vec![*bandwidth_hz]
                    }
                };
                if spans.iter().any(|s| !s.valid()) {
                    return bad(format!("invalid range in {s:?}"));
                }
                if let Some(lib) = assets {
                    match s {
                        StageTemplate::Reverb { rir_ids, .. } => {
                            if rir_ids.is_empty() && lib.rirs.is_empty() {
                                return bad("reverb stage but no RIRs loaded".into());
                            }
                            for id in rir_ids {
                                lib.rir(id)?;
                            }
                        }
                        StageTemplate::Noise { noise_ids, .. } => {
                            if noise_ids.is_empty() && lib.noises.is_empty() {
                                return bad("noise stage but no noises loaded".into());
                            }
                            for id in noise_ids {
                                lib.noise(id)?;
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParam(format!(
                "grammar weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

fn pick<'a>(ids: &'a [String], all: &'a [String], rng: &mut impl Rng) -> Result<&'a String> {
    let pool = if ids.is_empty() { all } else { ids };
    if pool.is_empty() {
        return Err(Error::Empty("asset pool"));
    }
    Ok(&pool[rng.random_range(0..pool.len())])
}

/// Draws a chain: one candidate by weight, then every parameter uniformly.
pub fn sample_chain(grammar: &ChainGrammar, assets: &AssetLibrary, seed: u64) -> Result<CorruptionChain> {
    grammar.validate(Some(assets))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = &grammar.candidates[grammar.candidates.len() - 1];
    for c in &grammar.candidates {
        acc += c.weight;
        if u < acc {
            chosen = c;
            break;
        }
    }
    let noise_ids = assets.noise_ids();
    let rir_ids = assets.rir_ids();
    let stages = chosen
        .stages
        .iter()
        .map(|t| {
            Ok(match t {
                StageTemplate::Reverb { rir_ids: ids, drr_db } => CorruptionStage::Reverb {
                    rir_id: pick(ids, &rir_ids, &mut rng)?.clone(),
                    drr_db: drr_db.sample(&mut rng),
                },
                StageTemplate::Noise { noise_ids: ids, snr_db } => {
                    let id = pick(ids, &noise_ids, &mut rng)?.clone();
                    CorruptionStage::Noise {
                        stationary: assets.noise(&id)?.stationary,
                        noise_id: id,
                        snr_db: snr_db.sample(&mut rng),
                    }
                }
                StageTemplate::Clip { threshold } => CorruptionStage::Clip {
                    threshold: threshold.sample(&mut rng),
                },
                StageTemplate::GainReduce { db } => CorruptionStage::GainReduce {
                    db: db.sample(&mut rng),
                },
                StageTemplate::PacketLoss {
                    loss_rate,
                    burst_mean_packets,
                } => CorruptionStage::PacketLoss {
                    loss_rate: loss_rate.sample(&mut rng),
                    burst_mean_packets: burst_mean_packets.sample(&mut rng),
                },
                StageTemplate::Codec { bandwidth_hz, bits } => CorruptionStage::Codec {
                    bandwidth_hz: bandwidth_hz.sample(&mut rng),
                    bits: rng.random_range(bits.0..=bits.1),
                },
            })
        })
        .collect::<Result<_>>()?;
    Ok(CorruptionChain { stages })
}

/// Applies the stages in order. Randomness inside stages (noise excerpt
/// offset, packet losses) comes from a stream derived from `seed`.
pub fn apply_chain(
    x: &AudioBuffer,
    chain: &CorruptionChain,
    assets: &AssetLibrary,
    seed: u64,
) -> Result<AudioBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut y = x.clone();
    for stage in &chain.stages {
        y = match stage {
            CorruptionStage::Reverb { rir_id, drr_db } => {
                apply_reverb(&y, &with_drr(assets.rir(rir_id)?, *drr_db))?
            }
            CorruptionStage::Noise {
                noise_id, snr_db, ..
            } => {
                let noise = &assets.noise(noise_id)?.audio;
                let offset = if noise.is_empty() {
                    0
                } else {
                    rng.random_range(0..noise.len())
                };
                let mut rotated = noise.samples[offset..].to_vec();
                rotated.extend_from_slice(&noise.samples[..offset]);
                add_noise(&y, &AudioBuffer::new(rotated, noise.rate), *snr_db)?
            }
            CorruptionStage::Clip { threshold } => clip(&y, *threshold)?,
            CorruptionStage::GainReduce { db } => gain_reduce(&y, *db)?,
            CorruptionStage::PacketLoss {
                loss_rate,
                burst_mean_packets,
            } => packet_loss(&y, *loss_rate, *burst_mean_packets, &mut rng)?,
            CorruptionStage::Codec { bandwidth_hz, bits } => codec_sim(&y, *bandwidth_hz, *bits)?,
        };
    }
    Ok(y)
}
