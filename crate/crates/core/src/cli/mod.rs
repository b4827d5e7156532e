//! Command implementations behind the `sse` binary.

mod commands;
mod metrics;
mod pipeline;
mod selfcheck;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agc::AgcConfig;
use crate::corruption::{AssetLibrary, ChainGrammar};
use crate::diffusion::SdeParams;
use crate::error::{Error, Result};
use crate::scorenet::ScoreNetConfig;
use crate::stft::FrameSpec;
use crate::training::TrainConfig;

pub use commands::{
    cmd_corrupt, cmd_enhance, cmd_eval, cmd_train, format_report, CorruptOutcome, EvalRow,
};
pub use metrics::{log_spectral_distance, si_sdr, SI_SDR_CAP_DB};
pub use pipeline::{enhance_audio, Enhancer};
pub use selfcheck::{
    causality_probe, cmd_selfcheck, front_end, latency_check, jittered_params, probe_signal, CheckResult, ProbeOutcome,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    pub grammar: ChainGrammar,
    /// Newline-separated noise WAV paths; synthetic assets when both are absent.
    pub noise_manifest: Option<PathBuf>,
    pub rir_manifest: Option<PathBuf>,
    pub synthetic_seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            grammar: ChainGrammar::default(),
            noise_manifest: None,
            rir_manifest: None,
            synthetic_seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn assets(&self, rate: u32) -> Result<AssetLibrary> {
        if self.noise_manifest.is_none() && self.rir_manifest.is_none() {
            return Ok(AssetLibrary::synthetic(rate, self.synthetic_seed));
        }
        AssetLibrary::from_manifests(self.noise_manifest.as_deref(), self.rir_manifest.as_deref())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub frame: FrameSpec,
}

/// Whole-run configuration; every section is optional in the JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub agc: AgcConfig,
    pub sde: SdeParams,
    pub net: ScoreNetConfig,
    pub train: TrainConfig,
    pub corruption: CorruptionConfig,
    pub io: IoConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.io.frame.validate()?;
        self.agc.validate()?;
        self.sde.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        self.corruption.grammar.validate(None)?;
        if !self.net.supports_bins(self.io.frame.bins()) {
            return Err(Error::Config(format!(
                "net cannot resample {} frequency bins",
                self.io.frame.bins()
            )));
        }
        Ok(())
    }

    pub fn log_effective(&self) {
        log::info!("effective config {}", self.to_json());
    }
}

/// 1 for bad input, 2 for failed checks or processing.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. }
        | Error::WavHeader { .. }
        | Error::WavFormat { .. }
        | Error::UnsupportedRatio { .. }
        | Error::InvalidParam(_)
        | Error::UnknownAsset(_)
        | Error::Empty(_)
        | Error::Checkpoint(_)
        | Error::Config(_) => 1,
        Error::Shape(_) | Error::Latency { .. } | Error::NonFinite(_) | Error::Check(_) => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"gpu": true}"#).is_err());
        assert!(RunConfig::from_json(r#"{"sde": {"gama": 1.0}}"#).is_err());
    }

    #[test]
    fn partial_sections_override() {
        let c = RunConfig::from_json(r#"{"io": {"frame": {"window_len": 700}}, "net": {"causal": false}}"#)
            .unwrap();
        assert_eq!(c.io.frame.window_len, 700);
        assert_eq!(c.io.frame.hop, 160);
        assert!(!c.net.causal);
        assert!(matches!(c.validate(), Err(Error::Latency { .. })));
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
