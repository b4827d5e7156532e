use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreNetConfig {
    pub base_channels: usize,
    /// One entry per resolution level.
    pub channel_multipliers: Vec<usize>,
    pub resblocks_per_resolution: usize,
    pub time_kernel: usize,
    pub freq_kernel: usize,
    pub groups: usize,
    pub embed_dim: usize,
    /// Standard deviation of the random Fourier frequencies.
    pub fourier_scale: f64,
    /// Left-only time padding. `false` exists for negative controls.
    pub causal: bool,
    /// Variance of `x0 - y` assumed by the analytic prior score added to the
    /// network output; `None` leaves the network alone.
    pub prior_var: Option<f64>,
}

impl Default for ScoreNetConfig {
    fn default() -> Self {
        Self {
            base_channels: 16,
            channel_multipliers: vec![1, 2, 2],
            resblocks_per_resolution: 1,
            time_kernel: 3,
            freq_kernel: 3,
            groups: 4,
            embed_dim: 32,
            fourier_scale: 16.0,
            causal: true,
            prior_var: Some(0.01),
        }
    }
}

impl ScoreNetConfig {
    pub fn levels(&self) -> usize {
        self.channel_multipliers.len()
    }

    /// Bin counts must survive `levels - 1` halvings.
    pub fn supports_bins(&self, bins: usize) -> bool {
        let div = 1usize << self.levels().saturating_sub(1);
        bins >= 2 * div && bins % div == 0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("net: {m}")));
        if self.base_channels == 0 || self.levels() == 0 {
            return bad("base_channels and channel_multipliers must be non-empty".into());
        }
        if self.channel_multipliers.contains(&0) {
            return bad("channel multipliers must be positive".into());
        }
        if self.time_kernel == 0 || self.freq_kernel % 2 == 0 {
            return bad(format!(
                "kernel {}x{}: time >= 1, frequency odd",
                self.time_kernel, self.freq_kernel
            ));
        }
        if self.groups == 0 {
            return bad("groups must be positive".into());
        }
        if self.embed_dim < 2 || self.embed_dim % 2 != 0 {
            return bad(format!("embed_dim {} must be even", self.embed_dim));
        }
        if !(self.fourier_scale.is_finite() && self.fourier_scale > 0.0) {
            return bad("fourier_scale must be positive".into());
        }
        if let Some(v) = self.prior_var {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("prior_var {v} must be finite and nonnegative"));
            }
        }
        if !self.supports_bins(320) {
            return bad(format!("320 bins not divisible by 2^{}", self.levels() - 1));
        }
        Ok(())
    }

    /// Short hex digest of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
