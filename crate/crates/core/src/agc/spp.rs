use super::AgcConfig;
use crate::stft::ZEROED_LOW_BINS;

pub const PSD_FLOOR: f64 = 1e-10;
const STAGNATION_LIMIT: f64 = 0.99;
const STAGNATION_SMOOTHING: f64 = 0.9;

/// `P(H1 | Y)` under a fixed a-priori SNR `xi` at a-posteriori SNR `gamma`.
pub fn posterior_h1(gamma: f64, xi: f64) -> f64 {
    1.0 / (1.0 + (1.0 + xi) * (-gamma * xi / (1.0 + xi)).exp())
}

/// Recursive noise PSD tracker driven by the speech presence posterior.
#[derive(Debug, Clone)]
pub struct NoiseTracker {
    pub psd: Vec<f64>,
    spp_mean: Vec<f64>,
    init_sum: Vec<f64>,
    init_seen: usize,
    init_frames: usize,
    alpha: f64,
    xi: f64,
}

impl NoiseTracker {
    pub fn new(bins: usize, config: &AgcConfig) -> Self {
        Self {
            psd: vec![PSD_FLOOR; bins],
            spp_mean: vec![0.0; bins],
            init_sum: vec![0.0; bins],
            init_seen: 0,
            init_frames: config.noise_init_frames,
            alpha: config.psd_alpha,
            xi: config.xi_h1(),
        }
    }

    pub fn initialized(&self) -> bool {
        self.init_seen >= self.init_frames
    }

    /// Replaces the PSD directly and marks initialisation complete.
    pub fn set_psd(&mut self, psd: Vec<f64>) {
        self.psd = psd.into_iter().map(|v| v.max(PSD_FLOOR)).collect();
        self.init_seen = self.init_frames;
    }

    /// Per-bin posteriors for a magnitude frame without updating state.
    pub fn posteriors(&self, magnitudes: &[f64]) -> Vec<f64> {
        magnitudes
            .iter()
            .zip(&self.psd)
            .map(|(m, psd)| posterior_h1(m * m / psd.max(PSD_FLOOR), self.xi))
            .collect()
    }

    /// Consumes one frame and returns its speech presence probability (mean
    /// over bins above the zeroed band). During initialisation frames are
    /// taken as speech absent and 0 is returned.
    pub fn observe(&mut self, magnitudes: &[f64]) -> f64 {
        if !self.initialized() {
            for (acc, m) in self.init_sum.iter_mut().zip(magnitudes) {
                *acc += m * m;
            }
            self.init_seen += 1;
            if self.initialized() {
                let n = self.init_seen as f64;
                self.psd = self
                    .init_sum
                    .iter()
                    .map(|s| (s / n).max(PSD_FLOOR))
                    .collect();
            }
            return 0.0;
        }
        let mut p = self.posteriors(magnitudes);
        for ((pk, mean), (psd, m)) in p
            .iter_mut()
            .zip(self.spp_mean.iter_mut())
            .zip(self.psd.iter_mut().zip(magnitudes))
        {
            *mean = STAGNATION_SMOOTHING * *mean + (1.0 - STAGNATION_SMOOTHING) * *pk;
            if *mean > STAGNATION_LIMIT {
                *pk = pk.min(STAGNATION_LIMIT);
            }
            let periodogram = m * m;
            let estimate = (1.0 - *pk) * periodogram + *pk * *psd;
            *psd = (self.alpha * *psd + (1.0 - self.alpha) * estimate).max(PSD_FLOOR);
        }
        let band = &p[ZEROED_LOW_BINS.min(p.len())..];
        if band.is_empty() {
            return 0.0;
        }
        band.iter().sum::<f64>() / band.len() as f64
    }
}
