use super::{perturbation_mean, ScoreModel, SdeParams};
use crate::error::Result;
use crate::stft::Spectrogram;

/// Exact score when the clean data is a point mass at `x0`:
/// `x_t ~ N(mu(t), sigma(t)^2)` so `score = -(x - mu(t)) / sigma(t)^2`.
#[derive(Debug, Clone)]
pub struct GaussianPointMass {
    pub x0: Spectrogram,
    pub params: SdeParams,
}

impl ScoreModel for GaussianPointMass {
    fn score(&self, x_t: &Spectrogram, y: &Spectrogram, t: f64) -> Result<Spectrogram> {
        let mu = perturbation_mean(&self.x0, y, t, &self.params)?;
        let var = self.params.std(t).powi(2);
        let mut out = x_t.clone();
        for (o, m) in out.data.iter_mut().zip(&mu.data) {
            *o = -(*o - m) / var;
        }
        Ok(out)
    }
}
