//! Drift–diffusion process between clean and corrupted spectrograms.
//!
//! Forward SDE: `dx = gamma (y - x) dt + g(t) dw` with the variance-exploding
//! diffusion `g(t) = sigma_min (sigma_max/sigma_min)^t sqrt(2 ln(sigma_max/sigma_min))`.
//! Its perturbation kernel is Gaussian with closed-form mean and variance.
//! Each time-frequency bin evolves independently.

mod oracle;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use oracle::GaussianPointMass;

use crate::error::{Error, Result};
use crate::stft::{Complex64, Spectrogram};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeParams {
    pub gamma: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub t_horizon: f64,
    pub t_eps: f64,
    pub n_steps: usize,
    pub corrector_snr: f64,
    pub corrector_steps: usize,
}

impl Default for SdeParams {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            sigma_min: 0.05,
            sigma_max: 0.5,
            t_horizon: 1.0,
            t_eps: 0.03,
            n_steps: 30,
            corrector_snr: 0.5,
            corrector_steps: 1,
        }
    }
}

impl SdeParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(format!("sde: {m}")));
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max) {
            return bad("need 0 < sigma_min < sigma_max");
        }
        if !(self.gamma > 0.0) {
            return bad("gamma must be positive");
        }
        if !(self.t_eps > 0.0 && self.t_eps < self.t_horizon) {
            return bad("need 0 < t_eps < T");
        }
        if !(self.corrector_snr > 0.0) {
            return bad("corrector snr must be positive");
        }
        Ok(())
    }

    fn log_ratio(&self) -> f64 {
        (self.sigma_max / self.sigma_min).ln()
    }

    /// `exp(-gamma t)`, the weight of the clean spectrogram in the mean.
    pub fn mean_weight(&self, t: f64) -> f64 {
        (-self.gamma * t).exp()
    }

    pub fn std(&self, t: f64) -> f64 {
        let lr = self.log_ratio();
        let var = self.sigma_min.powi(2)
            * ((self.sigma_max / self.sigma_min).powf(2.0 * t) - (-2.0 * self.gamma * t).exp())
            * lr
            / (self.gamma + lr);
        var.max(0.0).sqrt()
    }

    pub fn diffusion(&self, t: f64) -> f64 {
        self.sigma_min * (self.sigma_max / self.sigma_min).powf(t) * (2.0 * self.log_ratio()).sqrt()
    }
}

/// Circularly symmetric complex normal with `E|z|^2 = 1`.
pub fn complex_normal(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_noise_like(like: &Spectrogram, rng: &mut impl Rng) -> Spectrogram {
    let mut z = like.clone();
    z.data.iter_mut().for_each(|v| *v = complex_normal(rng));
    z
}

fn check_shape(a: &Spectrogram, b: &Spectrogram, what: &str) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `mu(t) = e^{-gamma t} x0 + (1 - e^{-gamma t}) y`.
pub fn perturbation_mean(
    x0: &Spectrogram,
    y: &Spectrogram,
    t: f64,
    params: &SdeParams,
) -> Result<Spectrogram> {
    check_shape(x0, y, "perturbation mean")?;
    let w = params.mean_weight(t);
    let mut out = x0.clone();
    for (o, yv) in out.data.iter_mut().zip(&y.data) {
        *o = *o * w + yv * (1.0 - w);
    }
    Ok(out)
}

pub fn perturbation_std(t: f64, params: &SdeParams) -> f64 {
    params.std(t)
}

pub fn diffusion_coefficient(t: f64, params: &SdeParams) -> f64 {
    params.diffusion(t)
}

/// Draws `x_t = mu(t) + sigma(t) z`; returns `(x_t, z)`.
pub fn sample_forward(
    x0: &Spectrogram,
    y: &Spectrogram,
    t: f64,
    params: &SdeParams,
    rng: &mut impl Rng,
) -> Result<(Spectrogram, Spectrogram)> {
    let mut xt = perturbation_mean(x0, y, t, params)?;
    let z = complex_noise_like(x0, rng);
    let s = params.std(t);
    for (x, zv) in xt.data.iter_mut().zip(&z.data) {
        *x += zv * s;
    }
    Ok((xt, z))
}

/// Anything that estimates the score of `x_t` given the conditioner `y`.
pub trait ScoreModel {
    fn score(&self, x_t: &Spectrogram, y: &Spectrogram, t: f64) -> Result<Spectrogram>;
}

impl<F> ScoreModel for F
where
    F: Fn(&Spectrogram, &Spectrogram, f64) -> Result<Spectrogram>,
{
    fn score(&self, x_t: &Spectrogram, y: &Spectrogram, t: f64) -> Result<Spectrogram> {
        self(x_t, y, t)
    }
}

fn check_finite(s: &Spectrogram, t: f64) -> Result<()> {
    if let Some(i) = s.data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite(format!(
            "score at t={t:.4}: bin {} of frame {}",
            i % s.bins,
            i / s.bins
        )));
    }
    Ok(())
}

/// Euler–Maruyama step of the reverse SDE with explicit noise `z`:
/// `x - [gamma (y - x) - g^2 s] dt + g sqrt(dt) z`.
pub fn predictor_update(
    x: &Spectrogram,
    y: &Spectrogram,
    score: &Spectrogram,
    z: &Spectrogram,
    t: f64,
    dt: f64,
    params: &SdeParams,
) -> Result<Spectrogram> {
    check_shape(x, y, "predictor")?;
    check_shape(x, score, "predictor score")?;
    check_finite(score, t)?;
    let g = params.diffusion(t);
    let g2 = g * g;
    let noise = g * dt.sqrt();
    let mut out = x.clone();
    for (((o, yv), s), zv) in out.data.iter_mut().zip(&y.data).zip(&score.data).zip(&z.data) {
        let drift = (yv - *o) * params.gamma - s * g2;
        *o = *o - drift * dt + zv * noise;
    }
    Ok(out)
}

pub fn reverse_predictor_step(
    x: &Spectrogram,
    y: &Spectrogram,
    t: f64,
    dt: f64,
    model: &impl ScoreModel,
    params: &SdeParams,
    rng: &mut impl Rng,
) -> Result<Spectrogram> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParam("predictor step needs dt > 0".into()));
    }
    let score = model.score(x, y, t)?;
    let z = complex_noise_like(x, rng);
    predictor_update(x, y, &score, &z, t, dt, params)
}

fn norm(s: &Spectrogram) -> f64 {
    s.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Langevin step size `2 (r ||z|| / ||s||)^2`; `None` when the score is zero.
pub fn langevin_step_size(score: &Spectrogram, z: &Spectrogram, snr: f64) -> Option<f64> {
    let s = norm(score);
    if s == 0.0 {
        return None;
    }
    Some(2.0 * (snr * norm(z) / s).powi(2))
}

/// Annealed Langevin corrector `x + eps s + sqrt(2 eps) z`.
pub fn corrector_step(
    x: &Spectrogram,
    y: &Spectrogram,
    t: f64,
    model: &impl ScoreModel,
    snr: f64,
    rng: &mut impl Rng,
) -> Result<Spectrogram> {
    if !(snr > 0.0) {
        return Err(Error::InvalidParam("corrector snr must be positive".into()));
    }
    let score = model.score(x, y, t)?;
    check_shape(x, &score, "corrector score")?;
    check_finite(&score, t)?;
    let z = complex_noise_like(x, rng);
    let Some(eps) = langevin_step_size(&score, &z, snr) else {
        return Ok(x.clone());
    };
    let noise = (2.0 * eps).sqrt();
    let mut out = x.clone();
    for ((o, s), zv) in out.data.iter_mut().zip(&score.data).zip(&z.data) {
        *o += s * eps + zv * noise;
    }
    Ok(out)
}

/// Reverse-time predictor–corrector sampling from `x_T = y + sigma(T) z`
/// down to `t_eps` on a uniform grid.
pub fn enhance_spectrogram(
    y: &Spectrogram,
    model: &impl ScoreModel,
    params: &SdeParams,
    rng: &mut impl Rng,
) -> Result<Spectrogram> {
    params.validate()?;
    let sigma_t = params.std(params.t_horizon);
    let mut x = y.clone();
    for v in x.data.iter_mut() {
        *v += complex_normal(rng) * sigma_t;
    }
    if params.n_steps == 0 {
        return Ok(x);
    }
    let dt = (params.t_horizon - params.t_eps) / params.n_steps as f64;
    for i in 0..params.n_steps {
        let t = params.t_horizon - i as f64 * dt;
        x = reverse_predictor_step(&x, y, t, dt, model, params, rng)?;
        let t_next = if i + 1 == params.n_steps {
            params.t_eps
        } else {
            t - dt
        };
        for _ in 0..params.corrector_steps {
            x = corrector_step(&x, y, t_next, model, params.corrector_snr, rng)?;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::FrameSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn filled(frames: usize, v: Complex64) -> Spectrogram {
        let mut s = Spectrogram::zeros(frames, FrameSpec::default());
        s.data.iter_mut().for_each(|z| *z = v);
        s
    }

    #[test]
    fn mean_endpoints() {
        let p = SdeParams::default();
        let x0 = filled(1, Complex64::new(1.0, -1.0));
        let y = filled(1, Complex64::new(0.2, 0.5));
        assert_eq!(perturbation_mean(&x0, &y, 0.0, &p).unwrap(), x0);
        let far = perturbation_mean(&x0, &y, 50.0, &p).unwrap();
        assert!((far.data[0] - y.data[0]).norm() < 1e-12);
        let m = perturbation_mean(&x0, &y, 1.0, &p).unwrap();
        let expect = x0.data[0] * 0.223_130_160_148_429_8 + y.data[0] * 0.776_869_839_851_570_2;
        assert!((m.data[0] - expect).norm() < 1e-12);
        assert!(perturbation_mean(&x0, &filled(2, y.data[0]), 0.5, &p).is_err());
    }

    #[test]
    fn std_values() {
        let p = SdeParams::default();
        assert_eq!(p.std(0.0), 0.0);
        let mut prev = 0.0;
        for i in 1..=1000 {
            let s = p.std(i as f64 / 1000.0);
            assert!(s > prev);
            prev = s;
        }
        assert!((p.std(1.0) - 0.389).abs() < 1e-3, "{}", p.std(1.0));
    }

    #[test]
    fn diffusion_values() {
        let p = SdeParams::default();
        assert!((p.diffusion(0.0) - 0.05 * (2.0 * 10f64.ln()).sqrt()).abs() < 1e-15);
        assert!((p.diffusion(0.0) - 0.1073).abs() < 1e-4);
        assert!((p.diffusion(1.0) / p.diffusion(0.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn forward_at_zero_is_clean() {
        let p = SdeParams::default();
        let x0 = filled(2, Complex64::new(0.3, 0.1));
        let y = filled(2, Complex64::new(-0.3, 0.4));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (xt, _) = sample_forward(&x0, &y, 0.0, &p, &mut rng).unwrap();
        assert_eq!(xt, x0);
    }

    #[test]
    fn zero_score_zero_noise_step() {
        let p = SdeParams::default();
        let x = filled(1, Complex64::new(0.0, 0.0));
        let y = filled(1, Complex64::new(1.0, 0.0));
        let zero = filled(1, Complex64::new(0.0, 0.0));
        let out = predictor_update(&x, &y, &zero, &zero, 0.5, 0.1, &p).unwrap();
        // reversed drift pushes away from y
        assert!((out.data[0].re + 0.15).abs() < 1e-12);
    }

    #[test]
    fn nonfinite_score_aborts() {
        let p = SdeParams::default();
        let x = filled(1, Complex64::new(0.0, 0.0));
        let bad = filled(1, Complex64::new(f64::NAN, 0.0));
        let err = predictor_update(&x, &x, &bad, &x, 0.5, 0.1, &p).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn corrector_guard_and_step_scaling() {
        let x = filled(1, Complex64::new(0.4, 0.0));
        let zero_model = |x: &Spectrogram, _: &Spectrogram, _: f64| Ok(filled(x.frames, Complex64::default()));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(corrector_step(&x, &x, 0.5, &zero_model, 0.5, &mut rng).unwrap(), x);
        let s = filled(1, Complex64::new(0.7, 0.2));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = complex_noise_like(&x, &mut rng);
        let e1 = langevin_step_size(&s, &z, 0.5).unwrap();
        let e2 = langevin_step_size(&s, &z, 1.0).unwrap();
        assert!((e2 / e1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_steps_returns_initialisation() {
        let p = SdeParams {
            n_steps: 0,
            ..Default::default()
        };
        let y = filled(2, Complex64::new(0.5, 0.5));
        let model = |x: &Spectrogram, _: &Spectrogram, _: f64| Ok(x.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = enhance_spectrogram(&y, &model, &p, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma = p.std(1.0);
        for (o, yv) in out.data.iter().zip(&y.data) {
            assert_eq!(*o, yv + complex_normal(&mut rng) * sigma);
        }
    }

    #[test]
    fn invalid_params() {
        let p = SdeParams {
            sigma_min: 0.6,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = SdeParams {
            t_eps: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
