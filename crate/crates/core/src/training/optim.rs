use serde::{Deserialize, Serialize};

use crate::scorenet::{ParamTensors, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, zero-initialized per tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamMoments {
    pub m: ParamTensors,
    pub v: ParamTensors,
}

/// Bias-corrected Adam update for step `step` (1-based). Tensors without a
/// gradient entry are left alone.
pub fn adam_step(
    params: &mut ParamTensors,
    grads: &ParamTensors,
    moments: &mut AdamMoments,
    step: u64,
    cfg: &AdamConfig,
) {
    assert!(step >= 1, "adam steps are 1-based");
    let c1 = 1.0 - cfg.beta1.powf(step as f64);
    let c2 = 1.0 - cfg.beta2.powf(step as f64);
    for (name, g) in grads {
        let p = params.get_mut(name).expect("gradient for unknown parameter");
        assert_eq!(p.shape(), g.shape(), "{name}");
        let m = moments
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        let v = moments
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
}

/// `ema <- decay * ema + (1 - decay) * params`.
pub fn ema_update(ema: &mut ParamTensors, params: &ParamTensors, decay: f64) {
    for (name, p) in params {
        let e = ema.get_mut(name).expect("ema shadow for every parameter");
        for (e, &p) in e.data_mut().iter_mut().zip(p.data()) {
            *e = decay * *e + (1.0 - decay) * p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> ParamTensors {
        let mut p = ParamTensors::new();
        p.insert("w".into(), Tensor::from_vec(&[1], vec![v]));
        p
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = single(0.7);
        let mut m = AdamMoments::default();
        for k in 1..5 {
            adam_step(&mut p, &single(0.0), &mut m, k, &AdamConfig::default());
        }
        assert_eq!(p["w"].data()[0], 0.7);
    }

    #[test]
    fn first_step_formula() {
        let cfg = AdamConfig::default();
        let g = 0.02;
        let mut p = single(1.0);
        adam_step(&mut p, &single(g), &mut AdamMoments::default(), 1, &cfg);
        // bias correction makes mhat = g and vhat = g^2
        let want = 1.0 - cfg.lr * g / (g.abs() + cfg.eps);
        assert!((p["w"].data()[0] - want).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let cfg = AdamConfig::default();
        let mut p = single(0.0);
        let mut m = AdamMoments::default();
        let mut last = 0.0;
        for k in 1..=5000 {
            let before = p["w"].data()[0];
            adam_step(&mut p, &single(3.0), &mut m, k, &cfg);
            last = (p["w"].data()[0] - before).abs();
        }
        assert!((last - cfg.lr).abs() / cfg.lr < 0.01);
    }

    #[test]
    fn ema_geometric_series() {
        let p = single(2.0);
        let mut e = single(0.0);
        for _ in 0..50 {
            ema_update(&mut e, &p, 0.999);
        }
        let want = 2.0 * (1.0 - 0.999f64.powi(50));
        assert!((e["w"].data()[0] - want).abs() < 1e-12);
        let mut e = single(5.0);
        ema_update(&mut e, &p, 0.0);
        assert_eq!(e["w"].data()[0], 2.0);
        let mut e = p.clone();
        ema_update(&mut e, &p, 0.9);
        assert_eq!(e, p);
    }
}
