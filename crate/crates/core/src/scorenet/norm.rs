//! Group normalization with statistics accumulated over past frames only.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const NORM_EPS: f64 = 1e-5;

/// Per (group, frame) statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub struct NormStats {
    pub groups: usize,
    pub mean: Vec<f64>,
    pub rstd: Vec<f64>,
    clamped: Vec<bool>,
}

/// `y = scale * (x - mean_t) / sqrt(var_t + eps) + shift` with group
/// statistics over all channels in the group, all bins and frames `<= t`.
pub fn cumulative_group_norm(
    x: &Tensor,
    scale: &Tensor,
    shift: &Tensor,
    groups: usize,
    eps: f64,
) -> Result<(Tensor, NormStats)> {
    let (c, t, f) = x.dims3();
    if groups == 0 || c % groups != 0 {
        return Err(Error::Shape(format!("{c} channels into {groups} groups")));
    }
    if scale.shape() != [c] || shift.shape() != [c] {
        return Err(Error::Shape(format!(
            "norm affine {:?}/{:?} for {c} channels",
            scale.shape(),
            shift.shape()
        )));
    }
    let cg = c / groups;
    let xd = x.data();
    let mut out = vec![0.0; xd.len()];
    let mut stats = NormStats {
        groups,
        mean: vec![0.0; groups * t],
        rstd: vec![0.0; groups * t],
        clamped: vec![false; groups * t],
    };
    for g in 0..groups {
        let (mut s1, mut s2) = (0.0, 0.0);
        for ti in 0..t {
            for ch in g * cg..(g + 1) * cg {
                for &v in &xd[(ch * t + ti) * f..(ch * t + ti + 1) * f] {
                    s1 += v;
                    s2 += v * v;
                }
            }
            let n = ((ti + 1) * cg * f) as f64;
            let mean = s1 / n;
            let raw = s2 / n - mean * mean;
            let rstd = 1.0 / (raw.max(0.0) + eps).sqrt();
            stats.mean[g * t + ti] = mean;
            stats.rstd[g * t + ti] = rstd;
            stats.clamped[g * t + ti] = raw < 0.0;
            for ch in g * cg..(g + 1) * cg {
                let (a, b) = (scale.data()[ch], shift.data()[ch]);
                let base = (ch * t + ti) * f;
                for k in base..base + f {
                    out[k] = a * (xd[k] - mean) * rstd + b;
                }
            }
        }
    }
    Ok((Tensor::from_vec(x.shape(), out), stats))
}

/// Gradients `(dx, dscale, dshift)`.
pub fn cumulative_group_norm_backward(
    x: &Tensor,
    scale: &Tensor,
    stats: &NormStats,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (c, t, f) = x.dims3();
    let groups = stats.groups;
    let cg = c / groups;
    let (xd, gd) = (x.data(), grad_out.data());
    let mut dx = vec![0.0; xd.len()];
    let mut dscale = vec![0.0; c];
    let mut dshift = vec![0.0; c];
    let mut d_s1 = vec![0.0; t];
    let mut d_s2 = vec![0.0; t];
    for g in 0..groups {
        for ti in 0..t {
            let mean = stats.mean[g * t + ti];
            let rstd = stats.rstd[g * t + ti];
            let (mut sum_dh, mut sum_dh_xc) = (0.0, 0.0);
            for ch in g * cg..(g + 1) * cg {
                let a = scale.data()[ch];
                let base = (ch * t + ti) * f;
                for k in base..base + f {
                    let xc = xd[k] - mean;
                    dshift[ch] += gd[k];
                    dscale[ch] += gd[k] * xc * rstd;
                    let dh = gd[k] * a;
                    sum_dh += dh;
                    sum_dh_xc += dh * xc;
                    dx[k] = dh * rstd;
                }
            }
            let n = ((ti + 1) * cg * f) as f64;
            let d_var = if stats.clamped[g * t + ti] {
                0.0
            } else {
                -0.5 * rstd.powi(3) * sum_dh_xc
            };
            let d_mean = -rstd * sum_dh - 2.0 * mean * d_var;
            d_s1[ti] = d_mean / n;
            d_s2[ti] = d_var / n;
        }
        // frame t feeds every statistic at frames >= t
        let (mut r1, mut r2) = (0.0, 0.0);
        for ti in (0..t).rev() {
            r1 += d_s1[ti];
            r2 += d_s2[ti];
            for ch in g * cg..(g + 1) * cg {
                let base = (ch * t + ti) * f;
                for k in base..base + f {
                    dx[k] += r1 + 2.0 * xd[k] * r2;
                }
            }
        }
    }
    (
        Tensor::from_vec(x.shape(), dx),
        Tensor::from_vec(&[c], dscale),
        Tensor::from_vec(&[c], dshift),
    )
}
