//! 2D convolutions over `[C, T, F]` feature maps.
//!
//! The time axis is padded on the left only, so output frame `t` of a
//! stride-`s` convolution reads input frames `s*t - (kt-1) ..= s*t`.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Geometry of a 2D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride_t: usize,
    pub stride_f: usize,
    /// Left-only time padding when true, symmetric otherwise.
    pub causal: bool,
}

impl ConvGeom {
    pub const CAUSAL: ConvGeom = ConvGeom {
        stride_t: 1,
        stride_f: 1,
        causal: true,
    };

    fn pad_t(&self, kt: usize) -> usize {
        if self.causal {
            kt - 1
        } else {
            (kt - 1) / 2
        }
    }
}

/// `C[m x n] = op(A)[m x k] * op(B)[k x n] + beta * C`, all row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds checked above; strides describe the stated layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct Plan {
    ci: usize,
    t: usize,
    f: usize,
    kt: usize,
    kf: usize,
    to: usize,
    fo: usize,
    pad_t: usize,
    pad_f: usize,
    geom: ConvGeom,
}

impl Plan {
    fn new(x: &[usize], w: &[usize], geom: ConvGeom) -> Result<(Plan, usize)> {
        if x.len() != 3 || w.len() != 4 {
            return Err(Error::Shape(format!("conv input {x:?} kernel {w:?}")));
        }
        let (ci, t, f) = (x[0], x[1], x[2]);
        let (co, wci, kt, kf) = (w[0], w[1], w[2], w[3]);
        if wci != ci {
            return Err(Error::Shape(format!(
                "kernel expects {wci} input channels, got {ci}"
            )));
        }
        if kt == 0 || kf == 0 || kf % 2 == 0 {
            return Err(Error::Shape(format!("kernel size {kt}x{kf}")));
        }
        if geom.stride_t == 0 || geom.stride_f == 0 {
            return Err(Error::Shape("zero stride".into()));
        }
        let plan = Plan {
            ci,
            t,
            f,
            kt,
            kf,
            to: t.div_ceil(geom.stride_t),
            fo: f.div_ceil(geom.stride_f),
            pad_t: geom.pad_t(kt),
            pad_f: (kf - 1) / 2,
            geom,
        };
        Ok((plan, co))
    }

    fn rows(&self) -> usize {
        self.ci * self.kt * self.kf
    }

    fn cols(&self) -> usize {
        self.to * self.fo
    }

    /// Visits every (row, column) of the patch matrix that maps to a real
    /// input element, passing the flat input index.
    fn for_each_tap(&self, mut visit: impl FnMut(usize, usize, usize)) {
        let (st, sf) = (self.geom.stride_t, self.geom.stride_f);
        for c in 0..self.ci {
            for i in 0..self.kt {
                for j in 0..self.kf {
                    let row = (c * self.kt + i) * self.kf + j;
                    for ot in 0..self.to {
                        let Some(ti) = (ot * st + i).checked_sub(self.pad_t) else {
                            continue;
                        };
                        if ti >= self.t {
                            continue;
                        }
                        let base = (c * self.t + ti) * self.f;
                        for of in 0..self.fo {
                            let Some(fi) = (of * sf + j).checked_sub(self.pad_f) else {
                                continue;
                            };
                            if fi >= self.f {
                                continue;
                            }
                            visit(row, ot * self.fo + of, base + fi);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let n = self.cols();
        let mut cols = vec![0.0; self.rows() * n];
        self.for_each_tap(|r, c, xi| cols[r * n + c] = x[xi]);
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let n = self.cols();
        let mut x = vec![0.0; self.ci * self.t * self.f];
        self.for_each_tap(|r, c, xi| x[xi] += cols[r * n + c]);
        x
    }
}

/// Convolution of `x: [Ci, T, F]` with `w: [Co, Ci, kt, kf]` plus bias `[Co]`.
pub fn causal_conv2d(x: &Tensor, w: &Tensor, bias: &Tensor, geom: ConvGeom) -> Result<Tensor> {
    let (plan, co) = Plan::new(x.shape(), w.shape(), geom)?;
    if bias.shape() != [co] {
        return Err(Error::Shape(format!("bias {:?} for {co} outputs", bias.shape())));
    }
    let cols = plan.im2col(x.data());
    let n = plan.cols();
    let mut out = vec![0.0; co * n];
    for (o, chunk) in out.chunks_mut(n).enumerate() {
        chunk.fill(bias.data()[o]);
    }
    gemm(co, plan.rows(), n, w.data(), false, &cols, false, 1.0, &mut out);
    Ok(Tensor::from_vec(&[co, plan.to, plan.fo], out))
}

/// Gradients `(dx, dw, dbias)` of [`causal_conv2d`].
pub fn causal_conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    grad_out: &Tensor,
    geom: ConvGeom,
) -> (Tensor, Tensor, Tensor) {
    let (plan, co) = Plan::new(x.shape(), w.shape(), geom).expect("validated in forward");
    let n = plan.cols();
    let k = plan.rows();
    let g = grad_out.data();
    let cols = plan.im2col(x.data());
    let mut dw = vec![0.0; co * k];
    gemm(co, n, k, g, false, &cols, true, 0.0, &mut dw);
    let mut dcols = vec![0.0; k * n];
    gemm(k, co, n, w.data(), true, g, false, 0.0, &mut dcols);
    let dx = plan.col2im(&dcols);
    let db: Vec<f64> = g.chunks(n).map(|c| c.iter().sum()).collect();
    (
        Tensor::from_vec(x.shape(), dx),
        Tensor::from_vec(w.shape(), dw),
        Tensor::from_vec(&[co], db),
    )
}

/// Transposed stride-`s` convolution along time, stride 1 along frequency.
///
/// `w: [Co, Ci, kt, kf]`; input frame `m` contributes to output frames
/// `s*m .. s*m + kt`, and the output keeps the first `s*M` frames.
pub fn time_conv_transpose(x: &Tensor, w: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let (plan, wk, co) = TransposePlan::new(x.shape(), w.shape(), stride)?;
    if bias.shape() != [co] {
        return Err(Error::Shape(format!("bias {:?} for {co} outputs", bias.shape())));
    }
    let cols = plan.im2col(x.data());
    let wp = plan.permute(w.data());
    let n = plan.t * plan.f;
    let mut z = vec![0.0; co * plan.kt * n];
    gemm(co * plan.kt, wk, n, &wp, false, &cols, false, 0.0, &mut z);
    let to = stride * plan.t;
    let mut out = vec![0.0; co * to * plan.f];
    for o in 0..co {
        out[o * to * plan.f..(o + 1) * to * plan.f].fill(bias.data()[o]);
    }
    plan.scatter(co, stride, |oi, zi| out[oi] += z[zi]);
    Ok(Tensor::from_vec(&[co, to, plan.f], out))
}

/// Gradients `(dx, dw, dbias)` of [`time_conv_transpose`].
pub fn time_conv_transpose_backward(
    x: &Tensor,
    w: &Tensor,
    grad_out: &Tensor,
    stride: usize,
) -> (Tensor, Tensor, Tensor) {
    let (plan, wk, co) = TransposePlan::new(x.shape(), w.shape(), stride).expect("validated");
    let n = plan.t * plan.f;
    let g = grad_out.data();
    let mut dz = vec![0.0; co * plan.kt * n];
    plan.scatter(co, stride, |oi, zi| dz[zi] = g[oi]);
    let cols = plan.im2col(x.data());
    let wp = plan.permute(w.data());
    let mut dwp = vec![0.0; co * plan.kt * wk];
    gemm(co * plan.kt, n, wk, &dz, false, &cols, true, 0.0, &mut dwp);
    let mut dcols = vec![0.0; wk * n];
    gemm(wk, co * plan.kt, n, &wp, true, &dz, false, 0.0, &mut dcols);
    let dx = plan.col2im(&dcols);
    let dw = plan.unpermute(&dwp, co);
    let to = stride * plan.t;
    let db: Vec<f64> = g.chunks(to * plan.f).map(|c| c.iter().sum()).collect();
    (
        Tensor::from_vec(x.shape(), dx),
        Tensor::from_vec(w.shape(), dw),
        Tensor::from_vec(&[co], db),
    )
}

/// Frequency-only patch layout for the transposed time convolution.
struct TransposePlan {
    ci: usize,
    t: usize,
    f: usize,
    kt: usize,
    kf: usize,
}

impl TransposePlan {
    fn new(x: &[usize], w: &[usize], stride: usize) -> Result<(Self, usize, usize)> {
        if x.len() != 3 || w.len() != 4 || w[1] != x[0] {
            return Err(Error::Shape(format!("transpose input {x:?} kernel {w:?}")));
        }
        if stride == 0 || w[2] == 0 || w[3] % 2 == 0 {
            return Err(Error::Shape(format!("transpose kernel {w:?} stride {stride}")));
        }
        let plan = Self {
            ci: x[0],
            t: x[1],
            f: x[2],
            kt: w[2],
            kf: w[3],
        };
        Ok((plan, x[0] * w[3], w[0]))
    }

    fn for_each_tap(&self, mut visit: impl FnMut(usize, usize, usize)) {
        let pad = (self.kf - 1) / 2;
        let n = self.t * self.f;
        for c in 0..self.ci {
            for j in 0..self.kf {
                let row = c * self.kf + j;
                for m in 0..self.t {
                    for of in 0..self.f {
                        let Some(fi) = (of + j).checked_sub(pad) else {
                            continue;
                        };
                        if fi < self.f {
                            visit(row * n, m * self.f + of, (c * self.t + m) * self.f + fi);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let mut cols = vec![0.0; self.ci * self.kf * self.t * self.f];
        self.for_each_tap(|r, c, xi| cols[r + c] = x[xi]);
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.ci * self.t * self.f];
        self.for_each_tap(|r, c, xi| x[xi] += cols[r + c]);
        x
    }

    /// `[Co, Ci, kt, kf]` to `[(Co, kt), (Ci, kf)]`.
    fn permute(&self, w: &[f64]) -> Vec<f64> {
        let co = w.len() / (self.ci * self.kt * self.kf);
        let mut out = vec![0.0; w.len()];
        for o in 0..co {
            for c in 0..self.ci {
                for i in 0..self.kt {
                    for j in 0..self.kf {
                        let src = ((o * self.ci + c) * self.kt + i) * self.kf + j;
                        let dst = ((o * self.kt + i) * self.ci + c) * self.kf + j;
                        out[dst] = w[src];
                    }
                }
            }
        }
        out
    }

    fn unpermute(&self, wp: &[f64], co: usize) -> Vec<f64> {
        let mut out = vec![0.0; wp.len()];
        for o in 0..co {
            for c in 0..self.ci {
                for i in 0..self.kt {
                    for j in 0..self.kf {
                        let src = ((o * self.kt + i) * self.ci + c) * self.kf + j;
                        let dst = ((o * self.ci + c) * self.kt + i) * self.kf + j;
                        out[dst] = wp[src];
                    }
                }
            }
        }
        out
    }

    /// Pairs (output index, z index) for every tap landing inside the output.
    fn scatter(&self, co: usize, stride: usize, mut visit: impl FnMut(usize, usize)) {
        let to = stride * self.t;
        let n = self.t * self.f;
        for o in 0..co {
            for i in 0..self.kt {
                for m in 0..self.t {
                    let ot = stride * m + i;
                    if ot >= to {
                        break;
                    }
                    let zb = (o * self.kt + i) * n + m * self.f;
                    let ob = (o * to + ot) * self.f;
                    for f in 0..self.f {
                        visit(ob + f, zb + f);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, geom: ConvGeom) -> Tensor {
        let (ci, t, f) = x.dims3();
        let s = w.shape();
        let (co, kt, kf) = (s[0], s[2], s[3]);
        let pt = geom.pad_t(kt) as isize;
        let pf = ((kf - 1) / 2) as isize;
        let to = t.div_ceil(geom.stride_t);
        let fo = f.div_ceil(geom.stride_f);
        let mut out = Tensor::zeros(&[co, to, fo]);
        for o in 0..co {
            for ot in 0..to {
                for of in 0..fo {
                    let mut acc = b.data()[o];
                    for c in 0..ci {
                        for i in 0..kt {
                            for j in 0..kf {
                                let ti = (ot * geom.stride_t + i) as isize - pt;
                                let fi = (of * geom.stride_f + j) as isize - pf;
                                if ti < 0 || fi < 0 || ti >= t as isize || fi >= f as isize {
                                    continue;
                                }
                                let xv = x.data()[(c * t + ti as usize) * f + fi as usize];
                                let wv = w.data()[((o * ci + c) * kt + i) * kf + j];
                                acc += xv * wv;
                            }
                        }
                    }
                    out.data_mut()[(o * to + ot) * fo + of] = acc;
                }
            }
        }
        out
    }

    fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
        assert_eq!(a.shape(), b.shape());
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[4, 8, 8], &mut rng);
        let w = random(&[5, 4, 3, 3], &mut rng);
        let b = random(&[5], &mut rng);
        for geom in [
            ConvGeom::CAUSAL,
            ConvGeom { stride_t: 2, stride_f: 1, causal: true },
            ConvGeom { stride_t: 2, stride_f: 2, causal: true },
            ConvGeom { stride_t: 1, stride_f: 1, causal: false },
        ] {
            let fast = causal_conv2d(&x, &w, &b, geom).unwrap();
            assert!(max_diff(&fast, &naive_conv(&x, &w, &b, geom)) <= 1e-6);
        }
    }

    #[test]
    fn impulse_support_is_causal() {
        let mut x = Tensor::zeros(&[1, 12, 5]);
        x.data_mut()[5 * 5 + 2] = 1.0;
        let w = Tensor::full(&[1, 1, 3, 1], 1.0);
        let out = causal_conv2d(&x, &w, &Tensor::zeros(&[1]), ConvGeom::CAUSAL).unwrap();
        let active: Vec<usize> = (0..12).filter(|&t| out.data()[t * 5 + 2] != 0.0).collect();
        assert_eq!(active, vec![5, 6, 7]);
    }

    #[test]
    fn zero_input_gives_bias() {
        let x = Tensor::zeros(&[2, 4, 6]);
        let w = Tensor::full(&[3, 2, 3, 3], 0.7);
        let b = Tensor::from_vec(&[3], vec![0.1, -0.2, 0.3]);
        let out = causal_conv2d(&x, &w, &b, ConvGeom::CAUSAL).unwrap();
        for (o, chunk) in out.data().chunks(24).enumerate() {
            assert!(chunk.iter().all(|&v| v == b.data()[o]));
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let x = Tensor::zeros(&[2, 4, 6]);
        let w = Tensor::zeros(&[3, 3, 3, 3]);
        assert!(causal_conv2d(&x, &w, &Tensor::zeros(&[3]), ConvGeom::CAUSAL).is_err());
    }

    fn naive_transpose(x: &Tensor, w: &Tensor, b: &Tensor, s: usize) -> Tensor {
        let (ci, t, f) = x.dims3();
        let sh = w.shape();
        let (co, kt, kf) = (sh[0], sh[2], sh[3]);
        let pf = ((kf - 1) / 2) as isize;
        let to = s * t;
        let mut out = Tensor::zeros(&[co, to, f]);
        for o in 0..co {
            for ot in 0..to {
                for of in 0..f {
                    let mut acc = b.data()[o];
                    for m in 0..t {
                        if ot < s * m || ot - s * m >= kt {
                            continue;
                        }
                        let i = ot - s * m;
                        for c in 0..ci {
                            for j in 0..kf {
                                let fi = of as isize + j as isize - pf;
                                if fi < 0 || fi >= f as isize {
                                    continue;
                                }
                                acc += x.data()[(c * t + m) * f + fi as usize]
                                    * w.data()[((o * ci + c) * kt + i) * kf + j];
                            }
                        }
                    }
                    out.data_mut()[(o * to + ot) * f + of] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn transpose_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[3, 5, 6], &mut rng);
        let w = random(&[2, 3, 3, 3], &mut rng);
        let b = random(&[2], &mut rng);
        let fast = time_conv_transpose(&x, &w, &b, 2).unwrap();
        assert_eq!(fast.shape(), [2, 10, 6]);
        assert!(max_diff(&fast, &naive_transpose(&x, &w, &b, 2)) <= 1e-12);
    }

    /// `<A x, g> = <x, A^T g>` for both the input and the kernel slot.
    #[test]
    fn backward_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[3, 7, 6], &mut rng);
        let w = random(&[4, 3, 3, 3], &mut rng);
        let zero = Tensor::zeros(&[4]);
        let dot = |a: &Tensor, b: &Tensor| -> f64 {
            a.data().iter().zip(b.data()).map(|(p, q)| p * q).sum()
        };
        for geom in [ConvGeom::CAUSAL, ConvGeom { stride_t: 2, stride_f: 1, causal: true }] {
            let y = causal_conv2d(&x, &w, &zero, geom).unwrap();
            let g = random(y.shape(), &mut rng);
            let (dx, dw, db) = causal_conv2d_backward(&x, &w, &g, geom);
            assert!((dot(&y, &g) - dot(&x, &dx)).abs() < 1e-9);
            assert!((dot(&y, &g) - dot(&w, &dw)).abs() < 1e-9);
            assert!((db.sum() - g.sum()).abs() < 1e-9);
        }
        let y = time_conv_transpose(&x, &w, &zero, 2).unwrap();
        let g = random(y.shape(), &mut rng);
        let (dx, dw, _) = time_conv_transpose_backward(&x, &w, &g, 2);
        assert!((dot(&y, &g) - dot(&x, &dx)).abs() < 1e-9);
        assert!((dot(&y, &g) - dot(&w, &dw)).abs() < 1e-9);
    }
}
