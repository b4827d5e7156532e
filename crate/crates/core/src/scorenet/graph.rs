//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Nodes are reference counted and numbered in creation order, so a
//! descending id sweep visits every node after all of its consumers.
//! Nodes that do not depend on a trainable leaf drop their parents
//! immediately, which keeps inference graphs from holding activations.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::conv::{
    causal_conv2d, causal_conv2d_backward, time_conv_transpose, time_conv_transpose_backward,
    ConvGeom,
};
use super::freq::{freq_resample, freq_resample_backward, Direction};
use super::norm::{cumulative_group_norm, cumulative_group_norm_backward, NormStats};
use super::tensor::Tensor;
use crate::error::{Error, Result};

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

#[derive(Clone)]
pub struct Var(Rc<Node>);

struct Node {
    id: usize,
    value: Tensor,
    requires_grad: bool,
    op: Option<Op>,
}

enum Op {
    Conv { x: Var, w: Var, b: Var, geom: ConvGeom },
    ConvT { x: Var, w: Var, b: Var, stride: usize },
    Norm { x: Var, scale: Var, shift: Var, stats: NormStats },
    Freq { x: Var, dir: Direction },
    Silu { x: Var },
    Add { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    ChannelBias { x: Var, b: Var },
    Concat { a: Var, b: Var },
    Crop { x: Var },
    Linear { x: Var, w: Var, b: Var },
    SumSquares { x: Var },
}

impl Op {
    fn parents(&self) -> Vec<&Var> {
        match self {
            Op::Conv { x, w, b, .. } | Op::ConvT { x, w, b, .. } | Op::Linear { x, w, b } => {
                vec![x, w, b]
            }
            Op::Norm { x, scale, shift, .. } => vec![x, scale, shift],
            Op::Add { a, b } | Op::Concat { a, b } => vec![a, b],
            Op::ChannelBias { x, b } => vec![x, b],
            Op::Freq { x, .. } | Op::Silu { x } | Op::Scale { x, .. } | Op::Crop { x } => {
                vec![x]
            }
            Op::SumSquares { x } => vec![x],
        }
    }

    /// Gradients with respect to each parent, in `parents()` order.
    fn backward(&self, out: &Tensor, g: &Tensor) -> Vec<Tensor> {
        match self {
            Op::Conv { x, w, geom, .. } => {
                let (dx, dw, db) = causal_conv2d_backward(x.value(), w.value(), g, *geom);
                vec![dx, dw, db]
            }
            Op::ConvT { x, w, stride, .. } => {
                let (dx, dw, db) = time_conv_transpose_backward(x.value(), w.value(), g, *stride);
                vec![dx, dw, db]
            }
            Op::Norm { x, scale, stats, .. } => {
                let (dx, ds, db) = cumulative_group_norm_backward(x.value(), scale.value(), stats, g);
                vec![dx, ds, db]
            }
            Op::Freq { x, dir } => vec![freq_resample_backward(g, x.value().shape()[2], *dir)],
            Op::Silu { x } => {
                let d = x
                    .value()
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gv)| {
                        let s = sigmoid(v);
                        gv * s * (1.0 + v * (1.0 - s))
                    })
                    .collect();
                vec![Tensor::from_vec(g.shape(), d)]
            }
            Op::Add { .. } => vec![g.clone(), g.clone()],
            Op::Scale { c, .. } => vec![g.map(|v| v * c)],
            Op::ChannelBias { b, .. } => {
                let c = b.value().len();
                let per = g.len() / c;
                let db = g.data().chunks(per).map(|ch| ch.iter().sum()).collect();
                vec![g.clone(), Tensor::from_vec(&[c], db)]
            }
            Op::Concat { a, .. } => {
                let split = a.value().len();
                vec![
                    Tensor::from_vec(a.value().shape(), g.data()[..split].to_vec()),
                    Tensor::from_vec(&concat_rest_shape(g, a.value()), g.data()[split..].to_vec()),
                ]
            }
            Op::Crop { x } => {
                let (c, t, f) = x.value().dims3();
                let kept = out.shape()[1];
                let mut dx = vec![0.0; c * t * f];
                for ch in 0..c {
                    dx[ch * t * f..ch * t * f + kept * f]
                        .copy_from_slice(&g.data()[ch * kept * f..(ch + 1) * kept * f]);
                }
                vec![Tensor::from_vec(x.value().shape(), dx)]
            }
            Op::Linear { x, w, .. } => {
                let (m, n) = (w.value().shape()[0], w.value().shape()[1]);
                let (xv, wv, gv) = (x.value().data(), w.value().data(), g.data());
                let mut dw = vec![0.0; m * n];
                let mut dx = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        dw[i * n + j] = gv[i] * xv[j];
                        dx[j] += wv[i * n + j] * gv[i];
                    }
                }
                vec![
                    Tensor::from_vec(&[n], dx),
                    Tensor::from_vec(&[m, n], dw),
                    g.clone(),
                ]
            }
            Op::SumSquares { x } => {
                let s = 2.0 * g.data()[0];
                vec![x.value().map(|v| s * v)]
            }
        }
    }
}

fn concat_rest_shape(g: &Tensor, a: &Tensor) -> Vec<usize> {
    let mut s = g.shape().to_vec();
    s[0] -= a.shape()[0];
    s
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Var {
    fn make(value: Tensor, requires_grad: bool, op: Option<Op>) -> Var {
        Var(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value,
            requires_grad,
            op,
        }))
    }

    fn derived(value: Tensor, op: Op) -> Var {
        let requires_grad = op.parents().iter().any(|p| p.requires_grad());
        Var::make(value, requires_grad, requires_grad.then_some(op))
    }

    pub fn constant(value: Tensor) -> Var {
        Var::make(value, false, None)
    }

    pub fn param(value: Tensor) -> Var {
        Var::make(value, true, None)
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn id(&self) -> usize {
        self.0.id
    }
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.0.value.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

fn same_shape(a: &Var, b: &Var, what: &str) -> Result<()> {
    if a.value().shape() != b.value().shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.value().shape(),
            b.value().shape()
        )));
    }
    Ok(())
}

pub fn conv(x: &Var, w: &Var, b: &Var, geom: ConvGeom) -> Result<Var> {
    let v = causal_conv2d(x.value(), w.value(), b.value(), geom)?;
    Ok(Var::derived(
        v,
        Op::Conv {
            x: x.clone(),
            w: w.clone(),
            b: b.clone(),
            geom,
        },
    ))
}

pub fn conv_transpose(x: &Var, w: &Var, b: &Var, stride: usize) -> Result<Var> {
    let v = time_conv_transpose(x.value(), w.value(), b.value(), stride)?;
    Ok(Var::derived(
        v,
        Op::ConvT {
            x: x.clone(),
            w: w.clone(),
            b: b.clone(),
            stride,
        },
    ))
}

pub fn group_norm(x: &Var, scale: &Var, shift: &Var, groups: usize, eps: f64) -> Result<Var> {
    let (v, stats) = cumulative_group_norm(x.value(), scale.value(), shift.value(), groups, eps)?;
    Ok(Var::derived(
        v,
        Op::Norm {
            x: x.clone(),
            scale: scale.clone(),
            shift: shift.clone(),
            stats,
        },
    ))
}

pub fn resample_freq(x: &Var, dir: Direction) -> Result<Var> {
    let v = freq_resample(x.value(), dir)?;
    Ok(Var::derived(v, Op::Freq { x: x.clone(), dir }))
}

pub fn silu(x: &Var) -> Var {
    let v = x.value().map(|v| v * sigmoid(v));
    Var::derived(v, Op::Silu { x: x.clone() })
}

pub fn add(a: &Var, b: &Var) -> Result<Var> {
    same_shape(a, b, "add")?;
    let mut v = a.value().clone();
    v.add_assign(b.value());
    Ok(Var::derived(
        v,
        Op::Add {
            a: a.clone(),
            b: b.clone(),
        },
    ))
}

pub fn scale(x: &Var, c: f64) -> Var {
    let v = x.value().map(|v| v * c);
    Var::derived(v, Op::Scale { x: x.clone(), c })
}

/// Adds `b[c]` to every element of channel `c` of a `[C, T, F]` map.
pub fn channel_bias(x: &Var, b: &Var) -> Result<Var> {
    let (c, t, f) = x.value().dims3();
    if b.value().shape() != [c] {
        return Err(Error::Shape(format!("channel bias {:?} for {c}", b.value().shape())));
    }
    let mut v = x.value().clone();
    for (chunk, &bv) in v.data_mut().chunks_mut(t * f).zip(b.value().data()) {
        chunk.iter_mut().for_each(|e| *e += bv);
    }
    Ok(Var::derived(
        v,
        Op::ChannelBias {
            x: x.clone(),
            b: b.clone(),
        },
    ))
}

/// Channel concatenation of two `[C, T, F]` maps.
pub fn concat(a: &Var, b: &Var) -> Result<Var> {
    let (ca, ta, fa) = a.value().dims3();
    let (cb, tb, fb) = b.value().dims3();
    if ta != tb || fa != fb {
        return Err(Error::Shape(format!(
            "concat {:?} with {:?}",
            a.value().shape(),
            b.value().shape()
        )));
    }
    let mut data = a.value().data().to_vec();
    data.extend_from_slice(b.value().data());
    Ok(Var::derived(
        Tensor::from_vec(&[ca + cb, ta, fa], data),
        Op::Concat {
            a: a.clone(),
            b: b.clone(),
        },
    ))
}

/// Keeps the first `frames` frames.
pub fn crop_frames(x: &Var, frames: usize) -> Result<Var> {
    let (_, t, _) = x.value().dims3();
    if frames > t {
        return Err(Error::Shape(format!("crop {t} frames to {frames}")));
    }
    if frames == t {
        return Ok(x.clone());
    }
    Ok(Var::derived(
        x.value().crop_frames(frames),
        Op::Crop { x: x.clone() },
    ))
}

/// `w x + b` for a vector `x: [n]`, `w: [m, n]`, `b: [m]`.
pub fn linear(x: &Var, w: &Var, b: &Var) -> Result<Var> {
    let ws = w.value().shape();
    if ws.len() != 2 || x.value().shape() != [ws[1]] || b.value().shape() != [ws[0]] {
        return Err(Error::Shape(format!(
            "linear x {:?} w {ws:?} b {:?}",
            x.value().shape(),
            b.value().shape()
        )));
    }
    let (m, n) = (ws[0], ws[1]);
    let (xv, wv) = (x.value().data(), w.value().data());
    let out = (0..m)
        .map(|i| b.value().data()[i] + (0..n).map(|j| wv[i * n + j] * xv[j]).sum::<f64>())
        .collect();
    Ok(Var::derived(
        Tensor::from_vec(&[m], out),
        Op::Linear {
            x: x.clone(),
            w: w.clone(),
            b: b.clone(),
        },
    ))
}

pub fn sum_squares(x: &Var) -> Var {
    let s = x.value().data().iter().map(|v| v * v).sum();
    Var::derived(Tensor::scalar(s), Op::SumSquares { x: x.clone() })
}

/// Gradients of a scalar root, keyed by node id.
#[derive(Debug, Default)]
pub struct Grads(HashMap<usize, Tensor>);

impl Grads {
    pub fn get(&self, v: &Var) -> Option<&Tensor> {
        self.0.get(&v.id())
    }

    pub fn take(&mut self, v: &Var) -> Option<Tensor> {
        self.0.remove(&v.id())
    }
}

pub fn backward(root: &Var) -> Result<Grads> {
    if root.value().len() != 1 {
        return Err(Error::Shape(format!(
            "backward needs a scalar root, got {:?}",
            root.value().shape()
        )));
    }
    if !root.value().is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let mut nodes = Vec::new();
    let mut seen = HashSet::new();
    let mut stack = vec![root.clone()];
    while let Some(v) = stack.pop() {
        if !v.requires_grad() || !seen.insert(v.id()) {
            continue;
        }
        if let Some(op) = &v.0.op {
            stack.extend(op.parents().into_iter().cloned());
        }
        nodes.push(v);
    }
    nodes.sort_by_key(|v| std::cmp::Reverse(v.id()));

    let mut grads = HashMap::new();
    grads.insert(root.id(), Tensor::full(root.value().shape(), 1.0));
    let mut leaves = HashMap::new();
    for v in nodes {
        let Some(g) = grads.remove(&v.id()) else {
            continue;
        };
        let Some(op) = &v.0.op else {
            leaves.insert(v.id(), g);
            continue;
        };
        for (p, pg) in op.parents().into_iter().zip(op.backward(v.value(), &g)) {
            if !p.requires_grad() {
                continue;
            }
            match grads.get_mut(&p.id()) {
                Some(acc) => Tensor::add_assign(acc, &pg),
                None => {
                    grads.insert(p.id(), pg);
                }
            }
        }
    }
    Ok(Grads(leaves))
}
