//! Frequency-axis resampling with the binomial kernel `[1, 3, 3, 1] / 8`.
//!
//! Edges reflect without repeating the border sample.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Down,
    Up,
}

fn reflect(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * n - 2 - i as usize
    } else {
        i as usize
    }
}

/// Calls `tap(out_index, in_index, weight)` for every term of the linear map.
fn for_each_tap(dir: Direction, n_in: usize, mut tap: impl FnMut(usize, usize, f64)) {
    match dir {
        Direction::Down => {
            const K: [f64; 4] = [0.125, 0.375, 0.375, 0.125];
            for o in 0..n_in / 2 {
                for (j, w) in K.iter().enumerate() {
                    tap(o, reflect(2 * o as isize + j as isize - 1, n_in), *w);
                }
            }
        }
        Direction::Up => {
            for k in 0..n_in {
                let ki = k as isize;
                tap(2 * k, reflect(ki - 1, n_in), 0.25);
                tap(2 * k, k, 0.75);
                tap(2 * k + 1, k, 0.75);
                tap(2 * k + 1, reflect(ki + 1, n_in), 0.25);
            }
        }
    }
}

fn out_len(dir: Direction, n: usize) -> usize {
    match dir {
        Direction::Down => n / 2,
        Direction::Up => 2 * n,
    }
}

pub fn freq_resample(x: &Tensor, dir: Direction) -> Result<Tensor> {
    let (c, t, f) = x.dims3();
    if f < 2 || (dir == Direction::Down && f % 2 != 0) {
        return Err(Error::Shape(format!("cannot resample {f} bins {dir:?}")));
    }
    let fo = out_len(dir, f);
    let mut out = vec![0.0; c * t * fo];
    for (row_in, row_out) in x.data().chunks(f).zip(out.chunks_mut(fo)) {
        for_each_tap(dir, f, |o, i, w| row_out[o] += w * row_in[i]);
    }
    Ok(Tensor::from_vec(&[c, t, fo], out))
}

/// Adjoint of [`freq_resample`] applied to an output gradient.
pub fn freq_resample_backward(grad_out: &Tensor, in_bins: usize, dir: Direction) -> Tensor {
    let (c, t, fo) = grad_out.dims3();
    let mut dx = vec![0.0; c * t * in_bins];
    for (g, d) in grad_out.data().chunks(fo).zip(dx.chunks_mut(in_bins)) {
        for_each_tap(dir, in_bins, |o, i, w| d[i] += w * g[o]);
    }
    Tensor::from_vec(&[c, t, in_bins], dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dc_gain_is_one() {
        let x = Tensor::full(&[2, 3, 320], 0.75);
        let down = freq_resample(&x, Direction::Down).unwrap();
        assert_eq!(down.shape(), [2, 3, 160]);
        assert!(down.data().iter().all(|v| (v - 0.75).abs() < 1e-15));
        let up = freq_resample(&down, Direction::Up).unwrap();
        assert_eq!(up.shape(), [2, 3, 320]);
        assert!(up.data().iter().all(|v| (v - 0.75).abs() < 1e-15));
    }

    #[test]
    fn nyquist_is_removed() {
        let alt: Vec<f64> = (0..320).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let down = freq_resample(&Tensor::from_vec(&[1, 1, 320], alt), Direction::Down).unwrap();
        assert!(down.data().iter().all(|v| v.abs() <= 0.05));
    }

    #[test]
    fn odd_down_is_an_error() {
        assert!(freq_resample(&Tensor::zeros(&[1, 1, 5]), Direction::Down).is_err());
    }

    #[test]
    fn backward_is_adjoint() {
        let x = Tensor::from_vec(&[1, 2, 6], (0..12).map(|i| (i as f64 * 0.7).sin()).collect());
        for dir in [Direction::Down, Direction::Up] {
            let y = freq_resample(&x, dir).unwrap();
            let g = y.map(|v| v.cos());
            let dx = freq_resample_backward(&g, 6, dir);
            let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data().iter().zip(dx.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
