//! 2-D convolution with zero padding, and its gradient with respect to the
//! input.
//!
//! Every output element is reduced in a fixed order: window rows, then window
//! columns, then input channels. Rows of the output are computed in parallel,
//! which never changes that order, so results are bit-identical for any
//! thread count.

use rayon::prelude::*;

use super::tensor::{Kernel, Tensor};
use crate::error::{Error, Result};

/// Output length along one axis, or `None` when the window does not fit.
pub fn output_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

fn check(input: &Tensor, k: &Kernel, stride: usize, pad: usize) -> Result<(usize, usize)> {
    let (h, w, c) = input.shape();
    let (kh, kw, c_in, _) = k.shape();
    if c != c_in {
        return Err(Error::shape(input.shape(), k.shape()));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    match (output_len(h, kh, stride, pad), output_len(w, kw, stride, pad)) {
        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok((oh, ow)),
        _ => Err(Error::shape(input.shape(), k.shape())),
    }
}

pub fn conv2d(input: &Tensor, k: &Kernel, stride: usize, pad: usize) -> Result<Tensor> {
    let (oh, ow) = check(input, k, stride, pad)?;
    let (h, w, c_in) = input.shape();
    let (kh, kw, _, c_out) = k.shape();
    let mut out = vec![0.0f32; oh * ow * c_out];

    out.par_chunks_mut(ow * c_out).enumerate().for_each(|(oi, row)| {
        let mut acc = vec![0.0f32; c_out];
        for oj in 0..ow {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for di in 0..kh {
                let y = (oi * stride + di) as isize - pad as isize;
                if y < 0 || y >= h as isize {
                    continue;
                }
                for dj in 0..kw {
                    let x = (oj * stride + dj) as isize - pad as isize;
                    if x < 0 || x >= w as isize {
                        continue;
                    }
                    let px = input.pixel(y as usize, x as usize);
                    for (ci, &v) in px.iter().enumerate().take(c_in) {
                        for (a, &wt) in acc.iter_mut().zip(k.taps(di, dj, ci)) {
                            *a += v * wt;
                        }
                    }
                }
            }
            let dst = &mut row[oj * c_out..(oj + 1) * c_out];
            for ((d, &a), &b) in dst.iter_mut().zip(&acc).zip(k.bias()) {
                *d = b + a;
            }
        }
    });
    Ok(Tensor::from_raw(oh, ow, c_out, out))
}

/// Gradient of a scalar loss with respect to the convolution input, given
/// the gradient with respect to its output.
///
/// Evaluated as a gather per input element so rows can run in parallel.
pub fn conv2d_backward_input(
    input_shape: (usize, usize, usize),
    grad_out: &Tensor,
    k: &Kernel,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (h, w, c_in) = input_shape;
    let (kh, kw, kc_in, c_out) = k.shape();
    if kc_in != c_in || grad_out.channels() != c_out {
        return Err(Error::shape(grad_out.shape(), k.shape()));
    }
    let (oh, ow) = (
        output_len(h, kh, stride, pad).unwrap_or(0),
        output_len(w, kw, stride, pad).unwrap_or(0),
    );
    if (oh, ow) != (grad_out.height(), grad_out.width()) {
        return Err(Error::shape((oh, ow, c_out), grad_out.shape()));
    }

    let mut out = vec![0.0f32; h * w * c_in];
    out.par_chunks_mut(w * c_in).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let acc = &mut row[x * c_in..(x + 1) * c_in];
            for di in 0..kh {
                let ny = y as isize + pad as isize - di as isize;
                if ny < 0 || !(ny as usize).is_multiple_of(stride) {
                    continue;
                }
                let oi = ny as usize / stride;
                if oi >= oh {
                    continue;
                }
                for dj in 0..kw {
                    let nx = x as isize + pad as isize - dj as isize;
                    if nx < 0 || !(nx as usize).is_multiple_of(stride) {
                        continue;
                    }
                    let oj = nx as usize / stride;
                    if oj >= ow {
                        continue;
                    }
                    let g = grad_out.pixel(oi, oj);
                    for (ci, a) in acc.iter_mut().enumerate() {
                        let dot = k
                            .taps(di, dj, ci)
                            .iter()
                            .zip(g)
                            .fold(0.0f32, |s, (&wt, &gv)| s + wt * gv);
                        *a += dot;
                    }
                }
            }
        }
    });
    Ok(Tensor::from_raw(h, w, c_in, out))
}
