use super::tensor::Tensor;
use crate::error::{Error, Result};

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Passes `grad_out` where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(input.shape(), grad_out.shape()));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    let (h, w, c) = input.shape();
    Ok(Tensor::from_raw(h, w, c, data))
}

fn check_even(input: &Tensor) -> Result<()> {
    let (h, w, _) = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::BadDimensions { h, w, multiple: 2 });
    }
    Ok(())
}

/// Row-major position (0..4) of the maximum inside a 2×2 window; the first
/// one wins on ties.
#[inline]
fn window_argmax(input: &Tensor, i: usize, j: usize, k: usize) -> (usize, usize) {
    let mut best = (2 * i, 2 * j);
    let mut best_v = input.get(best.0, best.1, k);
    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
        let v = input.get(2 * i + di, 2 * j + dj, k);
        if v > best_v {
            best_v = v;
            best = (2 * i + di, 2 * j + dj);
        }
    }
    best
}

/// 2×2 max pooling with stride 2.
pub fn maxpool2(input: &Tensor) -> Result<Tensor> {
    check_even(input)?;
    let (h, w, c) = input.shape();
    Ok(Tensor::from_fn(h / 2, w / 2, c, |i, j, k| {
        let (y, x) = window_argmax(input, i, j, k);
        input.get(y, x, k)
    }))
}

/// Routes each window's gradient to its argmax element.
pub fn maxpool2_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    check_even(input)?;
    let (h, w, c) = input.shape();
    if grad_out.shape() != (h / 2, w / 2, c) {
        return Err(Error::shape((h / 2, w / 2, c), grad_out.shape()));
    }
    let mut grad = Tensor::zeros(h, w, c);
    for i in 0..h / 2 {
        for j in 0..w / 2 {
            for k in 0..c {
                let (y, x) = window_argmax(input, i, j, k);
                grad.set(y, x, k, grad_out.get(i, j, k));
            }
        }
    }
    Ok(grad)
}
