use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Euclidean norm of `a - b`, accumulated in storage order.
pub fn l2_loss(a: &Tensor, b: &Tensor) -> Result<f32> {
    if a.shape() != b.shape() {
        return Err(Error::shape(a.shape(), b.shape()));
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .fold(0.0f32, |acc, (x, y)| {
            let d = x - y;
            acc + d * d
        })
        .sqrt())
}

/// Loss value and its gradient with respect to `a`: `(a - b) / ||a - b||`,
/// taken as zero when `a == b`.
pub fn l2_loss_grad(a: &Tensor, b: &Tensor) -> Result<(f32, Tensor)> {
    let loss = l2_loss(a, b)?;
    let (h, w, c) = a.shape();
    if loss == 0.0 {
        return Ok((0.0, Tensor::zeros(h, w, c)));
    }
    let inv = 1.0 / loss;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * inv).collect();
    Ok((loss, Tensor::from_raw(h, w, c, data)))
}
