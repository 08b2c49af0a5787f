use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamParams {
    pub fn with_lr(lr: f32) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for one optimized buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f32>,
    v: Vec<f32>,
    t: u32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn for_tensor(t: &Tensor) -> Self {
        Self::new(t.data().len())
    }

    pub fn step_count(&self) -> u32 {
        self.t
    }

    /// Bias-corrected Adam update applied in place.
    pub fn update(&mut self, param: &mut [f32], grad: &[f32], p: &AdamParams) -> Result<()> {
        if param.len() != grad.len() || param.len() != self.m.len() {
            return Err(Error::shape(param.len(), (grad.len(), self.m.len())));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient element {i}")));
        }
        self.t += 1;
        let bc1 = 1.0 - p.beta1.powi(self.t as i32);
        let bc2 = 1.0 - p.beta2.powi(self.t as i32);
        for (((x, &g), m), v) in param.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = p.beta1 * *m + (1.0 - p.beta1) * g;
            *v = p.beta2 * *v + (1.0 - p.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *x -= p.lr * m_hat / (v_hat.sqrt() + p.eps);
        }
        Ok(())
    }
}

/// One Adam step on a tensor; returns the updated tensor.
pub fn adam_step(param: &Tensor, grad: &Tensor, state: &mut AdamState, p: &AdamParams) -> Result<Tensor> {
    if param.shape() != grad.shape() {
        return Err(Error::shape(param.shape(), grad.shape()));
    }
    let mut out = param.clone();
    state.update(out.data_mut(), grad.data(), p)?;
    Ok(out)
}
