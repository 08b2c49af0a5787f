//! Gradient of the weighted feature-matching loss
//! `Σ λ_i · ||F_i(x) − T_i||₂` with respect to the network input `x`.

use super::activation::{maxpool2_backward, relu_backward};
use super::conv::conv2d_backward_input;
use super::loss::l2_loss_grad;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::network::{LayerSpec, Network};

/// A target feature map for one tap and its loss weight.
#[derive(Debug, Clone, Copy)]
pub struct TapTarget<'a> {
    pub tap: usize,
    pub target: &'a Tensor,
    pub weight: f32,
}

#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f32,
    pub grad: Tensor,
}

/// Column window `(start, width)` inside a map of width `from` that lines up
/// with a map of width `to`: the wider one is center-cropped. Widths may
/// differ by at most one column; heights and channels must agree.
pub(crate) fn aligned_window(actual: &Tensor, target: &Tensor) -> Result<((usize, usize), (usize, usize))> {
    let (ah, aw, ac) = actual.shape();
    let (th, tw, tc) = target.shape();
    if ah != th || ac != tc || aw.abs_diff(tw) > 1 {
        return Err(Error::shape(actual.shape(), target.shape()));
    }
    let w = aw.min(tw);
    Ok((((aw - w) / 2, w), ((tw - w) / 2, w)))
}

fn crop(t: &Tensor, (start, width): (usize, usize)) -> Result<Tensor> {
    if start == 0 && width == t.width() {
        Ok(t.clone())
    } else {
        t.crop_cols(start, width)
    }
}

/// Scatters a gradient computed on a column window back to full width.
fn uncrop(g: Tensor, (start, _): (usize, usize), full_w: usize) -> Tensor {
    if g.width() == full_w {
        return g;
    }
    let (h, w, c) = g.shape();
    let mut out = Tensor::zeros(h, full_w, c);
    for i in 0..h {
        for j in 0..w {
            for k in 0..c {
                out.set(i, start + j, k, g.get(i, j, k));
            }
        }
    }
    out
}

fn active<'a>(net: &Network, targets: &'a [TapTarget<'a>]) -> Result<Vec<(usize, &'a TapTarget<'a>)>> {
    let mut out = Vec::new();
    for t in targets {
        let layer = net.tap_layer(t.tap)?;
        if !(t.weight >= 0.0) || !t.weight.is_finite() {
            return Err(Error::InvalidArgument(format!("tap {} weight must be finite and >= 0", t.tap)));
        }
        if t.weight > 0.0 {
            out.push((layer, t));
        }
    }
    Ok(out)
}

/// Per-target loss terms, evaluated on the supplied layer activations.
fn terms(acts: &[Tensor], active: &[(usize, &TapTarget<'_>)]) -> Result<f32> {
    let mut total = 0.0f32;
    for (layer, t) in active {
        let (wa, wt) = aligned_window(&acts[*layer], t.target)?;
        let l = super::loss::l2_loss(&crop(&acts[*layer], wa)?, &crop(t.target, wt)?)?;
        total += t.weight * l;
    }
    Ok(total)
}

/// Loss value only (forward pass up to the deepest weighted tap).
pub fn feature_loss(net: &Network, x: &Tensor, targets: &[TapTarget<'_>]) -> Result<f32> {
    let active = active(net, targets)?;
    let Some(last) = active.iter().map(|(l, _)| *l).max() else {
        return Ok(0.0);
    };
    let acts = net.forward_layers(x, last)?;
    terms(&acts, &active)
}

/// Loss value and its gradient with respect to `x`.
pub fn loss_and_gradient(net: &Network, x: &Tensor, targets: &[TapTarget<'_>]) -> Result<LossGrad> {
    let active = active(net, targets)?;
    let Some(last) = active.iter().map(|(l, _)| *l).max() else {
        let (h, w, c) = x.shape();
        return Ok(LossGrad {
            loss: 0.0,
            grad: Tensor::zeros(h, w, c),
        });
    };
    let acts = net.forward_layers(x, last)?;

    let mut loss = 0.0f32;
    let mut injected: Vec<Option<Tensor>> = vec![None; last + 1];
    for (layer, t) in &active {
        let (wa, wt) = aligned_window(&acts[*layer], t.target)?;
        let (l, g) = l2_loss_grad(&crop(&acts[*layer], wa)?, &crop(t.target, wt)?)?;
        loss += t.weight * l;
        let g = uncrop(g.map(|v| v * t.weight), wa, acts[*layer].width());
        injected[*layer] = Some(match injected[*layer].take() {
            Some(prev) => add(&prev, &g),
            None => g,
        });
    }

    let (h, w, c) = acts[last].shape();
    let mut grad = Tensor::zeros(h, w, c);
    for layer in (0..=last).rev() {
        if let Some(g) = injected[layer].take() {
            grad = add(&grad, &g);
        }
        let input = if layer == 0 { x } else { &acts[layer - 1] };
        grad = match &net.spec().layers[layer] {
            LayerSpec::Conv { stride, pad, .. } => conv2d_backward_input(
                input.shape(),
                &grad,
                net.kernel_for_layer(layer).unwrap(),
                *stride,
                *pad,
            )?,
            LayerSpec::Relu => relu_backward(input, &grad)?,
            LayerSpec::Pool => maxpool2_backward(input, &grad)?,
        };
    }
    Ok(LossGrad { loss, grad })
}

pub fn input_gradient(net: &Network, x: &Tensor, targets: &[TapTarget<'_>]) -> Result<Tensor> {
    loss_and_gradient(net, x, targets).map(|lg| lg.grad)
}

fn add(a: &Tensor, b: &Tensor) -> Tensor {
    let (h, w, c) = a.shape();
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::from_raw(h, w, c, data)
}
