//! Column-cell warp: each fixed-width column cell is rescaled horizontally by
//! a factor proportional to its importance.

use serde::{Deserialize, Serialize};

use crate::engine::sampling::sample_row;
use crate::engine::tensor::Tensor;
use crate::error::{Error, Result};
use crate::importance::ImportanceMap;

pub const DEFAULT_CELL_WIDTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpPlan {
    pub cell_width: usize,
    /// Actual source width of every cell; only the last may be narrower.
    pub cell_widths: Vec<usize>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Integer output width of every cell, summing to `dst_width`.
    pub targets: Vec<usize>,
    pub src_width: usize,
    pub dst_width: usize,
}

fn cells(width: usize, cell_width: usize) -> Vec<usize> {
    let mut out = vec![cell_width; width / cell_width];
    if !width.is_multiple_of(cell_width) {
        out.push(width % cell_width);
    }
    out
}

/// Scaling factors for cells of importance `mu` and source widths `widths`
/// so that the scaled widths sum to `dst`. Cells whose share would exceed
/// their own width keep it and the rest is redistributed until no cell
/// exceeds 1.
pub fn scale_factors(mu: &[f64], widths: &[usize], dst: usize) -> Vec<f64> {
    let n = widths.len();
    let total: f64 = mu.iter().sum();
    let src: usize = widths.iter().sum();
    if total <= 0.0 {
        return vec![dst as f64 / src as f64; n];
    }
    let mut clamped = vec![false; n];
    loop {
        let fixed: usize = (0..n).filter(|&i| clamped[i]).map(|i| widths[i]).sum();
        let remaining = dst as f64 - fixed as f64;
        let free_mu: f64 = (0..n).filter(|&i| !clamped[i]).map(|i| mu[i]).sum();
        let free_w: usize = (0..n).filter(|&i| !clamped[i]).map(|i| widths[i]).sum();
        let sigma: Vec<f64> = (0..n)
            .map(|i| {
                if clamped[i] {
                    1.0
                } else if free_mu > 0.0 {
                    remaining * mu[i] / free_mu / widths[i] as f64
                } else {
                    remaining / free_w as f64
                }
            })
            .collect();
        let over: Vec<usize> = (0..n).filter(|&i| !clamped[i] && sigma[i] > 1.0).collect();
        if over.is_empty() {
            return sigma;
        }
        for i in over {
            clamped[i] = true;
        }
    }
}

/// Largest-remainder rounding of `sigma[i] * widths[i]` to integers summing
/// to `dst`. Ties in the remainder go to the lower cell index.
pub fn apportion(sigma: &[f64], widths: &[usize], dst: usize) -> Vec<usize> {
    let exact: Vec<f64> = sigma.iter().zip(widths).map(|(s, &w)| (s * w as f64).min(w as f64)).collect();
    let mut out: Vec<usize> = exact.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = dst.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if out[i] < widths[i] {
            out[i] += 1;
            left -= 1;
        }
    }
    out
}

/// Per-cell importance and scaling for narrowing `effective` (at image
/// resolution) to `dst_width` columns.
pub fn column_sigmas(effective: &ImportanceMap, cell_width: usize, dst_width: usize) -> Result<WarpPlan> {
    let (h, w) = (effective.height(), effective.width());
    if cell_width == 0 {
        return Err(Error::InvalidArgument("cell width must be positive".into()));
    }
    if dst_width == 0 || dst_width > w {
        return Err(Error::InvalidArgument(format!(
            "warp can only narrow: target width {dst_width}, source width {w}"
        )));
    }
    let widths = cells(w, cell_width);
    let mut mu = Vec::with_capacity(widths.len());
    let mut start = 0;
    for &cw in &widths {
        let mut acc = 0.0f64;
        for i in 0..h {
            for j in start..start + cw {
                acc += effective.at(i, j) as f64;
            }
        }
        mu.push(acc);
        start += cw;
    }
    if mu.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(Error::NonFinite("warp importance".into()));
    }
    let sigma = scale_factors(&mu, &widths, dst_width);
    let targets = apportion(&sigma, &widths, dst_width);
    Ok(WarpPlan {
        cell_width,
        cell_widths: widths,
        mu,
        sigma,
        targets,
        src_width: w,
        dst_width,
    })
}

/// Resamples every cell linearly to its target width. Samples may read
/// across cell borders, so a uniform plan equals a plain resample of the row.
pub fn warp_image(image: &Tensor, plan: &WarpPlan) -> Result<Tensor> {
    let (h, w, c) = image.shape();
    if w != plan.src_width {
        return Err(Error::shape((h, plan.src_width), (h, w)));
    }
    let mut src_x = Vec::with_capacity(plan.dst_width);
    let mut start = 0usize;
    for (&cw, &n) in plan.cell_widths.iter().zip(&plan.targets) {
        let ratio = cw as f32 / n.max(1) as f32;
        for u in 0..n {
            src_x.push(start as f32 + (u as f32 + 0.5) * ratio - 0.5);
        }
        start += cw;
    }
    if src_x.len() != plan.dst_width {
        return Err(Error::InvalidArgument(format!(
            "warp plan targets sum to {}, expected {}",
            src_x.len(),
            plan.dst_width
        )));
    }
    Ok(Tensor::from_fn(h, plan.dst_width, c, |i, u, k| sample_row(image, i, src_x[u], k)))
}
