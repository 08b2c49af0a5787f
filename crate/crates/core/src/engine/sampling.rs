//! Bilinear sampling through a per-pixel grid, map upsampling and 1-D
//! horizontal resampling.
//!
//! Coordinates are in source pixels with pixel centers at integers:
//! `(x, y) = (j, i)` addresses pixel `(i, j)` exactly. Samples outside the
//! image are clamped to the nearest edge.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Continuous source coordinates, one `(x, y)` pair per output pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    h: usize,
    w: usize,
    xs: Vec<f32>,
    ys: Vec<f32>,
}

impl SamplingGrid {
    pub fn identity(h: usize, w: usize) -> Self {
        let mut xs = Vec::with_capacity(h * w);
        let mut ys = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                xs.push(j as f32);
                ys.push(i as f32);
            }
        }
        Self { h, w, xs, ys }
    }

    pub fn from_coords(h: usize, w: usize, xs: Vec<f32>, ys: Vec<f32>) -> Result<Self> {
        if xs.len() != h * w || ys.len() != h * w {
            return Err(Error::shape((h, w), (xs.len(), ys.len())));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sampling grid".into()));
        }
        Ok(Self { h, w, xs, ys })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn xs(&self) -> &[f32] {
        &self.xs
    }

    pub fn ys(&self) -> &[f32] {
        &self.ys
    }

    pub fn xs_mut(&mut self) -> &mut [f32] {
        &mut self.xs
    }

    pub fn ys_mut(&mut self) -> &mut [f32] {
        &mut self.ys
    }

    /// Largest `|x - j|` or `|y - i|` over the grid.
    pub fn max_displacement(&self) -> f32 {
        let mut m = 0.0f32;
        for i in 0..self.h {
            for j in 0..self.w {
                let idx = i * self.w + j;
                m = m.max((self.xs[idx] - j as f32).abs());
                m = m.max((self.ys[idx] - i as f32).abs());
            }
        }
        m
    }

    /// Clamps every coordinate to within `limit` pixels of the identity grid.
    pub fn clamp_displacement(&mut self, limit: f32) {
        for i in 0..self.h {
            for j in 0..self.w {
                let idx = i * self.w + j;
                let (x0, y0) = (j as f32, i as f32);
                self.xs[idx] = self.xs[idx].clamp(x0 - limit, x0 + limit);
                self.ys[idx] = self.ys[idx].clamp(y0 - limit, y0 + limit);
            }
        }
    }
}

/// Bilinear stencil along one axis: lower index, upper index, upper weight,
/// and whether the coordinate was inside the valid range (zero gradient
/// otherwise).
#[inline]
fn stencil(coord: f32, len: usize) -> (usize, usize, f32, bool) {
    let max = (len - 1) as f32;
    let inside = coord >= 0.0 && coord <= max;
    let c = coord.clamp(0.0, max);
    let lo = c.floor();
    let i0 = lo as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, c - lo, inside)
}

pub fn bilinear_sample(image: &Tensor, grid: &SamplingGrid) -> Tensor {
    let (h, w, c) = image.shape();
    let (gh, gw) = grid.shape();
    let mut out = Vec::with_capacity(gh * gw * c);
    for idx in 0..gh * gw {
        let (y0, y1, fy, _) = stencil(grid.ys[idx], h);
        let (x0, x1, fx, _) = stencil(grid.xs[idx], w);
        for k in 0..c {
            let top = (1.0 - fx) * image.get(y0, x0, k) + fx * image.get(y0, x1, k);
            let bottom = (1.0 - fx) * image.get(y1, x0, k) + fx * image.get(y1, x1, k);
            out.push((1.0 - fy) * top + fy * bottom);
        }
    }
    Tensor::from_raw(gh, gw, c, out)
}

/// Gradient of a scalar loss with respect to the grid coordinates, given the
/// gradient with respect to the sampled output. Returns `(d/dx, d/dy)` per
/// grid point; clamped coordinates get zero.
pub fn bilinear_sample_grid_backward(
    image: &Tensor,
    grid: &SamplingGrid,
    grad_out: &Tensor,
) -> Result<(Vec<f32>, Vec<f32>)> {
    let (h, w, c) = image.shape();
    let (gh, gw) = grid.shape();
    if grad_out.shape() != (gh, gw, c) {
        return Err(Error::shape((gh, gw, c), grad_out.shape()));
    }
    let mut gx = vec![0.0f32; gh * gw];
    let mut gy = vec![0.0f32; gh * gw];
    for idx in 0..gh * gw {
        let (y0, y1, fy, y_in) = stencil(grid.ys[idx], h);
        let (x0, x1, fx, x_in) = stencil(grid.xs[idx], w);
        let g = &grad_out.data()[idx * c..(idx + 1) * c];
        let mut sx = 0.0f32;
        let mut sy = 0.0f32;
        for (k, &gk) in g.iter().enumerate() {
            let (a, b) = (image.get(y0, x0, k), image.get(y0, x1, k));
            let (d, e) = (image.get(y1, x0, k), image.get(y1, x1, k));
            sx += gk * ((1.0 - fy) * (b - a) + fy * (e - d));
            sy += gk * (((1.0 - fx) * d + fx * e) - ((1.0 - fx) * a + fx * b));
        }
        if x_in && w > 1 {
            gx[idx] = sx;
        }
        if y_in && h > 1 {
            gy[idx] = sy;
        }
    }
    Ok((gx, gy))
}

/// Bilinear resize of a single-channel map with corner-aligned coordinates:
/// output pixel `u` reads source position `u * (n - 1) / (n' - 1)`, so the
/// first and last rows/columns coincide in both grids.
pub fn upsample_bilinear(map: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w, c) = map.shape();
    if c != 1 {
        return Err(Error::InvalidArgument(format!(
            "upsample expects a single-channel map, got {c} channels"
        )));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("upsample target must be non-empty".into()));
    }
    let scale = |src: usize, dst: usize| if dst > 1 { (src - 1) as f32 / (dst - 1) as f32 } else { 0.0 };
    let (sy, sx) = (scale(h, out_h), scale(w, out_w));
    Ok(Tensor::from_fn(out_h, out_w, 1, |i, j, _| {
        let (y0, y1, fy, _) = stencil(i as f32 * sy, h);
        let (x0, x1, fx, _) = stencil(j as f32 * sx, w);
        let top = (1.0 - fx) * map.get(y0, x0, 0) + fx * map.get(y0, x1, 0);
        let bottom = (1.0 - fx) * map.get(y1, x0, 0) + fx * map.get(y1, x1, 0);
        (1.0 - fy) * top + fy * bottom
    }))
}

/// Linear interpolation of one row at source column `x` (clamped).
#[inline]
pub(crate) fn sample_row(image: &Tensor, row: usize, x: f32, k: usize) -> f32 {
    let (x0, x1, fx, _) = stencil(x, image.width());
    (1.0 - fx) * image.get(row, x0, k) + fx * image.get(row, x1, k)
}

/// Uniform horizontal resample to `out_w` columns. Output column `u` reads
/// source column `(u + 0.5) * w / out_w - 0.5`, which is exactly `u` when the
/// widths agree.
pub fn resample_width(image: &Tensor, out_w: usize) -> Result<Tensor> {
    if out_w == 0 {
        return Err(Error::InvalidArgument("target width must be positive".into()));
    }
    let (h, w, c) = image.shape();
    let ratio = w as f32 / out_w as f32;
    Ok(Tensor::from_fn(h, out_w, c, |i, u, k| {
        sample_row(image, i, (u as f32 + 0.5) * ratio - 0.5, k)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_grid_reproduces_image() {
        let img = Tensor::from_fn(5, 7, 3, |i, j, k| (i * 31 + j * 7 + k) as f32 * 0.013);
        let out = bilinear_sample(&img, &SamplingGrid::identity(5, 7));
        assert_eq!(out, img);
    }

    #[test]
    fn half_pixel_shift_is_midpoint() {
        let img = Tensor::from_vec(1, 2, 1, vec![0.25, 0.75]).unwrap();
        let grid = SamplingGrid::from_coords(1, 2, vec![0.5, 1.5], vec![0.0, 0.0]).unwrap();
        let out = bilinear_sample(&img, &grid);
        assert_eq!(out.get(0, 0, 0), 0.5);
        // 1.5 is clamped to the last column
        assert_eq!(out.get(0, 1, 0), 0.75);
    }

    #[test]
    fn clamped_coordinates_have_zero_gradient() {
        let img = Tensor::from_vec(1, 3, 1, vec![0.0, 1.0, 3.0]).unwrap();
        let grid = SamplingGrid::from_coords(1, 3, vec![-1.0, 0.5, 9.0], vec![0.0; 3]).unwrap();
        let g = Tensor::filled(1, 3, 1, 1.0);
        let (gx, gy) = bilinear_sample_grid_backward(&img, &grid, &g).unwrap();
        assert_eq!(gx, vec![0.0, 1.0, 0.0]);
        assert_eq!(gy, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn displacement_clamp() {
        let mut grid = SamplingGrid::identity(2, 2);
        grid.xs_mut()[0] = 5.0;
        grid.ys_mut()[3] = -4.0;
        assert_eq!(grid.max_displacement(), 5.0);
        grid.clamp_displacement(2.0);
        assert_eq!(grid.xs()[0], 2.0);
        assert_eq!(grid.ys()[3], -1.0);
        assert_eq!(grid.max_displacement(), 2.0);
    }

    #[test]
    fn upsample_same_size_is_identity() {
        let m = Tensor::from_fn(4, 6, 1, |i, j, _| (i * 6 + j) as f32 * 0.37);
        assert_eq!(upsample_bilinear(&m, 4, 6).unwrap(), m);
    }

    #[test]
    fn upsample_constant_stays_constant() {
        let m = Tensor::filled(3, 2, 1, 0.6);
        let up = upsample_bilinear(&m, 9, 11).unwrap();
        assert!(up.data().iter().all(|&v| (v - 0.6).abs() < 1e-6));
    }

    #[test]
    fn upsample_two_by_two_center() {
        // Corner-aligned: the 3x3 center reads source (0.5, 0.5), the mean of
        // all four values.
        let m = Tensor::from_vec(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let up = upsample_bilinear(&m, 3, 3).unwrap();
        assert_eq!(up.get(1, 1, 0), 1.5);
        assert_eq!(up.get(0, 1, 0), 0.5);
        assert_eq!(up.get(1, 0, 0), 1.0);
        assert_eq!(up.get(2, 2, 0), 3.0);
    }

    #[test]
    fn upsample_rejects_multichannel() {
        assert!(upsample_bilinear(&Tensor::zeros(2, 2, 2), 4, 4).is_err());
    }

    #[test]
    fn resample_same_width_is_identity() {
        let img = Tensor::from_fn(3, 9, 3, |i, j, k| ((i + 2 * j + 3 * k) % 5) as f32 / 4.0);
        assert_eq!(resample_width(&img, 9).unwrap(), img);
    }

    #[test]
    fn resample_halves_pairs() {
        let img = Tensor::from_vec(1, 4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let out = resample_width(&img, 2).unwrap();
        assert_eq!(out.data(), &[0.5, 2.5]);
    }
}
