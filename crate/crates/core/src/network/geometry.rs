//! Receptive-field geometry between consecutive taps.
//!
//! A spatial layer with kernel `k`, stride `s` and padding `p` computes output
//! index `j` from input indices `j*s - p ..= j*s - p + k - 1`. Projecting a
//! range of deep indices back through a chain of such layers, clipping to the
//! valid input at every step, gives exactly the finer positions that can
//! influence the range. Padding positions are not neurons, so clipping at each
//! layer loses nothing.

use serde::Serialize;

use super::{FeatureHierarchy, LayerSpec, NetworkSpec};
use crate::engine::conv::output_len;
use crate::error::{Error, Result};

/// One spatial layer along one axis, with the input length it was applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AxisStep {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_len: usize,
}

impl AxisStep {
    fn back(&self, lo: usize, hi: usize) -> (usize, usize) {
        let a = (lo * self.stride) as isize - self.pad as isize;
        let b = (hi * self.stride + self.kernel - 1) as isize - self.pad as isize;
        let max = self.in_len as isize - 1;
        (a.clamp(0, max) as usize, b.clamp(0, max) as usize)
    }
}

/// Geometry from one tap back to the previous tap (or to the image for the
/// finest tap).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RfGeom {
    /// Finer level size `(h, w)`.
    pub finer: (usize, usize),
    /// This tap's size `(h, w)`.
    pub size: (usize, usize),
    pub rows: Vec<AxisStep>,
    pub cols: Vec<AxisStep>,
}

impl RfGeom {
    fn project(steps: &[AxisStep], len: usize, lo: usize, hi: usize) -> Result<(usize, usize)> {
        if lo > hi || hi >= len {
            return Err(Error::InvalidArgument(format!(
                "range {lo}..={hi} outside 0..{len}"
            )));
        }
        Ok(steps.iter().rev().fold((lo, hi), |(a, b), s| s.back(a, b)))
    }

    /// Finer-level columns that can influence columns `lo..=hi` of this tap.
    pub fn project_cols(&self, lo: usize, hi: usize) -> Result<(usize, usize)> {
        Self::project(&self.cols, self.size.1, lo, hi)
    }

    pub fn project_rows(&self, lo: usize, hi: usize) -> Result<(usize, usize)> {
        Self::project(&self.rows, self.size.0, lo, hi)
    }

    /// Affine summary along columns ignoring clipping: column `j` maps to
    /// `j*stride + lo ..= j*stride + hi` at the finer level. Returns
    /// `(stride, lo, hi)`.
    pub fn col_affine(&self) -> (usize, isize, isize) {
        self.cols.iter().rev().fold((1usize, 0isize, 0isize), |(s, lo, hi), st| {
            // apply deeper map first, then this step: x -> x*st.stride - pad (+ kernel-1)
            (
                s * st.stride,
                lo * st.stride as isize - st.pad as isize,
                hi * st.stride as isize - st.pad as isize + st.kernel as isize - 1,
            )
        })
    }

    /// Cumulative stride, receptive-field radius and center offset along
    /// columns: column `j` is centered on finer column `j*stride + offset`
    /// with half-width `radius`.
    pub fn col_stride_radius_offset(&self) -> (usize, f32, f32) {
        let (s, lo, hi) = self.col_affine();
        (s, (hi - lo) as f32 / 2.0, (hi + lo) as f32 / 2.0)
    }

    /// Chains `deeper` behind `finer`, giving a geometry from `deeper`'s tap
    /// straight to `finer`'s own finer level.
    pub fn compose(finer: &RfGeom, deeper: &RfGeom) -> RfGeom {
        RfGeom {
            finer: finer.finer,
            size: deeper.size,
            rows: finer.rows.iter().chain(&deeper.rows).copied().collect(),
            cols: finer.cols.iter().chain(&deeper.cols).copied().collect(),
        }
    }
}

/// Geometry for every tap of `spec` given the image size.
pub fn tap_geometries(spec: &NetworkSpec, h: usize, w: usize) -> Result<Vec<RfGeom>> {
    let mut geoms = Vec::with_capacity(spec.taps.len());
    let (mut ch, mut cw) = (h, w);
    let mut start = 0;
    for &tap in &spec.taps {
        let finer = (ch, cw);
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        for layer in &spec.layers[start..=tap] {
            let Some((kh, kw, s, p)) = layer.window() else {
                continue;
            };
            if matches!(layer, LayerSpec::Pool) && (ch % 2 != 0 || cw % 2 != 0) {
                return Err(Error::BadDimensions { h: ch, w: cw, multiple: 2 });
            }
            rows.push(AxisStep { kernel: kh, stride: s, pad: p, in_len: ch });
            cols.push(AxisStep { kernel: kw, stride: s, pad: p, in_len: cw });
            ch = output_len(ch, kh, s, p).filter(|&v| v > 0).ok_or_else(|| Error::shape((ch, cw), (kh, kw)))?;
            cw = output_len(cw, kw, s, p).filter(|&v| v > 0).ok_or_else(|| Error::shape((ch, cw), (kh, kw)))?;
        }
        geoms.push(RfGeom {
            finer,
            size: (ch, cw),
            rows,
            cols,
        });
        start = tap + 1;
    }
    Ok(geoms)
}

/// Columns at tap `tap - 1` (or at the image when `tap == 0`) whose
/// activations can influence columns `lo..=hi` of tap `tap`.
pub fn rf_project(hier: &FeatureHierarchy, tap: usize, lo: usize, hi: usize) -> Result<(usize, usize)> {
    let geom = hier.geoms.get(tap).ok_or(Error::TapOutOfRange {
        tap,
        count: hier.geoms.len(),
    })?;
    geom.project_cols(lo, hi)
}

/// Geometry from `tap` all the way down to the image.
pub fn to_image(geoms: &[RfGeom], tap: usize) -> RfGeom {
    geoms[1..=tap]
        .iter()
        .fold(geoms[0].clone(), |acc, g| RfGeom::compose(&acc, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_tinyvgg, Network};

    #[test]
    fn single_conv_projects_neighbors() {
        let spec = NetworkSpec::new("one", vec![LayerSpec::conv("c", 1, 1)], vec![0]).unwrap();
        let g = &tap_geometries(&spec, 5, 7).unwrap()[0];
        assert_eq!(g.project_cols(3, 3).unwrap(), (2, 4));
        assert_eq!(g.project_cols(0, 0).unwrap(), (0, 1));
        assert_eq!(g.project_cols(6, 6).unwrap(), (5, 6));
        assert_eq!(g.project_cols(0, 6).unwrap(), (0, 6));
        assert!(g.project_cols(0, 7).is_err());
        assert_eq!(g.col_stride_radius_offset(), (1, 1.0, 0.0));
    }

    #[test]
    fn tinyvgg_block_geometry() {
        let spec = build_tinyvgg();
        let geoms = tap_geometries(&spec, 64, 48).unwrap();
        assert_eq!(geoms[0].size, (64, 48));
        assert_eq!(geoms[1].size, (32, 24));
        assert_eq!(geoms[2].size, (16, 12));
        // pool then two 3x3 convs: deep column j -> [2j - 4, 2j + 5]
        assert_eq!(geoms[1].project_cols(5, 5).unwrap(), (6, 15));
        assert_eq!(geoms[1].col_affine(), (2, -4, 5));
        assert_eq!(geoms[1].project_cols(0, 0).unwrap(), (0, 5));
        assert_eq!(geoms[1].project_cols(0, 23).unwrap(), (0, 47));
    }

    #[test]
    fn composition_matches_direct_projection() {
        let spec = build_tinyvgg();
        let net = Network::tinyvgg(0);
        let hier = net.forward_collect(&crate::engine::tensor::Tensor::zeros(32, 40, 3)).unwrap();
        let full = to_image(&hier.geoms, 2);
        for j in 0..hier.maps[2].width() {
            let via_taps = {
                let (a, b) = hier.geoms[2].project_cols(j, j).unwrap();
                let (a, b) = hier.geoms[1].project_cols(a, b).unwrap();
                hier.geoms[0].project_cols(a, b).unwrap()
            };
            assert_eq!(full.project_cols(j, j).unwrap(), via_taps);
        }
        assert_eq!(spec.pooling_factor(), full.col_affine().0);
    }
}
