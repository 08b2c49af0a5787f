//! Importance maps: channel-wise activation norms, receptive-field
//! attenuation from deeper seams, and the image-resolution effective map.

use serde::Serialize;

use crate::engine::sampling::upsample_bilinear;
use crate::engine::tensor::Tensor;
use crate::error::{Error, Result};
use crate::network::RfGeom;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    /// Plain channel norm.
    Base,
    /// Attenuated inside the receptive fields of deeper seams.
    Modified,
    /// Sum of upsampled per-tap maps at image resolution.
    Effective,
}

/// Non-negative single-channel map attached to a tap.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap {
    pub map: Tensor,
    pub tap: usize,
    pub kind: MapKind,
}

impl ImportanceMap {
    pub fn height(&self) -> usize {
        self.map.height()
    }

    pub fn width(&self) -> usize {
        self.map.width()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.map.get(i, j, 0)
    }
}

/// Channel norm at every position: `S(i, j) = ||F(i, j, ·)||₂`.
pub fn channel_l2(feature: &Tensor) -> Tensor {
    let (h, w, _) = feature.shape();
    Tensor::from_fn(h, w, 1, |i, j, _| {
        feature.pixel(i, j).iter().fold(0.0f32, |acc, v| acc + v * v).sqrt()
    })
}

pub fn base_map(feature: &Tensor, tap: usize) -> ImportanceMap {
    ImportanceMap {
        map: channel_l2(feature),
        tap,
        kind: MapKind::Base,
    }
}

/// Positions of the finer level (size `geom.finer`) lying in the receptive
/// field of any seam point. `seams` hold one column per row of the deeper
/// tap, in that tap's original coordinates.
pub fn attenuation_mask(seams: &[Vec<usize>], geom: &RfGeom) -> Result<Vec<bool>> {
    let (fh, fw) = geom.finer;
    let (dh, dw) = geom.size;
    let mut mask = vec![false; fh * fw];
    for seam in seams {
        if seam.len() != dh {
            return Err(Error::InvalidArgument(format!(
                "seam has {} rows, tap has {dh}",
                seam.len()
            )));
        }
        for (i, &c) in seam.iter().enumerate() {
            if c >= dw {
                return Err(Error::InvalidArgument(format!("seam column {c} outside width {dw}")));
            }
            let (r0, r1) = geom.project_rows(i, i)?;
            let (c0, c1) = geom.project_cols(c, c)?;
            for r in r0..=r1 {
                mask[r * fw + c0..=r * fw + c1].iter_mut().for_each(|m| *m = true);
            }
        }
    }
    Ok(mask)
}

/// Scales `base` by `alpha` inside `mask`. Overlapping seams do not compound.
pub fn apply_mask(base: &Tensor, mask: &[bool], alpha: f32) -> Tensor {
    let (h, w, _) = base.shape();
    Tensor::from_fn(h, w, 1, |i, j, _| {
        let v = base.get(i, j, 0);
        if mask[i * w + j] {
            alpha * v
        } else {
            v
        }
    })
}

pub fn check_alpha(alpha: f32) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    Ok(())
}

/// Modified importance of the finer tap: `alpha · S` inside the receptive
/// field of any deeper seam, `S` elsewhere.
pub fn attenuate(base: &ImportanceMap, seams: &[Vec<usize>], geom: &RfGeom, alpha: f32) -> Result<ImportanceMap> {
    check_alpha(alpha)?;
    if (base.height(), base.width()) != geom.finer {
        return Err(Error::shape((base.height(), base.width()), geom.finer));
    }
    let mask = attenuation_mask(seams, geom)?;
    Ok(ImportanceMap {
        map: apply_mask(&base.map, &mask, alpha),
        tap: base.tap,
        kind: MapKind::Modified,
    })
}

/// Upsamples every map to `h × w` and sums them.
pub fn aggregate_effective(maps: &[ImportanceMap], h: usize, w: usize) -> Result<ImportanceMap> {
    if maps.is_empty() {
        return Err(Error::InvalidArgument("no importance maps to aggregate".into()));
    }
    let mut acc = Tensor::zeros(h, w, 1);
    for m in maps {
        let up = upsample_bilinear(&m.map, h, w)?;
        for (a, v) in acc.data_mut().iter_mut().zip(up.data()) {
            *a += v;
        }
    }
    Ok(ImportanceMap {
        map: acc,
        tap: 0,
        kind: MapKind::Effective,
    })
}
