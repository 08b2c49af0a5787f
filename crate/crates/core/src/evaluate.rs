//! Semantic score and the image-space seam carving baseline.

use serde::{Deserialize, Serialize};

use crate::carver::SeamPlan;
use crate::engine::tensor::Tensor;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::reconstruct::carve_image;
use crate::warp::{warp_image, WarpPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub image: String,
    pub method: String,
    pub tap: usize,
    pub ss: f64,
}

/// Largest top-left crop whose sides are multiples of `m`.
pub fn crop_to_multiple(image: &Tensor, m: usize) -> Result<Tensor> {
    let (h, w, _) = image.shape();
    let (ch, cw) = (h - h % m, w - w % m);
    if ch == 0 || cw == 0 {
        return Err(Error::BadDimensions { h, w, multiple: m });
    }
    if (ch, cw) == (h, w) {
        return Ok(image.clone());
    }
    image.crop_to(ch, cw)
}

fn frobenius(t: &Tensor) -> f64 {
    t.data().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
}

/// Ratio of the activation norms at `tap`: `||F(retargeted)|| / ||F(original)||`.
/// Both images are cropped to the network's pooling multiple first.
pub fn semantic_score(net: &Network, original: &Tensor, retargeted: &Tensor, tap: usize) -> Result<f64> {
    let m = net.pooling_factor();
    let denom = frobenius(&net.forward_tap(&crop_to_multiple(original, m)?, tap)?);
    if denom == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "original image has zero activation at tap {tap}"
        )));
    }
    let numer = frobenius(&net.forward_tap(&crop_to_multiple(retargeted, m)?, tap)?);
    Ok(numer / denom)
}

/// The comparison arm: the finest tap's seams removed directly from the
/// image, then the same warp as the full method.
pub fn baseline_image_space_carve(image: &Tensor, plan: &SeamPlan, warp: &WarpPlan) -> Result<Tensor> {
    warp_image(&carve_image(image, plan)?, warp)
}
