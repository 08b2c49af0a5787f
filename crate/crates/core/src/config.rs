//! Retargeting configuration, read from JSON and overridden by CLI flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::carver::CarveConfig;
use crate::error::{Error, Result};
use crate::network::{build_tinyvgg, weights::load_weights, Network, NetworkSpec};
use crate::reconstruct::{InitMode, OptimConfig};
use crate::warp::DEFAULT_CELL_WIDTH;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    #[default]
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetargetConfig {
    /// Target size along the axis as a fraction of the (cropped) input.
    pub width_frac: Option<f64>,
    /// Absolute target size along the axis; wins over `width_frac`.
    pub width: Option<usize>,
    pub axis: Axis,
    /// Layer indices of the network used as taps, shallowest first.
    pub taps: Vec<usize>,
    /// Loss weight per tap.
    pub lambdas: Vec<f32>,
    pub alpha: f32,
    pub tau: f32,
    pub max_ratio: f32,
    pub cell_width: usize,
    pub lr: f32,
    pub iterations: usize,
    pub refine_lr: f32,
    pub refine_iterations: usize,
    pub grid_clamp: f32,
    pub stop_window: usize,
    pub stop_rel_tol: f32,
    pub snapshot_every: usize,
    pub init: InitMode,
    pub seed: u64,
    /// `"tinyvgg"` for seeded weights, otherwise the path of a DNRW file.
    pub network: String,
    pub network_seed: u64,
    /// Tap for the semantic score; the deepest when unset.
    pub score_tap: Option<usize>,
}

impl Default for RetargetConfig {
    fn default() -> Self {
        Self {
            width_frac: None,
            width: None,
            axis: Axis::Horizontal,
            taps: build_tinyvgg().taps,
            lambdas: vec![1.0, 0.0, 0.0],
            alpha: 0.5,
            tau: 20.0,
            max_ratio: 0.5,
            cell_width: DEFAULT_CELL_WIDTH,
            lr: 0.05,
            iterations: 300,
            refine_lr: 0.05,
            refine_iterations: 100,
            grid_clamp: 2.0,
            stop_window: 25,
            stop_rel_tol: 1e-4,
            snapshot_every: 50,
            init: InitMode::Linear,
            seed: 0,
            network: "tinyvgg".into(),
            network_seed: 0,
            score_tap: None,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RetargetConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.width_frac {
            if !(f > 0.0 && f <= 1.0) {
                return Err(config_err(format!("width_frac must lie in (0, 1], got {f}")));
            }
        }
        if self.width == Some(0) {
            return Err(config_err("width must be positive"));
        }
        if self.lambdas.len() != self.taps.len() {
            return Err(config_err(format!(
                "{} lambdas for {} taps",
                self.lambdas.len(),
                self.taps.len()
            )));
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || !self.lambdas.iter().any(|&l| l > 0.0) {
            return Err(config_err("lambdas must be non-negative with a positive sum"));
        }
        self.carve().validate().map_err(|e| config_err(e.to_string()))?;
        if self.cell_width == 0 {
            return Err(config_err("cell_width must be positive"));
        }
        for (name, v) in [("lr", self.lr), ("refine_lr", self.refine_lr)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.grid_clamp.is_finite() && self.grid_clamp >= 0.0) {
            return Err(config_err(format!("grid_clamp must be non-negative, got {}", self.grid_clamp)));
        }
        if !(self.stop_rel_tol >= 0.0) {
            return Err(config_err("stop_rel_tol must be non-negative"));
        }
        if let Some(t) = self.score_tap {
            if t >= self.taps.len() {
                return Err(config_err(format!("score_tap {t} out of range")));
            }
        }
        let spec = self.network_spec()?;
        let finest_stride: usize = spec.layers[..=spec.taps[0]]
            .iter()
            .filter_map(|l| l.window().map(|(_, _, s, _)| s))
            .product();
        if finest_stride != 1 {
            return Err(config_err("the finest tap must keep the image resolution"));
        }
        Ok(())
    }

    /// Target size for an axis of length `len`.
    pub fn target_len(&self, len: usize) -> Result<usize> {
        let target = match (self.width, self.width_frac) {
            (Some(w), _) => w,
            (None, Some(f)) => (f * len as f64).round() as usize,
            (None, None) => return Err(config_err("a target width (width or width_frac) is required")),
        };
        if target == 0 || target > len {
            return Err(config_err(format!("target size {target} must lie in 1..={len}")));
        }
        Ok(target)
    }

    pub fn carve(&self) -> CarveConfig {
        CarveConfig {
            tau: self.tau,
            alpha: self.alpha,
            max_ratio: self.max_ratio,
            min_finest_width: 1,
        }
    }

    pub fn reconstruction(&self) -> OptimConfig {
        OptimConfig {
            iterations: self.iterations,
            lr: self.lr,
            window: self.stop_window,
            rel_tol: self.stop_rel_tol,
            snapshot_every: self.snapshot_every,
        }
    }

    pub fn refinement(&self) -> OptimConfig {
        OptimConfig {
            iterations: self.refine_iterations,
            lr: self.refine_lr,
            ..self.reconstruction()
        }
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let base = build_tinyvgg();
        NetworkSpec::new(base.name, base.layers, self.taps.clone()).map_err(|e| config_err(e.to_string()))
    }

    pub fn score_tap(&self) -> usize {
        self.score_tap.unwrap_or(self.taps.len() - 1)
    }

    pub fn load_network(&self) -> Result<Network> {
        let spec = self.network_spec()?;
        if self.network == "tinyvgg" {
            return Network::seeded(spec, self.network_seed);
        }
        Ok(load_weights(spec, &PathBuf::from(&self.network))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RetargetConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.taps, vec![3, 8, 13]);
        assert_eq!(cfg.cell_width, 16);
        assert_eq!(cfg.score_tap(), 2);
    }

    #[test]
    fn json_round_trip_and_partial_files() {
        let cfg = RetargetConfig {
            width_frac: Some(0.75),
            ..Default::default()
        };
        assert_eq!(RetargetConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let partial = RetargetConfig::from_json(r#"{"alpha": 0.25, "init": "seam"}"#).unwrap();
        assert_eq!(partial.alpha, 0.25);
        assert_eq!(partial.init, InitMode::Seam);
        assert_eq!(partial.tau, 20.0);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let bad = [
            RetargetConfig { alpha: 1.0, ..Default::default() },
            RetargetConfig { tau: 0.0, ..Default::default() },
            RetargetConfig { lambdas: vec![0.0, 0.0, 0.0], ..Default::default() },
            RetargetConfig { lambdas: vec![1.0], ..Default::default() },
            RetargetConfig { width_frac: Some(1.5), ..Default::default() },
            RetargetConfig { taps: vec![3, 8, 20], ..Default::default() },
            RetargetConfig { taps: vec![5, 8], lambdas: vec![1.0, 0.0], ..Default::default() },
        ];
        for cfg in bad {
            let err = cfg.validate().unwrap_err();
            assert_eq!(err.exit_code(), 3, "{err}");
        }
        assert_eq!(RetargetConfig::from_json("{\"nope\": 1}").unwrap_err().exit_code(), 3);
    }

    #[test]
    fn target_resolution() {
        let mut cfg = RetargetConfig {
            width_frac: Some(0.75),
            ..Default::default()
        };
        assert_eq!(cfg.target_len(96).unwrap(), 72);
        cfg.width = Some(50);
        assert_eq!(cfg.target_len(96).unwrap(), 50);
        assert!(cfg.target_len(40).is_err());
        assert!(RetargetConfig::default().target_len(10).is_err());
    }
}
