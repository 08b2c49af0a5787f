//! Recovering an image from target feature maps: pixel optimization with
//! Adam, then refinement of a bilinear sampling grid in front of the network.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::carver::{remove_seam, SeamPlan};
use crate::engine::adam::{AdamParams, AdamState};
use crate::engine::backprop::{feature_loss, loss_and_gradient, TapTarget};
use crate::engine::sampling::{bilinear_sample, bilinear_sample_grid_backward, resample_width, SamplingGrid};
use crate::engine::tensor::Tensor;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::rng::XorShift64Star;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    #[default]
    Linear,
    Seam,
    Noise,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "seam" => Ok(Self::Seam),
            "noise" => Ok(Self::Noise),
            other => Err(Error::Config(format!("unknown init mode {other:?}"))),
        }
    }
}

/// Removes the finest tap's seams from the image itself.
pub fn carve_image(image: &Tensor, plan: &SeamPlan) -> Result<Tensor> {
    let finest = &plan.taps[0];
    if (finest.height, finest.original_width) != (image.height(), image.width()) {
        return Err(Error::shape(
            (finest.height, finest.original_width),
            (image.height(), image.width()),
        ));
    }
    plan.finest_seams().try_fold(image.clone(), |img, s| remove_seam(&img, s))
}

/// Starting point for reconstruction at `width` columns.
pub fn init_estimate(image: &Tensor, mode: InitMode, width: usize, plan: Option<&SeamPlan>, seed: u64) -> Result<Tensor> {
    match mode {
        InitMode::Linear => resample_width(image, width),
        InitMode::Seam => {
            let plan = plan.ok_or_else(|| Error::InvalidArgument("seam initialization needs a seam plan".into()))?;
            let out = carve_image(image, plan)?;
            if out.width() != width {
                return Err(Error::shape(width, out.width()));
            }
            Ok(out)
        }
        InitMode::Noise => {
            let mut rng = XorShift64Star::new(seed);
            Ok(Tensor::from_fn(image.height(), width, image.channels(), |_, _, _| rng.next_f32()))
        }
    }
}

/// Target maps per tap, finest first, with their loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFeatures {
    pub maps: Vec<Tensor>,
    pub weights: Vec<f32>,
}

impl TargetFeatures {
    pub fn new(maps: Vec<Tensor>, weights: Vec<f32>) -> Result<Self> {
        if maps.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} target maps but {} weights",
                maps.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tap weights must be non-negative with a positive sum, got {weights:?}"
            )));
        }
        Ok(Self { maps, weights })
    }

    pub fn taps(&self) -> Vec<TapTarget<'_>> {
        self.maps
            .iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(tap, (target, &weight))| TapTarget { tap, target, weight })
            .collect()
    }

    pub fn loss(&self, net: &Network, x: &Tensor) -> Result<f32> {
        feature_loss(net, x, &self.taps())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub iterations: usize,
    pub lr: f32,
    /// Stop when the best loss improved by less than `rel_tol` (relative)
    /// over the last `window` iterations.
    pub window: usize,
    pub rel_tol: f32,
    /// Keep the current iterate every this many iterations (0 disables).
    pub snapshot_every: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            lr: 0.05,
            window: 25,
            rel_tol: 1e-4,
            snapshot_every: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimRun {
    /// Loss before the first step followed by the loss after every step.
    pub trace: Vec<f32>,
    pub snapshots: Vec<(usize, Tensor)>,
    pub iterations: usize,
    pub best_iteration: usize,
    pub elapsed: Duration,
}

impl OptimRun {
    pub fn initial_loss(&self) -> f32 {
        self.trace[0]
    }

    pub fn best_loss(&self) -> f32 {
        self.trace[self.best_iteration]
    }
}

/// Bookkeeping shared by both optimization loops.
struct Tracker<T> {
    cfg: OptimConfig,
    trace: Vec<f32>,
    best_trace: Vec<f32>,
    best: T,
    best_iteration: usize,
    snapshots: Vec<(usize, Tensor)>,
    start: Instant,
}

impl<T: Clone> Tracker<T> {
    fn new(cfg: OptimConfig, loss: f32, state: &T, snapshot: Tensor) -> Result<Self> {
        check_loss(0, loss)?;
        let snapshots = if cfg.snapshot_every > 0 { vec![(0, snapshot)] } else { Vec::new() };
        Ok(Self {
            cfg,
            trace: vec![loss],
            best_trace: vec![loss],
            best: state.clone(),
            best_iteration: 0,
            snapshots,
            start: Instant::now(),
        })
    }

    /// Records iteration `it`; returns `true` when optimization should stop.
    fn record(&mut self, it: usize, loss: f32, state: &T, snapshot: impl FnOnce() -> Tensor) -> Result<bool> {
        check_loss(it, loss)?;
        self.trace.push(loss);
        let prev_best = *self.best_trace.last().unwrap();
        if loss < prev_best {
            self.best = state.clone();
            self.best_iteration = it;
        }
        self.best_trace.push(loss.min(prev_best));
        if self.cfg.snapshot_every > 0 && it.is_multiple_of(self.cfg.snapshot_every) {
            self.snapshots.push((it, snapshot()));
        }
        let best = *self.best_trace.last().unwrap();
        if best == 0.0 {
            return Ok(true);
        }
        if self.cfg.window > 0 && it >= self.cfg.window {
            let before = self.best_trace[it - self.cfg.window];
            if (before - best) / before < self.cfg.rel_tol {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn finish(self) -> (T, OptimRun) {
        let iterations = self.trace.len() - 1;
        (
            self.best,
            OptimRun {
                trace: self.trace,
                snapshots: self.snapshots,
                iterations,
                best_iteration: self.best_iteration,
                elapsed: self.start.elapsed(),
            },
        )
    }
}

fn check_loss(iteration: usize, loss: f32) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { iteration, loss })
    }
}

fn adam_update(state: &mut AdamState, param: &mut [f32], grad: &[f32], p: &AdamParams, it: usize) -> Result<()> {
    state.update(param, grad, p).map_err(|e| match e {
        Error::NonFinite(_) => Error::Divergence {
            iteration: it,
            loss: f32::NAN,
        },
        other => other,
    })
}

/// Optimizes the pixels of `init` so that its features match `targets`.
/// Pixels are kept in `[0, 1]`; the best iterate seen is returned.
pub fn reconstruct(net: &Network, init: &Tensor, targets: &TargetFeatures, cfg: &OptimConfig) -> Result<(Tensor, OptimRun)> {
    let taps = targets.taps();
    let params = AdamParams::with_lr(cfg.lr);
    let mut x = init.clone();
    let mut lg = loss_and_gradient(net, &x, &taps)?;
    let mut tracker = Tracker::new(*cfg, lg.loss, &x, x.clone())?;
    if lg.loss > 0.0 {
        let mut state = AdamState::for_tensor(&x);
        for it in 1..=cfg.iterations {
            adam_update(&mut state, x.data_mut(), lg.grad.data(), &params, it)?;
            x.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            lg = loss_and_gradient(net, &x, &taps)?;
            if tracker.record(it, lg.loss, &x, || x.clone())? {
                break;
            }
        }
    }
    Ok(tracker.finish())
}

/// Keeps the pixels of `image` fixed and optimizes a sampling grid in front
/// of the network. Displacements stay within `clamp` pixels of identity.
pub fn refine(
    net: &Network,
    image: &Tensor,
    targets: &TargetFeatures,
    cfg: &OptimConfig,
    clamp: f32,
) -> Result<(Tensor, SamplingGrid, OptimRun)> {
    if !(clamp >= 0.0) {
        return Err(Error::InvalidArgument(format!("grid clamp must be non-negative, got {clamp}")));
    }
    let taps = targets.taps();
    let params = AdamParams::with_lr(cfg.lr);
    let (h, w, _) = image.shape();
    let mut grid = SamplingGrid::identity(h, w);
    let mut sampled = bilinear_sample(image, &grid);
    let mut lg = loss_and_gradient(net, &sampled, &taps)?;
    let mut tracker = Tracker::new(*cfg, lg.loss, &grid, sampled.clone())?;
    if lg.loss > 0.0 {
        let mut sx = AdamState::new(h * w);
        let mut sy = AdamState::new(h * w);
        for it in 1..=cfg.iterations {
            let (gx, gy) = bilinear_sample_grid_backward(image, &grid, &lg.grad)?;
            adam_update(&mut sx, grid.xs_mut(), &gx, &params, it)?;
            adam_update(&mut sy, grid.ys_mut(), &gy, &params, it)?;
            grid.clamp_displacement(clamp);
            sampled = bilinear_sample(image, &grid);
            lg = loss_and_gradient(net, &sampled, &taps)?;
            if tracker.record(it, lg.loss, &grid, || sampled.clone())? {
                break;
            }
        }
    }
    let (grid, run) = tracker.finish();
    Ok((bilinear_sample(image, &grid), grid, run))
}
