//! End-to-end retargeting, inspection and scoring.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::carver::{self, SeamPlan, SeamPlanDoc};
use crate::config::{Axis, RetargetConfig};
use crate::engine::tensor::Tensor;
use crate::error::{Error, Result};
use crate::evaluate::{crop_to_multiple, semantic_score};
use crate::image_io::{encode_ppm, gray_visual, seam_overlay};
use crate::importance::{aggregate_effective, base_map, ImportanceMap};
use crate::network::Network;
use crate::reconstruct::{init_estimate, reconstruct, refine, OptimRun, TargetFeatures};
use crate::warp::{column_sigmas, warp_image, WarpPlan};

/// Runs `f` on a thread pool sized by `DNR_THREADS` (all cores when unset).
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("DNR_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("DNR_THREADS must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Size {
    pub height: usize,
    pub width: usize,
}

impl Size {
    fn of(t: &Tensor) -> Self {
        Self {
            height: t.height(),
            width: t.width(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossSummary {
    pub iterations: usize,
    pub initial: f32,
    pub best: f32,
    pub best_iteration: usize,
    pub last: f32,
}

impl LossSummary {
    fn of(run: &OptimRun) -> Self {
        Self {
            iterations: run.iterations,
            initial: run.initial_loss(),
            best: run.best_loss(),
            best_iteration: run.best_iteration,
            last: *run.trace.last().unwrap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub forward_ms: f64,
    pub plan_ms: f64,
    pub reconstruct_ms: f64,
    pub refine_ms: f64,
    pub warp_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticScore {
    pub tap: usize,
    pub ss: f64,
}

/// Sizes are reported along the processing axis: for vertical runs the
/// image is transposed, so `width` is the original height.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetargetReport {
    pub axis: Axis,
    pub input: Size,
    pub cropped: Size,
    pub target_width: usize,
    pub identity: bool,
    pub intermediate_width: usize,
    pub rho: f64,
    pub seam_counts: Vec<usize>,
    pub warnings: Vec<String>,
    pub reconstruction: Option<LossSummary>,
    pub refinement: Option<LossSummary>,
    pub sigma: Vec<f64>,
    pub cell_targets: Vec<usize>,
    pub semantic_score: SemanticScore,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

#[derive(Debug, Clone, Default)]
pub struct RetargetOptions {
    /// Replay this seam plan instead of planning.
    pub plan: Option<SeamPlanDoc>,
    pub timings: bool,
}

#[derive(Debug, Clone)]
pub struct RetargetOutput {
    pub image: Tensor,
    pub report: RetargetReport,
    pub plan: Option<SeamPlan>,
    pub warp: Option<WarpPlan>,
    pub reconstruction: Option<OptimRun>,
    pub refinement: Option<OptimRun>,
    /// Cropped input in processing orientation.
    pub cropped: Tensor,
    pub reconstructed: Option<Tensor>,
    pub refined: Option<Tensor>,
}

fn orient(image: &Tensor, axis: Axis) -> Tensor {
    match axis {
        Axis::Horizontal => image.clone(),
        Axis::Vertical => image.transpose(),
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Effective importance of carved feature maps at `h × w`.
pub fn effective_of(maps: &[Tensor], h: usize, w: usize) -> Result<ImportanceMap> {
    let base: Vec<ImportanceMap> = maps.iter().enumerate().map(|(tap, m)| base_map(m, tap)).collect();
    aggregate_effective(&base, h, w)
}

/// Narrows `image` along the configured axis.
pub fn retarget(net: &Network, cfg: &RetargetConfig, image: &Tensor, opts: &RetargetOptions) -> Result<RetargetOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let input = orient(image, cfg.axis);
    let cropped = crop_to_multiple(&input, net.pooling_factor())?;
    let (h, w, _) = cropped.shape();
    let target = cfg.target_len(w)?;
    let score_tap = cfg.score_tap();

    let mut report = RetargetReport {
        axis: cfg.axis,
        input: Size::of(&input),
        cropped: Size::of(&cropped),
        target_width: target,
        identity: target == w,
        intermediate_width: w,
        rho: 0.0,
        seam_counts: vec![0; net.tap_count()],
        warnings: Vec::new(),
        reconstruction: None,
        refinement: None,
        sigma: Vec::new(),
        cell_targets: Vec::new(),
        semantic_score: SemanticScore { tap: score_tap, ss: 1.0 },
        timings: None,
    };

    if target == w {
        report.semantic_score.ss = semantic_score(net, &cropped, &cropped, score_tap)?;
        if opts.timings {
            report.timings = Some(Timings {
                forward_ms: 0.0,
                plan_ms: 0.0,
                reconstruct_ms: 0.0,
                refine_ms: 0.0,
                warp_ms: 0.0,
                total_ms: ms(start),
            });
        }
        return Ok(RetargetOutput {
            image: orient(&cropped, cfg.axis),
            report,
            plan: None,
            warp: None,
            reconstruction: None,
            refinement: None,
            cropped,
            reconstructed: None,
            refined: None,
        });
    }

    let t = Instant::now();
    let hier = net.forward_collect(&cropped)?;
    let forward_ms = ms(t);

    let t = Instant::now();
    let plan = match &opts.plan {
        Some(doc) => carver::replay(&hier, doc, cfg.alpha)?,
        None => {
            let mut carve = cfg.carve();
            carve.min_finest_width = target;
            carver::plan(&hier, &carve)?
        }
    };
    let plan_ms = ms(t);
    let mid = plan.intermediate_width;
    if mid < target {
        return Err(Error::InvalidArgument(format!(
            "seam plan narrows to {mid} columns, below the target {target}"
        )));
    }

    let t = Instant::now();
    let init = init_estimate(&cropped, cfg.init, mid, Some(&plan), cfg.seed)?;
    let targets = TargetFeatures::new(plan.targets.clone(), cfg.lambdas.clone())?;
    let (recon, recon_run) = reconstruct(net, &init, &targets, &cfg.reconstruction())?;
    let reconstruct_ms = ms(t);

    let t = Instant::now();
    let (refined, _grid, refine_run) = refine(net, &recon, &targets, &cfg.refinement(), cfg.grid_clamp)?;
    let refine_ms = ms(t);

    let t = Instant::now();
    let effective = effective_of(&plan.targets, h, mid)?;
    let warp = column_sigmas(&effective, cfg.cell_width, target)?;
    let out = warp_image(&refined, &warp)?;
    let warp_ms = ms(t);

    report.intermediate_width = mid;
    report.rho = plan.rho;
    report.seam_counts = plan.counts();
    report.warnings = plan.warnings.clone();
    report.reconstruction = Some(LossSummary::of(&recon_run));
    report.refinement = Some(LossSummary::of(&refine_run));
    report.sigma = warp.sigma.clone();
    report.cell_targets = warp.targets.clone();
    report.semantic_score.ss = semantic_score(net, &cropped, &out, score_tap)?;
    if opts.timings {
        report.timings = Some(Timings {
            forward_ms,
            plan_ms,
            reconstruct_ms,
            refine_ms,
            warp_ms,
            total_ms: ms(start),
        });
    }
    Ok(RetargetOutput {
        image: orient(&out, cfg.axis),
        report,
        plan: Some(plan),
        warp: Some(warp),
        reconstruction: Some(recon_run),
        refinement: Some(refine_run),
        cropped,
        reconstructed: Some(recon),
        refined: Some(refined),
    })
}

fn write_trace(path: &Path, run: &OptimRun) -> Result<()> {
    let mut csv = String::from("iteration,loss\n");
    for (i, l) in run.trace.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    fs::write(path, csv)?;
    Ok(())
}

/// Writes numbered snapshot PPMs and loss traces of both optimization stages.
pub fn write_snapshots(dir: &Path, out: &RetargetOutput, axis: Axis) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (stage, run) in [("reconstruct", &out.reconstruction), ("refine", &out.refinement)] {
        let Some(run) = run else { continue };
        for (it, img) in &run.snapshots {
            fs::write(dir.join(format!("{stage}_{it:05}.ppm")), encode_ppm(&orient(img, axis))?)?;
        }
        write_trace(&dir.join(format!("{stage}_loss.csv")), run)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Inspection {
    pub plan: SeamPlan,
    pub warp: WarpPlan,
    /// Sum of the base importance of every tap at image resolution.
    pub effective: ImportanceMap,
}

/// Plans seams and the warp without synthesizing an image, and writes
/// visualizations plus both plans as JSON into `dir`.
pub fn inspect(net: &Network, cfg: &RetargetConfig, image: &Tensor, dir: &Path) -> Result<Inspection> {
    cfg.validate()?;
    let cropped = crop_to_multiple(&orient(image, cfg.axis), net.pooling_factor())?;
    let (h, w, _) = cropped.shape();
    let target = cfg.target_len(w)?;
    let hier = net.forward_collect(&cropped)?;
    let mut carve = cfg.carve();
    carve.min_finest_width = target;
    let plan = carver::plan(&hier, &carve)?;
    let warp = column_sigmas(&effective_of(&plan.targets, h, plan.intermediate_width)?, cfg.cell_width, target)?;
    let effective = effective_of(&hier.maps, h, w)?;

    fs::create_dir_all(dir)?;
    let save = |name: String, t: &Tensor| -> Result<()> {
        fs::write(dir.join(name), encode_ppm(&orient(t, cfg.axis))?)?;
        Ok(())
    };
    for (tap, map) in hier.maps.iter().enumerate() {
        let base = base_map(map, tap);
        save(format!("importance_tap{tap}.ppm"), &gray_visual(&base.map))?;
        save(format!("seams_tap{tap}.ppm"), &seam_overlay(&plan.carver_maps[tap].map, &plan.taps[tap]))?;
        if tap < hier.deepest() {
            save(format!("modified_tap{tap}.ppm"), &gray_visual(&plan.carver_maps[tap].map))?;
        }
    }
    save("effective.ppm".into(), &gray_visual(&effective.map))?;
    fs::write(dir.join("seam_plan.json"), serde_json::to_string_pretty(&plan.to_doc()).unwrap())?;
    fs::write(dir.join("warp_plan.json"), serde_json::to_string_pretty(&warp).unwrap())?;
    Ok(Inspection { plan, warp, effective })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(h: usize, w: usize) -> Tensor {
        Tensor::from_fn(h, w, 3, |i, j, k| {
            let v = ((i * 37 + j * 11 + k * 5) % 17) as f32 / 16.0;
            if (14..18).contains(&j) {
                0.0
            } else {
                v
            }
        })
    }

    #[test]
    fn identity_target_returns_cropped_input() {
        let net = Network::tinyvgg(0);
        let img = textured(18, 22);
        let cfg = RetargetConfig {
            width_frac: Some(1.0),
            ..Default::default()
        };
        let out = retarget(&net, &cfg, &img, &RetargetOptions::default()).unwrap();
        assert_eq!(out.image, img.crop_to(16, 20).unwrap());
        assert!(out.report.identity);
        assert_eq!(out.report.semantic_score.ss, 1.0);
        assert!(out.report.timings.is_none());
    }

    #[test]
    fn output_has_requested_width() {
        let net = Network::tinyvgg(0);
        let img = textured(16, 32);
        let cfg = RetargetConfig {
            width: Some(21),
            iterations: 5,
            refine_iterations: 3,
            ..Default::default()
        };
        let out = retarget(&net, &cfg, &img, &RetargetOptions::default()).unwrap();
        assert_eq!(out.image.shape(), (16, 21, 3));
        assert_eq!(out.report.cell_targets.iter().sum::<usize>(), 21);
        assert!(out.report.intermediate_width >= 21);
        assert_eq!(out.report.reconstruction.as_ref().unwrap().iterations, 5);
    }

    #[test]
    fn vertical_axis_is_transposed_horizontal() {
        let net = Network::tinyvgg(0);
        let img = textured(16, 24);
        let cfg = RetargetConfig {
            width_frac: Some(0.75),
            iterations: 4,
            refine_iterations: 2,
            ..Default::default()
        };
        let horizontal = retarget(&net, &cfg, &img.transpose(), &RetargetOptions::default()).unwrap();
        let vertical = retarget(
            &net,
            &RetargetConfig {
                axis: Axis::Vertical,
                ..cfg.clone()
            },
            &img,
            &RetargetOptions::default(),
        )
        .unwrap();
        assert_eq!(vertical.image, horizontal.image.transpose());
        assert_eq!(vertical.image.shape(), (12, 24, 3));
    }
}
