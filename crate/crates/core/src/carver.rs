//! Seam search and removal on importance maps, and hierarchical seam
//! planning across the network taps.

use serde::{Deserialize, Serialize};

use crate::engine::tensor::Tensor;
use crate::error::{Error, Result};
use crate::importance::{apply_mask, attenuation_mask, channel_l2, check_alpha, ImportanceMap, MapKind};
use crate::network::FeatureHierarchy;

/// One column index per row, top to bottom, 8-connected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seam(Vec<usize>);

impl Seam {
    pub fn new(cols: Vec<usize>, width: usize) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::InvalidArgument("seam must cover at least one row".into()));
        }
        if let Some(&c) = cols.iter().find(|&&c| c >= width) {
            return Err(Error::InvalidArgument(format!("seam column {c} outside width {width}")));
        }
        if let Some(i) = cols.windows(2).position(|p| p[0].abs_diff(p[1]) > 1) {
            return Err(Error::InvalidArgument(format!(
                "seam is disconnected between rows {i} and {}",
                i + 1
            )));
        }
        Ok(Self(cols))
    }

    pub fn cols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Minimum-cost vertical seam by row-wise dynamic programming. Ties go to the
/// smaller column, both when choosing a predecessor and at the bottom row.
pub fn min_seam(map: &Tensor) -> Result<(Seam, f32)> {
    let (h, w, c) = map.shape();
    if c != 1 {
        return Err(Error::InvalidArgument(format!("importance map must have one channel, got {c}")));
    }
    if w < 2 {
        return Err(Error::InvalidArgument(format!("seam search needs width >= 2, got {w}")));
    }
    let mut cost: Vec<f32> = map.row(0).to_vec();
    let mut next = vec![0.0f32; w];
    let mut parent = vec![0usize; h * w];
    for i in 1..h {
        let row = map.row(i);
        for j in 0..w {
            let lo = j.saturating_sub(1);
            let hi = (j + 1).min(w - 1);
            let mut best = lo;
            for p in lo + 1..=hi {
                if cost[p] < cost[best] {
                    best = p;
                }
            }
            parent[i * w + j] = best;
            next[j] = cost[best] + row[j];
        }
        std::mem::swap(&mut cost, &mut next);
    }
    let mut end = 0;
    for j in 1..w {
        if cost[j] < cost[end] {
            end = j;
        }
    }
    let total = cost[end];
    let mut cols = vec![0usize; h];
    cols[h - 1] = end;
    for i in (1..h).rev() {
        cols[i - 1] = parent[i * w + cols[i]];
    }
    Ok((Seam(cols), total))
}

/// Removes the seam's position from every row and channel.
pub fn remove_seam(feature: &Tensor, seam: &Seam) -> Result<Tensor> {
    let (h, w, c) = feature.shape();
    if seam.len() != h {
        return Err(Error::InvalidArgument(format!(
            "seam has {} rows, tensor has {h}",
            seam.len()
        )));
    }
    if w < 2 {
        return Err(Error::InvalidArgument("cannot remove a seam from a width-1 tensor".into()));
    }
    Seam::new(seam.0.clone(), w)?;
    let mut data = Vec::with_capacity(h * (w - 1) * c);
    for (i, &cut) in seam.cols().iter().enumerate() {
        let row = feature.row(i);
        data.extend_from_slice(&row[..cut * c]);
        data.extend_from_slice(&row[(cut + 1) * c..]);
    }
    Ok(Tensor::from_raw(h, w - 1, c, data))
}

/// Nearest-rank percentile: the smallest value with at least `tau` percent of
/// the values at or below it.
pub fn percentile_nearest_rank(values: &[f32], tau: f32) -> f32 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    let n = sorted.len();
    let rank = ((tau as f64 / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Whether removing `seam` keeps seam carving below the importance threshold.
///
/// The seam's mean importance must be strictly below the `tau`-th percentile
/// of the map. Zero-importance seams are always admissible and `tau = 100`
/// disables the test.
pub fn seam_admissible(map: &Tensor, seam: &Seam, tau: f32) -> bool {
    if tau >= 100.0 {
        return true;
    }
    let sum: f64 = seam
        .cols()
        .iter()
        .enumerate()
        .map(|(i, &j)| map.get(i, j, 0) as f64)
        .sum();
    let mean = sum / seam.len() as f64;
    if mean == 0.0 {
        return true;
    }
    mean < percentile_nearest_rank(map.data(), tau) as f64
}

/// Seams to remove at a tap of width `width` for removal ratio `rho`.
pub fn seam_count(rho: f64, width: usize) -> usize {
    (rho * width as f64).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarveConfig {
    /// Percentile threshold in `(0, 100]`.
    pub tau: f32,
    /// Attenuation inside deeper seams' receptive fields, in `[0, 1)`.
    pub alpha: f32,
    /// Largest fraction of any tap's width that may be carved.
    pub max_ratio: f32,
    /// Smallest allowed width of the finest tap after carving.
    pub min_finest_width: usize,
}

impl Default for CarveConfig {
    fn default() -> Self {
        Self {
            tau: 20.0,
            alpha: 0.5,
            max_ratio: 0.5,
            min_finest_width: 1,
        }
    }
}

impl CarveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 100.0) {
            return Err(Error::InvalidArgument(format!("tau must lie in (0, 100], got {}", self.tau)));
        }
        check_alpha(self.alpha)?;
        if !(self.max_ratio > 0.0 && self.max_ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "max_ratio must lie in (0, 1), got {}",
                self.max_ratio
            )));
        }
        Ok(())
    }
}

/// A removed seam in removal-time coordinates plus the same positions in the
/// tap's original (uncarved) coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedSeam {
    pub seam: Seam,
    pub original: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapCarve {
    pub tap: usize,
    pub height: usize,
    pub original_width: usize,
    pub seams: Vec<RecordedSeam>,
}

impl TapCarve {
    pub fn count(&self) -> usize {
        self.seams.len()
    }

    pub fn original_seams(&self) -> Vec<Vec<usize>> {
        self.seams.iter().map(|s| s.original.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeamPlan {
    /// Finest tap first.
    pub taps: Vec<TapCarve>,
    /// Seams removed at the deepest tap over its width.
    pub rho: f64,
    /// Finest-tap width after carving.
    pub intermediate_width: usize,
    /// Carved feature maps, finest first.
    pub targets: Vec<Tensor>,
    /// Importance maps the carver started from at each tap (base at the
    /// deepest, attenuated elsewhere), in original coordinates.
    pub carver_maps: Vec<ImportanceMap>,
    pub warnings: Vec<String>,
}

impl SeamPlan {
    pub fn counts(&self) -> Vec<usize> {
        self.taps.iter().map(TapCarve::count).collect()
    }

    pub fn finest_seams(&self) -> impl Iterator<Item = &Seam> {
        self.taps[0].seams.iter().map(|s| &s.seam)
    }

    pub fn to_doc(&self) -> SeamPlanDoc {
        SeamPlanDoc {
            rho: self.rho,
            intermediate_width: self.intermediate_width,
            taps: self
                .taps
                .iter()
                .map(|t| TapDoc {
                    tap: t.tap,
                    height: t.height,
                    width: t.original_width,
                    count: t.count(),
                    seams: t
                        .seams
                        .iter()
                        .map(|s| SeamDoc {
                            rows: (0..t.height).collect(),
                            cols: s.seam.cols().to_vec(),
                            original_cols: s.original.clone(),
                        })
                        .collect(),
                })
                .collect(),
            warnings: self.warnings.clone(),
        }
    }
}

/// JSON form of a [`SeamPlan`] without the carved tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamPlanDoc {
    pub rho: f64,
    pub intermediate_width: usize,
    pub taps: Vec<TapDoc>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapDoc {
    pub tap: usize,
    pub height: usize,
    pub width: usize,
    pub count: usize,
    pub seams: Vec<SeamDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamDoc {
    pub rows: Vec<usize>,
    /// Columns at removal time (the map already narrowed by earlier seams).
    pub cols: Vec<usize>,
    /// The same positions in the uncarved map.
    pub original_cols: Vec<usize>,
}

/// A feature map being carved, with the original column of every remaining
/// position.
struct Carving {
    current: Tensor,
    origin: Vec<Vec<usize>>,
}

impl Carving {
    fn new(map: &Tensor) -> Self {
        Self {
            current: map.clone(),
            origin: vec![(0..map.width()).collect(); map.height()],
        }
    }

    fn remove(&mut self, seam: Seam) -> Result<RecordedSeam> {
        let next = remove_seam(&self.current, &seam)?;
        let original = seam
            .cols()
            .iter()
            .zip(&mut self.origin)
            .map(|(&c, row)| row.remove(c))
            .collect();
        self.current = next;
        Ok(RecordedSeam { seam, original })
    }

    /// Importance of the current map with `mask` (original coordinates)
    /// applied through the column bookkeeping.
    fn importance(&self, mask: Option<(&[bool], usize)>, alpha: f32) -> Tensor {
        let s = channel_l2(&self.current);
        match mask {
            None => s,
            Some((mask, orig_w)) => {
                let (h, w, _) = s.shape();
                Tensor::from_fn(h, w, 1, |i, j, _| {
                    let v = s.get(i, j, 0);
                    if mask[i * orig_w + self.origin[i][j]] {
                        alpha * v
                    } else {
                        v
                    }
                })
            }
        }
    }
}

/// Carves the hierarchy from the deepest tap to the finest.
///
/// At the deepest tap the first seam is always removed; further seams are
/// removed while the next one is admissible and the caps allow. The ratio of
/// removed seams to width is then reproduced at every finer tap, whose seams
/// are searched on importance attenuated inside the receptive fields of the
/// deeper tap's seams. The importance map and the seam are recomputed after
/// every removal.
pub fn plan(hier: &FeatureHierarchy, cfg: &CarveConfig) -> Result<SeamPlan> {
    cfg.validate()?;
    let deepest = hier.deepest();
    let mut warnings = Vec::new();
    let w_deep = hier.maps[deepest].width();
    let w_fine = hier.maps[0].width();

    let allowed_fine = w_fine.saturating_sub(cfg.min_finest_width.max(1));
    let mut max_deep = ((cfg.max_ratio as f64 * w_deep as f64).floor() as usize).min(w_deep - 1);
    while max_deep > 0 && seam_count(max_deep as f64 / w_deep as f64, w_fine) > allowed_fine {
        max_deep -= 1;
    }
    if max_deep == 0 {
        warnings.push(format!(
            "no seam can be removed at tap {deepest} without exceeding the width budget"
        ));
    }

    let mut carving = Carving::new(&hier.maps[deepest]);
    let mut deep_seams = Vec::new();
    let mut carver_maps = vec![None; hier.len()];
    while deep_seams.len() < max_deep {
        let s = carving.importance(None, cfg.alpha);
        if carver_maps[deepest].is_none() {
            carver_maps[deepest] = Some(s.clone());
        }
        let (seam, _) = min_seam(&s)?;
        if !deep_seams.is_empty() && !seam_admissible(&s, &seam, cfg.tau) {
            break;
        }
        deep_seams.push(carving.remove(seam)?);
    }
    let carver_maps_deep = carver_maps[deepest]
        .take()
        .unwrap_or_else(|| channel_l2(&hier.maps[deepest]));

    let rho = deep_seams.len() as f64 / w_deep as f64;
    let mut taps = vec![None; hier.len()];
    let mut targets = vec![None; hier.len()];
    let mut maps = vec![None; hier.len()];
    maps[deepest] = Some(ImportanceMap {
        map: carver_maps_deep,
        tap: deepest,
        kind: MapKind::Base,
    });
    taps[deepest] = Some(TapCarve {
        tap: deepest,
        height: hier.maps[deepest].height(),
        original_width: w_deep,
        seams: deep_seams,
    });
    targets[deepest] = Some(carving.current);

    for tap in (0..deepest).rev() {
        let width = hier.maps[tap].width();
        let mut k = seam_count(rho, width);
        let cap = ((cfg.max_ratio as f64 * width as f64).floor() as usize).min(width - 1);
        if k > cap {
            warnings.push(format!("tap {tap}: {k} seams requested, clamped to {cap}"));
            k = cap;
        }
        let deeper = taps[tap + 1].as_ref().unwrap();
        let (carve, target, map) = carve_tap(hier, tap, &deeper.original_seams(), cfg.alpha, |c, s| {
            if c.seams.len() == k {
                return Ok(None);
            }
            Ok(Some(min_seam(s)?.0))
        })?;
        taps[tap] = Some(carve);
        targets[tap] = Some(target);
        maps[tap] = Some(map);
    }

    let taps: Vec<TapCarve> = taps.into_iter().map(Option::unwrap).collect();
    let intermediate_width = w_fine - taps[0].count();
    Ok(SeamPlan {
        taps,
        rho,
        intermediate_width,
        targets: targets.into_iter().map(Option::unwrap).collect(),
        carver_maps: maps.into_iter().map(Option::unwrap).collect(),
        warnings,
    })
}

/// Carves one finer tap. `next` sees the seams removed so far and the
/// current (attenuated) importance, and returns the next seam or `None`.
fn carve_tap(
    hier: &FeatureHierarchy,
    tap: usize,
    deeper_seams: &[Vec<usize>],
    alpha: f32,
    mut next: impl FnMut(&TapCarve, &Tensor) -> Result<Option<Seam>>,
) -> Result<(TapCarve, Tensor, ImportanceMap)> {
    let map = &hier.maps[tap];
    let mask = attenuation_mask(deeper_seams, &hier.geoms[tap + 1])?;
    let initial = ImportanceMap {
        map: apply_mask(&channel_l2(map), &mask, alpha),
        tap,
        kind: MapKind::Modified,
    };
    let mut carving = Carving::new(map);
    let mut carve = TapCarve {
        tap,
        height: map.height(),
        original_width: map.width(),
        seams: Vec::new(),
    };
    loop {
        let s = carving.importance(Some((&mask, map.width())), alpha);
        match next(&carve, &s)? {
            Some(seam) => carve.seams.push(carving.remove(seam)?),
            None => break,
        }
    }
    Ok((carve, carving.current, initial))
}

/// Rebuilds a plan from its JSON form by replaying the recorded seams on
/// `hier`. Fails if the document does not fit the hierarchy.
pub fn replay(hier: &FeatureHierarchy, doc: &SeamPlanDoc, alpha: f32) -> Result<SeamPlan> {
    check_alpha(alpha)?;
    if doc.taps.len() != hier.len() {
        return Err(Error::InvalidArgument(format!(
            "plan has {} taps, network has {}",
            doc.taps.len(),
            hier.len()
        )));
    }
    let mismatch = |tap: usize, what: &str| Error::InvalidArgument(format!("plan tap {tap}: {what}"));
    let to_seam = |tap: usize, s: &SeamDoc, width: usize| -> Result<Seam> {
        Seam::new(s.cols.clone(), width).map_err(|e| mismatch(tap, &e.to_string()))
    };
    let deepest = hier.deepest();
    let mut taps: Vec<Option<TapCarve>> = vec![None; hier.len()];
    let mut targets = vec![None; hier.len()];
    let mut maps = vec![None; hier.len()];

    for tap in (0..=deepest).rev() {
        let d = &doc.taps[tap];
        let map = &hier.maps[tap];
        if d.tap != tap || d.width != map.width() || d.height != map.height() || d.count != d.seams.len() {
            return Err(mismatch(tap, "shape or count disagrees with the network"));
        }
        let (carve, target, imap) = if tap == deepest {
            let mut carving = Carving::new(map);
            let mut seams = Vec::new();
            for s in &d.seams {
                let seam = to_seam(tap, s, carving.current.width())?;
                seams.push(carving.remove(seam)?);
            }
            let carve = TapCarve {
                tap,
                height: map.height(),
                original_width: map.width(),
                seams,
            };
            let imap = ImportanceMap {
                map: channel_l2(map),
                tap,
                kind: MapKind::Base,
            };
            (carve, carving.current, imap)
        } else {
            let deeper = taps[tap + 1].as_ref().unwrap().original_seams();
            let mut pending = d.seams.iter();
            carve_tap(hier, tap, &deeper, alpha, |c, s| match pending.next() {
                Some(sd) => to_seam(tap, sd, s.width()).map(Some),
                None => {
                    let _ = c;
                    Ok(None)
                }
            })?
        };
        for (rec, sd) in carve.seams.iter().zip(&d.seams) {
            if rec.original != sd.original_cols {
                return Err(mismatch(tap, "original columns disagree with replayed seams"));
            }
        }
        taps[tap] = Some(carve);
        targets[tap] = Some(target);
        maps[tap] = Some(imap);
    }
    let taps: Vec<TapCarve> = taps.into_iter().map(Option::unwrap).collect();
    let intermediate_width = hier.maps[0].width() - taps[0].count();
    if intermediate_width != doc.intermediate_width {
        return Err(mismatch(0, "intermediate width disagrees"));
    }
    Ok(SeamPlan {
        taps,
        rho: doc.rho,
        intermediate_width,
        targets: targets.into_iter().map(Option::unwrap).collect(),
        carver_maps: maps.into_iter().map(Option::unwrap).collect(),
        warnings: doc.warnings.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn map(rows: &[&[f32]]) -> Tensor {
        let h = rows.len();
        let w = rows[0].len();
        Tensor::from_vec(h, w, 1, rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    /// Minimum over every 8-connected path, summing top to bottom.
    fn brute_force(m: &Tensor) -> f32 {
        fn go(m: &Tensor, i: usize, j: usize, acc: f32) -> f32 {
            let acc = acc + m.get(i, j, 0);
            if i + 1 == m.height() {
                return acc;
            }
            let lo = j.saturating_sub(1);
            let hi = (j + 1).min(m.width() - 1);
            (lo..=hi).map(|nj| go(m, i + 1, nj, acc)).fold(f32::INFINITY, f32::min)
        }
        (0..m.width()).map(|j| go(m, 0, j, 0.0)).fold(f32::INFINITY, f32::min)
    }

    #[test]
    fn uniform_map_takes_leftmost() {
        let m = Tensor::filled(3, 3, 1, 1.0);
        let (seam, cost) = min_seam(&m).unwrap();
        assert_eq!(seam.cols(), &[0, 0, 0]);
        assert_eq!(cost, 3.0);
    }

    #[test]
    fn diagonal_valley() {
        let m = map(&[&[1.0, 9.0, 9.0], &[9.0, 1.0, 9.0], &[9.0, 9.0, 1.0]]);
        let (seam, cost) = min_seam(&m).unwrap();
        assert_eq!(seam.cols(), &[0, 1, 2]);
        assert_eq!(cost, 3.0);
        assert_eq!(brute_force(&m), 3.0);
    }

    #[test]
    fn dp_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let m = Tensor::from_fn(5, 5, 1, |_, _, _| rng.gen_range(0.0..1.0));
            let (seam, cost) = min_seam(&m).unwrap();
            assert_eq!(cost, brute_force(&m));
            let along: f32 = seam.cols().iter().enumerate().fold(0.0, |a, (i, &j)| a + m.get(i, j, 0));
            assert_eq!(along, cost);
        }
    }

    #[test]
    fn narrow_map_is_rejected() {
        assert!(min_seam(&Tensor::zeros(4, 1, 1)).is_err());
    }

    #[test]
    fn seam_validation() {
        assert!(Seam::new(vec![0, 1, 2], 3).is_ok());
        assert!(Seam::new(vec![0, 2], 3).is_err());
        assert!(Seam::new(vec![3], 3).is_err());
    }

    #[test]
    fn removal_shape_and_order() {
        let t = Tensor::from_fn(4, 5, 3, |i, j, k| (i * 100 + j * 10 + k) as f32);
        let seam = Seam::new(vec![0, 1, 1, 2], 5).unwrap();
        let out = remove_seam(&t, &seam).unwrap();
        assert_eq!(out.shape(), (4, 4, 3));
        assert_eq!(out.get(0, 0, 2), 12.0);
        assert_eq!(out.get(1, 0, 0), 100.0);
        assert_eq!(out.get(1, 1, 0), 120.0);
        let row = Tensor::from_vec(1, 3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let out = remove_seam(&row, &Seam::new(vec![0], 3).unwrap()).unwrap();
        assert_eq!(out.data(), &[2.0, 3.0]);
    }

    #[test]
    fn removal_rejects_bad_seam() {
        let t = Tensor::zeros(2, 3, 1);
        assert!(remove_seam(&t, &Seam(vec![0, 2])).is_err());
        assert!(remove_seam(&t, &Seam(vec![0])).is_err());
    }

    #[test]
    fn percentile_nearest_rank_values() {
        let v: Vec<f32> = (1..=10).map(|x| x as f32).collect();
        assert_eq!(percentile_nearest_rank(&v, 20.0), 2.0);
        assert_eq!(percentile_nearest_rank(&v, 25.0), 3.0);
        assert_eq!(percentile_nearest_rank(&v, 100.0), 10.0);
        assert_eq!(percentile_nearest_rank(&v, 0.1), 1.0);
    }

    #[test]
    fn admissibility() {
        let zero = Tensor::zeros(3, 4, 1);
        let s = Seam::new(vec![1, 2, 3], 4).unwrap();
        assert!(seam_admissible(&zero, &s, 0.5));
        assert!(seam_admissible(&zero, &s, 20.0));

        // values 1..=12, column 3 holds the row maxima
        let m = Tensor::from_fn(3, 4, 1, |i, j, _| (i * 4 + j + 1) as f32);
        let hot = Seam::new(vec![3, 3, 3], 4).unwrap();
        assert!(!seam_admissible(&m, &hot, 20.0));
        assert!(seam_admissible(&m, &hot, 100.0));

        let uniform = Tensor::filled(3, 4, 1, 0.3);
        assert!(!seam_admissible(&uniform, &s, 20.0));
        assert!(seam_admissible(&uniform, &s, 100.0));
    }

    #[test]
    fn ratio_rounding() {
        let rho = 1.0 / 16.0;
        assert_eq!([64, 32, 16].map(|w| seam_count(rho, w)), [4, 2, 1]);
    }

    fn synthetic(deep: impl Fn(usize, usize) -> f32, fine: f32) -> FeatureHierarchy {
        let spec = crate::network::build_tinyvgg();
        let geoms = crate::network::geometry::tap_geometries(&spec, 64, 48).unwrap();
        let mut maps: Vec<Tensor> = geoms
            .iter()
            .map(|g| Tensor::filled(g.size.0, g.size.1, 2, fine))
            .collect();
        let (h, w) = geoms[2].size;
        maps[2] = Tensor::from_fn(h, w, 1, |i, j, _| deep(i, j));
        FeatureHierarchy {
            image_shape: (64, 48),
            maps,
            geoms,
        }
    }

    #[test]
    fn uniform_deep_map_removes_one_seam() {
        let hier = synthetic(|_, _| 1.0, 1.0);
        let plan = plan(&hier, &CarveConfig::default()).unwrap();
        assert_eq!(plan.taps[2].count(), 1);
        assert_eq!(plan.counts(), vec![4, 2, 1]);
        assert_eq!(plan.intermediate_width, 44);
        assert!(plan.warnings.is_empty());
    }

    #[test]
    fn planted_valley_is_followed_down() {
        let hier = synthetic(|i, j| if j == 5 { 0.0 } else { 1.0 + ((i * 7 + j * 3) % 5) as f32 }, 1.0);
        let plan = plan(&hier, &CarveConfig::default()).unwrap();
        assert!(plan.taps[2].seams[0].original.iter().all(|&c| c == 5));
        for tap in 0..2 {
            let mask = attenuation_mask(&plan.taps[tap + 1].original_seams(), &hier.geoms[tap + 1]).unwrap();
            let w = hier.maps[tap].width();
            for s in &plan.taps[tap].seams {
                for (i, &c) in s.original.iter().enumerate() {
                    assert!(mask[i * w + c], "tap {tap} row {i} col {c}");
                }
            }
        }
    }

    #[test]
    fn widths_follow_counts() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let hier = synthetic(|i, j| ((i * 13 + j * 7) % 11) as f32 * 0.1, 0.5);
        let mut hier = hier;
        for m in &mut hier.maps[..2] {
            m.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
        }
        let plan = plan(&hier, &CarveConfig { tau: 60.0, ..Default::default() }).unwrap();
        for (tap, t) in plan.taps.iter().enumerate() {
            let w = hier.maps[tap].width();
            assert_eq!(plan.targets[tap].width(), w - t.count());
            assert!((t.count() as f64 / w as f64 - plan.rho).abs() <= 1.0 / w as f64);
        }
        let again = super::plan(&hier, &CarveConfig { tau: 60.0, ..Default::default() }).unwrap();
        assert_eq!(plan, again);
    }

    #[test]
    fn replay_from_json_reproduces_plan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut hier = synthetic(|i, j| ((i * 5 + j * 3) % 7) as f32, 1.0);
        for m in &mut hier.maps {
            m.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
        }
        let cfg = CarveConfig { tau: 50.0, ..Default::default() };
        let plan = plan(&hier, &cfg).unwrap();
        let json = serde_json::to_string(&plan.to_doc()).unwrap();
        let doc: SeamPlanDoc = serde_json::from_str(&json).unwrap();
        let back = replay(&hier, &doc, cfg.alpha).unwrap();
        assert_eq!(back.taps, plan.taps);
        assert_eq!(back.targets, plan.targets);

        let mut bad = doc.clone();
        bad.taps[1].seams[0].original_cols[0] += 1;
        assert!(replay(&hier, &bad, cfg.alpha).is_err());
    }

    #[test]
    fn ratio_cap_limits_deep_seams() {
        let hier = synthetic(|_, _| 0.0, 1.0);
        let cfg = CarveConfig { max_ratio: 0.25, ..Default::default() };
        let plan = plan(&hier, &cfg).unwrap();
        assert_eq!(plan.taps[2].count(), 3);
        assert_eq!(plan.counts(), vec![12, 6, 3]);
    }

    #[test]
    fn removal_keeps_row_multisets() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let t = Tensor::from_fn(6, 7, 3, |_, _, _| rng.gen_range(-1.0..1.0));
            let (seam, _) = min_seam(&channel_l2(&t)).unwrap();
            let out = remove_seam(&t, &seam).unwrap();
            for k in 0..3 {
                for i in 0..6 {
                    let mut before: Vec<f32> = (0..7).map(|j| t.get(i, j, k)).collect();
                    before.remove(seam.cols()[i]);
                    let after: Vec<f32> = (0..6).map(|j| out.get(i, j, k)).collect();
                    assert_eq!(before, after);
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn seams_are_connected_and_optimal(h in 1usize..6, w in 2usize..7, seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = Tensor::from_fn(h, w, 1, |_, _, _| rng.gen_range(0u8..4) as f32);
            let (seam, cost) = min_seam(&m).unwrap();
            proptest::prop_assert!(Seam::new(seam.cols().to_vec(), w).is_ok());
            proptest::prop_assert_eq!(seam.len(), h);
            proptest::prop_assert_eq!(cost, brute_force(&m));
        }

        #[test]
        fn plans_respect_ratio_law(seed in 0u64..500, tau in 5.0f32..100.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut hier = synthetic(|_, _| 0.0, 0.0);
            for m in &mut hier.maps {
                m.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
            }
            let plan = plan(&hier, &CarveConfig { tau, ..Default::default() }).unwrap();
            proptest::prop_assert!(plan.taps[2].count() >= 1);
            for (tap, t) in plan.taps.iter().enumerate() {
                let w = hier.maps[tap].width();
                proptest::prop_assert!((t.count() as f64 / w as f64 - plan.rho).abs() <= 1.0 / w as f64);
                proptest::prop_assert_eq!(plan.targets[tap].width(), w - t.count());
                let mut width = w;
                for s in &t.seams {
                    proptest::prop_assert!(Seam::new(s.seam.cols().to_vec(), width).is_ok());
                    width -= 1;
                }
            }
        }
    }
}
