//! Evaluation metrics: overlap, surface distances, landmark error and
//! folding statistics.

use crate::error::{Error, Result};
use crate::grid::{norm, sub, DisplacementField, KeypointPairSet, LabelVolume, ScalarVolume, Vec3, WorldGrid};
use crate::warp::transform_keypoints;

/// Dice coefficient `2|X∩Y| / (|X|+|Y|)` of two binary masks on the same
/// grid; 1 when both are empty.
pub fn dice(x: &[bool], y: &[bool]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::GridMismatch(format!("dice: {} vs {} voxels", x.len(), y.len())));
    }
    let (mut inter, mut nx, mut ny) = (0usize, 0usize, 0usize);
    for (&a, &b) in x.iter().zip(y) {
        nx += a as usize;
        ny += b as usize;
        inter += (a && b) as usize;
    }
    if nx + ny == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (nx + ny) as f64)
}

/// Per-label Dice for labels `1..=k` of two label maps.
pub fn dice_per_label(a: &LabelVolume, b: &LabelVolume) -> Result<Vec<f64>> {
    a.grid().ensure_matches(b.grid(), "dice label maps")?;
    let k = a.label_count().max(b.label_count());
    (1..=k as u16)
        .map(|l| {
            let x: Vec<bool> = a.labels().iter().map(|&v| v == l).collect();
            let y: Vec<bool> = b.labels().iter().map(|&v| v == l).collect();
            dice(&x, &y)
        })
        .collect()
}

/// World coordinates of boundary voxel centers of one label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfacePointSet {
    pub points: Vec<Vec3>,
}

impl SurfacePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Foreground voxels with a 6-neighbour that is background or outside the
/// grid.
pub fn extract_surface(grid: &WorldGrid, mask: &[bool]) -> Result<SurfacePointSet> {
    if mask.len() != grid.len() {
        return Err(Error::GridMismatch(format!("surface mask has {} voxels, grid {}", mask.len(), grid.len())));
    }
    let dims = grid.dims();
    let mut points = Vec::new();
    for (idx, &fg) in mask.iter().enumerate() {
        if !fg {
            continue;
        }
        let c = grid.coords(idx);
        let boundary = (0..3).any(|a| {
            let s = grid.stride(a);
            c[a] == 0 || c[a] + 1 == dims[a] || !mask[idx - s] || !mask[idx + s]
        });
        if boundary {
            points.push(grid.world_of_index(idx));
        }
    }
    Ok(SurfacePointSet { points })
}

/// Exact nearest-neighbour queries against a fixed point set using a
/// uniform bucket grid searched in growing shells.
struct NearestIndex<'a> {
    points: &'a [Vec3],
    lo: Vec3,
    cell: f64,
    dims: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl<'a> NearestIndex<'a> {
    fn new(points: &'a [Vec3]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let ext = [0, 1, 2].map(|a| (hi[a] - lo[a]).max(0.0));
        // Roughly a few points per bucket.
        let vol = ext.iter().map(|e| e.max(1e-9)).product::<f64>();
        let mut cell = (vol / points.len().max(1) as f64 * 4.0).cbrt();
        let max_ext = ext.iter().cloned().fold(0.0, f64::max);
        if !(cell.is_finite() && cell > 0.0) || max_ext == 0.0 {
            cell = 1.0;
        }
        cell = cell.max(max_ext / 256.0);
        let dims = ext.map(|e| ((e / cell).floor() as usize + 1).max(1));
        let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let mut s = Self { points, lo, cell, dims, buckets: Vec::new() };
        for (n, p) in points.iter().enumerate() {
            let b = s.bucket_of(*p);
            buckets[s.flat(b)].push(n as u32);
        }
        s.buckets = buckets;
        s
    }

    fn bucket_of(&self, p: Vec3) -> [isize; 3] {
        [0, 1, 2].map(|a| ((p[a] - self.lo[a]) / self.cell).floor() as isize)
    }

    fn flat(&self, b: [isize; 3]) -> usize {
        b[0] as usize + self.dims[0] * (b[1] as usize + self.dims[1] * b[2] as usize)
    }

    fn nearest(&self, q: Vec3) -> f64 {
        let b = self.bucket_of(q);
        let clamp = |a: usize| b[a].clamp(0, self.dims[a] as isize - 1);
        let start = [clamp(0), clamp(1), clamp(2)];
        // Distance from the query to the box of the clamped start bucket.
        let mut best2 = f64::INFINITY;
        let max_r = self.dims.iter().max().copied().unwrap_or(1) as isize;
        let mut r: isize = 0;
        loop {
            for k in start[2] - r..=start[2] + r {
                if k < 0 || k >= self.dims[2] as isize {
                    continue;
                }
                for j in start[1] - r..=start[1] + r {
                    if j < 0 || j >= self.dims[1] as isize {
                        continue;
                    }
                    let shell_jk = (k - start[2]).abs() == r || (j - start[1]).abs() == r;
                    let mut i = start[0] - r;
                    while i <= start[0] + r {
                        if i >= 0 && i < self.dims[0] as isize {
                            for &n in &self.buckets[self.flat([i, j, k])] {
                                let d = sub(self.points[n as usize], q);
                                best2 = best2.min(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
                            }
                        }
                        i += if shell_jk || i == start[0] + r { 1 } else { 2 * r };
                    }
                }
            }
            // Every point outside the searched cube is at least this far away.
            let reach = [0, 1, 2]
                .map(|a| {
                    let lo = self.lo[a] + (start[a] - r) as f64 * self.cell;
                    let hi = self.lo[a] + (start[a] + r + 1) as f64 * self.cell;
                    (q[a] - lo).min(hi - q[a])
                })
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            if (reach > 0.0 && best2 <= reach * reach) || r > max_r {
                return best2.sqrt();
            }
            r += 1;
        }
    }
}

fn nearest_distances(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
    let index = NearestIndex::new(to);
    from.iter().map(|&p| index.nearest(p)).collect()
}

fn check_surfaces(x: &SurfacePointSet, y: &SurfacePointSet) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput("surface distance needs two non-empty point sets"));
    }
    Ok(())
}

/// Average symmetric surface distance in mm.
pub fn asd(x: &SurfacePointSet, y: &SurfacePointSet) -> Result<f64> {
    check_surfaces(x, y)?;
    let a: f64 = nearest_distances(&x.points, &y.points).iter().sum();
    let b: f64 = nearest_distances(&y.points, &x.points).iter().sum();
    Ok((a + b) / (x.len() + y.len()) as f64)
}

/// Symmetric Hausdorff distance in mm.
pub fn hausdorff(x: &SurfacePointSet, y: &SurfacePointSet) -> Result<f64> {
    check_surfaces(x, y)?;
    let a = nearest_distances(&x.points, &y.points).into_iter().fold(0.0, f64::max);
    let b = nearest_distances(&y.points, &x.points).into_iter().fold(0.0, f64::max);
    Ok(a.max(b))
}

/// Summary statistics of a set of distances in mm.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DistanceStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl DistanceStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("statistics of an empty set"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean,
            std: var.sqrt(),
            p25: percentile(&sorted, 25.0),
            p50: percentile(&sorted, 50.0),
            p75: percentile(&sorted, 75.0),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Per-pair landmark distances `‖k_M − y(k_F)‖` in mm.
pub fn tre_values(pairs: &KeypointPairSet, u: &DisplacementField) -> Vec<f64> {
    let moved = transform_keypoints(u, &pairs.fixed_points());
    moved.points.iter().zip(&pairs.pairs).map(|(p, (_, km))| norm(sub(*km, *p))).collect()
}

/// Target registration error statistics.
pub fn tre(pairs: &KeypointPairSet, u: &DisplacementField) -> Result<DistanceStats> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("target registration error needs at least one pair"));
    }
    DistanceStats::from_values(&tre_values(pairs, u))
}

pub const HISTOGRAM_BINS: usize = 64;
/// Upper edge of the determinant histogram.
pub const HISTOGRAM_MAX: f64 = 8.0;
/// Lower edge of the first positive bin; smaller positive values share it.
pub const HISTOGRAM_MIN: f64 = 1.0 / 256.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FoldingStats {
    /// Fraction of counted voxels with `det ≤ 0`.
    pub fraction: f64,
    pub min: f64,
    pub max: f64,
    /// Voxels with `det ≤ 0`.
    pub underflow: usize,
    /// 64 log₂-spaced bins over `(0, 8]`; bin edges from [`histogram_edges`].
    /// The first bin also holds `(0, 1/256]`, the last everything above 8.
    pub histogram: Vec<usize>,
    pub counted: usize,
}

/// `HISTOGRAM_BINS + 1` bin edges, log₂-spaced from 1/256 to 8.
pub fn histogram_edges() -> Vec<f64> {
    let (l0, l1) = (HISTOGRAM_MIN.log2(), HISTOGRAM_MAX.log2());
    (0..=HISTOGRAM_BINS).map(|i| (l0 + (l1 - l0) * i as f64 / HISTOGRAM_BINS as f64).exp2()).collect()
}

fn histogram_bin(d: f64) -> usize {
    let (l0, l1) = (HISTOGRAM_MIN.log2(), HISTOGRAM_MAX.log2());
    let pos = (d.log2() - l0) / (l1 - l0) * HISTOGRAM_BINS as f64;
    // Right-closed bins: a value on an edge goes to the lower bin.
    let b = pos.ceil() as isize - 1;
    b.clamp(0, HISTOGRAM_BINS as isize - 1) as usize
}

/// Folding statistics of a determinant volume, optionally restricted to a
/// voxel mask.
pub fn folding_stats(det: &ScalarVolume, mask: Option<&[bool]>) -> Result<FoldingStats> {
    if let Some(m) = mask {
        if m.len() != det.data().len() {
            return Err(Error::GridMismatch(format!("folding mask has {} voxels, volume {}", m.len(), det.data().len())));
        }
    }
    let mut s = FoldingStats {
        fraction: 0.0,
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        underflow: 0,
        histogram: vec![0; HISTOGRAM_BINS],
        counted: 0,
    };
    for (n, &d) in det.data().iter().enumerate() {
        if mask.is_some_and(|m| !m[n]) {
            continue;
        }
        s.counted += 1;
        s.min = s.min.min(d);
        s.max = s.max.max(d);
        if d <= 0.0 {
            s.underflow += 1;
        } else {
            s.histogram[histogram_bin(d)] += 1;
        }
    }
    if s.counted == 0 {
        s.min = f64::NAN;
        s.max = f64::NAN;
    } else {
        s.fraction = s.underflow as f64 / s.counted as f64;
    }
    Ok(s)
}

/// Mean of the lowest 30 % of per-case Dice scores (at least one case).
pub fn dice30(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("dice30 needs at least one score"));
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let n = ((s.len() as f64 * 0.3).ceil() as usize).max(1);
    Ok(s[..n].iter().sum::<f64>() / n as f64)
}

/// Per-label surface and overlap metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMetrics {
    pub label: u16,
    pub dice: f64,
    /// `None` when either label is empty.
    pub asd: Option<f64>,
    pub hausdorff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub labels: Vec<LabelMetrics>,
    pub mean_dice: Option<f64>,
    pub mean_asd: Option<f64>,
    pub mean_hausdorff: Option<f64>,
    pub tre: Option<DistanceStats>,
    pub initial_tre: Option<DistanceStats>,
    pub folding: FoldingStats,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Label metrics between two label maps on the same grid.
pub fn label_metrics(fixed: &LabelVolume, warped: &LabelVolume) -> Result<Vec<LabelMetrics>> {
    fixed.grid().ensure_matches(warped.grid(), "evaluated label maps")?;
    let grid = fixed.grid();
    let k = fixed.label_count().max(warped.label_count()) as u16;
    (1..=k)
        .map(|l| {
            let x: Vec<bool> = fixed.labels().iter().map(|&v| v == l).collect();
            let y: Vec<bool> = warped.labels().iter().map(|&v| v == l).collect();
            let d = dice(&x, &y)?;
            let sx = extract_surface(grid, &x)?;
            let sy = extract_surface(grid, &y)?;
            let (a, h) = if sx.is_empty() || sy.is_empty() {
                (None, None)
            } else {
                (Some(asd(&sx, &sy)?), Some(hausdorff(&sx, &sy)?))
            };
            Ok(LabelMetrics { label: l, dice: d, asd: a, hausdorff: h })
        })
        .collect()
}

impl MetricsReport {
    /// Evaluates a field against whatever references are available. `warped`
    /// is the moving mask already warped and binarized.
    pub fn compute(
        u: &DisplacementField,
        masks: Option<(&LabelVolume, &LabelVolume)>,
        pairs: Option<&KeypointPairSet>,
    ) -> Result<Self> {
        let labels = match masks {
            Some((f, w)) => label_metrics(f, w)?,
            None => Vec::new(),
        };
        let pairs = pairs.filter(|p| !p.is_empty());
        let det = crate::losses::jacobian_det_field(u);
        Ok(Self {
            mean_dice: mean(labels.iter().map(|l| l.dice)),
            mean_asd: mean(labels.iter().filter_map(|l| l.asd)),
            mean_hausdorff: mean(labels.iter().filter_map(|l| l.hausdorff)),
            labels,
            tre: pairs.map(|p| tre(p, u)).transpose()?,
            initial_tre: pairs.map(|p| tre(p, &DisplacementField::zeros(*u.grid()))).transpose()?,
            folding: folding_stats(&det, None)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::keypoint_loss;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(grid: &WorldGrid, lo: [usize; 3], size: usize) -> Vec<bool> {
        (0..grid.len())
            .map(|n| {
                let c = grid.coords(n);
                (0..3).all(|a| c[a] >= lo[a] && c[a] < lo[a] + size)
            })
            .collect()
    }

    fn brute_nearest(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
        from.iter().map(|p| to.iter().map(|q| norm(sub(*p, *q))).fold(f64::INFINITY, f64::min)).collect()
    }

    #[test]
    fn dice_cases() {
        let g = WorldGrid::unit([10, 10, 10]).unwrap();
        let a = cube(&g, [1, 1, 1], 4);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &cube(&g, [6, 6, 6], 4)).unwrap(), 0.0);
        assert_eq!(dice(&a, &cube(&g, [3, 1, 1], 4)).unwrap(), 0.5);
        let empty = vec![false; g.len()];
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
        assert!(dice(&a, &a[..5]).is_err());
    }

    #[test]
    fn surface_cases() {
        let g = WorldGrid::new([5, 5, 5], [1.0, 2.0, 0.5], [1.0, 0.0, -1.0]).unwrap();
        let mut one = vec![false; g.len()];
        one[g.index(2, 3, 1)] = true;
        assert_eq!(extract_surface(&g, &one).unwrap().points, vec![g.world(2, 3, 1)]);
        assert_eq!(extract_surface(&g, &cube(&g, [1, 1, 1], 3)).unwrap().len(), 26);
        assert!(extract_surface(&g, &vec![false; g.len()]).unwrap().is_empty());
        // A full grid is all boundary where it touches the grid edge.
        assert_eq!(extract_surface(&g, &vec![true; g.len()]).unwrap().len(), 125 - 27);
    }

    #[test]
    fn random_blob_surface_is_exactly_the_boundary() {
        let g = WorldGrid::unit([9, 8, 7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mask: Vec<bool> = (0..g.len()).map(|_| rng.gen_bool(0.6)).collect();
        let surf = extract_surface(&g, &mask).unwrap();
        let [nx, ny, nz] = g.dims();
        let mut expected = Vec::new();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    if !mask[g.index(i, j, k)] {
                        continue;
                    }
                    let mut bg = false;
                    for (di, dj, dk) in [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)] {
                        let (a, b, c) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                        if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                            bg = true;
                        } else if !mask[g.index(a as usize, b as usize, c as usize)] {
                            bg = true;
                        }
                    }
                    if bg {
                        expected.push(g.world(i, j, k));
                    }
                }
            }
        }
        assert_eq!(surf.points, expected);
    }

    #[test]
    fn distance_cases() {
        let p = |v: Vec<Vec3>| SurfacePointSet { points: v };
        let a = p(vec![[0.0; 3]]);
        assert_eq!(asd(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(asd(&a, &p(vec![[3.0, 0.0, 0.0]])).unwrap(), 3.0);
        let b = p(vec![[0.0; 3], [0.0, 0.0, 5.0]]);
        assert_eq!(hausdorff(&a, &b).unwrap(), 5.0);
        assert_eq!(hausdorff(&b, &a).unwrap(), 5.0);
        assert!(asd(&a, &SurfacePointSet::default()).is_err());
        assert!(hausdorff(&SurfacePointSet::default(), &a).is_err());

        let plane = |z: f64| p((0..5).flat_map(|i| (0..5).map(move |j| [i as f64, j as f64, z])).collect());
        assert!((asd(&plane(0.0), &plane(2.0)).unwrap() - 2.0).abs() < 1e-12);
        assert!((hausdorff(&plane(0.0), &plane(2.0)).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_cube_surfaces() {
        let g = WorldGrid::new([12, 10, 10], [2.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let a = extract_surface(&g, &cube(&g, [2, 2, 2], 5)).unwrap();
        let b = extract_surface(&g, &cube(&g, [3, 2, 2], 5)).unwrap();
        assert_eq!(hausdorff(&a, &b).unwrap(), 2.0);
        let brute_a = brute_nearest(&a.points, &b.points);
        let brute_b = brute_nearest(&b.points, &a.points);
        let asd_brute = (brute_a.iter().sum::<f64>() + brute_b.iter().sum::<f64>()) / (a.len() + b.len()) as f64;
        assert!((asd(&a, &b).unwrap() - asd_brute).abs() < 1e-9);
    }

    #[test]
    fn bucket_search_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..20 {
            let n = rng.gen_range(1..300);
            let m = rng.gen_range(1..300);
            let spread = if case % 3 == 0 { 0.01 } else { 50.0 };
            let mut pts = |k| -> Vec<Vec3> {
                (0..k).map(|_| [0, 1, 2].map(|_| rng.gen_range(-spread..spread))).collect()
            };
            let (x, y) = (pts(n), pts(m));
            let fast = nearest_distances(&x, &y);
            let slow = brute_nearest(&x, &y);
            for (f, s) in fast.iter().zip(&slow) {
                assert!((f - s).abs() < 1e-12, "case {case}: {f} vs {s}");
            }
        }
    }

    #[test]
    fn tre_cases() {
        let g = WorldGrid::unit([6, 6, 6]).unwrap();
        let zero = DisplacementField::zeros(g);
        let same = KeypointPairSet::new(vec![([1.0; 3], [1.0; 3])]).unwrap();
        assert_eq!(tre(&same, &zero).unwrap().mean, 0.0);
        let off = KeypointPairSet::new(vec![([1.0; 3], [4.0, 5.0, 1.0])]).unwrap();
        assert_eq!(tre(&off, &zero).unwrap().mean, 5.0);
        assert!(tre(&KeypointPairSet::default(), &zero).is_err());
    }

    #[test]
    fn tre_agrees_with_keypoint_loss() {
        let g = WorldGrid::new([8, 7, 6], [1.5, 1.0, 2.0], [0.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = DisplacementField::from_fn(g, |_| [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0)));
        let pairs: Vec<(Vec3, Vec3)> = (0..25)
            .map(|_| {
                let kf = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..10.0)];
                let km = [0, 1, 2].map(|a| kf[a] + rng.gen_range(-3.0..3.0));
                (kf, km)
            })
            .collect();
        let values = tre_values(&KeypointPairSet::new(pairs.clone()).unwrap(), &u);
        for (v, p) in values.iter().zip(&pairs) {
            let single = KeypointPairSet::new(vec![*p]).unwrap();
            let (k, _) = keypoint_loss(&single, &u).unwrap();
            assert!((v - k.sqrt()).abs() < 1e-10);
        }
        let all = KeypointPairSet::new(pairs).unwrap();
        let mean = tre(&all, &u).unwrap().mean;
        assert!(mean * mean <= keypoint_loss(&all, &u).unwrap().0 + 1e-12);
    }

    #[test]
    fn statistics() {
        let s = DistanceStats::from_values(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((s.p25, s.p50, s.p75, s.max), (2.0, 3.0, 4.0, 5.0));
        assert!(DistanceStats::from_values(&[]).is_err());
    }

    #[test]
    fn folding_histogram() {
        let g = WorldGrid::unit([5, 5, 5]).unwrap();
        let det = crate::losses::jacobian_det_field(&DisplacementField::zeros(g));
        let s = folding_stats(&det, None).unwrap();
        assert_eq!((s.fraction, s.min, s.max), (0.0, 1.0, 1.0));
        assert_eq!(s.histogram.iter().sum::<usize>(), 125);
        let edges = histogram_edges();
        let b = histogram_bin(1.0);
        assert!(edges[b] < 1.0 && 1.0 <= edges[b + 1] * (1.0 + 1e-12));
        assert_eq!(histogram_bin(100.0), HISTOGRAM_BINS - 1);
        assert_eq!(histogram_bin(1e-9), 0);

        let data = vec![-1.0, 0.0, 0.5, 2.0, 9.0];
        let v = ScalarVolume::new(WorldGrid::unit([5, 1, 1]).unwrap(), data).unwrap();
        let s = folding_stats(&v, None).unwrap();
        assert_eq!(s.underflow, 2);
        assert_eq!(s.fraction, 0.4);
        assert_eq!((s.min, s.max), (-1.0, 9.0));
        let masked = folding_stats(&v, Some(&[false, true, true, true, false])).unwrap();
        assert!((masked.fraction - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_reflected_neighbourhood() {
        // A sharp spike at one node flips the central-difference determinant
        // at exactly its two x-neighbours.
        let g = WorldGrid::unit([7, 7, 7]).unwrap();
        let mut u = DisplacementField::zeros(g);
        u.vectors_mut()[g.index(3, 3, 3)] = [5.0, 0.0, 0.0];
        let det = crate::losses::jacobian_det_field(&u);
        let direct = det.data().iter().filter(|&&d| d <= 0.0).count();
        assert_eq!(direct, 1);
        let s = folding_stats(&det, None).unwrap();
        assert_eq!(s.fraction, 1.0 / g.len() as f64);
    }

    #[test]
    fn dice30_of_cases() {
        assert_eq!(dice30(&[0.9, 0.5, 0.7, 0.95, 0.8, 0.6, 0.85, 0.99, 0.92, 0.75]).unwrap(), (0.5 + 0.6 + 0.7) / 3.0);
        assert_eq!(dice30(&[0.8]).unwrap(), 0.8);
        assert!(dice30(&[]).is_err());
    }
}
