//! Synthetic lung-like image pairs with a known smooth deformation.
//!
//! The moving image `M` is defined analytically; the fixed image is the
//! exact pullback `F(x) = M(x + u(x))`, so registering `F` to `M` should
//! recover `u` itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{add, norm, sub, DisplacementField, KeypointPairSet, LabelVolume, ScalarVolume, Vec3, WorldGrid};
use crate::losses::jacobian::{det3, Mat3};
use crate::metrics::DistanceStats;

/// Fold-free bound on `Σ ‖a_b‖ / (σ √e)`.
pub const FOLD_BOUND: f64 = 0.9;

const LUNG_HU: f64 = -900.0;
const TISSUE_HU: f64 = 20.0;
/// Width of the lung boundary sigmoid in mm.
const EDGE_WIDTH: f64 = 1.5;
const FISSURE_HU: f64 = 250.0;
const FISSURE_SIGMA: f64 = 1.2;
/// Blobs are cut off at this many radii.
const BLOB_CUTOFF: f64 = 4.0;
/// Keypoints are drawn where `F` exceeds this value inside the lung.
const STRUCTURE_HU: f64 = -600.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: Vec3,
    pub bumps: usize,
    /// Largest displacement magnitude on the grid in mm.
    pub amplitude: f64,
    /// Bump width in mm.
    pub sigma: f64,
    /// Number of ellipsoidal structures.
    pub structures: usize,
    /// Range of structure radii in mm.
    pub structure_radius: (f64, f64),
    pub lobes: usize,
    /// Keypoint pairs for the loss.
    pub keypoints: usize,
    /// Separate landmark pairs for evaluation.
    pub landmarks: usize,
    /// Standard deviation of independent Gaussian noise added to each image (HU).
    pub noise: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [96, 80, 96],
            spacing: [2.0; 3],
            bumps: 3,
            amplitude: 16.0,
            sigma: 36.0,
            structures: 300,
            structure_radius: (3.0, 8.0),
            lobes: 5,
            keypoints: 200,
            landmarks: 100,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn grid(&self) -> Result<WorldGrid> {
        WorldGrid::new(self.dims, self.spacing, [0.0; 3])
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        let bad = |what: &str| Err(Error::InvalidParameter(format!("phantom {what}")));
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return bad("amplitude must be finite and >= 0");
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad("sigma must be > 0");
        }
        let (r0, r1) = self.structure_radius;
        if !(r0.is_finite() && r1.is_finite() && r0 > 0.0 && r1 >= r0) {
            return bad("structure radius range must satisfy 0 < min <= max");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad("noise must be finite and >= 0");
        }
        if self.lobes == 0 || self.lobes > u16::MAX as usize {
            return bad("lobe count must be in [1, 65535]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBump {
    pub centre: Vec3,
    pub amplitude: Vec3,
}

/// `u(x) = Σ_b a_b exp(−‖x − c_b‖² / (2σ²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDeformation {
    pub bumps: Vec<GaussianBump>,
    pub sigma: f64,
}

impl GaussianDeformation {
    #[inline]
    fn weight(&self, b: &GaussianBump, x: Vec3) -> (f64, Vec3) {
        let d = sub(x, b.centre);
        let g = (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (2.0 * self.sigma * self.sigma)).exp();
        (g, d)
    }

    pub fn displacement(&self, x: Vec3) -> Vec3 {
        let mut u = [0.0; 3];
        for b in &self.bumps {
            let (g, _) = self.weight(b, x);
            for c in 0..3 {
                u[c] += b.amplitude[c] * g;
            }
        }
        u
    }

    /// `∇y = I + ∇u` with entry `[i][j] = ∂y_i/∂x_j`.
    pub fn jacobian(&self, x: Vec3) -> Mat3 {
        let mut j = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let s2 = self.sigma * self.sigma;
        for b in &self.bumps {
            let (g, d) = self.weight(b, x);
            for r in 0..3 {
                for c in 0..3 {
                    j[r][c] -= b.amplitude[r] * g * d[c] / s2;
                }
            }
        }
        j
    }

    pub fn determinant(&self, x: Vec3) -> f64 {
        det3(&self.jacobian(x))
    }

    /// `Σ ‖a_b‖ / (σ √e)`, an upper bound on the operator norm of `∇u`.
    pub fn fold_bound(&self) -> f64 {
        self.bumps.iter().map(|b| norm(b.amplitude)).sum::<f64>() / (self.sigma * std::f64::consts::E.sqrt())
    }

    pub fn to_field(&self, grid: &WorldGrid) -> DisplacementField {
        DisplacementField::from_fn(*grid, |p| self.displacement(p))
    }

    fn scale(&mut self, s: f64) {
        for b in &mut self.bumps {
            b.amplitude = b.amplitude.map(|a| a * s);
        }
    }
}

/// Independent random streams per phantom component.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0));
        let n = norm(v);
        if n > 1e-3 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

/// Lung ellipsoid of the phantom: centre and semi-axes in mm.
fn lung_geometry(grid: &WorldGrid) -> (Vec3, Vec3) {
    let ext = grid.extent_max();
    let o = grid.origin();
    let centre = [0, 1, 2].map(|a| 0.5 * (o[a] + ext[a]));
    let semi = [0, 1, 2].map(|a| 0.38 * (ext[a] - o[a]));
    (centre, semi)
}

/// Draws bump centres inside the lung, the largest amplitude equal to the
/// spec amplitude and the rest in `[0.4, 1]` of it. Amplitudes are then
/// scaled so that the largest displacement on the grid equals the spec
/// amplitude, and further reduced if needed to respect the fold-free bound.
pub fn gen_deformation(spec: &PhantomSpec) -> Result<GaussianDeformation> {
    spec.validate()?;
    let grid = spec.grid()?;
    let mut rng = stream(spec.seed, 1);
    let (centre, semi) = lung_geometry(&grid);
    let mut bumps = Vec::with_capacity(spec.bumps);
    for b in 0..spec.bumps {
        let c = loop {
            let p = [0, 1, 2].map(|a| rng.gen_range(-0.6..0.6) * semi[a]);
            if (0..3).map(|a| (p[a] / semi[a]).powi(2)).sum::<f64>() <= 0.36 {
                break add(centre, p);
            }
        };
        let mag = if b == 0 { 1.0 } else { rng.gen_range(0.4..1.0) } * spec.amplitude;
        bumps.push(GaussianBump { centre: c, amplitude: unit_vector(&mut rng).map(|x| x * mag) });
    }
    let mut def = GaussianDeformation { bumps, sigma: spec.sigma };
    if spec.amplitude > 0.0 && !def.bumps.is_empty() {
        let max = def.to_field(&grid).max_norm();
        if max > 0.0 {
            def.scale(spec.amplitude / max);
        }
        let bound = def.fold_bound();
        if bound >= FOLD_BOUND {
            let s = FOLD_BOUND / bound * (1.0 - 1e-9);
            log::warn!("phantom amplitudes scaled by {s:.4} to stay fold-free");
            def.scale(s);
        }
    }
    if def.fold_bound() >= FOLD_BOUND {
        return Err(Error::InvalidParameter("phantom deformation violates the fold-free bound".into()));
    }
    for idx in 0..grid.len() {
        let d = def.determinant(grid.world_of_index(idx));
        if d <= 0.0 {
            return Err(Error::InvalidParameter(format!("phantom determinant {d} at voxel {idx}")));
        }
    }
    Ok(def)
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    centre: Vec3,
    inv_radius: Vec3,
    /// Peak intensity above the lung background.
    contrast: f64,
}

/// Analytic moving image and label layout.
#[derive(Debug, Clone)]
pub struct PhantomAnatomy {
    lung_centre: Vec3,
    lung_semi: Vec3,
    lobes: usize,
    blobs: Vec<Blob>,
    /// Blob indices per cell of a coarse bucket grid.
    cells: Vec<Vec<u32>>,
    cell_size: f64,
    cell_dims: [usize; 3],
    origin: Vec3,
    phase: [f64; 3],
}

const CELL_SIZE: f64 = 16.0;

impl PhantomAnatomy {
    fn new(spec: &PhantomSpec, grid: &WorldGrid) -> Self {
        let mut rng = stream(spec.seed, 2);
        let (lung_centre, lung_semi) = lung_geometry(grid);
        let (r0, r1) = spec.structure_radius;
        let mut blobs = Vec::with_capacity(spec.structures);
        while blobs.len() < spec.structures {
            let p = [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0));
            if p.iter().map(|x| x * x).sum::<f64>() > 1.0 {
                continue;
            }
            let centre = [0, 1, 2].map(|a| lung_centre[a] + p[a] * lung_semi[a]);
            let radius = [0, 1, 2].map(|_| rng.gen_range(r0..=r1));
            let peak = rng.gen_range(-100.0..100.0);
            blobs.push(Blob { centre, inv_radius: radius.map(|r| 1.0 / r), contrast: peak - LUNG_HU });
        }
        let origin = grid.origin();
        let ext = grid.extent_max();
        // Pulled-back sample points can leave the grid by the displacement.
        let margin = spec.amplitude * 2.0 + 2.0 * CELL_SIZE;
        let origin = origin.map(|o| o - margin);
        let cell_dims = [0, 1, 2].map(|a| (((ext[a] + margin) - origin[a]) / CELL_SIZE).ceil() as usize + 1);
        let mut cells = vec![Vec::new(); cell_dims[0] * cell_dims[1] * cell_dims[2]];
        for (n, b) in blobs.iter().enumerate() {
            let lo = [0, 1, 2].map(|a| {
                let v = b.centre[a] - BLOB_CUTOFF / b.inv_radius[a] - origin[a];
                ((v / CELL_SIZE).floor().max(0.0) as usize).min(cell_dims[a] - 1)
            });
            let hi = [0, 1, 2].map(|a| {
                let v = b.centre[a] + BLOB_CUTOFF / b.inv_radius[a] - origin[a];
                ((v / CELL_SIZE).floor().max(0.0) as usize).min(cell_dims[a] - 1)
            });
            for k in lo[2]..=hi[2] {
                for j in lo[1]..=hi[1] {
                    for i in lo[0]..=hi[0] {
                        cells[i + cell_dims[0] * (j + cell_dims[1] * k)].push(n as u32);
                    }
                }
            }
        }
        let phase = [0, 1, 2].map(|_| rng.gen_range(0.0..std::f64::consts::TAU));
        Self { lung_centre, lung_semi, lobes: spec.lobes, blobs, cells, cell_size: CELL_SIZE, cell_dims, origin, phase }
    }

    /// Normalized ellipsoid radius: below 1 inside the lung.
    fn lung_radius(&self, x: Vec3) -> f64 {
        (0..3).map(|a| ((x[a] - self.lung_centre[a]) / self.lung_semi[a]).powi(2)).sum::<f64>().sqrt()
    }

    fn lobe_boundaries(&self) -> impl Iterator<Item = f64> + '_ {
        let z0 = self.lung_centre[2] - self.lung_semi[2];
        let step = 2.0 * self.lung_semi[2] / self.lobes as f64;
        (1..self.lobes).map(move |i| z0 + i as f64 * step)
    }

    /// Lobe label (1-based) or 0 outside the lung.
    pub fn label(&self, x: Vec3) -> u16 {
        if self.lung_radius(x) >= 1.0 {
            return 0;
        }
        1 + self.lobe_boundaries().filter(|&z| x[2] >= z).count() as u16
    }

    /// Intensity in HU.
    pub fn intensity(&self, x: Vec3) -> f64 {
        let r = self.lung_radius(x);
        let min_semi = self.lung_semi.iter().cloned().fold(f64::INFINITY, f64::min);
        let inside = 1.0 / (1.0 + ((r - 1.0) * min_semi / EDGE_WIDTH).exp());
        let p = self.phase;
        let lung = LUNG_HU
            + 40.0 * (x[0] / 23.0 + p[0]).sin() * (x[1] / 31.0 + p[1]).cos()
            + 25.0 * (x[2] / 19.0 + p[2]).sin();
        let tissue = TISSUE_HU + 15.0 * (x[1] / 17.0 + p[2]).sin() * (x[2] / 29.0 + p[0]).cos();
        let mut inner = 0.0;
        for z in self.lobe_boundaries() {
            let d = (x[2] - z) / FISSURE_SIGMA;
            inner += FISSURE_HU * (-0.5 * d * d).exp();
        }
        let c = [0, 1, 2].map(|a| ((x[a] - self.origin[a]) / self.cell_size).floor());
        if (0..3).all(|a| c[a] >= 0.0 && (c[a] as usize) < self.cell_dims[a]) {
            let cell = c[0] as usize + self.cell_dims[0] * (c[1] as usize + self.cell_dims[1] * c[2] as usize);
            for &n in &self.cells[cell] {
                let b = &self.blobs[n as usize];
                let q: f64 = (0..3).map(|a| ((x[a] - b.centre[a]) * b.inv_radius[a]).powi(2)).sum();
                if q < BLOB_CUTOFF * BLOB_CUTOFF {
                    inner += b.contrast * (-0.5 * q).exp();
                }
            }
        }
        tissue + inside * (lung + inner - tissue)
    }
}

#[derive(Debug, Clone)]
pub struct PhantomPair {
    pub fixed: ScalarVolume,
    pub moving: ScalarVolume,
    pub fixed_mask: LabelVolume,
    pub moving_mask: LabelVolume,
    /// Pairs for the keypoint loss.
    pub keypoints: KeypointPairSet,
    /// Held-out pairs for evaluation.
    pub landmarks: KeypointPairSet,
    pub u_gt: DisplacementField,
    pub deformation: GaussianDeformation,
    pub anatomy: PhantomAnatomy,
}

fn sample_pairs(
    rng: &mut ChaCha8Rng,
    count: usize,
    grid: &WorldGrid,
    anatomy: &PhantomAnatomy,
    def: &GaussianDeformation,
) -> Result<KeypointPairSet> {
    let dims = grid.dims();
    let mut pairs = Vec::with_capacity(count);
    let mut tries = 0usize;
    while pairs.len() < count {
        tries += 1;
        if tries > 10_000 + count * 10_000 {
            return Err(Error::InvalidParameter(format!("could only place {} of {count} keypoints", pairs.len())));
        }
        // Fixed keypoints sit on voxel centres, where the sampled ground-truth
        // field is exact.
        let c = dims.map(|n| rng.gen_range(0..n));
        let kf = grid.world(c[0], c[1], c[2]);
        if pairs.iter().any(|(p, _)| *p == kf) {
            continue;
        }
        let y = add(kf, def.displacement(kf));
        if anatomy.lung_radius(y) >= 0.9 || anatomy.intensity(y) <= STRUCTURE_HU {
            continue;
        }
        if !grid.contains(y) {
            return Err(Error::InvalidParameter(format!("keypoint {kf:?} maps outside the grid to {y:?}")));
        }
        pairs.push((kf, y));
    }
    KeypointPairSet::new(pairs)
}

/// Builds the full synthetic case for `spec`.
pub fn gen_phantom_pair(spec: &PhantomSpec) -> Result<PhantomPair> {
    let grid = spec.grid()?;
    let deformation = gen_deformation(spec)?;
    let anatomy = PhantomAnatomy::new(spec, &grid);
    let u_gt = deformation.to_field(&grid);
    let mut moving = ScalarVolume::from_fn(grid, |p| anatomy.intensity(p));
    let mut fixed = ScalarVolume::from_raw(
        grid,
        u_gt.vectors().iter().enumerate().map(|(n, d)| anatomy.intensity(add(grid.world_of_index(n), *d))).collect(),
    );
    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for (vol, id) in [(&mut moving, 5), (&mut fixed, 6)] {
            let mut rng = stream(spec.seed, id);
            for v in vol.data_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }
    let k = spec.lobes as u16;
    let moving_mask = LabelVolume::new(grid, (0..grid.len()).map(|n| anatomy.label(grid.world_of_index(n))).collect(), k)?;
    let fixed_mask = LabelVolume::new(
        grid,
        u_gt.vectors().iter().enumerate().map(|(n, d)| anatomy.label(add(grid.world_of_index(n), *d))).collect(),
        k,
    )?;
    let keypoints = sample_pairs(&mut stream(spec.seed, 3), spec.keypoints, &grid, &anatomy, &deformation)?;
    let landmarks = sample_pairs(&mut stream(spec.seed, 4), spec.landmarks, &grid, &anatomy, &deformation)?;
    Ok(PhantomPair { fixed, moving, fixed_mask, moving_mask, keypoints, landmarks, u_gt, deformation, anatomy })
}

/// Per-voxel `‖u − u_gt‖` statistics, optionally over a voxel mask.
pub fn endpoint_error(u: &DisplacementField, u_gt: &DisplacementField, mask: Option<&[bool]>) -> Result<DistanceStats> {
    u.grid().ensure_matches(u_gt.grid(), "endpoint error fields")?;
    if let Some(m) = mask {
        if m.len() != u.grid().len() {
            return Err(Error::GridMismatch(format!("endpoint mask has {} voxels, grid {}", m.len(), u.grid().len())));
        }
    }
    let values: Vec<f64> = u
        .vectors()
        .iter()
        .zip(u_gt.vectors())
        .enumerate()
        .filter(|(n, _)| mask.map_or(true, |m| m[*n]))
        .map(|(_, (a, b))| norm(sub(*a, *b)))
        .collect();
    DistanceStats::from_values(&values)
}
