//! Regular world-space grids and the volumes that live on them.
//!
//! All volumes are stored row-major with x varying fastest:
//! `index = x + nx * (y + ny * z)`. World coordinates are in millimetres and
//! the grid axes are aligned with the world axes.

use crate::error::{Error, Result};

/// A 3D point or vector in world millimetres.
pub type Vec3 = [f64; 3];

/// Geometry of a regular, axis-aligned voxel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldGrid {
    dims: [usize; 3],
    spacing: Vec3,
    origin: Vec3,
}

impl WorldGrid {
    pub fn new(dims: [usize; 3], spacing: Vec3, origin: Vec3) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidGrid(format!("dims must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid(format!("origin must be finite, got {origin:?}")));
        }
        Ok(Self { dims, spacing, origin })
    }

    /// Grid with unit spacing at the world origin.
    pub fn unit(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    #[inline]
    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one voxel in mm³.
    #[inline]
    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    /// Index offset for a unit step along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    /// World position of the centre of voxel `(i, j, k)`.
    #[inline]
    pub fn world(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    #[inline]
    pub fn world_of_index(&self, index: usize) -> Vec3 {
        let [i, j, k] = self.coords(index);
        self.world(i, j, k)
    }

    /// Continuous voxel coordinates of a world point.
    #[inline]
    pub fn to_voxel(&self, p: Vec3) -> Vec3 {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    /// Whether `p` lies inside the box spanned by the voxel centres.
    pub fn contains(&self, p: Vec3) -> bool {
        let v = self.to_voxel(p);
        (0..3).all(|a| v[a] >= -1e-9 && v[a] <= (self.dims[a] - 1) as f64 + 1e-9)
    }

    /// World position of the last voxel centre.
    pub fn extent_max(&self) -> Vec3 {
        self.world(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    /// Geometric equality up to a relative tolerance on spacing and origin.
    pub fn matches(&self, other: &WorldGrid) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        self.dims == other.dims
            && (0..3).all(|a| close(self.spacing[a], other.spacing[a]))
            && (0..3).all(|a| close(self.origin[a], other.origin[a]))
    }

    pub fn ensure_matches(&self, other: &WorldGrid, what: &str) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{what}: {self:?} vs {other:?}")))
        }
    }
}

/// Scalar image on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    grid: WorldGrid,
    data: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(grid: WorldGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "data length {} does not match grid size {}",
                data.len(),
                grid.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("volume contains non-finite values".into()));
        }
        Ok(Self { grid, data })
    }

    pub fn filled(grid: WorldGrid, value: f64) -> Self {
        Self { grid, data: vec![value; grid.len()] }
    }

    /// Evaluates `f` at every voxel centre.
    pub fn from_fn(grid: WorldGrid, mut f: impl FnMut(Vec3) -> f64) -> Self {
        let data = (0..grid.len()).map(|n| f(grid.world_of_index(n))).collect();
        Self { grid, data }
    }

    pub(crate) fn from_raw(grid: WorldGrid, data: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), data.len());
        Self { grid, data }
    }

    #[inline]
    pub fn grid(&self) -> &WorldGrid {
        &self.grid
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.index(i, j, k)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Dense displacement field `u(x)` in world millimetres, so that the
/// deformation is `y(x) = x + u(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    grid: WorldGrid,
    vectors: Vec<Vec3>,
}

impl DisplacementField {
    pub fn new(grid: WorldGrid, vectors: Vec<Vec3>) -> Result<Self> {
        if vectors.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field length {} does not match grid size {}",
                vectors.len(),
                grid.len()
            )));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field contains non-finite values".into()));
        }
        Ok(Self { grid, vectors })
    }

    pub fn zeros(grid: WorldGrid) -> Self {
        Self { grid, vectors: vec![[0.0; 3]; grid.len()] }
    }

    pub fn constant(grid: WorldGrid, value: Vec3) -> Self {
        Self { grid, vectors: vec![value; grid.len()] }
    }

    pub fn from_fn(grid: WorldGrid, mut f: impl FnMut(Vec3) -> Vec3) -> Self {
        let vectors = (0..grid.len()).map(|n| f(grid.world_of_index(n))).collect();
        Self { grid, vectors }
    }

    pub(crate) fn from_raw(grid: WorldGrid, vectors: Vec<Vec3>) -> Self {
        debug_assert_eq!(grid.len(), vectors.len());
        Self { grid, vectors }
    }

    #[inline]
    pub fn grid(&self) -> &WorldGrid {
        &self.grid
    }

    #[inline]
    pub fn vectors(&self) -> &[Vec3] {
        &self.vectors
    }

    #[inline]
    pub fn vectors_mut(&mut self) -> &mut [Vec3] {
        &mut self.vectors
    }

    pub fn into_vectors(self) -> Vec<Vec3> {
        self.vectors
    }

    /// One displacement component as a scalar volume.
    pub fn component(&self, axis: usize) -> ScalarVolume {
        ScalarVolume::from_raw(self.grid, self.vectors.iter().map(|v| v[axis]).collect())
    }

    /// Largest displacement magnitude in mm.
    pub fn max_norm(&self) -> f64 {
        self.vectors.iter().map(|v| norm(*v)).fold(0.0, f64::max)
    }
}

/// Integer label map; label 0 is background and labels `1..=k` are
/// foreground classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    grid: WorldGrid,
    labels: Vec<u16>,
    k: u16,
}

impl LabelVolume {
    pub fn new(grid: WorldGrid, labels: Vec<u16>, k: u16) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "label length {} does not match grid size {}",
                labels.len(),
                grid.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > k) {
            return Err(Error::InvalidParameter(format!("label {bad} exceeds label count {k}")));
        }
        Ok(Self { grid, labels, k })
    }

    /// Label count inferred from the largest label present.
    pub fn from_labels(grid: WorldGrid, labels: Vec<u16>) -> Result<Self> {
        let k = labels.iter().copied().max().unwrap_or(0);
        Self::new(grid, labels, k)
    }

    #[inline]
    pub fn grid(&self) -> &WorldGrid {
        &self.grid
    }

    #[inline]
    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    /// Number of foreground labels.
    #[inline]
    pub fn label_count(&self) -> usize {
        self.k as usize
    }

    /// One-hot channel for `label` (1-based) as 0/1 values.
    pub fn channel(&self, label: u16) -> ScalarVolume {
        ScalarVolume::from_raw(
            self.grid,
            self.labels.iter().map(|&l| if l == label { 1.0 } else { 0.0 }).collect(),
        )
    }

    /// All `k` one-hot channels, label 1 first.
    pub fn one_hot(&self) -> Vec<ScalarVolume> {
        (1..=self.k).map(|l| self.channel(l)).collect()
    }

    /// Binary foreground indicator (any label > 0).
    pub fn foreground(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l > 0).collect()
    }

    pub fn count(&self, label: u16) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Corresponding landmark pairs: `fixed` points in the fixed image and the
/// matching `moving` points, both in world mm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeypointPairSet {
    pub pairs: Vec<(Vec3, Vec3)>,
}

impl KeypointPairSet {
    pub fn new(pairs: Vec<(Vec3, Vec3)>) -> Result<Self> {
        if pairs.iter().any(|(f, m)| f.iter().chain(m.iter()).any(|c| !c.is_finite())) {
            return Err(Error::InvalidParameter("keypoint coordinates must be finite".into()));
        }
        Ok(Self { pairs })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn fixed_points(&self) -> Vec<Vec3> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn moving_points(&self) -> Vec<Vec3> {
        self.pairs.iter().map(|p| p.1).collect()
    }

    /// Number of fixed points outside `grid`.
    pub fn count_outside(&self, grid: &WorldGrid) -> usize {
        self.pairs.iter().filter(|(f, _)| !grid.contains(*f)).count()
    }
}

#[inline]
pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_geometry() {
        assert!(WorldGrid::new([0, 2, 2], [1.0; 3], [0.0; 3]).is_err());
        assert!(WorldGrid::new([2, 2, 2], [1.0, -1.0, 1.0], [0.0; 3]).is_err());
        assert!(WorldGrid::new([2, 2, 2], [1.0; 3], [f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn index_and_world_round_trip() {
        let g = WorldGrid::new([4, 5, 6], [0.5, 1.0, 2.0], [-1.0, 2.0, 3.0]).unwrap();
        for n in [0, 7, 33, g.len() - 1] {
            let [i, j, k] = g.coords(n);
            assert_eq!(g.index(i, j, k), n);
            let v = g.to_voxel(g.world(i, j, k));
            assert_eq!(v, [i as f64, j as f64, k as f64]);
        }
        assert_eq!(g.voxel_volume(), 1.0);
    }

    #[test]
    fn label_bounds_enforced() {
        let g = WorldGrid::unit([2, 1, 1]).unwrap();
        assert!(LabelVolume::new(g, vec![0, 3], 2).is_err());
        let lv = LabelVolume::from_labels(g, vec![0, 3]).unwrap();
        assert_eq!(lv.label_count(), 3);
        assert_eq!(lv.one_hot().len(), 3);
    }

    #[test]
    fn volume_length_checked() {
        let g = WorldGrid::unit([2, 2, 2]).unwrap();
        assert!(ScalarVolume::new(g, vec![0.0; 7]).is_err());
        assert!(ScalarVolume::new(g, vec![f64::INFINITY; 8]).is_err());
        assert!(DisplacementField::new(g, vec![[0.0; 3]; 8]).is_ok());
    }
}
