//! Trilinear interpolation with clamp-to-edge boundary handling.

use crate::grid::{ScalarVolume, Vec3, WorldGrid};

/// Location of a world point inside the interpolation cell that contains it.
///
/// `lo`/`hi` are the bracketing node indices per axis, `frac` the position
/// between them, and `inside[a]` is false when the coordinate was clamped
/// (the interpolant is then constant along that axis).
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub frac: Vec3,
    pub inside: [bool; 3],
}

impl Cell {
    #[inline]
    pub fn locate(grid: &WorldGrid, p: Vec3) -> Cell {
        let dims = grid.dims();
        let v = grid.to_voxel(p);
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut frac = [0.0; 3];
        let mut inside = [false; 3];
        for a in 0..3 {
            let n = dims[a];
            if n == 1 {
                continue;
            }
            let max = (n - 1) as f64;
            let c = v[a];
            // NaN falls through to the lower clamp.
            let (c, ok) = if c >= 0.0 && c <= max {
                (c, true)
            } else if c > max {
                (max, false)
            } else {
                (0.0, false)
            };
            // At the last node the cell degenerates to a single node so
            // that node values are reproduced exactly.
            let i0 = (c.floor() as usize).min(n - 1);
            lo[a] = i0;
            hi[a] = (i0 + 1).min(n - 1);
            frac[a] = c - i0 as f64;
            inside[a] = ok;
        }
        Cell { lo, hi, frac, inside }
    }

    /// Flat indices and weights of the eight corner nodes.
    #[inline]
    pub fn corners(&self, grid: &WorldGrid) -> [(usize, f64); 8] {
        let [fx, fy, fz] = self.frac;
        let xs = [(self.lo[0], 1.0 - fx), (self.hi[0], fx)];
        let ys = [(self.lo[1], 1.0 - fy), (self.hi[1], fy)];
        let zs = [(self.lo[2], 1.0 - fz), (self.hi[2], fz)];
        let mut out = [(0usize, 0.0); 8];
        let mut n = 0;
        for &(k, wz) in &zs {
            for &(j, wy) in &ys {
                for &(i, wx) in &xs {
                    out[n] = (grid.index(i, j, k), wx * wy * wz);
                    n += 1;
                }
            }
        }
        out
    }

    /// Corner indices with weights and the derivative of each weight with
    /// respect to the world position (mm⁻¹). Clamped axes get zero derivative.
    #[inline]
    pub fn corners_with_gradient(&self, grid: &WorldGrid) -> [(usize, f64, Vec3); 8] {
        let h = grid.spacing();
        let [fx, fy, fz] = self.frac;
        let d = |a: usize| if self.inside[a] { 1.0 / h[a] } else { 0.0 };
        let (dx, dy, dz) = (d(0), d(1), d(2));
        let xs = [(self.lo[0], 1.0 - fx, -dx), (self.hi[0], fx, dx)];
        let ys = [(self.lo[1], 1.0 - fy, -dy), (self.hi[1], fy, dy)];
        let zs = [(self.lo[2], 1.0 - fz, -dz), (self.hi[2], fz, dz)];
        let mut out = [(0usize, 0.0, [0.0; 3]); 8];
        let mut n = 0;
        for &(k, wz, gz) in &zs {
            for &(j, wy, gy) in &ys {
                for &(i, wx, gx) in &xs {
                    out[n] = (
                        grid.index(i, j, k),
                        wx * wy * wz,
                        [gx * wy * wz, wx * gy * wz, wx * wy * gz],
                    );
                    n += 1;
                }
            }
        }
        out
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

impl Cell {
    /// The eight corner values, x fastest.
    #[inline]
    fn gather(&self, grid: &WorldGrid, mut value: impl FnMut(usize) -> f64) -> [f64; 8] {
        let (l, h) = (self.lo, self.hi);
        [
            value(grid.index(l[0], l[1], l[2])),
            value(grid.index(h[0], l[1], l[2])),
            value(grid.index(l[0], h[1], l[2])),
            value(grid.index(h[0], h[1], l[2])),
            value(grid.index(l[0], l[1], h[2])),
            value(grid.index(h[0], l[1], h[2])),
            value(grid.index(l[0], h[1], h[2])),
            value(grid.index(h[0], h[1], h[2])),
        ]
    }

    /// Interpolated value as nested linear blends, which reproduces node
    /// values and constants exactly.
    #[inline]
    pub fn interpolate(&self, grid: &WorldGrid, value: impl FnMut(usize) -> f64) -> f64 {
        let c = self.gather(grid, value);
        let [fx, fy, fz] = self.frac;
        let y0 = lerp(lerp(c[0], c[1], fx), lerp(c[2], c[3], fx), fy);
        let y1 = lerp(lerp(c[4], c[5], fx), lerp(c[6], c[7], fx), fy);
        lerp(y0, y1, fz)
    }

    /// Interpolated value and its derivative with respect to the world
    /// position (per mm). Clamped axes have zero derivative.
    #[inline]
    pub fn interpolate_with_gradient(&self, grid: &WorldGrid, value: impl FnMut(usize) -> f64) -> (f64, Vec3) {
        let c = self.gather(grid, value);
        let [fx, fy, fz] = self.frac;
        let h = grid.spacing();
        let x00 = lerp(c[0], c[1], fx);
        let x10 = lerp(c[2], c[3], fx);
        let x01 = lerp(c[4], c[5], fx);
        let x11 = lerp(c[6], c[7], fx);
        let y0 = lerp(x00, x10, fy);
        let y1 = lerp(x01, x11, fy);
        let v = lerp(y0, y1, fz);
        let scale = |a: usize| if self.inside[a] && self.hi[a] != self.lo[a] { 1.0 / h[a] } else { 0.0 };
        let dx = lerp(lerp(c[1] - c[0], c[3] - c[2], fy), lerp(c[5] - c[4], c[7] - c[6], fy), fz) * scale(0);
        let dy = lerp(x10 - x00, x11 - x01, fz) * scale(1);
        let dz = (y1 - y0) * scale(2);
        (v, [dx, dy, dz])
    }
}

/// Trilinear sample of `data` (laid out on `grid`) at world point `p`.
#[inline]
pub fn sample_slice(grid: &WorldGrid, data: &[f64], p: Vec3) -> f64 {
    Cell::locate(grid, p).interpolate(grid, |n| data[n])
}

/// Trilinear sample and its spatial derivative (per mm) at `p`.
#[inline]
pub fn sample_slice_with_gradient(grid: &WorldGrid, data: &[f64], p: Vec3) -> (f64, Vec3) {
    Cell::locate(grid, p).interpolate_with_gradient(grid, |n| data[n])
}

/// Trilinear sample of a vector field stored as `[f64; 3]` per node.
#[inline]
pub fn sample_vectors(grid: &WorldGrid, data: &[Vec3], p: Vec3) -> Vec3 {
    let cell = Cell::locate(grid, p);
    [
        cell.interpolate(grid, |n| data[n][0]),
        cell.interpolate(grid, |n| data[n][1]),
        cell.interpolate(grid, |n| data[n][2]),
    ]
}

/// Trilinear interpolation of `vol` at world point `p`, clamping to the
/// boundary for points outside the grid.
pub fn sample_trilinear(vol: &ScalarVolume, p: Vec3) -> f64 {
    sample_slice(vol.grid(), vol.data(), p)
}
