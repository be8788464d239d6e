//! First- and second-order finite-difference stencils on a grid.
//!
//! First derivatives are central in the interior and one-sided at the
//! boundary. Each derivative is `coef * (f[plus] - f[minus])`, which makes
//! the adjoint a two-entry scatter.

use crate::grid::{Vec3, WorldGrid};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Diff {
    pub plus: usize,
    pub minus: usize,
    pub coef: f64,
}

/// Stencil for `∂/∂x_axis` at flat index `idx` whose coordinate along
/// `axis` is `pos`. `None` for singleton axes.
#[inline]
pub(crate) fn first_diff(grid: &WorldGrid, idx: usize, pos: usize, axis: usize) -> Option<Diff> {
    let n = grid.dims()[axis];
    if n < 2 {
        return None;
    }
    let s = grid.stride(axis);
    let h = grid.spacing()[axis];
    Some(if pos == 0 {
        Diff { plus: idx + s, minus: idx, coef: 1.0 / h }
    } else if pos == n - 1 {
        Diff { plus: idx, minus: idx - s, coef: 1.0 / h }
    } else {
        Diff { plus: idx + s, minus: idx - s, coef: 0.5 / h }
    })
}

/// Spatial gradient (mm⁻¹) of a scalar field at every voxel.
pub fn gradient(grid: &WorldGrid, f: &[f64]) -> Vec<Vec3> {
    let mut out = vec![[0.0; 3]; grid.len()];
    for (idx, g) in out.iter_mut().enumerate() {
        let c = grid.coords(idx);
        for a in 0..3 {
            if let Some(d) = first_diff(grid, idx, c[a], a) {
                g[a] = d.coef * (f[d.plus] - f[d.minus]);
            }
        }
    }
    out
}

/// Adjoint of [`gradient`]: given `s = ∂L/∂(∇f)` per voxel, returns `∂L/∂f`.
pub fn gradient_adjoint(grid: &WorldGrid, s: &[Vec3]) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (idx, sv) in s.iter().enumerate() {
        if *sv == [0.0; 3] {
            continue;
        }
        let c = grid.coords(idx);
        for a in 0..3 {
            if let Some(d) = first_diff(grid, idx, c[a], a) {
                let v = d.coef * sv[a];
                out[d.plus] += v;
                out[d.minus] -= v;
            }
        }
    }
    out
}

/// Jacobian `∂u_i/∂x_a` of a vector field at one voxel, row `i`, column `a`.
#[inline]
pub(crate) fn vector_jacobian(grid: &WorldGrid, u: &[Vec3], idx: usize, c: [usize; 3]) -> [[f64; 3]; 3] {
    let mut j = [[0.0; 3]; 3];
    for a in 0..3 {
        if let Some(d) = first_diff(grid, idx, c[a], a) {
            let p = u[d.plus];
            let m = u[d.minus];
            for i in 0..3 {
                j[i][a] = d.coef * (p[i] - m[i]);
            }
        }
    }
    j
}
