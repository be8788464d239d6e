//! Curvature regularizer `Σ_j ∫ (Δu_j)² dx`.
//!
//! The second difference along an axis is taken only where the full
//! three-point stencil fits; at the first and last node of an axis the
//! contribution of that axis is zero (linear extrapolation across the
//! boundary). Affine fields therefore have zero curvature everywhere.

use crate::error::{Error, Result};
use crate::grid::{DisplacementField, Vec3, WorldGrid};

fn check_dims(grid: &WorldGrid) -> Result<()> {
    if grid.dims().iter().any(|&d| d < 3) {
        return Err(Error::InvalidGrid(format!(
            "curvature needs at least 3 voxels per axis, got {:?}",
            grid.dims()
        )));
    }
    Ok(())
}

/// Laplacian of each displacement component, mm⁻¹.
pub fn laplacian(u: &DisplacementField) -> Vec<Vec3> {
    let grid = u.grid();
    let vecs = u.vectors();
    let dims = grid.dims();
    let inv_h2 = grid.spacing().map(|h| 1.0 / (h * h));
    let mut out = vec![[0.0; 3]; grid.len()];
    for (idx, l) in out.iter_mut().enumerate() {
        let c = grid.coords(idx);
        for a in 0..3 {
            if c[a] == 0 || c[a] + 1 >= dims[a] {
                continue;
            }
            let s = grid.stride(a);
            let (lo, mid, hi) = (vecs[idx - s], vecs[idx], vecs[idx + s]);
            for j in 0..3 {
                l[j] += (lo[j] - 2.0 * mid[j] + hi[j]) * inv_h2[a];
            }
        }
    }
    out
}

/// Curvature energy and its gradient with respect to every displacement
/// vector.
pub fn curvature(u: &DisplacementField) -> Result<(f64, Vec<Vec3>)> {
    check_dims(u.grid())?;
    Ok(curvature_with(u, true))
}

pub(crate) fn curvature_value(u: &DisplacementField) -> Result<f64> {
    check_dims(u.grid())?;
    Ok(curvature_with(u, false).0)
}

fn curvature_with(u: &DisplacementField, want_grad: bool) -> (f64, Vec<Vec3>) {
    let grid = u.grid();
    let v = grid.voxel_volume();
    let dims = grid.dims();
    let lap = laplacian(u);
    let value = lap.iter().map(|l| l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sum::<f64>() * v;
    if !want_grad {
        return (value, Vec::new());
    }
    let inv_h2 = grid.spacing().map(|h| 1.0 / (h * h));
    let mut grad = vec![[0.0; 3]; grid.len()];
    for (idx, l) in lap.iter().enumerate() {
        let c = grid.coords(idx);
        for a in 0..3 {
            if c[a] == 0 || c[a] + 1 >= dims[a] {
                continue;
            }
            let s = grid.stride(a);
            for j in 0..3 {
                let w = 2.0 * v * l[j] * inv_h2[a];
                grad[idx - s][j] += w;
                grad[idx][j] -= 2.0 * w;
                grad[idx + s][j] += w;
            }
        }
    }
    (value, grad)
}
