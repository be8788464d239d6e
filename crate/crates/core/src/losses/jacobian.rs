//! Jacobian determinant of `y(x) = x + u(x)` and the volume-change penalty.

use crate::error::Result;
use crate::grid::{DisplacementField, ScalarVolume, Vec3, WorldGrid};
use crate::losses::barrier::{check_t, psi_t_unchecked};
use crate::stencil::{first_diff, vector_jacobian};

pub type Mat3 = [[f64; 3]; 3];

#[inline]
pub(crate) fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// `∂det/∂m[i][j]`.
#[inline]
pub(crate) fn cofactor3(m: &Mat3) -> Mat3 {
    [
        [
            m[1][1] * m[2][2] - m[1][2] * m[2][1],
            m[1][2] * m[2][0] - m[1][0] * m[2][2],
            m[1][0] * m[2][1] - m[1][1] * m[2][0],
        ],
        [
            m[0][2] * m[2][1] - m[0][1] * m[2][2],
            m[0][0] * m[2][2] - m[0][2] * m[2][0],
            m[0][1] * m[2][0] - m[0][0] * m[2][1],
        ],
        [
            m[0][1] * m[1][2] - m[0][2] * m[1][1],
            m[0][2] * m[1][0] - m[0][0] * m[1][2],
            m[0][0] * m[1][1] - m[0][1] * m[1][0],
        ],
    ]
}

#[inline]
fn deformation_gradient(grid: &WorldGrid, u: &[Vec3], idx: usize) -> Mat3 {
    let mut j = vector_jacobian(grid, u, idx, grid.coords(idx));
    for (a, row) in j.iter_mut().enumerate() {
        row[a] += 1.0;
    }
    j
}

/// Per-voxel `det(I + ∇u)` with central differences in the interior and
/// one-sided differences at the boundary.
pub fn jacobian_det_field(u: &DisplacementField) -> ScalarVolume {
    let grid = u.grid();
    let data = (0..grid.len()).map(|idx| det3(&deformation_gradient(grid, u.vectors(), idx))).collect();
    ScalarVolume::from_raw(*grid, data)
}

/// Volume-change control: `Σ_x ψ_t(det ∇y(x)) · voxel volume` over the
/// whole grid, with its exact gradient.
pub fn vcc_penalty(u: &DisplacementField, t: f64) -> Result<(f64, Vec<Vec3>)> {
    check_t(t)?;
    let out = vcc_with(u, t, true);
    Ok((out.value, out.grad))
}

pub(crate) struct VccOutput {
    pub value: f64,
    pub grad: Vec<Vec3>,
    pub folded: usize,
}

pub(crate) fn vcc_with(u: &DisplacementField, t: f64, want_grad: bool) -> VccOutput {
    let grid = u.grid();
    let vecs = u.vectors();
    let v = grid.voxel_volume();
    let mut grad = if want_grad { vec![[0.0; 3]; grid.len()] } else { Vec::new() };
    let mut total = 0.0;
    let mut folded = 0;
    for idx in 0..grid.len() {
        let c = grid.coords(idx);
        let mut m = vector_jacobian(grid, vecs, idx, c);
        for (a, row) in m.iter_mut().enumerate() {
            row[a] += 1.0;
        }
        let det = det3(&m);
        if det <= 0.0 {
            folded += 1;
        }
        let (psi, dpsi) = psi_t_unchecked(det, t);
        total += psi;
        if !want_grad || dpsi == 0.0 {
            continue;
        }
        let cof = cofactor3(&m);
        let s = v * dpsi;
        for a in 0..3 {
            if let Some(d) = first_diff(grid, idx, c[a], a) {
                let w = s * d.coef;
                for i in 0..3 {
                    let g = w * cof[i][a];
                    grad[d.plus][i] += g;
                    grad[d.minus][i] -= g;
                }
            }
        }
    }
    VccOutput { value: total * v, grad, folded }
}

/// Fraction of voxels with `det ∇y ≤ 0`.
pub fn folding_fraction(u: &DisplacementField) -> f64 {
    let det = jacobian_det_field(u);
    det.data().iter().filter(|&&d| d <= 0.0).count() as f64 / det.data().len() as f64
}
