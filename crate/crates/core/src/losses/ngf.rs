//! Normalized gradient fields (NGF) distance.
//!
//! Per voxel the distance is `1 - <∇M, ∇F>²_ε / (‖∇M‖²_ε ‖∇F‖²_ε)` with
//! `<f, g>_ε = Σ_j (f_j g_j + ε²) = f·g + 3ε²`. It is zero where the image
//! edges are parallel or anti-parallel and approaches one where they are
//! orthogonal, independent of the intensity contrast.

use crate::error::{Error, Result};
use crate::grid::{norm, LabelVolume, ScalarVolume, Vec3, WorldGrid};
use crate::stencil::{gradient, gradient_adjoint};

/// Precomputed fixed-image side of the NGF distance.
#[derive(Debug, Clone)]
pub struct NgfTerm {
    grid: WorldGrid,
    fixed_grad: Vec<Vec3>,
    fixed_norm2: Vec<f64>,
    domain: Option<Vec<bool>>,
    eps3: f64,
}

impl NgfTerm {
    /// `domain` restricts the sum to the given voxels; `None` uses the whole
    /// grid.
    pub fn new(fixed: &ScalarVolume, domain: Option<Vec<bool>>, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("NGF epsilon must be > 0, got {eps}")));
        }
        let grid = *fixed.grid();
        if let Some(d) = &domain {
            if d.len() != grid.len() {
                return Err(Error::GridMismatch("NGF domain size differs from fixed image".into()));
            }
        }
        let eps3 = 3.0 * eps * eps;
        let fixed_grad = gradient(&grid, fixed.data());
        let fixed_norm2 = fixed_grad.iter().map(|g| g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + eps3).collect();
        Ok(Self { grid, fixed_grad, fixed_norm2, domain, eps3 })
    }

    pub fn grid(&self) -> &WorldGrid {
        &self.grid
    }

    /// Distance for a warped moving image given as raw voxel data on the
    /// fixed grid. With `want_grad`, also returns `∂D/∂Mw` per voxel.
    pub fn evaluate(&self, warped: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
        let grid = &self.grid;
        let v = grid.voxel_volume();
        let moving_grad = gradient(grid, warped);
        let mut sens = if want_grad { vec![[0.0; 3]; grid.len()] } else { Vec::new() };
        let mut total = 0.0;
        for idx in 0..grid.len() {
            if let Some(d) = &self.domain {
                if !d[idx] {
                    continue;
                }
            }
            let g = moving_grad[idx];
            let f = self.fixed_grad[idx];
            let a = g[0] * f[0] + g[1] * f[1] + g[2] * f[2] + self.eps3;
            let bm = g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + self.eps3;
            let bf = self.fixed_norm2[idx];
            let ratio = a * a / (bm * bf);
            total += 1.0 - ratio;
            if want_grad {
                let scale = -v * 2.0 * a / (bm * bf);
                let k = a / bm;
                sens[idx] = [
                    scale * (f[0] - k * g[0]),
                    scale * (f[1] - k * g[1]),
                    scale * (f[2] - k * g[2]),
                ];
            }
        }
        let grad = want_grad.then(|| gradient_adjoint(grid, &sens));
        (total * v, grad)
    }
}

/// NGF distance between `fixed` and an already warped moving image.
///
/// `lung_mask` restricts the domain to its foreground; `None` uses every
/// voxel. Returns the value and its exact derivative with respect to each
/// voxel of `warped`.
pub fn ngf_distance(
    fixed: &ScalarVolume,
    warped: &ScalarVolume,
    lung_mask: Option<&LabelVolume>,
    eps: f64,
) -> Result<(f64, ScalarVolume)> {
    fixed.grid().ensure_matches(warped.grid(), "NGF images")?;
    if let Some(m) = lung_mask {
        fixed.grid().ensure_matches(m.grid(), "NGF mask")?;
    }
    let term = NgfTerm::new(fixed, lung_mask.map(|m| m.foreground()), eps)?;
    let (value, grad) = term.evaluate(warped.data(), true);
    Ok((value, ScalarVolume::from_raw(*fixed.grid(), grad.expect("gradient requested"))))
}

/// Edge parameter from the mean gradient magnitude: `ν / V ∫ ‖∇I‖ dx`,
/// floored at `1e-6`.
pub fn estimate_ngf_epsilon(image: &ScalarVolume, nu: f64) -> Result<f64> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise level must be > 0, got {nu}")));
    }
    let grads = gradient(image.grid(), image.data());
    let mean = grads.iter().map(|g| norm(*g)).sum::<f64>() / grads.len() as f64;
    Ok((nu * mean).max(1e-6))
}
