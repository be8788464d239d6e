//! Segmentation alignment: `½ ∫ ‖b_M(y(x)) − b_F(x)‖² dx` over one-hot
//! channels warped with trilinear interpolation.

use crate::error::{Error, Result};
use crate::grid::{add, DisplacementField, LabelVolume, ScalarVolume, Vec3, WorldGrid};
use crate::interp::Cell;

/// Soft one-hot channels of both masks, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct MaskTerm {
    fixed: Vec<Vec<f64>>,
    fixed_grid: WorldGrid,
    moving: Vec<Vec<f64>>,
    moving_grid: WorldGrid,
}

impl MaskTerm {
    /// Both channel lists must have the same length; each list shares a grid.
    pub fn from_channels(fixed: &[ScalarVolume], moving: &[ScalarVolume]) -> Result<Self> {
        if fixed.len() != moving.len() {
            return Err(Error::LabelCountMismatch { fixed: fixed.len(), moving: moving.len() });
        }
        let (Some(f0), Some(m0)) = (fixed.first(), moving.first()) else {
            return Err(Error::EmptyInput("mask term needs at least one label"));
        };
        for ch in fixed {
            f0.grid().ensure_matches(ch.grid(), "fixed mask channels")?;
        }
        for ch in moving {
            m0.grid().ensure_matches(ch.grid(), "moving mask channels")?;
        }
        Ok(Self {
            fixed: fixed.iter().map(|c| c.data().to_vec()).collect(),
            fixed_grid: *f0.grid(),
            moving: moving.iter().map(|c| c.data().to_vec()).collect(),
            moving_grid: *m0.grid(),
        })
    }

    pub fn from_labels(fixed: &LabelVolume, moving: &LabelVolume) -> Result<Self> {
        if fixed.label_count() != moving.label_count() {
            return Err(Error::LabelCountMismatch { fixed: fixed.label_count(), moving: moving.label_count() });
        }
        Self::from_channels(&fixed.one_hot(), &moving.one_hot())
    }

    pub fn label_count(&self) -> usize {
        self.fixed.len()
    }

    /// Value and, optionally, `∂B/∂u` per voxel of `u`.
    pub fn evaluate(&self, u: &DisplacementField, want_grad: bool) -> Result<(f64, Vec<Vec3>)> {
        self.fixed_grid.ensure_matches(u.grid(), "mask loss field")?;
        let grid = u.grid();
        let v = grid.voxel_volume();
        let mut grad = if want_grad { vec![[0.0; 3]; grid.len()] } else { Vec::new() };
        let mut total = 0.0;
        // Per-voxel channel contributions are summed in a canonical order so
        // that relabelling both masks consistently gives identical results.
        let mut terms: Vec<[f64; 4]> = Vec::with_capacity(self.fixed.len());
        for (idx, d) in u.vectors().iter().enumerate() {
            let cell = Cell::locate(&self.moving_grid, add(grid.world_of_index(idx), *d));
            terms.clear();
            for (fixed, moving) in self.fixed.iter().zip(&self.moving) {
                let (val, dval) = cell.interpolate_with_gradient(&self.moving_grid, |n| moving[n]);
                let diff = val - fixed[idx];
                if diff != 0.0 {
                    terms.push([diff * diff, diff * dval[0], diff * dval[1], diff * dval[2]]);
                }
            }
            if terms.len() > 2 {
                terms.sort_unstable_by(|a, b| {
                    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
                });
            }
            let mut acc = [0.0; 4];
            for t in &terms {
                for c in 0..4 {
                    acc[c] += t[c];
                }
            }
            total += acc[0];
            if want_grad {
                grad[idx] = [v * acc[1], v * acc[2], v * acc[3]];
            }
        }
        Ok((0.5 * total * v, grad))
    }
}

/// Mask alignment loss between hard label maps, with the gradient with
/// respect to each displacement vector.
pub fn mask_loss(
    fixed: &LabelVolume,
    moving: &LabelVolume,
    u: &DisplacementField,
) -> Result<(f64, Vec<Vec3>)> {
    MaskTerm::from_labels(fixed, moving)?.evaluate(u, true)
}
