//! Keypoint penalty `(1/|K|) Σ ‖k_M − y(k_F)‖²` in mm².

use crate::error::Result;
use crate::grid::{add, sub, DisplacementField, KeypointPairSet, Vec3};
use crate::interp::Cell;

/// Mean squared distance between moving keypoints and transformed fixed
/// keypoints, with its gradient scattered onto the eight field nodes around
/// every fixed keypoint. Zero for an empty set.
pub fn keypoint_loss(pairs: &KeypointPairSet, u: &DisplacementField) -> Result<(f64, Vec<Vec3>)> {
    Ok(keypoint_with(pairs, u, true))
}

pub(crate) fn keypoint_with(pairs: &KeypointPairSet, u: &DisplacementField, want_grad: bool) -> (f64, Vec<Vec3>) {
    let grid = u.grid();
    let mut grad = if want_grad { vec![[0.0; 3]; grid.len()] } else { Vec::new() };
    if pairs.is_empty() {
        return (0.0, grad);
    }
    let inv = 1.0 / pairs.len() as f64;
    let mut total = 0.0;
    for (kf, km) in &pairs.pairs {
        let cell = Cell::locate(grid, *kf);
        let corners = cell.corners(grid);
        let disp = [0, 1, 2].map(|c| cell.interpolate(grid, |n| u.vectors()[n][c]));
        let r = sub(*km, add(*kf, disp));
        total += r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        if want_grad {
            for &(n, w) in &corners {
                let s = -2.0 * inv * w;
                grad[n][0] += s * r[0];
                grad[n][1] += s * r[1];
                grad[n][2] += s * r[2];
            }
        }
    }
    (total * inv, grad)
}
