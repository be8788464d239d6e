//! Loss terms of the registration objective and their analytic gradients.
//!
//! The objective is
//!
//! ```text
//! L(u) = D(F, M∘y) + α R(u) + β B(u) + γ V(u) + δ K(u)
//! ```
//!
//! with the NGF distance `D`, curvature `R`, mask alignment `B`,
//! volume-change control `V` and keypoint penalty `K`. Integrals are voxel
//! sums weighted by the voxel volume in mm³.

pub mod barrier;
pub mod curvature;
pub mod jacobian;
pub mod keypoint;
pub mod mask;
pub mod ngf;

pub use barrier::{psi, psi_barrier_ext, psi_t};
pub use curvature::curvature;
pub use jacobian::{folding_fraction, jacobian_det_field, vcc_penalty};
pub use keypoint::keypoint_loss;
pub use mask::{mask_loss, MaskTerm};
pub use ngf::{estimate_ngf_epsilon, ngf_distance, NgfTerm};

use crate::error::{Error, Result};
use crate::grid::{add, DisplacementField, KeypointPairSet, LabelVolume, ScalarVolume, Vec3, WorldGrid};
use crate::interp::Cell;

/// Weights of the individual loss terms plus the NGF edge parameter and the
/// barrier parameter of the volume-change penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Curvature weight.
    pub alpha: f64,
    /// Mask alignment weight.
    pub beta: f64,
    /// Volume-change weight.
    pub gamma: f64,
    /// Keypoint weight.
    pub delta: f64,
    /// NGF edge parameter.
    pub epsilon: f64,
    /// Barrier parameter in `(0, 1]`.
    pub t: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 10.0, beta: 1.0, gamma: 0.01, delta: 0.0, epsilon: 1.0, t: 0.2 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("delta", self.delta)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        barrier::check_t(self.t)
    }
}

/// Term values of one objective evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub distance: f64,
    pub curvature: f64,
    pub vcc: f64,
    pub mask: f64,
    pub keypoint: f64,
    /// Fraction of voxels with a non-positive Jacobian determinant.
    pub folding_fraction: f64,
}

impl LossReport {
    fn weighted_total(&self, w: &LossWeights) -> f64 {
        self.distance + w.alpha * self.curvature + w.beta * self.mask + w.gamma * self.vcc + w.delta * self.keypoint
    }
}

/// The full objective for one pair of images on one grid.
///
/// The fixed side (image gradients, NGF domain, fixed mask channels) is
/// precomputed once; [`Objective::evaluate`] then only depends on the field.
#[derive(Debug, Clone)]
pub struct Objective {
    grid: WorldGrid,
    moving: ScalarVolume,
    ngf: NgfTerm,
    mask: Option<MaskTerm>,
    keypoints: KeypointPairSet,
    weights: LossWeights,
}

impl Objective {
    /// `ngf_domain` restricts the distance to the given fixed-grid voxels.
    /// A missing mask term or empty keypoint set forces `β` or `δ` to zero.
    pub fn new(
        fixed: &ScalarVolume,
        moving: ScalarVolume,
        ngf_domain: Option<Vec<bool>>,
        mask: Option<MaskTerm>,
        keypoints: Option<KeypointPairSet>,
        weights: LossWeights,
    ) -> Result<Self> {
        weights.validate()?;
        let mut weights = weights;
        if mask.is_none() && weights.beta > 0.0 {
            log::warn!("no masks given; mask weight set to 0");
            weights.beta = 0.0;
        }
        let keypoints = keypoints.unwrap_or_default();
        if keypoints.is_empty() && weights.delta > 0.0 {
            log::warn!("no keypoints given; keypoint weight set to 0");
            weights.delta = 0.0;
        }
        let ngf = NgfTerm::new(fixed, ngf_domain, weights.epsilon)?;
        Ok(Self { grid: *fixed.grid(), moving, ngf, mask, keypoints, weights })
    }

    pub fn grid(&self) -> &WorldGrid {
        &self.grid
    }

    /// Effective weights after forcing absent terms to zero.
    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    /// Evaluates every term. When `grad` is given it is overwritten with
    /// `∂L/∂u` per voxel.
    pub fn evaluate(&self, u: &DisplacementField, grad: Option<&mut [Vec3]>) -> Result<LossReport> {
        self.grid.ensure_matches(u.grid(), "objective field")?;
        let w = self.weights;
        let want = grad.is_some();
        let n = self.grid.len();

        let mut warped = vec![0.0; n];
        let mut moving_grad = if want { vec![[0.0; 3]; n] } else { Vec::new() };
        let mgrid = *self.moving.grid();
        let mdata = self.moving.data();
        for (idx, d) in u.vectors().iter().enumerate() {
            let cell = Cell::locate(&mgrid, add(self.grid.world_of_index(idx), *d));
            if want {
                let (val, g) = cell.interpolate_with_gradient(&mgrid, |m| mdata[m]);
                warped[idx] = val;
                moving_grad[idx] = g;
            } else {
                warped[idx] = cell.interpolate(&mgrid, |m| mdata[m]);
            }
        }

        let (distance, d_warped) = self.ngf.evaluate(&warped, want);
        let curvature_out = if want && w.alpha > 0.0 {
            let (v, g) = curvature::curvature(u)?;
            (v, Some(g))
        } else {
            (curvature::curvature_value(u)?, None)
        };
        let vcc_out = jacobian::vcc_with(u, w.t, want && w.gamma > 0.0);
        let mask_out = match &self.mask {
            Some(m) => {
                let (v, g) = m.evaluate(u, want && w.beta > 0.0)?;
                (v, Some(g).filter(|g| !g.is_empty()))
            }
            None => (0.0, None),
        };
        let kp_out = keypoint::keypoint_with(&self.keypoints, u, want && w.delta > 0.0);

        let mut report = LossReport {
            total: 0.0,
            distance,
            curvature: curvature_out.0,
            vcc: vcc_out.value,
            mask: mask_out.0,
            keypoint: kp_out.0,
            folding_fraction: vcc_out.folded as f64 / n as f64,
        };
        report.total = report.weighted_total(&w);

        if let Some(grad) = grad {
            let dw = d_warped.expect("gradient requested");
            for (idx, g) in grad.iter_mut().enumerate() {
                let s = dw[idx];
                let mg = moving_grad[idx];
                *g = [s * mg[0], s * mg[1], s * mg[2]];
            }
            let mut accumulate = |term: &[Vec3], weight: f64| {
                if term.is_empty() || weight == 0.0 {
                    return;
                }
                for (g, t) in grad.iter_mut().zip(term) {
                    g[0] += weight * t[0];
                    g[1] += weight * t[1];
                    g[2] += weight * t[2];
                }
            };
            if let Some(g) = &curvature_out.1 {
                accumulate(g, w.alpha);
            }
            accumulate(&vcc_out.grad, w.gamma);
            if let Some(g) = &mask_out.1 {
                accumulate(g, w.beta);
            }
            accumulate(&kp_out.1, w.delta);
        }
        Ok(report)
    }
}

/// Evaluates the complete objective at full resolution.
///
/// The NGF domain is the foreground of `fixed_mask` when given. Missing
/// masks or keypoints force the matching weight to zero.
pub fn total_loss(
    fixed: &ScalarVolume,
    moving: &ScalarVolume,
    fixed_mask: Option<&LabelVolume>,
    moving_mask: Option<&LabelVolume>,
    pairs: Option<&KeypointPairSet>,
    u: &DisplacementField,
    weights: &LossWeights,
) -> Result<(LossReport, Vec<Vec3>)> {
    fixed.grid().ensure_matches(u.grid(), "fixed image and field")?;
    if let Some(m) = fixed_mask {
        fixed.grid().ensure_matches(m.grid(), "fixed mask")?;
    }
    let mask = match (fixed_mask, moving_mask) {
        (Some(f), Some(m)) => Some(MaskTerm::from_labels(f, m)?),
        _ => None,
    };
    let objective = Objective::new(
        fixed,
        moving.clone(),
        fixed_mask.map(|m| m.foreground()),
        mask,
        pairs.cloned(),
        *weights,
    )?;
    let mut grad = vec![[0.0; 3]; u.grid().len()];
    let report = objective.evaluate(u, Some(&mut grad))?;
    Ok((report, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_alignment_costs_nothing() {
        let g = WorldGrid::new([6, 6, 6], [2.0; 3], [0.0; 3]).unwrap();
        let f = ScalarVolume::from_fn(g, |p| (0.4 * p[0]).sin() * 100.0 + p[1] * p[2]);
        let labels: Vec<u16> = (0..g.len()).map(|n| (g.coords(n)[0] / 2) as u16).collect();
        let b = LabelVolume::new(g, labels, 2).unwrap();
        let kp = KeypointPairSet::new(vec![([3.0, 4.0, 5.0], [3.0, 4.0, 5.0])]).unwrap();
        let w = LossWeights { delta: 1e7, ..LossWeights::default() };
        let (r, _) = total_loss(&f, &f, Some(&b), Some(&b), Some(&kp), &DisplacementField::zeros(g), &w).unwrap();
        assert!(r.total.abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn total_is_weighted_sum() {
        let g = WorldGrid::unit([6, 5, 7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = ScalarVolume::from_fn(g, |_| rng.gen_range(-100.0..100.0));
        let m = ScalarVolume::from_fn(g, |_| rng.gen_range(-100.0..100.0));
        let bf = LabelVolume::new(g, (0..g.len()).map(|_| rng.gen_range(0..3)).collect(), 2).unwrap();
        let bm = LabelVolume::new(g, (0..g.len()).map(|_| rng.gen_range(0..3)).collect(), 2).unwrap();
        let kp = KeypointPairSet::new(vec![([1.0, 2.0, 3.0], [1.5, 2.5, 2.0])]).unwrap();
        let u = DisplacementField::from_fn(g, |_| [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)]);
        let w = LossWeights { alpha: 0.7, beta: 1.3, gamma: 0.05, delta: 3.0, epsilon: 2.0, t: 0.1 };
        let (r, _) = total_loss(&f, &m, Some(&bf), Some(&bm), Some(&kp), &u, &w).unwrap();
        let by_hand = r.distance + 0.7 * r.curvature + 1.3 * r.mask + 0.05 * r.vcc + 3.0 * r.keypoint;
        assert!((r.total - by_hand).abs() <= 1e-12 * by_hand.abs());
        assert!(r.curvature >= 0.0 && r.vcc >= 0.0 && r.mask >= 0.0 && r.keypoint >= 0.0);
    }

    #[test]
    fn missing_inputs_zero_their_weights() {
        let g = WorldGrid::unit([4, 4, 4]).unwrap();
        let f = ScalarVolume::filled(g, 0.0);
        let obj = Objective::new(&f, f.clone(), None, None, None, LossWeights { delta: 5.0, ..Default::default() })
            .unwrap();
        assert_eq!(obj.weights().beta, 0.0);
        assert_eq!(obj.weights().delta, 0.0);
    }

    #[test]
    fn invalid_weights_rejected() {
        for w in [
            LossWeights { epsilon: 0.0, ..Default::default() },
            LossWeights { t: 0.0, ..Default::default() },
            LossWeights { t: 1.5, ..Default::default() },
            LossWeights { alpha: -1.0, ..Default::default() },
            LossWeights { gamma: f64::NAN, ..Default::default() },
        ] {
            assert!(w.validate().is_err(), "{w:?}");
        }
    }
}
