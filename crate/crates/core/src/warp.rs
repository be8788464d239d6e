//! Warping, field composition and field resampling.

use crate::error::Result;
use crate::grid::{add, norm, sub, DisplacementField, LabelVolume, ScalarVolume, Vec3, WorldGrid};
use crate::interp::{sample_slice, sample_vectors, Cell};

/// Samples `moving` at `x + u(x)` for every voxel `x` of the field grid.
pub fn warp_image(moving: &ScalarVolume, u: &DisplacementField) -> ScalarVolume {
    let grid = *u.grid();
    let data = u
        .vectors()
        .iter()
        .enumerate()
        .map(|(n, d)| sample_slice(moving.grid(), moving.data(), add(grid.world_of_index(n), *d)))
        .collect();
    ScalarVolume::from_raw(grid, data)
}

/// Warps every one-hot channel of `mask` with trilinear interpolation.
///
/// Channel `c` holds label `c + 1`; values stay within `[0, 1]`.
pub fn warp_onehot_linear(mask: &LabelVolume, u: &DisplacementField) -> Vec<ScalarVolume> {
    warp_channels(&mask.one_hot(), u)
}

/// Warps a set of soft channels that share one grid, locating each sample
/// once for all channels.
pub fn warp_channels(channels: &[ScalarVolume], u: &DisplacementField) -> Vec<ScalarVolume> {
    let Some(first) = channels.first() else {
        return Vec::new();
    };
    let src = *first.grid();
    let grid = *u.grid();
    let mut out = vec![vec![0.0; grid.len()]; channels.len()];
    for (n, d) in u.vectors().iter().enumerate() {
        let cell = Cell::locate(&src, add(grid.world_of_index(n), *d));
        for (o, ch) in out.iter_mut().zip(channels) {
            let data = ch.data();
            o[n] = cell.interpolate(&src, |m| data[m]);
        }
    }
    out.into_iter().map(|data| ScalarVolume::from_raw(grid, data)).collect()
}

/// Hard labels from soft one-hot channels: the arg-max over background
/// (`1 - Σ channels`) and every foreground channel.
pub fn argmax_labels(channels: &[ScalarVolume]) -> Result<LabelVolume> {
    let Some(first) = channels.first() else {
        return Err(crate::Error::EmptyInput("no channels to binarize"));
    };
    let grid = *first.grid();
    for ch in channels {
        grid.ensure_matches(ch.grid(), "argmax channels")?;
    }
    let labels = (0..grid.len())
        .map(|n| {
            let total: f64 = channels.iter().map(|c| c.data()[n]).sum();
            let mut best = (0u16, 1.0 - total);
            for (c, ch) in channels.iter().enumerate() {
                let v = ch.data()[n];
                if v > best.1 {
                    best = ((c + 1) as u16, v);
                }
            }
            best.0
        })
        .collect();
    LabelVolume::new(grid, labels, channels.len() as u16)
}

/// Warps a label map: linear one-hot warping followed by arg-max.
pub fn warp_labels(mask: &LabelVolume, u: &DisplacementField) -> Result<LabelVolume> {
    if mask.label_count() == 0 {
        return LabelVolume::new(*u.grid(), vec![0; u.grid().len()], 0);
    }
    argmax_labels(&warp_onehot_linear(mask, u))
}

/// Composition `y = y_prev ∘ y_new`, i.e.
/// `u(x) = u_new(x) + u_prev(x + u_new(x))`.
///
/// `u_new` is the residual found on the image already warped by `u_prev`.
pub fn compose(u_prev: &DisplacementField, u_new: &DisplacementField) -> Result<DisplacementField> {
    u_prev.grid().ensure_matches(u_new.grid(), "compose")?;
    let grid = *u_new.grid();
    let vectors = u_new
        .vectors()
        .iter()
        .enumerate()
        .map(|(n, d)| {
            let p = add(grid.world_of_index(n), *d);
            add(*d, sample_vectors(u_prev.grid(), u_prev.vectors(), p))
        })
        .collect();
    Ok(DisplacementField::from_raw(grid, vectors))
}

/// Resamples a field onto `target` by trilinear interpolation of its mm
/// components. Values are not rescaled since displacements are in world
/// units.
pub fn upsample_field(u: &DisplacementField, target: &WorldGrid) -> DisplacementField {
    if u.grid().matches(target) {
        return u.clone();
    }
    let vectors = (0..target.len())
        .map(|n| sample_vectors(u.grid(), u.vectors(), target.world_of_index(n)))
        .collect();
    DisplacementField::from_raw(*target, vectors)
}

/// Result of [`transform_keypoints`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedPoints {
    pub points: Vec<Vec3>,
    /// Inputs that were outside the field extent (sampled with clamping).
    pub outside: usize,
}

/// Maps points through `y(x) = x + u(x)`.
pub fn transform_keypoints(u: &DisplacementField, pts: &[Vec3]) -> TransformedPoints {
    let grid = u.grid();
    let mut outside = 0;
    let points = pts
        .iter()
        .map(|&p| {
            if !grid.contains(p) {
                outside += 1;
            }
            add(p, sample_vectors(grid, u.vectors(), p))
        })
        .collect();
    if outside > 0 {
        log::warn!("{outside} keypoint(s) outside the field extent were sampled with clamping");
    }
    TransformedPoints { points, outside }
}

/// Solves `q + u(q) = target` for `q` by fixed-point iteration.
///
/// Converges when the field is a contraction (`‖∇u‖ < 1`), which holds for
/// fold-free smooth fields. Returns the last iterate otherwise.
pub fn invert_point(u: &DisplacementField, target: Vec3) -> Vec3 {
    let mut q = target;
    for _ in 0..100 {
        let next = sub(target, sample_vectors(u.grid(), u.vectors(), q));
        let step = norm(sub(next, q));
        q = next;
        if step < 1e-10 {
            break;
        }
    }
    q
}
