//! Instance optimization of the displacement field, on one level and
//! coarse-to-fine.

pub mod ablation;
pub mod adam;
pub mod config;

pub use ablation::{ablation_run, AblationRow, AblationTable, Toggle};
pub use adam::Adam;
pub use config::{LevelConfig, RegistrationConfig};

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::grid::{norm, sub, DisplacementField, KeypointPairSet, LabelVolume, ScalarVolume, Vec3, WorldGrid};
use crate::losses::{LossReport, LossWeights, MaskTerm, NgfTerm, Objective};
use crate::pyramid::{build_pyramid, check_levels, downsample_times};
use crate::warp::{compose, invert_point, transform_keypoints, upsample_field, warp_channels, warp_image};

/// Inputs of one level, all on the same grid.
#[derive(Debug, Clone, Copy)]
pub struct LevelInputs<'a> {
    pub fixed: &'a ScalarVolume,
    /// Moving image, already pre-warped with the accumulated field.
    pub moving: &'a ScalarVolume,
    /// Soft one-hot channels of both masks (labels 1..=k).
    pub masks: Option<(&'a [ScalarVolume], &'a [ScalarVolume])>,
    /// Fixed keypoints paired with their pre-warped moving targets.
    pub keypoints: Option<&'a KeypointPairSet>,
    /// Voxels where the image distance is evaluated; all when `None`.
    pub ngf_domain: Option<&'a [bool]>,
}

/// Minimizes the objective over a residual field that starts at zero.
/// Returns the field and the loss of every iterate (`iterations + 1`
/// entries, the last one after the final step).
pub fn optimize_level(
    inputs: &LevelInputs<'_>,
    cfg: &LevelConfig,
    weights: &LossWeights,
    level: usize,
) -> Result<(DisplacementField, Vec<LossReport>)> {
    cfg.validate()?;
    let grid = *inputs.fixed.grid();
    grid.ensure_matches(inputs.moving.grid(), "level moving image")?;
    let mask = match inputs.masks {
        Some((f, m)) => Some(MaskTerm::from_channels(f, m)?),
        None => None,
    };
    let weights = LossWeights { t: cfg.t, delta: cfg.delta, ..*weights };
    let objective = Objective::new(
        inputs.fixed,
        inputs.moving.clone(),
        inputs.ngf_domain.map(<[bool]>::to_vec),
        mask,
        inputs.keypoints.cloned(),
        weights,
    )?;

    let mut u = DisplacementField::zeros(grid);
    let mut grad = vec![[0.0; 3]; grid.len()];
    let mut adam = Adam::new(grid.len(), cfg.step_size);
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    for it in 0..=cfg.iterations {
        let want = it < cfg.iterations;
        let report = objective.evaluate(&u, if want { Some(&mut grad) } else { None })?;
        check_finite(&report, level, it)?;
        if it % 50 == 0 || !want {
            log::debug!(
                "level {level} iter {it}: total {:.6e} ngf {:.4e} curv {:.4e} vcc {:.4e} mask {:.4e} kp {:.4e}",
                report.total,
                report.distance,
                report.curvature,
                report.vcc,
                report.mask,
                report.keypoint
            );
        }
        history.push(report);
        if want {
            if grad.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { level, iteration: it, detail: "non-finite gradient".into() });
            }
            adam.step(u.vectors_mut(), &grad);
        }
    }
    Ok((u, history))
}

fn check_finite(r: &LossReport, level: usize, iteration: usize) -> Result<()> {
    if r.total.is_finite() {
        return Ok(());
    }
    Err(Error::NonFiniteLoss {
        level,
        iteration,
        detail: format!(
            "distance {} curvature {} vcc {} mask {} keypoint {}",
            r.distance, r.curvature, r.vcc, r.mask, r.keypoint
        ),
    })
}

/// Full-resolution inputs of a registration.
#[derive(Debug, Clone, Copy)]
pub struct RegistrationInputs<'a> {
    pub fixed: &'a ScalarVolume,
    pub moving: &'a ScalarVolume,
    pub fixed_mask: Option<&'a LabelVolume>,
    pub moving_mask: Option<&'a LabelVolume>,
    pub keypoints: Option<&'a KeypointPairSet>,
}

impl<'a> RegistrationInputs<'a> {
    pub fn images(fixed: &'a ScalarVolume, moving: &'a ScalarVolume) -> Self {
        Self { fixed, moving, fixed_mask: None, moving_mask: None, keypoints: None }
    }
}

/// Loss history of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelHistory {
    /// 0 = coarsest.
    pub level: usize,
    pub dims: [usize; 3],
    pub spacing: Vec3,
    pub losses: Vec<LossReport>,
    /// Masked full-resolution image distance after composing this level.
    pub full_resolution_distance: f64,
}

/// Final state of a registration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RegistrationSummary {
    /// Full-resolution objective with the finest level's weights.
    pub initial: LossReport,
    pub fin: LossReport,
    pub max_displacement: f64,
    /// Mean keypoint distance in mm before and after, when keypoints exist.
    pub initial_tre: Option<f64>,
    pub final_tre: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    /// Accumulated field on the fixed grid.
    pub field: DisplacementField,
    pub history: Vec<LevelHistory>,
    pub summary: RegistrationSummary,
    pub timings: Vec<Duration>,
}

/// Fraction of the downsampled foreground at which a coarse voxel belongs to
/// the image-distance domain.
const DOMAIN_THRESHOLD: f64 = 0.5;

fn domain_from_channels(channels: &[ScalarVolume]) -> Option<Vec<bool>> {
    let first = channels.first()?;
    let mut fg = vec![0.0; first.grid().len()];
    for ch in channels {
        for (a, b) in fg.iter_mut().zip(ch.data()) {
            *a += b;
        }
    }
    Some(fg.into_iter().map(|x| x >= DOMAIN_THRESHOLD).collect())
}

fn mean_tre(pairs: &KeypointPairSet, u: &DisplacementField) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let moved = transform_keypoints(u, &pairs.fixed_points());
    let total: f64 = moved.points.iter().zip(&pairs.pairs).map(|(p, (_, km))| norm(sub(*km, *p))).sum();
    Some(total / pairs.len() as f64)
}

/// Coarse-to-fine registration.
///
/// For every level, coarsest first, the moving image and mask are warped at
/// full resolution with the accumulated field, downsampled to the level,
/// and a residual is optimized from zero. The residual is upsampled and
/// composed onto the accumulated field.
pub fn register_multilevel(inputs: &RegistrationInputs<'_>, cfg: &RegistrationConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    let grid: WorldGrid = *inputs.fixed.grid();
    grid.ensure_matches(inputs.moving.grid(), "moving image")?;
    let levels = cfg.level_count();
    check_levels(&grid, levels)?;

    let masks = match (inputs.fixed_mask, inputs.moving_mask) {
        (Some(f), Some(m)) => {
            grid.ensure_matches(f.grid(), "fixed mask")?;
            grid.ensure_matches(m.grid(), "moving mask")?;
            if f.label_count() != m.label_count() {
                return Err(Error::LabelCountMismatch { fixed: f.label_count(), moving: m.label_count() });
            }
            if f.label_count() == 0 {
                None
            } else {
                Some((f.one_hot(), m.one_hot()))
            }
        }
        (None, None) => None,
        _ => return Err(Error::InvalidParameter("fixed and moving masks must be given together".into())),
    };
    let keypoints = inputs.keypoints.filter(|k| !k.is_empty());
    if let Some(k) = keypoints {
        let outside = k.count_outside(&grid);
        if outside > 0 {
            log::warn!("{outside} keypoint pairs lie outside the fixed grid");
        }
    }

    let fixed_pyr = build_pyramid(inputs.fixed, levels)?;
    let full_domain = masks.as_ref().and_then(|(f, _)| domain_from_channels(f));
    let full_ngf = NgfTerm::new(inputs.fixed, full_domain, cfg.weights.epsilon)?;
    let full_objective = |w: LossWeights| -> Result<Objective> {
        let mask = match &masks {
            Some((f, m)) => Some(MaskTerm::from_channels(f, m)?),
            None => None,
        };
        Objective::new(
            inputs.fixed,
            inputs.moving.clone(),
            masks.as_ref().and_then(|(f, _)| domain_from_channels(f)),
            mask,
            keypoints.cloned(),
            w,
        )
    };
    let finest_weights = cfg.level_weights(levels - 1);
    let summary_objective = full_objective(finest_weights)?;

    let mut u_acc = DisplacementField::zeros(grid);
    let initial = summary_objective.evaluate(&u_acc, None)?;
    let mut history = Vec::with_capacity(levels);
    let mut timings = Vec::with_capacity(levels);

    for (i, lcfg) in cfg.levels.iter().enumerate() {
        let start = Instant::now();
        let down = levels - 1 - i;
        let fixed_l = &fixed_pyr[down];
        let first = i == 0;
        let warped = if first { inputs.moving.clone() } else { warp_image(inputs.moving, &u_acc) };
        let moving_l = downsample_times(&warped, down);
        drop(warped);

        let level_masks = masks.as_ref().map(|(f, m)| {
            let mw = if first { m.clone() } else { warp_channels(m, &u_acc) };
            let fl: Vec<ScalarVolume> = f.iter().map(|c| downsample_times(c, down)).collect();
            let ml: Vec<ScalarVolume> = mw.iter().map(|c| downsample_times(c, down)).collect();
            (fl, ml)
        });
        let domain = level_masks.as_ref().and_then(|(f, _)| domain_from_channels(f));

        let level_pairs = keypoints.map(|k| {
            let pairs = k
                .pairs
                .iter()
                .map(|&(kf, km)| (kf, if first { km } else { invert_point(&u_acc, km) }))
                .collect();
            KeypointPairSet { pairs }
        });

        let level_inputs = LevelInputs {
            fixed: fixed_l,
            moving: &moving_l,
            masks: level_masks.as_ref().map(|(f, m)| (f.as_slice(), m.as_slice())),
            keypoints: level_pairs.as_ref(),
            ngf_domain: domain.as_deref(),
        };
        log::info!(
            "level {}/{}: grid {:?}, spacing {:?}, {} iterations",
            i + 1,
            levels,
            fixed_l.grid().dims(),
            fixed_l.grid().spacing(),
            lcfg.iterations
        );
        let (residual, losses) = optimize_level(&level_inputs, lcfg, &cfg.weights, i)?;
        let residual = upsample_field(&residual, &grid);
        u_acc = compose(&u_acc, &residual)?;

        let warped = warp_image(inputs.moving, &u_acc);
        let (full_resolution_distance, _) = full_ngf.evaluate(warped.data(), false);
        log::info!(
            "level {} done: loss {:.6e} -> {:.6e}, full-resolution distance {:.6e}",
            i + 1,
            losses.first().map_or(f64::NAN, |r| r.total),
            losses.last().map_or(f64::NAN, |r| r.total),
            full_resolution_distance
        );
        history.push(LevelHistory {
            level: i,
            dims: fixed_l.grid().dims(),
            spacing: fixed_l.grid().spacing(),
            losses,
            full_resolution_distance,
        });
        timings.push(start.elapsed());
    }

    let fin = summary_objective.evaluate(&u_acc, None)?;
    let summary = RegistrationSummary {
        initial,
        fin,
        max_displacement: u_acc.max_norm(),
        initial_tre: keypoints.and_then(|k| mean_tre(k, &DisplacementField::zeros(grid))),
        final_tre: keypoints.and_then(|k| mean_tre(k, &u_acc)),
    };
    Ok(RegistrationResult { field: u_acc, history, summary, timings })
}
