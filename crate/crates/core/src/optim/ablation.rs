//! Ablation runs: the baseline plus one registration per toggle.

use std::fmt::Write as _;

use crate::error::Result;
use crate::grid::KeypointPairSet;
use crate::metrics::{self, DistanceStats};
use crate::optim::{register_multilevel, RegistrationConfig, RegistrationInputs, RegistrationResult};
use crate::warp::warp_labels;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Toggle {
    NoMask,
    NoVcc,
    NoKeypoints,
    /// Keep only the finest `n` levels under the same iteration budget.
    Levels(usize),
}

impl Toggle {
    pub fn name(&self) -> String {
        match self {
            Toggle::NoMask => "no_mask".into(),
            Toggle::NoVcc => "no_vcc".into(),
            Toggle::NoKeypoints => "no_keypoints".into(),
            Toggle::Levels(n) => format!("levels={n}"),
        }
    }

    pub fn apply(&self, base: &RegistrationConfig) -> Result<RegistrationConfig> {
        let mut cfg = base.clone();
        match *self {
            Toggle::NoMask => cfg.weights.beta = 0.0,
            Toggle::NoVcc => cfg.weights.gamma = 0.0,
            Toggle::NoKeypoints => {
                for l in &mut cfg.levels {
                    l.delta = 0.0;
                }
            }
            Toggle::Levels(n) => cfg = base.with_levels(n)?,
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: String,
    pub config: RegistrationConfig,
    pub result: RegistrationResult,
    pub mean_dice: Option<f64>,
    pub tre: Option<DistanceStats>,
    /// Percentage of voxels with `det ≤ 0`.
    pub folding_percent: f64,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Plain-text comparison table.
    pub fn render(&self) -> String {
        let opt = |v: Option<f64>, p: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.p$}"));
        let mut s = format!("{:<14} {:>8} {:>10} {:>10}\n", "run", "dice", "tre_mm", "folding_%");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<14} {:>8} {:>10} {:>10.4}",
                r.name,
                opt(r.mean_dice, 4),
                opt(r.tre.map(|t| t.mean), 3),
                r.folding_percent
            );
        }
        s
    }
}

/// Runs the baseline and every toggle. TRE is measured on `landmarks` when
/// given, otherwise on the registration keypoints.
pub fn ablation_run(
    inputs: &RegistrationInputs<'_>,
    base: &RegistrationConfig,
    toggles: &[Toggle],
    landmarks: Option<&KeypointPairSet>,
) -> Result<AblationTable> {
    base.validate()?;
    let mut runs = vec![("baseline".to_string(), base.clone())];
    for t in toggles {
        runs.push((t.name(), t.apply(base)?));
    }
    let landmarks = landmarks.or(inputs.keypoints).filter(|k| !k.is_empty());
    let mut rows = Vec::with_capacity(runs.len());
    for (name, config) in runs {
        log::info!("ablation run {name}");
        let result = register_multilevel(inputs, &config)?;
        let mean_dice = match (inputs.fixed_mask, inputs.moving_mask) {
            (Some(f), Some(m)) => {
                let warped = warp_labels(m, &result.field)?;
                let d = metrics::dice_per_label(f, &warped)?;
                (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
            }
            _ => None,
        };
        let tre = landmarks.map(|k| metrics::tre(k, &result.field)).transpose()?;
        let det = crate::losses::jacobian_det_field(&result.field);
        let folding_percent = 100.0 * metrics::folding_stats(&det, None)?.fraction;
        rows.push(AblationRow { name, config, result, mean_dice, tre, folding_percent });
    }
    Ok(AblationTable { rows })
}
