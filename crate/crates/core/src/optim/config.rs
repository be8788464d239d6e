use crate::error::{Error, Result};
use crate::losses::barrier::check_t;
use crate::losses::LossWeights;

pub const MAX_LEVELS: usize = 4;
/// Barrier parameter of the coarsest level; halved at every finer level.
pub const T_COARSEST: f64 = 0.2;
/// Keypoint weight used on every level except the coarsest.
pub const DELTA_FINE: f64 = 1e7;

/// Settings of one pyramid level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelConfig {
    pub iterations: usize,
    /// Adam step size in mm.
    pub step_size: f64,
    /// Barrier parameter in `(0, 1]`.
    pub t: f64,
    /// Keypoint weight.
    pub delta: f64,
}

impl LevelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::InvalidParameter(format!("step size must be > 0, got {}", self.step_size)));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be >= 0, got {}", self.delta)));
        }
        check_t(self.t)
    }
}

/// Full multilevel configuration. `levels[0]` is the coarsest level.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    pub levels: Vec<LevelConfig>,
    /// α, β, γ and ε are shared by all levels; `t` and `delta` are taken
    /// from the level settings.
    pub weights: LossWeights,
    /// Recorded for provenance; the optimizer itself draws no random numbers.
    pub seed: u64,
    /// The optimization itself is always sequential and reproducible; this
    /// flag additionally keeps wall-clock data out of reports so that they
    /// are byte-stable.
    pub deterministic: bool,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            levels: vec![
                LevelConfig { iterations: 300, step_size: 4.0, t: 0.2, delta: 0.0 },
                LevelConfig { iterations: 200, step_size: 1.0, t: 0.1, delta: DELTA_FINE },
                LevelConfig { iterations: 150, step_size: 0.25, t: 0.05, delta: DELTA_FINE },
            ],
            weights: LossWeights::default(),
            seed: 0,
            deterministic: false,
        }
    }
}

/// Barrier parameter of level `i` (0 = coarsest) in the default schedule.
pub fn default_t(i: usize) -> f64 {
    T_COARSEST / (1u64 << i) as f64
}

impl RegistrationConfig {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn total_iterations(&self) -> usize {
        self.levels.iter().map(|l| l.iterations).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_LEVELS).contains(&self.levels.len()) {
            return Err(Error::InvalidParameter(format!(
                "level count must be in [1, {MAX_LEVELS}], got {}",
                self.levels.len()
            )));
        }
        for l in &self.levels {
            l.validate()?;
        }
        self.weights.validate()
    }

    /// Keeps the finest `n` levels under the same total iteration budget.
    ///
    /// Step sizes are kept, the barrier schedule restarts at the coarsest
    /// remaining level, the keypoint weight of the coarsest remaining level is
    /// zero when more than one level is left, and iterations are scaled
    /// proportionally (rounding remainder goes to the finest level).
    pub fn with_levels(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.levels.len() {
            return Err(Error::InvalidParameter(format!(
                "cannot derive {n} levels from a {}-level configuration",
                self.levels.len()
            )));
        }
        if n == self.levels.len() {
            return Ok(self.clone());
        }
        let budget = self.total_iterations();
        let kept = &self.levels[self.levels.len() - n..];
        let kept_total: usize = kept.iter().map(|l| l.iterations).sum();
        let fine_delta = self.levels.last().map(|l| l.delta).unwrap_or(0.0);
        let mut levels: Vec<LevelConfig> = kept
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let iterations = if kept_total == 0 {
                    budget / n
                } else {
                    (l.iterations as f64 * budget as f64 / kept_total as f64).floor() as usize
                };
                LevelConfig {
                    iterations,
                    step_size: l.step_size,
                    t: default_t(i),
                    delta: if i == 0 && n > 1 { 0.0 } else { fine_delta },
                }
            })
            .collect();
        let assigned: usize = levels.iter().map(|l| l.iterations).sum();
        if let Some(last) = levels.last_mut() {
            last.iterations += budget - assigned;
        }
        Ok(Self { levels, ..self.clone() })
    }

    /// Default schedule with `n` levels. Fewer than three levels come from
    /// [`Self::with_levels`]; four levels prepend an extra coarse level.
    pub fn default_for_levels(n: usize) -> Result<Self> {
        let base = Self::default();
        if n <= base.levels.len() {
            return base.with_levels(n);
        }
        if n > MAX_LEVELS {
            return Err(Error::InvalidParameter(format!("level count must be in [1, {MAX_LEVELS}], got {n}")));
        }
        let mut levels = vec![base.levels[0]; n - base.levels.len()];
        levels.extend_from_slice(&base.levels);
        for (i, l) in levels.iter_mut().enumerate() {
            l.t = default_t(i);
            l.delta = if i == 0 { 0.0 } else { DELTA_FINE };
        }
        Ok(Self { levels, ..base })
    }

    /// Loss weights used on level `i`.
    pub fn level_weights(&self, i: usize) -> LossWeights {
        let l = &self.levels[i];
        LossWeights { t: l.t, delta: l.delta, ..self.weights }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RegistrationConfig::default();
        c.validate().unwrap();
        assert_eq!(c.level_count(), 3);
        let ts: Vec<f64> = c.levels.iter().map(|l| l.t).collect();
        assert_eq!(ts, vec![0.2, 0.1, 0.05]);
        let ds: Vec<f64> = c.levels.iter().map(|l| l.delta).collect();
        assert_eq!(ds, vec![0.0, 1e7, 1e7]);
        assert_eq!(c.weights.alpha, 10.0);
        assert_eq!(c.weights.beta, 1.0);
        assert_eq!(c.weights.gamma, 0.01);
        assert_eq!(c.weights.epsilon, 1.0);
        assert_eq!(c.total_iterations(), 650);
        assert_eq!((0..3).map(default_t).collect::<Vec<_>>(), ts);
    }

    #[test]
    fn level_subsets_keep_budget() {
        let c = RegistrationConfig::default();
        let one = c.with_levels(1).unwrap();
        assert_eq!(one.level_count(), 1);
        assert_eq!(one.levels[0].iterations, 650);
        assert_eq!(one.levels[0].t, 0.2);
        assert_eq!(one.levels[0].delta, 1e7);
        assert_eq!(one.levels[0].step_size, c.levels[2].step_size);

        let two = c.with_levels(2).unwrap();
        assert_eq!(two.total_iterations(), 650);
        assert_eq!(two.levels[0].delta, 0.0);
        assert_eq!(two.levels[1].delta, 1e7);
        assert_eq!([two.levels[0].t, two.levels[1].t], [0.2, 0.1]);
        assert_eq!(two.levels[0].step_size, c.levels[1].step_size);
        assert_eq!(c.with_levels(3).unwrap(), c);
        assert!(c.with_levels(0).is_err());
        assert!(c.with_levels(4).is_err());
    }

    #[test]
    fn default_level_counts() {
        for n in 1..=MAX_LEVELS {
            let c = RegistrationConfig::default_for_levels(n).unwrap();
            c.validate().unwrap();
            assert_eq!(c.level_count(), n);
            assert_eq!(c.levels.last().unwrap().step_size, RegistrationConfig::default().levels[2].step_size);
        }
        let four = RegistrationConfig::default_for_levels(4).unwrap();
        assert_eq!(four.levels.iter().map(|l| l.t).collect::<Vec<_>>(), vec![0.2, 0.1, 0.05, 0.025]);
        assert_eq!(four.levels[0].delta, 0.0);
        assert_eq!(four.levels[1].delta, 1e7);
        assert!(RegistrationConfig::default_for_levels(0).is_err());
        assert!(RegistrationConfig::default_for_levels(5).is_err());
    }

    #[test]
    fn validation() {
        let mut c = RegistrationConfig::default();
        c.levels[1].t = 0.0;
        assert!(c.validate().is_err());
        let mut c = RegistrationConfig::default();
        c.levels.clear();
        assert!(c.validate().is_err());
        let mut c = RegistrationConfig::default();
        c.levels = vec![c.levels[0]; 5];
        assert!(c.validate().is_err());
        let mut c = RegistrationConfig::default();
        c.levels[0].step_size = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn level_weights_override_t_and_delta() {
        let c = RegistrationConfig::default();
        let w = c.level_weights(2);
        assert_eq!(w.t, 0.05);
        assert_eq!(w.delta, 1e7);
        assert_eq!(w.alpha, c.weights.alpha);
    }
}
