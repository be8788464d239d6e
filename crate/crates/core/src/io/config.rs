//! Registration config as `key = value` text with one `[level.N]` section
//! per level, `N = 1` being the coarsest:
//!
//! ```text
//! levels = 3
//! alpha = 10
//! beta = 1
//! gamma = 0.01
//! epsilon = 1
//! seed = 0
//! deterministic = true
//!
//! [level.1]
//! iterations = 300
//! step_size = 4
//! t = 0.2
//! delta = 0
//! ```
//!
//! Omitted keys keep their defaults; `levels = n` without sections selects
//! the default `n`-level schedule.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{atomic_write, read_file};
use crate::optim::RegistrationConfig;

enum Section {
    Top,
    Level(usize),
}

pub fn parse_config(text: &str, path: &Path) -> Result<RegistrationConfig> {
    // The level count must be known before section overrides apply.
    let mut levels = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') {
            break;
        }
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() == "levels" {
                let v = v.trim();
                levels = Some(v.parse::<usize>().map_err(|_| Error::Parse {
                    path: path.into(),
                    line: n + 1,
                    message: format!("levels must be an integer, got `{v}`"),
                })?);
            }
        }
    }
    let mut cfg = RegistrationConfig::default_for_levels(levels.unwrap_or(3))
        .map_err(|e| Error::Parse { path: path.into(), line: 0, message: e.to_string() })?;

    let mut section = Section::Top;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { path: path.into(), line: n + 1, message };
        if let Some(inner) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let idx = inner
                .trim()
                .strip_prefix("level.")
                .and_then(|i| i.parse::<usize>().ok())
                .ok_or_else(|| err(format!("unknown section `[{inner}]`")))?;
            if idx == 0 || idx > cfg.levels.len() {
                return Err(err(format!("section level.{idx} outside 1..={}", cfg.levels.len())));
            }
            section = Section::Level(idx - 1);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(format!("expected `key = value`, got `{line}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        let real = || -> Result<f64> {
            value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| err(format!("{key} must be a number, got `{value}`")))
        };
        let int = || value.parse::<u64>().map_err(|_| err(format!("{key} must be a non-negative integer, got `{value}`")));
        match section {
            Section::Top => match key {
                "levels" => {}
                "alpha" => cfg.weights.alpha = real()?,
                "beta" => cfg.weights.beta = real()?,
                "gamma" => cfg.weights.gamma = real()?,
                "epsilon" => cfg.weights.epsilon = real()?,
                "seed" => cfg.seed = int()?,
                "deterministic" => {
                    cfg.deterministic = match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(err(format!("deterministic must be true or false, got `{value}`"))),
                    }
                }
                _ => return Err(err(format!("unknown key `{key}`"))),
            },
            Section::Level(i) => {
                let l = &mut cfg.levels[i];
                match key {
                    "iterations" => l.iterations = int()? as usize,
                    "step_size" => l.step_size = real()?,
                    "t" => l.t = real()?,
                    "delta" => l.delta = real()?,
                    _ => return Err(err(format!("unknown level key `{key}`"))),
                }
            }
        }
    }
    cfg.validate().map_err(|e| Error::Parse { path: path.into(), line: 0, message: e.to_string() })?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<RegistrationConfig> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse { path: path.into(), line: 0, message: "not UTF-8".into() })?;
    parse_config(&text, path)
}

/// Every setting written out explicitly; parses back to an equal config.
pub fn format_config(cfg: &RegistrationConfig) -> String {
    let w = &cfg.weights;
    let mut s = format!(
        "levels = {}\nalpha = {}\nbeta = {}\ngamma = {}\nepsilon = {}\nseed = {}\ndeterministic = {}\n",
        cfg.levels.len(),
        w.alpha,
        w.beta,
        w.gamma,
        w.epsilon,
        cfg.seed,
        cfg.deterministic
    );
    for (i, l) in cfg.levels.iter().enumerate() {
        let _ = write!(
            s,
            "\n[level.{}]\niterations = {}\nstep_size = {}\nt = {}\ndelta = {}\n",
            i + 1,
            l.iterations,
            l.step_size,
            l.t,
            l.delta
        );
    }
    s
}

pub fn write_config(cfg: &RegistrationConfig, path: &Path) -> Result<()> {
    atomic_write(path, format_config(cfg).as_bytes())
}
