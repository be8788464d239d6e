//! Keypoint pairs as text: one `fx fy fz mx my mz` line per pair in mm,
//! `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{KeypointPairSet, Vec3};
use crate::io::{atomic_write, read_file};

pub fn parse_keypoints(text: &str, path: &Path) -> Result<KeypointPairSet> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { path: path.into(), line: n + 1, message };
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("`{t}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != 6 {
            return Err(err(format!("expected 6 values, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err("coordinates must be finite".into()));
        }
        let f: Vec3 = [values[0], values[1], values[2]];
        let m: Vec3 = [values[3], values[4], values[5]];
        pairs.push((f, m));
    }
    KeypointPairSet::new(pairs)
}

pub fn read_keypoints(path: &Path) -> Result<KeypointPairSet> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse { path: path.into(), line: 0, message: "not UTF-8".into() })?;
    parse_keypoints(&text, path)
}

/// Values are written in the shortest form that parses back to the same
/// `f64`.
pub fn format_keypoints(pairs: &KeypointPairSet) -> String {
    let mut s = String::from("# fx fy fz mx my mz (mm)\n");
    for (f, m) in &pairs.pairs {
        let _ = writeln!(s, "{} {} {} {} {} {}", f[0], f[1], f[2], m[0], m[1], m[2]);
    }
    s
}

pub fn write_keypoints(pairs: &KeypointPairSet, path: &Path) -> Result<()> {
    atomic_write(path, format_keypoints(pairs).as_bytes())
}
