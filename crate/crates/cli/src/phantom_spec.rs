//! `key = value` text describing a synthetic phantom. Omitted keys keep the
//! library defaults.

use anyhow::{anyhow, bail, Context, Result};
use volreg::phantom::PhantomSpec;

fn numbers<const N: usize>(value: &str) -> Result<[f64; N]> {
    let v = value
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| anyhow!("`{t}` is not a number")))
        .collect::<Result<Vec<_>>>()?;
    v.try_into().map_err(|v: Vec<f64>| anyhow!("expected {N} values, found {}", v.len()))
}

pub fn parse_phantom_spec(text: &str) -> Result<PhantomSpec> {
    let mut spec = PhantomSpec::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parse = || -> Result<()> {
            let Some((key, value)) = line.split_once('=') else {
                bail!("expected `key = value`");
            };
            let (key, value) = (key.trim(), value.trim());
            let int = || value.parse::<usize>().map_err(|_| anyhow!("{key} must be a non-negative integer"));
            let real = || value.parse::<f64>().map_err(|_| anyhow!("{key} must be a number"));
            match key {
                "dims" => {
                    let d = numbers::<3>(value)?;
                    if d.iter().any(|x| x.fract() != 0.0 || *x < 1.0) {
                        bail!("dims must be positive integers");
                    }
                    spec.dims = d.map(|x| x as usize);
                }
                "spacing" => spec.spacing = numbers::<3>(value)?,
                "bumps" => spec.bumps = int()?,
                "amplitude" => spec.amplitude = real()?,
                "sigma" => spec.sigma = real()?,
                "structures" => spec.structures = int()?,
                "structure_radius" => {
                    let [a, b] = numbers::<2>(value)?;
                    spec.structure_radius = (a, b);
                }
                "lobes" => spec.lobes = int()?,
                "keypoints" => spec.keypoints = int()?,
                "landmarks" => spec.landmarks = int()?,
                "noise" => spec.noise = real()?,
                "seed" => spec.seed = value.parse().map_err(|_| anyhow!("seed must be a non-negative integer"))?,
                _ => bail!("unknown key `{key}`"),
            }
            Ok(())
        };
        parse().with_context(|| format!("line {}", n + 1))?;
    }
    spec.validate()?;
    Ok(spec)
}
