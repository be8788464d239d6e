//! Penalty functions applied to the Jacobian determinant.

use crate::error::{Error, Result};

/// Volume-change penalty `(z - 1)² / z`, infinite for `z ≤ 0`.
///
/// Symmetric in the sense `psi(z) == psi(1 / z)` and zero only at `z = 1`.
pub fn psi(z: f64) -> f64 {
    if z > 0.0 {
        (z - 1.0) * (z - 1.0) / z
    } else {
        f64::INFINITY
    }
}

/// Parametric log-barrier extension: `-log(z) / t` above `1/t²`, continued
/// linearly below it so it is finite for every `z`.
pub fn psi_barrier_ext(z: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("barrier parameter t must be > 0, got {t}")));
    }
    let knee = 1.0 / (t * t);
    Ok(if z >= knee {
        -z.ln() / t
    } else {
        -t * z - knee.ln() / t + 1.0 / t
    })
}

/// Volume-change penalty with a linear barrier below `z = t`.
///
/// Returns `(value, d value / dz)`. For `z ≥ t` this is `(z - 1)² / z`; below
/// `t` it continues with the tangent line at `t`, so the function is C¹ and
/// finite for folded (`z ≤ 0`) determinants. Smaller `t` raises the barrier.
#[inline]
pub fn psi_t(z: f64, t: f64) -> Result<(f64, f64)> {
    check_t(t)?;
    Ok(psi_t_unchecked(z, t))
}

pub(crate) fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("barrier parameter t must lie in (0, 1], got {t}")))
    }
}

#[inline]
pub(crate) fn psi_t_unchecked(z: f64, t: f64) -> (f64, f64) {
    if z >= t {
        ((z - 1.0) * (z - 1.0) / z, 1.0 - 1.0 / (z * z))
    } else {
        let slope = 1.0 - 1.0 / (t * t);
        (slope * z + 2.0 * (1.0 - t) / t, slope)
    }
}
