//! Principal branch of the Lambert W function.

use crate::error::{ModelError, Result};

const INV_E: f64 = 0.367_879_441_171_442_33;
const MAX_ITER: usize = 50;
const REL_TOL: f64 = 1e-15;

/// `w >= -1` with `w * exp(w) = x`, for `x >= -1/e`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < -INV_E * (1.0 + 4.0 * f64::EPSILON) {
        return Err(ModelError::LambertDomain(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let branch_gap = x + INV_E;
    if branch_gap <= 0.0 {
        return Ok(-1.0);
    }

    let mut w = if branch_gap < 1e-2 {
        // Series around the branch point in p = sqrt(2 (e x + 1)).
        let p = (2.0 * std::f64::consts::E * branch_gap).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        x.ln_1p() * (1.0 - x.ln_1p() / (2.0 + x.ln_1p()))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= REL_TOL * w.abs().max(1e-300) {
            break;
        }
    }
    Ok(w)
}

/// `W(exp(l))` for any real `l`, without forming `exp(l)` when it would
/// overflow. Solves `w + ln w = l` directly in that case.
pub fn lambert_w0_of_exp(l: f64) -> Result<f64> {
    if l < 500.0 {
        return lambert_w0(l.exp());
    }
    let mut w = l - l.ln();
    for _ in 0..MAX_ITER {
        // Newton on g(w) = w + ln w - l.
        let g = w + w.ln() - l;
        let step = g / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= REL_TOL * w {
            break;
        }
    }
    Ok(w)
}
