//! Tail probabilities for the normal and chi-square laws.

use statrs::function::erf::erfc;

use super::special::ln_gamma_unchecked;
use crate::error::{domain, Result};

/// Upper tail `1 - Φ(z)` of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Survival function `P(χ²(df) > x)` for integer degrees of freedom.
///
/// Uses the finite series for integer shape (plus `erfc` for odd `df`), with
/// each term formed in log space so that large `x` and `df` do not overflow.
pub fn chi2_sf(x: f64, df: u32) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(domain(format!("chi2_sf requires x >= 0, got {x}")));
    }
    if df == 0 {
        return Err(domain("chi2_sf requires df >= 1"));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let h = 0.5 * x;
    let ln_h = h.ln();
    let (mut total, start, count) = if df % 2 == 0 {
        (0.0, 0.0, df / 2)
    } else {
        (erfc(h.sqrt()), 0.5, df / 2)
    };
    for j in 0..count {
        let s = start + j as f64;
        // h^s e^{-h} / Γ(s + 1)
        total += (s * ln_h - h - ln_gamma_unchecked(s + 1.0)).exp();
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Quantile of χ²(df): the `x` with `P(χ²(df) <= x) = prob`.
pub fn chi2_quantile(prob: f64, df: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&prob) {
        return Err(domain(format!("chi2_quantile requires prob in [0, 1), got {prob}")));
    }
    if df == 0 {
        return Err(domain("chi2_quantile requires df >= 1"));
    }
    if prob == 0.0 {
        return Ok(0.0);
    }
    let target = 1.0 - prob;
    let mut hi = df as f64 + 10.0;
    while chi2_sf(hi, df)? > target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_sf(mid, df)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
