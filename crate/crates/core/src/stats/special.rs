//! Log-gamma family and rising-factorial sums.
//!
//! Beta-binomial kernels only ever need `ln Γ(c + m) - ln Γ(c)` and its first
//! two derivatives in `c` for integer `m`. Those differences are formed
//! directly (short sums, or differenced Stirling series) so they stay accurate
//! when `c` is in the millions and `m` is a handful of sites.

use crate::error::{domain, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this `c` the asymptotic series is not used; arguments are shifted up first.
const ASYMPTOTIC_MIN: f64 = 10.0;

/// Sums over at most this many terms are evaluated term by term.
const DIRECT_SUM_MAX: u32 = 64;

/// Natural log of the gamma function.
pub fn log_gamma(a: f64) -> Result<f64> {
    if !a.is_finite() || a <= 0.0 {
        return Err(domain(format!("log_gamma requires a finite positive argument, got {a}")));
    }
    Ok(ln_gamma_unchecked(a))
}

pub(crate) fn ln_gamma_unchecked(a: f64) -> f64 {
    if a == 1.0 || a == 2.0 {
        0.0
    } else if a >= ASYMPTOTIC_MIN {
        (a - 0.5) * a.ln() - a + LN_SQRT_2PI + stirling_tail(a)
    } else {
        statrs::function::gamma::ln_gamma(a)
    }
}

/// Natural log of the beta function, `ln Γ(a) + ln Γ(b) - ln Γ(a + b)`.
pub fn log_beta(a: f64, b: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || a <= 0.0 || b <= 0.0 {
        return Err(domain(format!("log_beta requires positive arguments, got ({a}, {b})")));
    }
    Ok(ln_beta_unchecked(a, b))
}

pub(crate) fn ln_beta_unchecked(a: f64, b: f64) -> f64 {
    let (small, large) = if a <= b { (a, b) } else { (b, a) };
    if small >= ASYMPTOTIC_MIN {
        let c = a + b;
        (a - 0.5) * (a / c).ln() + (b - 0.5) * (b / c).ln() - 0.5 * c.ln()
            + LN_SQRT_2PI
            + stirling_tail(a)
            + stirling_tail(b)
            - stirling_tail(c)
    } else {
        ln_gamma_unchecked(small) - ln_gamma_diff(large, small)
    }
}

/// `ln Γ(c + m) - ln Γ(c)` for real `m >= 0`, `c > 0`.
pub(crate) fn ln_gamma_diff(c: f64, m: f64) -> f64 {
    if m == 0.0 {
        return 0.0;
    }
    if c >= ASYMPTOTIC_MIN {
        let c1 = c + m;
        (c - 0.5) * (m / c).ln_1p() + m * c1.ln() - m + stirling_tail(c1) - stirling_tail(c)
    } else {
        ln_gamma_unchecked(c + m) - ln_gamma_unchecked(c)
    }
}

/// Remainder of Stirling's series, `ln Γ(z) - [(z - 1/2) ln z - z + ln √(2π)]`.
fn stirling_tail(z: f64) -> f64 {
    // B_{2k} / (2k (2k - 1)), k = 1..8
    const C: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
        -3617.0 / 122_400.0,
    ];
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for &c in C.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

/// Rising-factorial sums for a non-negative integer count `m`:
///
/// * `ln`  = Σ_{i<m} ln(c + i)       = ln Γ(c+m) − ln Γ(c)
/// * `d1`  = Σ_{i<m} 1/(c + i)       = ψ(c+m) − ψ(c)
/// * `d2`  = Σ_{i<m} 1/(c + i)²      = ψ₁(c) − ψ₁(c+m)
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PochSums {
    pub ln: f64,
    pub d1: f64,
    pub d2: f64,
}

impl PochSums {
    pub const ZERO: PochSums = PochSums { ln: 0.0, d1: 0.0, d2: 0.0 };

    pub fn new(c: f64, m: u32) -> PochSums {
        debug_assert!(c > 0.0);
        if m <= DIRECT_SUM_MAX {
            return direct(c, 0, m);
        }
        let shift = if c >= ASYMPTOTIC_MIN {
            0
        } else {
            ((ASYMPTOTIC_MIN - c).ceil() as u32).min(m)
        };
        let head = direct(c, 0, shift);
        let rest = m - shift;
        if rest <= DIRECT_SUM_MAX {
            let tail = direct(c, shift, m);
            return PochSums {
                ln: head.ln + tail.ln,
                d1: head.d1 + tail.d1,
                d2: head.d2 + tail.d2,
            };
        }
        let tail = asymptotic(c + shift as f64, rest as f64);
        PochSums {
            ln: head.ln + tail.ln,
            d1: head.d1 + tail.d1,
            d2: head.d2 + tail.d2,
        }
    }

    /// Only the log term; skips the derivative sums.
    pub fn ln_only(c: f64, m: u32) -> f64 {
        if m <= DIRECT_SUM_MAX {
            (0..m).map(|i| (c + i as f64).ln()).sum()
        } else {
            ln_gamma_diff(c, m as f64)
        }
    }
}

fn direct(c: f64, from: u32, to: u32) -> PochSums {
    let mut out = PochSums::ZERO;
    for i in from..to {
        let z = c + i as f64;
        let inv = 1.0 / z;
        out.ln += z.ln();
        out.d1 += inv;
        out.d2 += inv * inv;
    }
    out
}

/// Differenced asymptotic expansions; requires `c >= ASYMPTOTIC_MIN`.
fn asymptotic(c: f64, m: f64) -> PochSums {
    let c1 = c + m;
    let ln = ln_gamma_diff(c, m);

    // ψ(z) = ln z − 1/(2z) − Σ B_{2k}/(2k z^{2k})
    const PSI: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32_760.0,
        1.0 / 12.0,
        -3617.0 / 8160.0,
    ];
    // ψ₁(z) = 1/z + 1/(2z²) + Σ B_{2k}/z^{2k+1}
    const PSI1: [f64; 8] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
        -3617.0 / 510.0,
    ];
    let series = |z: f64, coef: &[f64; 8]| {
        let inv2 = 1.0 / (z * z);
        let mut acc = 0.0;
        for &k in coef.iter().rev() {
            acc = acc * inv2 + k;
        }
        acc * inv2
    };

    let d1 = (m / c).ln_1p() + 0.5 * m / (c * c1) - (series(c1, &PSI) - series(c, &PSI));
    let d2 = m / (c * c1)
        + 0.5 * m * (c + c1) / (c * c * c1 * c1)
        + (series(c, &PSI1) / c - series(c1, &PSI1) / c1);
    PochSums { ln, d1, d2 }
}
