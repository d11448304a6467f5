//! Numerical building blocks shared by the likelihood, prior and FDR code.

pub mod corr;
pub mod dist;
pub mod ks;
pub mod optim;
pub mod quad;
pub mod rng;
pub mod special;

pub use corr::{kendall_tau, pearson_r2, spearman_rho};
pub use dist::{chi2_quantile, chi2_sf, normal_sf};
pub use ks::{ks_one_sided, ks_one_sided_sf, ks_statistic};
pub use rng::RandomSource;
pub use special::{log_beta, log_gamma};

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ e^{x_i}`; `-∞` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY || hi.is_infinite() {
        return hi;
    }
    hi + xs.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

/// Logistic function.
pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
