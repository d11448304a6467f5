//! Log marginal likelihoods `ln ∫ L(η) π(η | η*, K*) dη` of a count table.
//!
//! Three evaluators share one integrand:
//!
//! * [`laplace_log_marginal`]: Laplace approximation of the full integrand
//!   (likelihood, hyperprior and Jacobian) on the logit scale.
//! * [`plugin_log_marginal`]: the likelihood-mode form
//!   `√(2πΣ̂) · L(η̂) · π(η̂)`, with `η̂` and `Σ̂` from the kernel alone. This is
//!   the form the Bayes factors are assembled from.
//! * [`mc_log_marginal`]: plain Monte Carlo over hyperprior draws, used as an
//!   oracle.

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::counts::{fit_eta, maximize_logit, theta_derivs, BetaPrior, CountTable, Derivs, Kernel};
use crate::error::{domain, Error, Result};
use crate::stats::special::ln_beta_unchecked;
use crate::stats::{expit, RandomSource};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Gaussian surrogate of the logit-scale integrand at its mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceFit {
    pub theta_hat: f64,
    pub log_f_at_mode: f64,
    /// Second derivative of the log integrand in `θ` at the mode.
    pub curvature: f64,
    pub log_integral: f64,
}

/// Log density of the hyperprior at `eta`.
pub fn log_beta_density(eta: f64, prior: &BetaPrior) -> f64 {
    let (a, b) = prior.shapes();
    (a - 1.0) * eta.ln() + (b - 1.0) * (-eta).ln_1p() - ln_beta_unchecked(a, b)
}

/// Laplace approximation on `θ = logit η` of the marginal likelihood.
///
/// With no observed sites the likelihood is identically one, so the integral
/// is exactly the prior mass; the fit then reports the prior's own logit-scale
/// mode and curvature with `log_integral = 0`.
pub fn laplace_log_marginal(table: &CountTable, kernel: Kernel, hyper: &BetaPrior) -> Result<LaplaceFit> {
    kernel.validate()?;
    BetaPrior::new(hyper.eta, hyper.k)?;
    let (a, b) = hyper.shapes();
    let ln_b = ln_beta_unchecked(a, b);
    if table.is_empty() {
        let theta_hat = (a / b).ln();
        let curvature = -a * b / (a + b);
        return Ok(LaplaceFit {
            theta_hat,
            log_f_at_mode: -0.5 * LN_2PI + 0.5 * (-curvature).ln(),
            curvature,
            log_integral: 0.0,
        });
    }
    if let Some(side) = table.boundary() {
        return Err(Error::BoundaryMle(side));
    }

    // integrand in η with the Jacobian η(1 − η) folded into the exponents
    let derivs = |eta: f64| {
        let d = kernel.derivs(table, eta);
        Derivs {
            value: d.value + a * eta.ln() + b * (-eta).ln_1p() - ln_b,
            d1: d.d1 + a / eta - b / (1.0 - eta),
            d2: d.d2 - a / (eta * eta) - b / ((1.0 - eta) * (1.0 - eta)),
        }
    };
    let value = |eta: f64| kernel.loglik(table, eta) + a * eta.ln() + b * (-eta).ln_1p() - ln_b;
    let guess = (table.total_x() + a) / (table.total_n() + a + b);
    let theta_hat = maximize_logit(guess, derivs, value);
    let eta = expit(theta_hat);
    let at_mode = theta_derivs(derivs(eta), eta);
    if !(at_mode.d2 < 0.0 && at_mode.d2.is_finite() && at_mode.value.is_finite()) {
        return Err(Error::NumericalFailure(format!(
            "logit-scale curvature {} at mode {theta_hat}",
            at_mode.d2
        )));
    }
    let log_integral = at_mode.value + 0.5 * LN_2PI - 0.5 * (-at_mode.d2).ln();
    Ok(LaplaceFit {
        theta_hat,
        log_f_at_mode: at_mode.value,
        curvature: at_mode.d2,
        log_integral,
    })
}

/// Likelihood-mode evaluation of the marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluginFit {
    pub eta_hat: f64,
    pub sigma_hat: f64,
    pub loglik: f64,
    pub log_marginal: f64,
}

/// `ln[√(2πΣ̂) L(η̂) π(η̂ | η*, K*)]` with `η̂`, `Σ̂` the kernel MLE and inverse
/// negative curvature.
pub fn plugin_log_marginal(table: &CountTable, kernel: Kernel, hyper: &BetaPrior) -> Result<PluginFit> {
    BetaPrior::new(hyper.eta, hyper.k)?;
    let fit = fit_eta(table, kernel)?;
    Ok(plugin_from_fit(fit.eta, fit.sigma, fit.loglik, hyper))
}

pub(crate) fn plugin_from_fit(eta_hat: f64, sigma_hat: f64, loglik: f64, hyper: &BetaPrior) -> PluginFit {
    let log_marginal = 0.5 * (LN_2PI + sigma_hat.ln()) + loglik + log_beta_density(eta_hat, hyper);
    PluginFit { eta_hat, sigma_hat, loglik, log_marginal }
}

/// Monte Carlo estimate of a log marginal and its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Default number of hyperprior draws for the oracle.
pub const MC_DRAWS: usize = 200_000;

/// `ln mean_l exp(ℓ(η_l))` over `η_l ~ Beta(η*, K*)`, accumulated as a
/// streaming log-sum-exp.
pub fn mc_log_marginal(
    table: &CountTable,
    kernel: Kernel,
    hyper: &BetaPrior,
    draws: usize,
    source: &RandomSource,
) -> Result<McEstimate> {
    kernel.validate()?;
    if draws < 1000 {
        return Err(domain(format!("Monte Carlo needs at least 1000 draws, got {draws}")));
    }
    let (a, b) = BetaPrior::new(hyper.eta, hyper.k)?.shapes();
    let beta = Beta::new(a, b).map_err(|e| domain(format!("hyperprior Beta({a}, {b}): {e}")))?;
    let mut rng = source.rng();

    let mut top = f64::NEG_INFINITY;
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for _ in 0..draws {
        let eta: f64 = beta.sample(&mut rng);
        if !(eta > 0.0 && eta < 1.0) {
            continue;
        }
        let l = kernel.loglik(table, eta);
        if !l.is_finite() {
            continue;
        }
        if l > top {
            let scale = (top - l).exp();
            s1 *= scale;
            s2 *= scale * scale;
            top = l;
        }
        let w = (l - top).exp();
        s1 += w;
        s2 += w * w;
    }
    if top == f64::NEG_INFINITY {
        return Ok(McEstimate { estimate: f64::NEG_INFINITY, std_error: f64::INFINITY });
    }
    let l = draws as f64;
    let mean = s1 / l;
    let var = (s2 / l - mean * mean).max(0.0);
    Ok(McEstimate {
        estimate: top + mean.ln(),
        std_error: (var / l).sqrt() / mean,
    })
}
