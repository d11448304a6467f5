//! Per-gene Bayes factors comparing one shared rare-variant rate against
//! separate control and case rates.
//!
//! Each marginal likelihood is the plug-in Laplace form
//! `√(2πΣ̂) · L(η̂) · π(η̂ | η*, K*)` with empirical hyperparameters
//! `η* = η̂` and `K* = η̂ / Σ̂` (scaled by `p²` under the null). Under the null
//! with `p = 1` this makes `2 ln BF` asymptotically `χ²(1)`; an informative
//! `p < 1` adds `−2 ln p` and the reference law becomes `χ²(3)`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::counts::{
    fit_k, fit_mixture_at_k, fit_mixture_null, maximize_logit, mixture_precondition, profile_w0, BetaPrior,
    CountTable, Derivs, EtaFit, GeneCounts, Kernel, Obs, K_BINOMIAL,
};
use crate::error::{domain, Boundary, Error, Result};
use crate::marginal::plugin_from_fit;
use crate::stats::special::{ln_beta_unchecked, ln_gamma_unchecked};
use crate::stats::{chi2_sf, expit};

/// Smallest prior probability used before taking `ln p`.
pub const P_PRIOR_FLOOR: f64 = 1e-300;
/// Hyperprior means for `w0` are kept this far from 0 and 1.
pub const W0_HYPER_EDGE: f64 = 1e-3;

/// Conditions attached to a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// The pooled rate MLE is on the boundary; the Bayes factor is set to 1.
    BoundaryMle,
    /// One group's rate MLE is on the boundary and was replaced by a
    /// continuity-corrected value.
    GroupBoundary,
    /// The zero-inflated fit is not identifiable; the beta prior was used.
    MixtureUndefined,
    /// Too few single-variant tests for an informative prior; `p = 1`.
    PriorFallback,
    /// The precision fit found no detectable overdispersion.
    EffectivelyBinomial,
    /// A `w0` hyperprior mean was clamped away from 0 or 1.
    W0Boundary,
    /// The gene was excluded before testing.
    Filtered,
    /// Estimation failed; the row carries no statistics.
    Failed,
}

impl Flag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Flag::BoundaryMle => "boundary_mle",
            Flag::GroupBoundary => "group_boundary",
            Flag::MixtureUndefined => "mixture_undefined",
            Flag::PriorFallback => "prior_fallback",
            Flag::EffectivelyBinomial => "effectively_binomial",
            Flag::W0Boundary => "w0_boundary",
            Flag::Filtered => "filtered",
            Flag::Failed => "failed",
        }
    }

    pub const ALL: [Flag; 8] = [
        Flag::BoundaryMle,
        Flag::GroupBoundary,
        Flag::MixtureUndefined,
        Flag::PriorFallback,
        Flag::EffectivelyBinomial,
        Flag::W0Boundary,
        Flag::Filtered,
        Flag::Failed,
    ];
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Flag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Flag> {
        Flag::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| domain(format!("unknown flag {s:?}")))
    }
}

/// Which prior on individual rates the Bayes factor uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BfMode {
    /// Beta prior.
    #[default]
    Beta,
    /// Zero-inflated prior with `w0` shared by both hypotheses.
    Mixture,
    /// Zero-inflated prior with `w0` integrated separately per group.
    MixtureJoint,
}

impl BfMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BfMode::Beta => "beta",
            BfMode::Mixture => "mixture",
            BfMode::MixtureJoint => "mixture_joint",
        }
    }
}

impl fmt::Display for BfMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BfMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<BfMode> {
        match s {
            "beta" => Ok(BfMode::Beta),
            "mixture" => Ok(BfMode::Mixture),
            "mixture_joint" => Ok(BfMode::MixtureJoint),
            _ => Err(domain(format!("unknown Bayes factor mode {s:?}"))),
        }
    }
}

/// Empirical hyperparameters of the null and alternative rate priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperSpec {
    pub eta_star: f64,
    pub eta1_star: f64,
    pub eta2_star: f64,
    pub k_star: f64,
    pub k1_star: f64,
    pub k2_star: f64,
    pub p_prior: f64,
}

impl HyperSpec {
    /// `η* = η̂`, `K* = p² η̂ / Σ̂`, and `η_g* = η̂_g`, `K_g* = η̂_g / Σ̂_g` per group.
    pub fn from_fits(pooled: &EtaFit, controls: &EtaFit, cases: &EtaFit, p_prior: f64) -> HyperSpec {
        HyperSpec {
            eta_star: pooled.eta,
            eta1_star: controls.eta,
            eta2_star: cases.eta,
            // p² can underflow for tiny p; keep the hyperprior proper
            k_star: (p_prior * p_prior * pooled.eta / pooled.sigma).max(f64::MIN_POSITIVE),
            k1_star: controls.eta / controls.sigma,
            k2_star: cases.eta / cases.sigma,
            p_prior,
        }
    }
}

/// Bayes factor for one gene with the fitted quantities behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfResult {
    pub gene_id: String,
    pub mode: BfMode,
    pub log_bf: f64,
    pub two_log_bf: f64,
    /// Degrees of freedom of the reference `χ²` law.
    pub df: u32,
    pub p_value: f64,
    pub eta_hat: f64,
    pub eta1_hat: f64,
    pub eta2_hat: f64,
    pub sigma_hat: f64,
    pub sigma1_hat: f64,
    pub sigma2_hat: f64,
    pub k_tilde: f64,
    pub w0_tilde: Option<f64>,
    pub p_prior: f64,
    /// `ln K*` of the null hyperprior.
    pub log_kstar: f64,
    /// `ln (K* η*)` of the null hyperprior.
    pub log_kstar_eta: f64,
    /// Large-sample form `(η̂₁ − η̂₂)² / (Σ̂₁ + Σ̂₂) − 2 ln p`.
    pub asymptotic_two_log_bf: f64,
    pub hyper: Option<HyperSpec>,
    pub flags: BTreeSet<Flag>,
}

impl BfResult {
    pub fn has_flag(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }
}

/// Validates `p` and floors it at [`P_PRIOR_FLOOR`].
pub fn clamp_prior(p_prior: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_prior) {
        return Err(domain(format!("prior probability must lie in (0, 1], got {p_prior}")));
    }
    Ok(p_prior.max(P_PRIOR_FLOOR))
}

/// `χ²` tail probability of `2 ln BF`; evidence for the null maps to 1.
pub fn bf_p_value(two_log_bf: f64, df: u32) -> Result<f64> {
    if two_log_bf.is_nan() {
        return Err(Error::NumericalFailure("Bayes factor is NaN".into()));
    }
    if two_log_bf <= 0.0 {
        return Ok(1.0);
    }
    chi2_sf(two_log_bf, df)
}

/// Rate fit for one sample, possibly replaced at the boundary.
#[derive(Debug, Clone, Copy)]
struct Part {
    fit: EtaFit,
    substituted: bool,
}

/// Fits the rate of one sample; a boundary optimum is replaced by the
/// continuity value `0.5 / Σn` (or one minus it) with the kernel's curvature there.
fn fit_part<D, V>(table: &CountTable, derivs: D, value: V) -> Result<Part>
where
    D: Fn(f64) -> Derivs,
    V: Fn(f64) -> f64,
{
    if table.is_empty() {
        return Err(Error::UnsupportedShape("a group has no individuals with sites".into()));
    }
    let total_n = table.total_n();
    let (eta, substituted) = match table.boundary() {
        Some(b) => {
            let edge = 0.5 / total_n;
            (if b == Boundary::AllZero { edge } else { 1.0 - edge }, true)
        }
        None => (expit(maximize_logit(table.total_x() / total_n, &derivs, &value)), false),
    };
    let d = derivs(eta);
    let sigma = if d.d2 < 0.0 && d.d2.is_finite() {
        -1.0 / d.d2
    } else if substituted {
        // binomial information when the kernel is flat at the substituted point
        eta * (1.0 - eta) / total_n
    } else {
        return Err(Error::NumericalFailure(format!(
            "non-negative curvature {} at rate MLE {eta}",
            d.d2
        )));
    };
    Ok(Part { fit: EtaFit { eta, sigma, loglik: d.value }, substituted })
}

fn kernel_part(table: &CountTable, kernel: Kernel) -> Result<Part> {
    fit_part(table, |eta| kernel.derivs(table, eta), |eta| kernel.loglik(table, eta))
}

struct Tables {
    pooled: CountTable,
    controls: CountTable,
    cases: CountTable,
}

fn tables(gene: &GeneCounts) -> Result<Tables> {
    gene.validate()?;
    let t = Tables { pooled: gene.pooled_table(), controls: gene.control_table(), cases: gene.case_table() };
    if t.controls.is_empty() || t.cases.is_empty() {
        return Err(Error::UnsupportedShape(format!(
            "gene {}: a group has no individuals with sites",
            gene.gene_id
        )));
    }
    Ok(t)
}

fn base_df(p_prior: f64) -> u32 {
    if p_prior == 1.0 {
        1
    } else {
        3
    }
}

/// Result for a gene whose pooled rate MLE is on the boundary: BF = 1.
fn boundary_result(gene: &GeneCounts, mode: BfMode, p_prior: f64, df: u32) -> BfResult {
    BfResult {
        gene_id: gene.gene_id.clone(),
        mode,
        log_bf: 0.0,
        two_log_bf: 0.0,
        df,
        p_value: 1.0,
        eta_hat: f64::NAN,
        eta1_hat: f64::NAN,
        eta2_hat: f64::NAN,
        sigma_hat: f64::NAN,
        sigma1_hat: f64::NAN,
        sigma2_hat: f64::NAN,
        k_tilde: f64::NAN,
        w0_tilde: None,
        p_prior,
        log_kstar: f64::NAN,
        log_kstar_eta: f64::NAN,
        asymptotic_two_log_bf: f64::NAN,
        hyper: None,
        flags: BTreeSet::from([Flag::BoundaryMle]),
    }
}

struct Assembly<'a> {
    gene: &'a GeneCounts,
    mode: BfMode,
    p_prior: f64,
    df: u32,
    k_tilde: f64,
    w0_tilde: Option<f64>,
    flags: BTreeSet<Flag>,
}

impl Assembly<'_> {
    fn finish(mut self, pooled: Part, controls: Part, cases: Part) -> Result<BfResult> {
        let p = self.p_prior;
        let hyper = HyperSpec::from_fits(&pooled.fit, &controls.fit, &cases.fit, p);
        let m0 = plugin_from_fit(
            pooled.fit.eta,
            pooled.fit.sigma,
            pooled.fit.loglik,
            &BetaPrior { eta: hyper.eta_star, k: hyper.k_star },
        );
        let m1a = plugin_from_fit(
            controls.fit.eta,
            controls.fit.sigma,
            controls.fit.loglik,
            &BetaPrior { eta: hyper.eta1_star, k: hyper.k1_star },
        );
        let m1b = plugin_from_fit(
            cases.fit.eta,
            cases.fit.sigma,
            cases.fit.loglik,
            &BetaPrior { eta: hyper.eta2_star, k: hyper.k2_star },
        );
        let log_bf = m1a.log_marginal + m1b.log_marginal - m0.log_marginal;
        if !log_bf.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "gene {}: non-finite log Bayes factor {log_bf}",
                self.gene.gene_id
            )));
        }
        if controls.substituted || cases.substituted {
            self.flags.insert(Flag::GroupBoundary);
        }
        let two_log_bf = 2.0 * log_bf;
        let gap = controls.fit.eta - cases.fit.eta;
        Ok(BfResult {
            gene_id: self.gene.gene_id.clone(),
            mode: self.mode,
            log_bf,
            two_log_bf,
            df: self.df,
            p_value: bf_p_value(two_log_bf, self.df)?,
            eta_hat: pooled.fit.eta,
            eta1_hat: controls.fit.eta,
            eta2_hat: cases.fit.eta,
            sigma_hat: pooled.fit.sigma,
            sigma1_hat: controls.fit.sigma,
            sigma2_hat: cases.fit.sigma,
            k_tilde: self.k_tilde,
            w0_tilde: self.w0_tilde,
            p_prior: p,
            log_kstar: hyper.k_star.ln(),
            log_kstar_eta: (hyper.k_star * hyper.eta_star).ln(),
            asymptotic_two_log_bf: gap * gap / (controls.fit.sigma + cases.fit.sigma) - 2.0 * p.ln(),
            hyper: Some(hyper),
            flags: self.flags,
        })
    }
}

fn fixed_kernel(
    gene: &GeneCounts,
    t: &Tables,
    kernel: Kernel,
    mode: BfMode,
    p_prior: f64,
    flags: BTreeSet<Flag>,
) -> Result<BfResult> {
    kernel.validate()?;
    let pooled = kernel_part(&t.pooled, kernel)?;
    let controls = kernel_part(&t.controls, kernel)?;
    let cases = kernel_part(&t.cases, kernel)?;
    let w0_tilde = match kernel {
        Kernel::Beta { .. } => None,
        Kernel::Mixture { w0, .. } => Some(w0),
    };
    Assembly { gene, mode, p_prior, df: base_df(p_prior), k_tilde: kernel.k(), w0_tilde, flags }
        .finish(pooled, controls, cases)
}

/// Bayes factor under beta priors, with `K̃` fitted once on the pooled sample.
pub fn bf_beta(gene: &GeneCounts, p_prior: f64) -> Result<BfResult> {
    let p = clamp_prior(p_prior)?;
    let t = tables(gene)?;
    if t.pooled.boundary().is_some() {
        return Ok(boundary_result(gene, BfMode::Beta, p, base_df(p)));
    }
    let kfit = fit_k(&t.pooled)?;
    let mut flags = BTreeSet::new();
    if kfit.effectively_binomial {
        flags.insert(Flag::EffectivelyBinomial);
    }
    fixed_kernel(gene, &t, Kernel::Beta { k: kfit.k }, BfMode::Beta, p, flags)
}

/// Bayes factor with the nuisance parameters of the kernel held at given values.
pub fn bf_fixed_kernel(gene: &GeneCounts, kernel: Kernel, p_prior: f64) -> Result<BfResult> {
    let p = clamp_prior(p_prior)?;
    let t = tables(gene)?;
    let mode = match kernel {
        Kernel::Beta { .. } => BfMode::Beta,
        Kernel::Mixture { .. } => BfMode::Mixture,
    };
    if t.pooled.boundary().is_some() {
        return Ok(boundary_result(gene, mode, p, base_df(p)));
    }
    fixed_kernel(gene, &t, kernel, mode, p, BTreeSet::new())
}

/// Bayes factor under zero-inflated priors with `(w̃0, K̃)` fitted once on the
/// pooled sample. Falls back to [`bf_beta`] when the zero-inflated fit is
/// not identifiable.
pub fn bf_mixture(gene: &GeneCounts, p_prior: f64) -> Result<BfResult> {
    let p = clamp_prior(p_prior)?;
    let t = tables(gene)?;
    if t.pooled.boundary().is_some() {
        return Ok(boundary_result(gene, BfMode::Mixture, p, base_df(p)));
    }
    let fit = match fit_mixture_null(&t.pooled) {
        Ok(fit) => fit,
        Err(Error::MixtureUndefined(why)) => {
            log::debug!("gene {}: zero-inflated prior undefined ({why}), using beta", gene.gene_id);
            let mut r = bf_beta(gene, p)?;
            r.flags.insert(Flag::MixtureUndefined);
            return Ok(r);
        }
        Err(e) => return Err(e),
    };
    let mut flags = BTreeSet::new();
    if fit.k >= K_BINOMIAL {
        flags.insert(Flag::EffectivelyBinomial);
    }
    fixed_kernel(gene, &t, Kernel::Mixture { w0: fit.w0, k: fit.k }, BfMode::Mixture, p, flags)
}

/// Rate kernel with `w0` integrated against a `Beta` hyperprior.
///
/// With `M` zero-count individuals (all with `n0` sites) among `N`, and
/// `Z(η) = B(ηK, K(1−η) + n0) / B(ηK, K(1−η))`, the integral is
/// `Π_{x>0} BB(x) · Σ_h C(M, h) Z^{M−h} B(h + a, N − h + b) / B(a, b)`
/// where `(a, b)` are the hyperprior shapes. The sum runs in log space.
#[derive(Debug, Clone)]
pub struct JointKernel {
    positives: CountTable,
    zero: CountTable,
    k: f64,
    m: usize,
    /// `ln C(M, h) + ln B(h + a, N − h + b) − ln B(a, b)` for `h = 0..=M`.
    consts: Vec<f64>,
}

impl JointKernel {
    pub fn new(table: &CountTable, k: f64, w_hyper: &BetaPrior) -> Result<JointKernel> {
        Kernel::Beta { k }.validate()?;
        let w_hyper = BetaPrior::new(w_hyper.eta, w_hyper.k)?;
        let pattern = table.zero_pattern();
        let n0 = match (pattern.m_zero, pattern.n_common) {
            (0, _) => 1,
            (_, Some(n)) => n,
            (_, None) => {
                return Err(Error::UnsupportedShape(
                    "zero-count individuals must share one site count".into(),
                ))
            }
        };
        let positives = CountTable::from_obs(
            table
                .iter()
                .filter(|&(x, _, _)| x > 0)
                .flat_map(|(x, n, mult)| std::iter::repeat_n(Obs { x, n }, mult as usize)),
        );
        let (a, b) = w_hyper.shapes();
        let (m, n) = (pattern.m_zero, pattern.n_total as f64);
        let ln_b0 = ln_beta_unchecked(a, b);
        let ln_fact_m = ln_gamma_unchecked(m as f64 + 1.0);
        let consts = (0..=m)
            .map(|h| {
                let h = h as f64;
                ln_fact_m - ln_gamma_unchecked(h + 1.0) - ln_gamma_unchecked(m as f64 - h + 1.0)
                    + ln_beta_unchecked(h + a, n - h + b)
                    - ln_b0
            })
            .collect();
        Ok(JointKernel {
            positives,
            zero: CountTable::from_obs([Obs { x: 0, n: n0 }]),
            k,
            m,
            consts,
        })
    }

    pub fn loglik(&self, eta: f64) -> f64 {
        self.derivs_inner(eta, false).value
    }

    pub fn derivs(&self, eta: f64) -> Derivs {
        self.derivs_inner(eta, true)
    }

    fn derivs_inner(&self, eta: f64, want: bool) -> Derivs {
        let beta = Kernel::Beta { k: self.k };
        let pos = if want { beta.derivs(&self.positives, eta) } else {
            Derivs { value: beta.loglik(&self.positives, eta), ..Derivs::default() }
        };
        let z = if want { beta.derivs(&self.zero, eta) } else {
            Derivs { value: beta.loglik(&self.zero, eta), ..Derivs::default() }
        };
        let m = self.m as f64;
        let terms: Vec<f64> =
            self.consts.iter().enumerate().map(|(h, c)| c + (m - h as f64) * z.value).collect();
        let hi = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (h, t) in terms.iter().enumerate() {
            let w = (t - hi).exp();
            let j = m - h as f64;
            s0 += w;
            s1 += w * j;
            s2 += w * j * j;
        }
        let mean = s1 / s0;
        let var = (s2 / s0 - mean * mean).max(0.0);
        Derivs {
            value: pos.value + hi + s0.ln(),
            d1: pos.d1 + mean * z.d1,
            d2: pos.d2 + mean * z.d2 + var * z.d1 * z.d1,
        }
    }
}

/// Log of the `w0`-integrated kernel at `η`; see [`JointKernel`].
pub fn joint_log_kernel(table: &CountTable, k: f64, w_hyper: &BetaPrior, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(domain(format!("rate eta must lie in (0, 1), got {eta}")));
    }
    Ok(JointKernel::new(table, k, w_hyper)?.loglik(eta))
}

/// Empirical `Beta(η**, K**)` hyperprior for `w0` on one sample at precision
/// `k`: the mean is the fitted `ŵ0`, the precision is `ŵ0 / Σ̂_w` with
/// `Σ̂_w = −1/∂²ℓ/∂w0²`, mirroring the recipe for the rate.
/// Returns the prior and whether the mean had to be clamped.
pub fn w0_hyperprior(table: &CountTable, k: f64) -> Result<(BetaPrior, bool)> {
    let pattern = table.zero_pattern();
    let (w0, eta) = match table.boundary() {
        Some(b) => {
            let edge = 0.5 / table.total_n();
            let eta = if b == Boundary::AllZero { edge } else { 1.0 - edge };
            (profile_w0(table, &pattern, eta, k), eta)
        }
        None => {
            let (w0, eta, _) = fit_mixture_at_k(table, &pattern, k);
            (w0, eta)
        }
    };
    let w = w0.clamp(W0_HYPER_EDGE, 1.0 - W0_HYPER_EDGE);
    let clamped = w != w0;
    let beta = Kernel::Beta { k };
    let mut curv = 0.0;
    for (x, n, mult) in table.iter() {
        if x == 0 {
            let r = beta.loglik(&CountTable::from_obs([Obs { x: 0, n }]), eta).exp();
            let h0 = w + (1.0 - w) * r;
            curv -= mult * (1.0 - r) * (1.0 - r) / (h0 * h0);
        } else {
            curv -= mult / ((1.0 - w) * (1.0 - w));
        }
    }
    if !(curv < 0.0) {
        return Err(Error::NumericalFailure(format!("flat w0 likelihood at {w}")));
    }
    Ok((BetaPrior::new(w, -w * curv)?, clamped))
}

/// Bayes factor comparing `(η₁, w0₁)` against `(η₂, w0₂)`, with each `w0`
/// integrated against its own empirical hyperprior and `K̃` from the pooled
/// zero-inflated fit.
///
/// The reference law has two degrees of freedom (four with `p < 1`) since
/// both the rate and the zero mass differ under the alternative.
pub fn bf_mixture_joint(gene: &GeneCounts, p_prior: f64) -> Result<BfResult> {
    let p = clamp_prior(p_prior)?;
    let t = tables(gene)?;
    let df = if p == 1.0 { 2 } else { 4 };
    if t.pooled.boundary().is_some() {
        return Ok(boundary_result(gene, BfMode::MixtureJoint, p, df));
    }
    let pattern = mixture_precondition(&t.pooled)?;
    if pattern.n_common.is_none() {
        return Err(Error::UnsupportedShape(format!(
            "gene {}: zero-count individuals must share one site count",
            gene.gene_id
        )));
    }
    let null = fit_mixture_null(&t.pooled)?;
    let mut flags = BTreeSet::new();
    if null.k >= K_BINOMIAL {
        flags.insert(Flag::EffectivelyBinomial);
    }
    let mut part = |table: &CountTable| -> Result<Part> {
        let (w_hyper, clamped) = w0_hyperprior(table, null.k)?;
        if clamped {
            flags.insert(Flag::W0Boundary);
        }
        let kernel = JointKernel::new(table, null.k, &w_hyper)?;
        fit_part(table, |eta| kernel.derivs(eta), |eta| kernel.loglik(eta))
    };
    let pooled = part(&t.pooled)?;
    let controls = part(&t.controls)?;
    let cases = part(&t.cases)?;
    Assembly {
        gene,
        mode: BfMode::MixtureJoint,
        p_prior: p,
        df,
        k_tilde: null.k,
        w0_tilde: Some(null.w0),
        flags,
    }
    .finish(pooled, controls, cases)
}

/// Bayes factor in the requested mode.
pub fn bayes_factor(gene: &GeneCounts, mode: BfMode, p_prior: f64) -> Result<BfResult> {
    match mode {
        BfMode::Beta => bf_beta(gene, p_prior),
        BfMode::Mixture => bf_mixture(gene, p_prior),
        BfMode::MixtureJoint => bf_mixture_joint(gene, p_prior),
    }
}

/// Model-based pooled rate `η̂` and the plain mean of per-individual rates `x/n`.
pub fn fit_diagnostic(gene: &GeneCounts) -> Result<(f64, f64)> {
    let pooled = tables(gene)?.pooled;
    let eta = fit_k(&pooled)?.eta;
    let (mut sum, mut count) = (0.0, 0.0);
    for (x, n, mult) in pooled.iter() {
        sum += mult * x as f64 / n as f64;
        count += mult;
    }
    Ok((eta, sum / count))
}
