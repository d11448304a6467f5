//! Per-gene count data and the beta-binomial / zero-inflated likelihood kernels.
//!
//! Every likelihood here omits the binomial coefficients `C(n, x)`: they do not
//! depend on any parameter and cancel in every Bayes factor.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Boundary, Error, Result};
use crate::stats::optim::brent_max;
use crate::stats::special::{ln_gamma_diff, PochSums};
use crate::stats::{expit, log_add_exp, logit};

/// Lower edge of the precision search.
pub const K_MIN: f64 = 1e-4;
/// Upper edge of the precision search.
pub const K_MAX: f64 = 1e8;
/// Precision fits at or above this are reported as effectively binomial.
pub const K_BINOMIAL: f64 = 1e6;

const THETA_BOUND: f64 = 35.0;
const THETA_TOL: f64 = 1e-10;
const MAX_ITER: usize = 200;
const POLISH_STEPS: usize = 5;

/// Rare-variant count `x` over `n` sites for one individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Obs {
    pub x: u32,
    pub n: u32,
}

impl Obs {
    pub fn new(x: u32, n: u32) -> Obs {
        Obs { x, n }
    }
}

/// Counts for one gene, split into controls and cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneCounts {
    pub gene_id: String,
    pub controls: Vec<Obs>,
    pub cases: Vec<Obs>,
}

impl GeneCounts {
    pub fn new(gene_id: impl Into<String>, controls: Vec<Obs>, cases: Vec<Obs>) -> Result<GeneCounts> {
        let gene = GeneCounts { gene_id: gene_id.into(), controls, cases };
        gene.validate()?;
        Ok(gene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.controls.is_empty() || self.cases.is_empty() {
            return Err(Error::Validation(format!(
                "gene {} needs at least one control and one case",
                self.gene_id
            )));
        }
        for (group, obs) in [("control", &self.controls), ("case", &self.cases)] {
            if let Some((i, o)) = obs.iter().enumerate().find(|(_, o)| o.x > o.n) {
                return Err(Error::Validation(format!(
                    "gene {}: {group} #{i} has x={} > n={}",
                    self.gene_id, o.x, o.n
                )));
            }
        }
        Ok(())
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn n_cases(&self) -> usize {
        self.cases.len()
    }

    /// Site count of the gene, taken as the largest `n` of any individual.
    pub fn n_sites(&self) -> u32 {
        self.controls.iter().chain(&self.cases).map(|o| o.n).max().unwrap_or(0)
    }

    pub fn control_table(&self) -> CountTable {
        CountTable::from_obs(self.controls.iter().copied())
    }

    pub fn case_table(&self) -> CountTable {
        CountTable::from_obs(self.cases.iter().copied())
    }

    pub fn pooled_table(&self) -> CountTable {
        CountTable::from_obs(self.controls.iter().chain(&self.cases).copied())
    }

    /// Same data with the group labels exchanged.
    pub fn swapped(&self) -> GeneCounts {
        GeneCounts {
            gene_id: self.gene_id.clone(),
            controls: self.cases.clone(),
            cases: self.controls.clone(),
        }
    }
}

/// Beta prior on a rate in mean–precision form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub eta: f64,
    pub k: f64,
}

impl BetaPrior {
    pub fn new(eta: f64, k: f64) -> Result<BetaPrior> {
        check_eta_k(eta, k)?;
        Ok(BetaPrior { eta, k })
    }

    /// Shape parameters `(ηK, K(1−η))`.
    pub fn shapes(&self) -> (f64, f64) {
        (self.eta * self.k, (1.0 - self.eta) * self.k)
    }
}

/// Point mass at zero with weight `w0`, mixed with a beta component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixturePrior {
    pub w0: f64,
    pub eta: f64,
    pub k: f64,
}

impl MixturePrior {
    pub fn new(w0: f64, eta: f64, k: f64) -> Result<MixturePrior> {
        check_w0(w0)?;
        check_eta_k(eta, k)?;
        Ok(MixturePrior { w0, eta, k })
    }
}

/// How the zero counts of a sample are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroPattern {
    /// Individuals with `x = 0` (and `n > 0`).
    pub m_zero: usize,
    /// Individuals with `n > 0`.
    pub n_total: usize,
    /// The site count shared by all zero-count individuals, if there is one.
    pub n_common: Option<u32>,
}

/// Distinct `(x, n)` pairs with multiplicities; individuals with `n = 0` are
/// dropped since they contribute nothing to any likelihood.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CountTable {
    entries: Vec<Entry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    x: u32,
    n: u32,
    mult: f64,
}

impl CountTable {
    pub fn from_obs<I: IntoIterator<Item = Obs>>(obs: I) -> CountTable {
        let mut v: Vec<Obs> = obs.into_iter().filter(|o| o.n > 0).collect();
        v.sort_unstable_by_key(|o| (o.n, o.x));
        let mut entries: Vec<Entry> = Vec::new();
        for o in v {
            match entries.last_mut() {
                Some(e) if e.x == o.x && e.n == o.n => e.mult += 1.0,
                _ => entries.push(Entry { x: o.x, n: o.n, mult: 1.0 }),
            }
        }
        CountTable { entries }
    }

    pub fn from_pairs(pairs: &[(u32, u32)]) -> Result<CountTable> {
        if let Some(&(x, n)) = pairs.iter().find(|(x, n)| x > n) {
            return Err(domain(format!("count x={x} exceeds site count n={n}")));
        }
        Ok(CountTable::from_obs(pairs.iter().map(|&(x, n)| Obs { x, n })))
    }

    /// True when no individual has any sites.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of individuals with `n > 0`.
    pub fn individuals(&self) -> f64 {
        self.entries.iter().map(|e| e.mult).sum()
    }

    pub fn total_x(&self) -> f64 {
        self.entries.iter().map(|e| e.mult * e.x as f64).sum()
    }

    pub fn total_n(&self) -> f64 {
        self.entries.iter().map(|e| e.mult * e.n as f64).sum()
    }

    /// `(x, n, multiplicity)` triples in ascending `(n, x)` order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.entries.iter().map(|e| (e.x, e.n, e.mult))
    }

    /// Which edge of (0, 1) the rate MLE sits on, if any.
    pub fn boundary(&self) -> Option<Boundary> {
        if self.entries.iter().all(|e| e.x == 0) {
            Some(Boundary::AllZero)
        } else if self.entries.iter().all(|e| e.x == e.n) {
            Some(Boundary::AllSaturated)
        } else {
            None
        }
    }

    pub fn zero_pattern(&self) -> ZeroPattern {
        let mut m_zero = 0.0;
        let mut common: Option<Option<u32>> = None;
        for e in self.entries.iter().filter(|e| e.x == 0) {
            m_zero += e.mult;
            common = Some(match common {
                None => Some(e.n),
                Some(Some(n)) if n == e.n => Some(n),
                _ => None,
            });
        }
        ZeroPattern {
            m_zero: m_zero as usize,
            n_total: self.individuals() as usize,
            n_common: common.flatten(),
        }
    }

    /// Variance of `x` among individuals with `x > 0`.
    pub fn positive_variance(&self) -> f64 {
        let pos = self.entries.iter().filter(|e| e.x > 0);
        let (mut w, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for e in pos {
            let x = e.x as f64;
            w += e.mult;
            s1 += e.mult * x;
            s2 += e.mult * x * x;
        }
        if w == 0.0 {
            return 0.0;
        }
        let mean = s1 / w;
        (s2 / w - mean * mean).max(0.0)
    }
}

/// A log-likelihood value with its first two derivatives in `η`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivs {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Likelihood kernel for the rare-variant rate `η`, with nuisance parameters fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Beta { k: f64 },
    Mixture { w0: f64, k: f64 },
}

impl Kernel {
    pub fn k(&self) -> f64 {
        match *self {
            Kernel::Beta { k } | Kernel::Mixture { k, .. } => k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_k(self.k())?;
        if let Kernel::Mixture { w0, .. } = *self {
            check_w0(w0)?;
        }
        Ok(())
    }

    pub fn loglik(&self, table: &CountTable, eta: f64) -> f64 {
        self.eval(table, eta, false).value
    }

    pub fn derivs(&self, table: &CountTable, eta: f64) -> Derivs {
        self.eval(table, eta, true)
    }

    fn eval(&self, table: &CountTable, eta: f64, want_derivs: bool) -> Derivs {
        match *self {
            Kernel::Beta { k } => {
                let mut out = Derivs::default();
                for_each_term(table, eta, k, want_derivs, |e, t| {
                    out.value += e.mult * t.value;
                    out.d1 += e.mult * t.d1;
                    out.d2 += e.mult * t.d2;
                });
                out
            }
            Kernel::Mixture { w0, k } => {
                let ln_w0 = w0.ln();
                let ln_1m = (-w0).ln_1p();
                let mut out = Derivs::default();
                for_each_term(table, eta, k, want_derivs, |e, t| {
                    if e.x == 0 {
                        // h0 = w0 + (1 − w0) R with ln R = t.value
                        let ln_h0 = log_add_exp(ln_w0, ln_1m + t.value);
                        out.value += e.mult * ln_h0;
                        if want_derivs {
                            let r = (ln_1m + t.value - ln_h0).exp();
                            out.d1 += e.mult * r * t.d1;
                            out.d2 += e.mult * (r * t.d2 + r * (1.0 - r) * t.d1 * t.d1);
                        }
                    } else {
                        out.value += e.mult * (ln_1m + t.value);
                        out.d1 += e.mult * t.d1;
                        out.d2 += e.mult * t.d2;
                    }
                });
                out
            }
        }
    }
}

/// Running sums `Σ_{i<m} ln(u + i/K)`, `Σ 1/(u + i/K)`, `Σ 1/(u + i/K)²`,
/// advanced incrementally as `m` grows.
struct Rising {
    u: f64,
    k: f64,
    inv_k: f64,
    pos: u32,
    derivs: bool,
    ln: f64,
    d1: f64,
    d2: f64,
}

/// Jumps longer than this use the asymptotic block sums.
const BLOCK_JUMP: u32 = 512;

impl Rising {
    fn new(u: f64, k: f64, derivs: bool) -> Rising {
        Rising { u, k, inv_k: 1.0 / k, pos: 0, derivs, ln: 0.0, d1: 0.0, d2: 0.0 }
    }

    fn advance_to(&mut self, m: u32) {
        debug_assert!(m >= self.pos);
        let len = m - self.pos;
        if len > BLOCK_JUMP {
            let c = self.k * self.u + self.pos as f64;
            if self.derivs {
                let ps = PochSums::new(c, len);
                self.ln += ps.ln - len as f64 * self.k.ln();
                self.d1 += ps.d1 * self.k;
                self.d2 += ps.d2 * self.k * self.k;
            } else {
                self.ln += ln_gamma_diff(c, len as f64) - len as f64 * self.k.ln();
            }
            self.pos = m;
            return;
        }
        while self.pos < m {
            let z = self.u + self.pos as f64 * self.inv_k;
            self.ln += z.ln();
            if self.derivs {
                let r = 1.0 / z;
                self.d1 += r;
                self.d2 += r * r;
            }
            self.pos += 1;
        }
    }
}

/// Visits every table entry with its beta-binomial log term (coefficient
/// dropped) and the term's `η`-derivatives.
fn for_each_term<F: FnMut(&Entry, Derivs)>(
    table: &CountTable,
    eta: f64,
    k: f64,
    derivs: bool,
    mut f: F,
) {
    let entries = &table.entries;
    let mut total = Rising::new(1.0, k, false);
    let mut start = 0;
    while start < entries.len() {
        let n = entries[start].n;
        let end = start + entries[start..].iter().take_while(|e| e.n == n).count();
        let group = &entries[start..end];
        total.advance_to(n);

        // x ascending for the η part, (n − x) ascending for the 1 − η part
        let mut up = Rising::new(eta, k, derivs);
        let mut terms: Vec<Derivs> = Vec::with_capacity(group.len());
        for e in group {
            up.advance_to(e.x);
            terms.push(Derivs { value: up.ln, d1: up.d1, d2: -up.d2 });
        }
        let mut down = Rising::new(1.0 - eta, k, derivs);
        for (e, t) in group.iter().zip(terms.iter_mut()).rev() {
            down.advance_to(e.n - e.x);
            t.value += down.ln - total.ln;
            t.d1 -= down.d1;
            t.d2 -= down.d2;
        }
        for (e, t) in group.iter().zip(terms) {
            f(e, t);
        }
        start = end;
    }
}

fn check_k(k: f64) -> Result<()> {
    if !(k.is_finite() && k > 0.0) {
        return Err(domain(format!("precision K must be positive and finite, got {k}")));
    }
    Ok(())
}

fn check_eta_k(eta: f64, k: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(domain(format!("rate eta must lie in (0, 1), got {eta}")));
    }
    check_k(k)
}

fn check_w0(w0: f64) -> Result<()> {
    if !(0.0..1.0).contains(&w0) {
        return Err(domain(format!("zero-mass weight w0 must lie in [0, 1), got {w0}")));
    }
    Ok(())
}

/// Beta-binomial log-likelihood of `table` at `(η, K)`, without binomial coefficients.
pub fn bb_loglik(table: &CountTable, eta: f64, k: f64) -> Result<f64> {
    check_eta_k(eta, k)?;
    Ok(Kernel::Beta { k }.loglik(table, eta))
}

/// First and second `η`-derivatives of [`bb_loglik`].
pub fn bb_score_and_curvature(table: &CountTable, eta: f64, k: f64) -> Result<(f64, f64)> {
    check_eta_k(eta, k)?;
    let d = Kernel::Beta { k }.derivs(table, eta);
    Ok((d.d1, d.d2))
}

/// Zero-inflated log-likelihood at fixed `(w0, K)`.
pub fn mixture_loglik(table: &CountTable, w0: f64, eta: f64, k: f64) -> Result<f64> {
    check_w0(w0)?;
    check_eta_k(eta, k)?;
    Ok(Kernel::Mixture { w0, k }.loglik(table, eta))
}

/// Maximum-likelihood rate at fixed nuisance parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaFit {
    pub eta: f64,
    /// `−1 / ℓ''(η̂)`.
    pub sigma: f64,
    pub loglik: f64,
}

/// MLE of `η` for a kernel: bracketed search on the logit scale, then Newton polish.
pub fn fit_eta(table: &CountTable, kernel: Kernel) -> Result<EtaFit> {
    kernel.validate()?;
    if table.is_empty() {
        return Err(domain("rate MLE needs at least one individual with sites"));
    }
    if let Some(b) = table.boundary() {
        return Err(Error::BoundaryMle(b));
    }
    let theta = maximize_theta(table, kernel);
    let eta = expit(theta);
    let d = kernel.derivs(table, eta);
    if !(d.d2 < 0.0) || !d.d2.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "non-negative curvature {} at rate MLE {eta}",
            d.d2
        )));
    }
    Ok(EtaFit { eta, sigma: -1.0 / d.d2, loglik: d.value })
}

fn maximize_theta(table: &CountTable, kernel: Kernel) -> f64 {
    let rate = table.total_x() / table.total_n();
    maximize_logit(rate, |eta| kernel.derivs(table, eta), |eta| kernel.loglik(table, eta))
}

/// Maximizes a smooth function of `η` over `θ = logit η`, starting from a
/// bracket around `logit(guess)`; `derivs` supplies `η`-space derivatives
/// for the final Newton polish.
pub(crate) fn maximize_logit<D, V>(guess: f64, derivs: D, value: V) -> f64
where
    D: Fn(f64) -> Derivs,
    V: Fn(f64) -> f64,
{
    let f = |t: f64| value(expit(t));
    let centre = logit(guess.clamp(1e-12, 1.0 - 1e-12)).clamp(-THETA_BOUND, THETA_BOUND);
    let mut lo = (centre - 4.0).max(-THETA_BOUND);
    let mut hi = (centre + 4.0).min(THETA_BOUND);
    let mut best = brent_max(f, lo, hi, THETA_TOL, MAX_ITER);
    // widen while the optimum presses against an interior bracket edge
    while (best.x - lo < 1e-3 && lo > -THETA_BOUND) || (hi - best.x < 1e-3 && hi < THETA_BOUND) {
        lo = (lo - 8.0).max(-THETA_BOUND);
        hi = (hi + 8.0).min(THETA_BOUND);
        best = brent_max(f, lo, hi, THETA_TOL, MAX_ITER);
    }
    newton_polish(best.x, |t| {
        let eta = expit(t);
        theta_derivs(derivs(eta), eta)
    })
}

/// Chain rule from `η` to `θ = logit η`: returns `(value, d/dθ, d²/dθ²)`.
pub(crate) fn theta_derivs(d: Derivs, eta: f64) -> Derivs {
    let j = eta * (1.0 - eta);
    Derivs {
        value: d.value,
        d1: d.d1 * j,
        d2: d.d2 * j * j + d.d1 * j * (1.0 - 2.0 * eta),
    }
}

/// A few Newton steps on a smooth concave-near-mode function of `θ`.
pub(crate) fn newton_polish<F: FnMut(f64) -> Derivs>(start: f64, mut f: F) -> f64 {
    let mut t = start;
    let mut cur = f(t);
    for _ in 0..POLISH_STEPS {
        if !(cur.d2 < 0.0) || cur.d1 == 0.0 {
            break;
        }
        let step = -cur.d1 / cur.d2;
        if !step.is_finite() || step.abs() > 1.0 {
            break;
        }
        let cand = (t + step).clamp(-THETA_BOUND, THETA_BOUND);
        let next = f(cand);
        if next.value + 1e-12 * next.value.abs() < cur.value {
            break;
        }
        t = cand;
        cur = next;
        if step.abs() < 1e-14 {
            break;
        }
    }
    t
}

/// MLE of `η` and its curvature-based variance at fixed precision `k`.
pub fn mle_eta(table: &CountTable, k: f64) -> Result<(f64, f64)> {
    let fit = fit_eta(table, Kernel::Beta { k })?;
    Ok((fit.eta, fit.sigma))
}

/// Joint `(η, K)` maximum of the beta-binomial likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KFit {
    pub k: f64,
    pub eta: f64,
    pub loglik: f64,
    /// The optimum is at or beyond [`K_BINOMIAL`]: no overdispersion is detectable.
    pub effectively_binomial: bool,
}

/// Profile-likelihood MLE of the precision over `[K_MIN, K_MAX]`.
pub fn fit_k(table: &CountTable) -> Result<KFit> {
    if table.is_empty() {
        return Err(domain("precision MLE needs at least one individual with sites"));
    }
    if let Some(b) = table.boundary() {
        return Err(Error::BoundaryMle(b));
    }
    let profile = |log_k: f64| -> f64 {
        let kernel = Kernel::Beta { k: log_k.exp() };
        kernel.loglik(table, expit(maximize_theta(table, kernel)))
    };
    let (lo, hi) = (K_MIN.ln(), K_MAX.ln());
    let best = brent_max(profile, lo, hi, 1e-6, MAX_ITER);
    let at_top = profile(hi);
    let (log_k, loglik) = if at_top >= best.value { (hi, at_top) } else { (best.x, best.value) };
    let k = log_k.exp();
    let eta = fit_eta(table, Kernel::Beta { k })?.eta;
    Ok(KFit {
        k,
        eta,
        loglik,
        effectively_binomial: k >= K_BINOMIAL,
    })
}

/// Profile-likelihood MLE of the precision `K̃` from a pooled sample.
pub fn mle_k(table: &CountTable) -> Result<f64> {
    Ok(fit_k(table)?.k)
}

/// Intra-class correlation implied by precision `k`.
pub fn icc(k: f64) -> f64 {
    1.0 / (k + 1.0)
}

/// Joint maximum of the zero-inflated likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureFit {
    pub w0: f64,
    pub eta: f64,
    pub k: f64,
    pub loglik: f64,
}

/// Checks that a zero-inflated fit is identifiable on `table`.
pub fn mixture_precondition(table: &CountTable) -> Result<ZeroPattern> {
    let z = table.zero_pattern();
    if z.m_zero == 0 {
        return Err(Error::MixtureUndefined("no zero-count individuals".into()));
    }
    if z.m_zero == z.n_total {
        return Err(Error::MixtureUndefined("every individual has zero count".into()));
    }
    if table.positive_variance() == 0.0 {
        return Err(Error::MixtureUndefined("positive counts have no variance".into()));
    }
    Ok(z)
}

/// MLE of `w0` with `(η, K)` held fixed.
pub(crate) fn profile_w0(table: &CountTable, pattern: &ZeroPattern, eta: f64, k: f64) -> f64 {
    const W0_MAX: f64 = 1.0 - 1e-9;
    if pattern.m_zero == 0 {
        return 0.0;
    }
    if let Some(n) = pattern.n_common {
        let table_zero = CountTable::from_obs([Obs { x: 0, n }]);
        let ln_r = Kernel::Beta { k }.loglik(&table_zero, eta);
        let r = ln_r.exp();
        let frac = pattern.m_zero as f64 / pattern.n_total as f64;
        if r >= 1.0 {
            return 0.0;
        }
        return ((frac - r) / (1.0 - r)).clamp(0.0, W0_MAX);
    }
    // concave in w0: each term is the log of an affine function
    let f = |w0: f64| Kernel::Mixture { w0, k }.loglik(table, eta);
    let best = brent_max(f, 0.0, W0_MAX, 1e-10, MAX_ITER);
    if f(0.0) >= best.value {
        0.0
    } else {
        best.x
    }
}

/// `(ŵ0, η̂, ℓ)` maximizing the zero-inflated likelihood at fixed precision,
/// with `w0` profiled out inside a logit-scale search over `η`.
pub(crate) fn fit_mixture_at_k(table: &CountTable, pattern: &ZeroPattern, k: f64) -> (f64, f64, f64) {
    let g = |t: f64| {
        let eta = expit(t);
        let w0 = profile_w0(table, pattern, eta, k);
        Kernel::Mixture { w0, k }.loglik(table, eta)
    };
    let rate = (table.total_x() / table.total_n()).clamp(1e-12, 0.5);
    let centre = logit(rate);
    let best = brent_max(g, (centre - 6.0).max(-THETA_BOUND), (centre + 8.0).min(THETA_BOUND), 1e-9, MAX_ITER);
    let eta = expit(best.x);
    (profile_w0(table, pattern, eta, k), eta, best.value)
}

/// Maximizes the zero-inflated likelihood over `(w0, η, K)` on the pooled sample.
///
/// The fit is a nested profile: `w0` in closed form (or by a concave scalar
/// search when zero-count site counts differ), `η` on the logit scale, and
/// `K` on the log scale.
pub fn fit_mixture_null(table: &CountTable) -> Result<MixtureFit> {
    let pattern = mixture_precondition(table)?;
    let inner = |k: f64| fit_mixture_at_k(table, &pattern, k);
    let (lo, hi) = (K_MIN.ln(), K_MAX.ln());
    let best = brent_max(|lk| inner(lk.exp()).2, lo, hi, 1e-6, MAX_ITER);
    let mut log_k = best.x;
    let top = inner(hi.exp());
    if top.2 >= best.value {
        log_k = hi;
    }
    let k = log_k.exp();
    let (w0, eta, loglik) = inner(k);
    Ok(MixtureFit { w0, eta, k, loglik })
}

/// `(w̃0, K̃)` from the pooled-sample zero-inflated fit.
pub fn mle_mixture_null(table: &CountTable) -> Result<(f64, f64)> {
    let fit = fit_mixture_null(table)?;
    Ok((fit.w0, fit.k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::quad::GaussLegendre;
    use crate::stats::special::ln_beta_unchecked;
    use crate::stats::RandomSource;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Beta, Binomial, Distribution};

    fn ln_choose(n: u32, x: u32) -> f64 {
        let f = |m: u32| (1..=m).map(|i| (i as f64).ln()).sum::<f64>();
        f(n) - f(x) - f(n - x)
    }

    fn table(pairs: &[(u32, u32)]) -> CountTable {
        CountTable::from_pairs(pairs).unwrap()
    }

    /// Beta-binomial log-pmf (with coefficient) through the beta-function form.
    fn bb_logpmf_exact(x: u32, n: u32, eta: f64, k: f64) -> f64 {
        let (a, b) = (eta * k, (1.0 - eta) * k);
        ln_choose(n, x) + ln_beta_unchecked(x as f64 + a, (n - x) as f64 + b) - ln_beta_unchecked(a, b)
    }

    /// `∫ Bin(x | n, p) Beta(p | a, b) dp` by composite Gauss–Legendre on a
    /// substitution that removes the endpoint singularities.
    fn bb_pmf_quadrature(x: u32, n: u32, eta: f64, k: f64) -> f64 {
        let (a, b) = (eta * k, (1.0 - eta) * k);
        let ln_norm = -ln_beta_unchecked(a, b);
        let rule = GaussLegendre::new(64);
        let pieces = 2000;
        // p = s^(1/a) near zero handled by integrating in s = p^a on [0, 1]
        let mut total = 0.0;
        for i in 0..pieces {
            let lo = i as f64 / pieces as f64;
            let hi = (i + 1) as f64 / pieces as f64;
            total += rule.integrate(lo, hi, |s| {
                if s <= 0.0 {
                    return 0.0;
                }
                let p = s.powf(1.0 / a);
                if p >= 1.0 {
                    return 0.0;
                }
                // Beta density · dp/ds = p^(a−1)(1−p)^(b−1)/B · p^(1−a)/a
                let log_dens = ln_norm + (b - 1.0) * (1.0 - p).ln() - a.ln();
                let log_bin = ln_choose(n, x) + x as f64 * p.ln() + (n - x) as f64 * (1.0 - p).ln();
                (log_dens + log_bin).exp()
            });
        }
        total
    }

    #[test]
    fn empty_region_has_zero_loglik() {
        let t = table(&[(0, 0)]);
        assert_eq!(bb_loglik(&t, 0.2, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn single_site_carrier_has_log_eta() {
        let t = table(&[(1, 1)]);
        for &k in &[0.01, 1.0, 37.0, 1e6] {
            assert!((bb_loglik(&t, 0.3, k).unwrap() - 0.3f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn loglik_matches_quadrature_oracle() {
        let got = bb_loglik(&table(&[(2, 5)]), 0.3, 2.0).unwrap() + ln_choose(5, 2);
        let want = bb_pmf_quadrature(2, 5, 0.3, 2.0).ln();
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        assert!((got - bb_logpmf_exact(2, 5, 0.3, 2.0)).abs() < 1e-12);
    }

    #[test]
    fn loglik_matches_beta_function_form_for_large_n() {
        for &(x, n, eta, k) in &[
            (3u32, 800u32, 0.004, 25.0),
            (0, 1000, 0.002, 1e7),
            (40, 900, 0.05, 0.3),
            (700, 900, 0.7, 3e3),
        ] {
            let got = bb_loglik(&table(&[(x, n)]), eta, k).unwrap() + ln_choose(n, x);
            let want = bb_logpmf_exact(x, n, eta, k);
            assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "({x},{n}): {got} vs {want}");
        }
    }

    #[test]
    fn pmf_normalizes_for_small_n() {
        for n in 0..=8u32 {
            for &(eta, k) in &[(0.5, 1.0), (0.01, 20.0), (0.9, 0.05), (0.2, 1e7)] {
                let s: f64 = (0..=n)
                    .map(|x| (bb_loglik(&table(&[(x, n)]), eta, k).unwrap() + ln_choose(n, x)).exp())
                    .sum();
                assert!((s - 1.0).abs() < 1e-10, "n={n} eta={eta} k={k}: {s}");
            }
        }
    }

    #[test]
    fn rejects_out_of_domain_parameters() {
        let t = table(&[(1, 3)]);
        assert!(bb_loglik(&t, 0.0, 1.0).is_err());
        assert!(bb_loglik(&t, 1.0, 1.0).is_err());
        assert!(bb_loglik(&t, 0.5, 0.0).is_err());
        assert!(mixture_loglik(&t, 1.0, 0.5, 1.0).is_err());
    }

    fn random_table(rng: &mut impl Rng, max_n: u32) -> CountTable {
        let m = rng.random_range(3..40);
        let pairs: Vec<(u32, u32)> = (0..m)
            .map(|_| {
                let n = rng.random_range(1..=max_n);
                (rng.random_range(0..=n.min(4)), n)
            })
            .collect();
        table(&pairs)
    }

    #[test]
    fn score_and_curvature_match_finite_differences() {
        let mut rng = RandomSource::new(3).rng();
        for _ in 0..50 {
            let t = random_table(&mut rng, 60);
            let eta = rng.random_range(0.005..0.3);
            let k = 10f64.powf(rng.random_range(-1.0..5.0));
            let (s, c) = bb_score_and_curvature(&t, eta, k).unwrap();
            let h = 1e-6 * eta;
            let f = |e: f64| bb_loglik(&t, e, k).unwrap();
            let fd1 = (f(eta + h) - f(eta - h)) / (2.0 * h);
            let g = |e: f64| bb_score_and_curvature(&t, e, k).unwrap().0;
            let fd2 = (g(eta + h) - g(eta - h)) / (2.0 * h);
            assert!((s - fd1).abs() <= 1e-4 * s.abs().max(1.0), "score {s} vs {fd1}");
            assert!((c - fd2).abs() <= 1e-4 * c.abs(), "curvature {c} vs {fd2}");
        }
    }

    #[test]
    fn mixture_derivatives_match_finite_differences() {
        let mut rng = RandomSource::new(4).rng();
        for _ in 0..50 {
            let t = random_table(&mut rng, 40);
            let eta = rng.random_range(0.005..0.3);
            let k = 10f64.powf(rng.random_range(-1.0..4.0));
            let w0 = rng.random_range(0.0..0.9);
            let kern = Kernel::Mixture { w0, k };
            let d = kern.derivs(&t, eta);
            let h = 1e-6 * eta;
            let fd1 = (kern.loglik(&t, eta + h) - kern.loglik(&t, eta - h)) / (2.0 * h);
            let fd2 = (kern.derivs(&t, eta + h).d1 - kern.derivs(&t, eta - h).d1) / (2.0 * h);
            assert!((d.d1 - fd1).abs() <= 1e-4 * d.d1.abs().max(1.0));
            assert!((d.d2 - fd2).abs() <= 1e-4 * d.d2.abs().max(1.0));
        }
    }

    #[test]
    fn mle_is_stationary_with_negative_curvature() {
        let t = table(&[(0, 30), (1, 30), (0, 30), (3, 30), (0, 30), (1, 30)]);
        let k = 40.0;
        let (eta, sigma) = mle_eta(&t, k).unwrap();
        let (s, c) = bb_score_and_curvature(&t, eta, k).unwrap();
        assert!(c < 0.0);
        assert!(s.abs() <= 1e-6 * c.abs());
        assert!((sigma + 1.0 / c).abs() < 1e-12 * sigma);
    }

    #[test]
    fn mirror_counts_give_complementary_rates() {
        let mut rng = RandomSource::new(8).rng();
        for _ in 0..20 {
            let t = random_table(&mut rng, 12);
            if t.boundary().is_some() {
                continue;
            }
            let mirror = CountTable::from_obs(t.iter().flat_map(|(x, n, m)| {
                std::iter::repeat_n(Obs { x: n - x, n }, m as usize)
            }));
            let k = 7.0;
            let (a, _) = mle_eta(&t, k).unwrap();
            let (b, _) = mle_eta(&mirror, k).unwrap();
            assert!((a + b - 1.0).abs() < 1e-8, "{a} + {b}");
        }
    }

    #[test]
    fn mle_matches_grid_search() {
        let mut rng = RandomSource::new(21).rng();
        for _ in 0..20 {
            let t = random_table(&mut rng, 30);
            if t.boundary().is_some() {
                continue;
            }
            let k = 10f64.powf(rng.random_range(0.0..3.0));
            let (eta, _) = mle_eta(&t, k).unwrap();
            let grid = 100_000;
            let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
            for i in 1..grid {
                let e = i as f64 / grid as f64;
                let v = bb_loglik(&t, e, k).unwrap();
                if v > best {
                    best = v;
                    arg = e;
                }
            }
            assert!((eta - arg).abs() < 1e-5, "{eta} vs grid {arg}");
        }
    }

    #[test]
    fn boundary_counts_are_reported() {
        let zeros = table(&[(0, 10), (0, 4)]);
        assert!(matches!(mle_eta(&zeros, 5.0), Err(Error::BoundaryMle(Boundary::AllZero))));
        let full = table(&[(10, 10), (4, 4)]);
        assert!(matches!(mle_eta(&full, 5.0), Err(Error::BoundaryMle(Boundary::AllSaturated))));
    }

    fn simulate_bb(rng: &mut impl Rng, n_ind: usize, n: u32, eta: f64, k: f64) -> CountTable {
        let beta = Beta::new(eta * k, (1.0 - eta) * k).unwrap();
        CountTable::from_obs((0..n_ind).map(|_| {
            let p: f64 = beta.sample(rng);
            let x = Binomial::new(n as u64, p).unwrap().sample(rng) as u32;
            Obs { x, n }
        }))
    }

    #[test]
    fn rate_interval_covers_truth() {
        // the Wald interval on ~24 expected events is slightly skewed; long-run
        // coverage of the ±3σ band sits near 98.9% for this design
        let mut rng = RandomSource::new(99).rng();
        let reps = 2000;
        let mut covered = 0;
        let mut valid = 0;
        for _ in 0..reps {
            let t = simulate_bb(&mut rng, 200, 40, 0.003, 50.0);
            if let Ok((eta, sigma)) = mle_eta(&t, 50.0) {
                valid += 1;
                if (eta - 0.003).abs() <= 3.0 * sigma.sqrt() {
                    covered += 1;
                }
            }
        }
        assert!(covered as f64 >= 0.985 * valid as f64, "{covered}/{valid}");
    }

    #[test]
    fn precision_recovered_from_overdispersed_data() {
        let mut rng = RandomSource::new(1234).rng();
        let reps = 200;
        let mut hits = 0;
        for _ in 0..reps {
            let t = simulate_bb(&mut rng, 2000, 100, 0.005, 20.0);
            let k = mle_k(&t).unwrap();
            if (10.0..=40.0).contains(&k) {
                hits += 1;
            }
        }
        assert!(hits as f64 >= 0.9 * reps as f64, "{hits}/{reps}");
    }

    #[test]
    fn binomial_data_pushes_precision_to_the_upper_bound() {
        // without overdispersion the precision MLE sits on the upper edge with
        // probability about one half (the sample variance falls below the
        // binomial variance); otherwise it is large but finite
        let mut rng = RandomSource::new(55).rng();
        let reps = 400;
        let mut flagged = 0;
        for _ in 0..reps {
            let t = CountTable::from_obs((0..1000).map(|_| Obs {
                x: Binomial::new(50, 0.01).unwrap().sample(&mut rng) as u32,
                n: 50,
            }));
            let fit = fit_k(&t).unwrap();
            assert!(fit.k > 50.0, "pure binomial data fitted with K = {}", fit.k);
            if fit.k >= 1e6 {
                assert!(fit.effectively_binomial);
                flagged += 1;
            }
        }
        let frac = flagged as f64 / reps as f64;
        assert!((0.4..=0.6).contains(&frac), "{flagged}/{reps}");
    }

    #[test]
    fn precision_fit_matches_nested_grid() {
        let mut rng = RandomSource::new(7).rng();
        for _ in 0..5 {
            let t = simulate_bb(&mut rng, 300, 20, 0.02, 5.0);
            if t.boundary().is_some() {
                continue;
            }
            let fit = fit_k(&t).unwrap();
            let mut best = f64::NEG_INFINITY;
            for i in 0..=400 {
                let lk = K_MIN.ln() + (K_MAX.ln() - K_MIN.ln()) * i as f64 / 400.0;
                let k = lk.exp();
                let (eta, _) = mle_eta(&t, k).unwrap();
                best = best.max(bb_loglik(&t, eta, k).unwrap());
            }
            assert!(fit.loglik >= best - 1e-6, "fit {} < grid {}", fit.loglik, best);
        }
    }

    #[test]
    fn icc_values() {
        assert_eq!(icc(1.0), 0.5);
        assert!((icc(99.0) - 0.01).abs() < 1e-15);
        assert!(icc(1e9) < icc(1e8));
    }

    #[test]
    fn mixture_with_zero_weight_is_beta_binomial() {
        let mut rng = RandomSource::new(31).rng();
        for _ in 0..50 {
            let t = random_table(&mut rng, 50);
            let eta = rng.random_range(0.001..0.5);
            let k = 10f64.powf(rng.random_range(-2.0..6.0));
            assert_eq!(mixture_loglik(&t, 0.0, eta, k).unwrap(), bb_loglik(&t, eta, k).unwrap());
        }
    }

    #[test]
    fn mixture_zero_term_vanishes_as_weight_approaches_one() {
        let t = table(&[(0, 20)]);
        let v = mixture_loglik(&t, 1.0 - 1e-12, 0.05, 10.0).unwrap();
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn mixture_positive_term_matches_quadrature() {
        let (x, n, eta, k, w0) = (3u32, 50u32, 0.01, 10.0, 0.4);
        let got = mixture_loglik(&table(&[(x, n)]), w0, eta, k).unwrap() + ln_choose(n, x);
        let want = (0.6 * bb_pmf_quadrature(x, n, eta, k)).ln();
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }

    fn simulate_zero_inflated(rng: &mut impl Rng, w0: f64, eta: f64, k: f64) -> CountTable {
        let beta = Beta::new(eta * k, (1.0 - eta) * k).unwrap();
        CountTable::from_obs((0..2000).map(|_| {
            let x = if rng.random_bool(w0) {
                0
            } else {
                let p: f64 = beta.sample(rng);
                Binomial::new(50, p).unwrap().sample(rng) as u32
            };
            Obs { x, n: 50 }
        }))
    }

    #[test]
    fn mixture_weight_recovered() {
        // with a beta shape ηK = 0.3 the beta component already piles mass at
        // zero, so w0 is only weakly identified; the fit must still beat the
        // generating parameters and centre on the true weight
        let mut rng = RandomSource::new(404).rng();
        let reps = 200;
        let mut weights = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t = simulate_zero_inflated(&mut rng, 0.3, 0.01, 30.0);
            let fit = fit_mixture_null(&t).unwrap();
            let truth = mixture_loglik(&t, 0.3, 0.01, 30.0).unwrap();
            assert!(fit.loglik >= truth - 1e-6, "fit {} below truth {truth}", fit.loglik);
            weights.push(fit.w0);
        }
        weights.sort_by(f64::total_cmp);
        let median = weights[reps / 2];
        assert!(median > 0.15 && median < 0.45, "median w0 {median}");
    }

    #[test]
    fn mixture_weight_small_without_inflation() {
        let mut rng = RandomSource::new(405).rng();
        let reps = 40;
        let mut small = 0;
        for _ in 0..reps {
            let t = simulate_zero_inflated(&mut rng, 0.0, 0.01, 30.0);
            let (w0, _) = mle_mixture_null(&t).unwrap();
            if w0 <= 0.05 {
                small += 1;
            }
        }
        assert!(small * 2 > reps, "{small}/{reps}");
    }

    #[test]
    fn mixture_fit_matches_grid() {
        let mut rng = RandomSource::new(406).rng();
        for _ in 0..10 {
            let pairs: Vec<(u32, u32)> = (0..40)
                .map(|_| {
                    let x = if rng.random_bool(0.4) { 0 } else { rng.random_range(0..4) };
                    (x, 10)
                })
                .collect();
            let t = table(&pairs);
            if mixture_precondition(&t).is_err() {
                continue;
            }
            let fit = fit_mixture_null(&t).unwrap();
            let mut best = f64::NEG_INFINITY;
            for wi in 0..40 {
                let w0 = wi as f64 / 40.0;
                for ei in 1..60 {
                    let eta = ei as f64 / 200.0;
                    for ki in 0..=30 {
                        let k = (K_MIN.ln() + (K_MAX.ln() - K_MIN.ln()) * ki as f64 / 30.0).exp();
                        best = best.max(mixture_loglik(&t, w0, eta, k).unwrap());
                    }
                }
            }
            assert!(fit.loglik >= best - 1e-5, "fit {} < grid {best}", fit.loglik);
        }
    }

    #[test]
    fn mixture_requires_zeros_and_positives() {
        assert!(matches!(mle_mixture_null(&table(&[(1, 5), (2, 5)])), Err(Error::MixtureUndefined(_))));
        assert!(matches!(mle_mixture_null(&table(&[(0, 5), (0, 5)])), Err(Error::MixtureUndefined(_))));
        assert!(matches!(mle_mixture_null(&table(&[(0, 5), (2, 5), (2, 5)])), Err(Error::MixtureUndefined(_))));
    }

    proptest! {
        #[test]
        fn loglik_is_permutation_invariant(
            mut pairs in proptest::collection::vec((0u32..5, 5u32..30), 1..30),
            eta in 0.001f64..0.5,
            log_k in -2.0f64..7.0,
        ) {
            let k = 10f64.powf(log_k);
            let a = bb_loglik(&table(&pairs), eta, k).unwrap();
            pairs.reverse();
            let b = bb_loglik(&table(&pairs), eta, k).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn pooled_fit_ignores_group_labels(
            ctrl in proptest::collection::vec((0u32..4, 20u32..21), 2..20),
            case in proptest::collection::vec((1u32..4, 20u32..21), 2..20),
        ) {
            let mk = |v: &[(u32, u32)]| v.iter().map(|&(x, n)| Obs { x, n }).collect::<Vec<_>>();
            let g = GeneCounts::new("g", mk(&ctrl), mk(&case)).unwrap();
            let a = mle_eta(&g.pooled_table(), 15.0).unwrap();
            let b = mle_eta(&g.swapped().pooled_table(), 15.0).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
