//! Genome-wide Bayesian FDR control for a collection of gene Bayes factors.
//!
//! The null proportion `π0` is estimated from the known null law of
//! `2 ln BF`, turned into the exponent `α` of a `(α+1) π0^α` prior on `π0`,
//! and each gene's posterior probability of association `v_i` integrates its
//! Bayes factor against that prior. Genes are then selected by the largest
//! set whose mean posterior null probability stays under the target level.

use serde::{Deserialize, Serialize};

use crate::bf::P_PRIOR_FLOOR;
use crate::error::{domain, Result};
use crate::stats::quad::GaussLegendre;
use crate::stats::{chi2_quantile, expit};

/// Default quantile level for the `π0` estimator.
pub const DEFAULT_GAMMA: f64 = 0.999;
/// Default target BFDR.
pub const DEFAULT_ALPHA0: f64 = 0.05;
/// Stand-in for `α = ∞` when every gene looks null.
pub const ALPHA_MAX: f64 = 1e6;
/// Below this many genes the `π0` estimate is noisy.
pub const MIN_GENES_PI0: usize = 100;

/// The prior on `π0` puts no visible mass beyond this many units of
/// `s = −(α+1) ln π0`.
const S_MAX: f64 = 45.0;

/// Null-proportion estimate from the share of `2 ln BF` below a null quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pi0Estimate {
    pub pi0_hat: f64,
    pub gamma: f64,
    pub q_star: f64,
    pub df: u32,
    pub m: usize,
    /// No value fell under the quantile, so `π̂0 = 0`.
    pub implausible: bool,
}

/// `π̂0 = min(1, #{2 ln BF ≤ q*_γ} / (m γ))` with `q*_γ` the `χ²(df)` `γ`-quantile.
pub fn estimate_pi0(two_log_bfs: &[f64], df: u32, gamma: f64) -> Result<Pi0Estimate> {
    if two_log_bfs.is_empty() {
        return Err(domain("π0 estimation needs at least one Bayes factor"));
    }
    if !(gamma > 0.5 && gamma < 1.0) {
        return Err(domain(format!("gamma must lie in (0.5, 1), got {gamma}")));
    }
    let m = two_log_bfs.len();
    if m < MIN_GENES_PI0 {
        log::warn!("π0 estimated from only {m} genes");
    }
    let q_star = chi2_quantile(gamma, df)?;
    let below = two_log_bfs.iter().filter(|&&b| b <= q_star).count();
    let pi0_hat = (below as f64 / (m as f64 * gamma)).min(1.0);
    Ok(Pi0Estimate { pi0_hat, gamma, q_star, df, m, implausible: below == 0 })
}

/// Prior exponent `α` with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha: f64,
    /// `π̂0 = 1` and `α` was set to [`ALPHA_MAX`].
    pub capped: bool,
}

/// `α̂ = π̂0 / (1 − π̂0)`, capped at [`ALPHA_MAX`].
pub fn alpha_from_pi0(pi0_hat: f64) -> Result<AlphaEstimate> {
    if !(0.0..=1.0).contains(&pi0_hat) {
        return Err(domain(format!("pi0 must lie in [0, 1], got {pi0_hat}")));
    }
    let alpha = pi0_hat / (1.0 - pi0_hat);
    if alpha >= ALPHA_MAX {
        return Ok(AlphaEstimate { alpha: ALPHA_MAX, capped: true });
    }
    Ok(AlphaEstimate { alpha, capped: false })
}

/// Prior exponent for informative Bayes factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaInf {
    pub alpha_inf: f64,
    /// The `(1 − π̂0inf)` lower quantile of the KS p-values.
    pub p0: f64,
    /// The quantile was 0 and was raised to the smallest positive p-value.
    pub clamped: bool,
}

/// `α̂_inf = α̂ / p0` with `p0` the lower `(1 − π̂0inf)`-quantile of the KS p-values.
pub fn alpha_inf(alpha_hat: f64, ks_pvalues: &[f64], pi0_inf_hat: f64) -> Result<AlphaInf> {
    if ks_pvalues.is_empty() {
        return Err(domain("alpha_inf needs at least one KS p-value"));
    }
    if !(0.0..=1.0).contains(&pi0_inf_hat) {
        return Err(domain(format!("pi0_inf must lie in [0, 1], got {pi0_inf_hat}")));
    }
    let mut sorted = ks_pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = 1.0 - pi0_inf_hat;
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    let mut p0 = sorted[idx];
    let clamped = p0 <= 0.0;
    if clamped {
        p0 = sorted.iter().copied().find(|&p| p > 0.0).unwrap_or(P_PRIOR_FLOOR);
    }
    Ok(AlphaInf { alpha_inf: alpha_hat / p0, p0, clamped })
}

/// `v = ∫₀¹ (1−π)BF / (π + (1−π)BF) · (α+1) π^α dπ`.
///
/// The integral runs over `s = −(α+1) ln π`, which turns the prior into
/// `e^{−s} ds`, on panels refined around the point where the integrand
/// crosses 1/2, each with 128-node Gauss–Legendre.
pub fn posterior_v(log_bf: f64, alpha: f64) -> f64 {
    if log_bf == f64::INFINITY {
        return 1.0;
    }
    if log_bf == f64::NEG_INFINITY || log_bf.is_nan() {
        return 0.0;
    }
    let a1 = alpha.max(0.0) + 1.0;
    let g = |s: f64| -> f64 {
        let t = s / a1;
        // logistic of ln(1−π) + ln BF − ln π with ln π = −t
        let ln_1m = (-(-t).exp_m1()).ln();
        expit(ln_1m + log_bf + t) * (-s).exp()
    };
    // crossing at π = BF/(1+BF): s = (α+1) ln(1 + 1/BF)
    let softplus = |x: f64| if x > 30.0 { x } else { x.exp().ln_1p() };
    let s_half = a1 * softplus(-log_bf);
    let mut cuts = vec![0.0, S_MAX];
    for f in [1.0 / 64.0, 1.0 / 8.0, 0.5, 1.0, 2.0, 8.0, 64.0] {
        cuts.push(s_half * f);
    }
    cuts.extend([1e-6, 1e-4, 1e-2, 1.0, 4.0, 12.0]);
    cuts.retain(|c| c.is_finite() && (0.0..=S_MAX).contains(c));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let gl = GaussLegendre::n128();
    let v: f64 = cuts.windows(2).map(|w| gl.integrate(w[0], w[1], g)).sum();
    v.clamp(0.0, 1.0)
}

/// Selected genes and the threshold that separates them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub threshold: f64,
    /// Indices into the input, in decreasing order of `v`.
    pub discoveries: Vec<usize>,
    /// Mean posterior null probability over the discoveries.
    pub attained_bfdr: f64,
}

/// Largest set of top genes whose mean `1 − v` is at most `alpha0`.
///
/// Genes tied in `v` are kept or dropped together. The threshold is the
/// midpoint between the last selected and the next value, or the smallest
/// selected value when every gene is selected.
pub fn select_threshold(v: &[f64], alpha0: f64) -> Result<Selection> {
    if v.is_empty() {
        return Err(domain("threshold selection needs at least one gene"));
    }
    if !(alpha0 > 0.0 && alpha0 < 1.0) {
        return Err(domain(format!("alpha0 must lie in (0, 1), got {alpha0}")));
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    // mean of 1 − v along this order is non-decreasing
    let mut total = 0.0;
    let mut k = 0;
    for (i, &idx) in order.iter().enumerate() {
        total += 1.0 - v[idx];
        if total / (i + 1) as f64 > alpha0 {
            break;
        }
        k = i + 1;
    }
    // do not split a tie at the boundary
    while k > 0 && k < v.len() && v[order[k - 1]] == v[order[k]] {
        k -= 1;
    }
    if k == 0 {
        return Ok(Selection { threshold: v[order[0]].max(0.0), discoveries: Vec::new(), attained_bfdr: 0.0 });
    }
    let threshold = if k == v.len() { v[order[k - 1]] } else { 0.5 * (v[order[k - 1]] + v[order[k]]) };
    let discoveries: Vec<usize> = order[..k].to_vec();
    let attained_bfdr = discoveries.iter().map(|&i| 1.0 - v[i]).sum::<f64>() / k as f64;
    Ok(Selection { threshold, discoveries, attained_bfdr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RandomSource;
    use proptest::prelude::*;
    use rand_distr::{ChiSquared, Distribution};

    /// Adaptive Simpson on the same `s`-space integrand, to a tight tolerance.
    fn oracle_v(log_bf: f64, alpha: f64) -> f64 {
        fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        // direct π-space integrand, split on a log grid towards π = 1
        let bf = log_bf.exp();
        let f = |p: f64| {
            if p <= 0.0 || p >= 1.0 {
                return 0.0;
            }
            (1.0 - p) * bf / (p + (1.0 - p) * bf) * (alpha + 1.0) * (alpha * p.ln()).exp()
        };
        let mut edges = vec![0.0];
        for e in (1..=14).rev() {
            edges.push(1.0 - 10f64.powi(-e));
        }
        edges.insert(1, 0.5);
        edges.push(1.0);
        edges.sort_by(f64::total_cmp);
        edges
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
                let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
                simpson(&f, a, b, fa, fm, fb, whole, 1e-13, 40)
            })
            .sum()
    }

    #[test]
    fn unit_bf_closed_form() {
        assert!((posterior_v(0.0, 1.0) - 1.0 / 3.0).abs() <= 1e-10);
        for alpha in [1.0, 3.0, 10.0, 99.0, 1e3, 1e4, 1e5] {
            let v = posterior_v(0.0, alpha);
            assert!((v - 1.0 / (alpha + 2.0)).abs() <= 1e-10, "alpha {alpha}: {v}");
        }
    }

    #[test]
    fn matches_adaptive_oracle() {
        for log_bf in [-20.0, -5.0, -1.0, 0.3, 2.0, 6.0, 12.0, 25.0] {
            for alpha in [0.0, 0.5, 2.0, 9.0, 99.0, 999.0] {
                let (v, o) = (posterior_v(log_bf, alpha), oracle_v(log_bf, alpha));
                assert!((v - o).abs() <= 1e-8, "log_bf {log_bf} alpha {alpha}: {v} vs {o}");
            }
        }
    }

    #[test]
    fn limits() {
        assert!(posterior_v(60.0, 5.0) > 1.0 - 1e-12);
        assert_eq!(posterior_v(f64::INFINITY, 5.0), 1.0);
        assert!(posterior_v(-60.0, 5.0) < 1e-12);
        assert!(posterior_v(3.0, ALPHA_MAX) < 1e-4);
        assert!(posterior_v(3.0, 1e12) < 1e-9);
    }

    #[test]
    fn monotone_on_grids() {
        let bfs: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.5).collect();
        let alphas = [0.1, 1.0, 5.0, 50.0, 500.0, 5e4];
        for &a in &alphas {
            let vs: Vec<f64> = bfs.iter().map(|&b| posterior_v(b, a)).collect();
            assert!(vs.windows(2).all(|w| w[1] > w[0]), "alpha {a}");
        }
        for &b in &bfs {
            let vs: Vec<f64> = alphas.iter().map(|&a| posterior_v(b, a)).collect();
            assert!(vs.windows(2).all(|w| w[1] < w[0]), "log_bf {b}: {vs:?}");
        }
    }

    #[test]
    fn pi0_of_pure_null_draws() {
        let mut rng = RandomSource::new(8).rng();
        for df in [1, 3] {
            let chi = ChiSquared::new(df as f64).unwrap();
            let draws: Vec<f64> = (0..10_000).map(|_| chi.sample(&mut rng)).collect();
            let est = estimate_pi0(&draws, df, DEFAULT_GAMMA).unwrap();
            assert!((0.95..=1.0).contains(&est.pi0_hat), "{}", est.pi0_hat);
        }
    }

    #[test]
    fn pi0_edges() {
        let est = estimate_pi0(&vec![100.0; 200], 1, 0.999).unwrap();
        assert_eq!(est.pi0_hat, 0.0);
        assert!(est.implausible);
        assert!(estimate_pi0(&[], 1, 0.999).is_err());
        assert!(estimate_pi0(&[1.0], 1, 0.4).is_err());
        let est = estimate_pi0(&[0.5; 150], 3, 0.999).unwrap();
        assert!((est.q_star - 16.27).abs() < 0.01);
    }

    #[test]
    fn alpha_examples() {
        assert!((alpha_from_pi0(0.9).unwrap().alpha - 9.0).abs() < 1e-12);
        assert!((alpha_from_pi0(0.5).unwrap().alpha - 1.0).abs() < 1e-12);
        assert!((alpha_from_pi0(0.999).unwrap().alpha - 999.0).abs() < 1e-9);
        assert_eq!(alpha_from_pi0(1.0).unwrap(), AlphaEstimate { alpha: ALPHA_MAX, capped: true });
        assert!(alpha_from_pi0(1.2).is_err());
    }

    #[test]
    fn alpha_inf_examples() {
        let uniform: Vec<f64> = (1..=10_000).map(|i| i as f64 / 10_000.0).collect();
        let r = alpha_inf(2.0, &uniform, 0.998).unwrap();
        assert!((r.p0 - 0.002).abs() < 2e-4);
        assert!((r.alpha_inf - 1000.0).abs() < 100.0);
        let r = alpha_inf(2.0, &[1.0; 50], 0.9).unwrap();
        assert_eq!((r.p0, r.alpha_inf), (1.0, 2.0));
        let r = alpha_inf(2.0, &uniform, 1.0).unwrap();
        assert_eq!(r.p0, 1e-4);
        let r = alpha_inf(2.0, &[0.0, 0.0, 0.3, 0.5], 0.6).unwrap();
        assert!(r.clamped && r.p0 == 0.3);
    }

    #[test]
    fn selection_examples() {
        let s = select_threshold(&[0.99, 0.90, 0.50], 0.05).unwrap();
        assert_eq!(s.discoveries, [0]);
        assert!((s.attained_bfdr - 0.01).abs() < 1e-12);
        assert!((s.threshold - 0.945).abs() < 1e-12);
        let s = select_threshold(&[1.0; 4], 0.05).unwrap();
        assert_eq!(s.discoveries.len(), 4);
        assert_eq!(s.attained_bfdr, 0.0);
        let s = select_threshold(&[0.0; 4], 0.05).unwrap();
        assert!(s.discoveries.is_empty());
        assert_eq!(s.attained_bfdr, 0.0);
    }

    #[test]
    fn ties_at_the_boundary_are_not_split() {
        let s = select_threshold(&[0.99, 0.92, 0.92], 0.05).unwrap();
        assert_eq!(s.discoveries, [0]);
    }

    proptest! {
        #[test]
        fn selection_is_upward_closed_and_controlled(v in prop::collection::vec(0.0f64..=1.0, 1..60), a0 in 0.01f64..0.5) {
            let s = select_threshold(&v, a0).unwrap();
            if !s.discoveries.is_empty() {
                prop_assert!(s.attained_bfdr <= a0 + 1e-12);
            }
            let lowest = s.discoveries.iter().map(|&i| v[i]).fold(f64::INFINITY, f64::min);
            for i in 0..v.len() {
                if !s.discoveries.contains(&i) {
                    prop_assert!(v[i] < lowest);
                }
            }
        }

        #[test]
        fn posterior_is_a_probability(log_bf in -50.0f64..50.0, alpha in 0.0f64..1e6) {
            let v = posterior_v(log_bf, alpha);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
