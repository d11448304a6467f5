//! One-sided, one-sample Kolmogorov–Smirnov test for an excess of small values.

use super::special::ln_gamma_unchecked;
use crate::error::{domain, Result};

/// Sample sizes up to this use the exact law of `D⁺`; larger ones the asymptotic tail.
pub const EXACT_MAX_N: usize = 30;

/// `D⁺ = sup_t (F̂(t) − F(t))` with a right-continuous empirical CDF.
///
/// Large values mean the sample sits below the reference law.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], null_cdf: F) -> Result<f64> {
    if sample.is_empty() {
        return Err(domain("KS test needs a non-empty sample"));
    }
    if let Some(bad) = sample.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(domain(format!("KS sample value {bad} outside [0, 1]")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &t)| (i + 1) as f64 / n - null_cdf(t))
        .fold(0.0, f64::max);
    Ok(d.clamp(0.0, 1.0))
}

/// p-value of the one-sided KS test of `sample` against `null_cdf`.
pub fn ks_one_sided<F: Fn(f64) -> f64>(sample: &[f64], null_cdf: F) -> Result<f64> {
    let d = ks_statistic(sample, null_cdf)?;
    Ok(ks_one_sided_sf(d, sample.len()))
}

/// `P(D⁺ ≥ d)` for a sample of size `n` from a continuous law.
pub fn ks_one_sided_sf(d: f64, n: usize) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    if d >= 1.0 {
        // only attainable when every value sits at the CDF floor
        return 0.0;
    }
    if n <= EXACT_MAX_N {
        birnbaum_tingey(d, n)
    } else {
        (-2.0 * n as f64 * d * d).exp()
    }
}

/// `P(D⁺ ≥ d) = d Σ_{j=0}^{⌊n(1−d)⌋} C(n,j) (1−d−j/n)^{n−j} (d+j/n)^{j−1}`.
fn birnbaum_tingey(d: f64, n: usize) -> f64 {
    let nf = n as f64;
    let jmax = (nf * (1.0 - d) + 1e-12).floor() as usize;
    let ln_n_fact = ln_gamma_unchecked(nf + 1.0);
    let mut total = 0.0;
    for j in 0..=jmax.min(n) {
        let jf = j as f64;
        let low = 1.0 - d - jf / nf;
        if low <= 0.0 && j < n {
            continue;
        }
        let ln_choose = ln_n_fact - ln_gamma_unchecked(jf + 1.0) - ln_gamma_unchecked(nf - jf + 1.0);
        let ln_low = if j == n { 0.0 } else { (nf - jf) * low.ln() };
        let ln_high = (jf - 1.0) * (d + jf / nf).ln();
        total += (ln_choose + ln_low + ln_high).exp();
    }
    (d * total).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::rng::RandomSource;
    use proptest::prelude::*;
    use rand::Rng;

    fn uniform(t: f64) -> f64 {
        t.clamp(0.0, 1.0)
    }

    #[test]
    fn null_quantiles_give_large_p() {
        let n = 20;
        let sample: Vec<f64> = (1..=n).map(|i| i as f64 / (n as f64 + 1.0)).collect();
        assert!(ks_one_sided(&sample, uniform).unwrap() >= 0.5);
    }

    #[test]
    fn concentrated_small_values_give_tiny_p() {
        let sample = vec![0.001; 50];
        let d = ks_statistic(&sample, uniform).unwrap();
        assert!((d - 0.999).abs() < 1e-12);
        let p = ks_one_sided(&sample, uniform).unwrap();
        assert!((p - (-2.0 * 50.0 * 0.999f64 * 0.999).exp()).abs() < 1e-30);
        assert!(p < 1e-10);
    }

    #[test]
    fn single_large_value_gives_one() {
        assert_eq!(ks_one_sided(&[1.0], uniform).unwrap(), 1.0);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert!(ks_one_sided(&[], uniform).is_err());
        assert!(ks_one_sided(&[1.5], uniform).is_err());
    }

    #[test]
    fn exact_law_matches_small_n_closed_forms() {
        // n = 1: P(D⁺ ≥ d) = P(U ≤ 1 − d) = 1 − d
        for &d in &[0.1, 0.5, 0.9] {
            assert!((ks_one_sided_sf(d, 1) - (1.0 - d)).abs() < 1e-14);
        }
        // n = 2, d ≥ 1/2: P(U_(2) ≤ 1 − d) = (1 − d)²
        for &d in &[0.5, 0.7, 0.95] {
            assert!((ks_one_sided_sf(d, 2) - (1.0 - d).powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_law_matches_simulation() {
        let src = RandomSource::new(11);
        let mut rng = src.rng();
        let n = 12;
        let d0 = 0.25;
        let reps = 40_000;
        let mut hits = 0;
        let mut buf = vec![0.0; n];
        for _ in 0..reps {
            for v in buf.iter_mut() {
                *v = rng.random::<f64>();
            }
            if ks_statistic(&buf, uniform).unwrap() >= d0 {
                hits += 1;
            }
        }
        let freq = hits as f64 / reps as f64;
        let p = ks_one_sided_sf(d0, n);
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * se, "freq={freq} exact={p}");
    }

    #[test]
    fn null_p_values_are_not_anticonservative() {
        let src = RandomSource::new(2024);
        let mut rng = src.rng();
        let reps = 5_000;
        let mut pvals = Vec::with_capacity(reps);
        for r in 0..reps {
            let n = 5 + r % 26;
            let sample: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            pvals.push(ks_one_sided(&sample, uniform).unwrap());
        }
        for &t in &[0.01, 0.05, 0.1, 0.25, 0.5] {
            let frac = pvals.iter().filter(|&&p| p <= t).count() as f64 / reps as f64;
            let se = (t * (1.0 - t) / reps as f64).sqrt();
            // one-sided 1% check against excess small p-values
            assert!(frac <= t + 2.33 * se, "t={t}: frac={frac}");
        }
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut v in proptest::collection::vec(0.0f64..=1.0, 1..40), seed in any::<u64>()) {
            let p1 = ks_one_sided(&v, uniform).unwrap();
            let mut rng = RandomSource::new(seed).rng();
            for i in (1..v.len()).rev() {
                let j = rng.random_range(0..=i);
                v.swap(i, j);
            }
            let p2 = ks_one_sided(&v, uniform).unwrap();
            prop_assert_eq!(p1, p2);
        }

        #[test]
        fn exact_sf_is_monotone_in_d(d in 0.001f64..0.999, n in 1usize..=30) {
            let a = ks_one_sided_sf(d, n);
            let b = ks_one_sided_sf((d + 0.01).min(1.0), n);
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b <= a + 1e-12);
        }
    }
}
