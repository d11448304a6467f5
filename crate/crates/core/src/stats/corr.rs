//! Correlation measures: Pearson r² on binary indicators and Kendall's tau-b.

use std::cmp::Ordering;

use crate::error::{domain, Result};

/// Squared Pearson correlation of two binary vectors.
///
/// A constant vector has no defined correlation; it is reported as 0.
pub fn pearson_r2(u: &[bool], v: &[bool]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(domain(format!("pearson_r2 length mismatch: {} vs {}", u.len(), v.len())));
    }
    if u.len() < 2 {
        return Err(domain("pearson_r2 needs at least two observations"));
    }
    let a = u.iter().filter(|&&x| x).count();
    let b = v.iter().filter(|&&x| x).count();
    let both = u.iter().zip(v).filter(|(&x, &y)| x && y).count();
    Ok(binary_r2(u.len(), a, b, both))
}

/// r² from marginal counts: `n` observations, `a` and `b` ones, `both` shared ones.
pub fn binary_r2(n: usize, a: usize, b: usize, both: usize) -> f64 {
    if a == 0 || b == 0 || a == n || b == n {
        return 0.0;
    }
    let (n, a, b, c) = (n as f64, a as f64, b as f64, both as f64);
    let cov = n * c - a * b;
    ((cov * cov) / (a * (n - a) * b * (n - b))).min(1.0)
}

/// r² for binary vectors given as sorted lists of the positions holding a one.
pub fn sparse_r2(n: usize, u: &[u32], v: &[u32]) -> f64 {
    let mut both = 0;
    let (mut i, mut j) = (0, 0);
    while i < u.len() && j < v.len() {
        match u[i].cmp(&v[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                both += 1;
                i += 1;
                j += 1;
            }
        }
    }
    binary_r2(n, u.len(), v.len(), both)
}

/// Kendall's tau-b with tie correction, in `O(n log n)`.
///
/// Returns 0 when either vector is constant.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(domain(format!("kendall_tau length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(domain("kendall_tau needs at least two observations"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(domain("kendall_tau input contains NaN"));
    }
    let n = a.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));

    let pairs = |run: u64| run * (run.saturating_sub(1)) / 2;
    let mut ties_a = 0u64;
    let mut ties_ab = 0u64;
    let (mut run_a, mut run_ab) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (p, q) = (w[0], w[1]);
        if a[p] == a[q] {
            run_a += 1;
            if b[p] == b[q] {
                run_ab += 1;
            } else {
                ties_ab += pairs(run_ab);
                run_ab = 1;
            }
        } else {
            ties_a += pairs(run_a);
            ties_ab += pairs(run_ab);
            run_a = 1;
            run_ab = 1;
        }
    }
    ties_a += pairs(run_a);
    ties_ab += pairs(run_ab);

    let mut keys: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let swaps = merge_count(&mut keys);

    let mut ties_b = 0u64;
    let mut run_b = 1u64;
    for w in keys.windows(2) {
        if w[0] == w[1] {
            run_b += 1;
        } else {
            ties_b += pairs(run_b);
            run_b = 1;
        }
    }
    ties_b += pairs(run_b);

    let total = pairs(n as u64);
    let denom = ((total - ties_a) as f64 * (total - ties_b) as f64).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    let concordant_minus_discordant =
        total as f64 - ties_a as f64 - ties_b as f64 + ties_ab as f64 - 2.0 * swaps as f64;
    Ok((concordant_minus_discordant / denom).clamp(-1.0, 1.0))
}

/// Sorts in place and returns the number of strict inversions.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

/// Mid-ranks (1-based) with ties sharing their average rank.
fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of mid-ranks.
///
/// Returns 0 when either vector is constant.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(domain(format!("spearman_rho length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(domain("spearman_rho needs at least two observations"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(domain("spearman_rho input contains NaN"));
    }
    let (ra, rb) = (mid_ranks(a), mid_ranks(b));
    let mean = (a.len() as f64 + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - mean, y - mean);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}
