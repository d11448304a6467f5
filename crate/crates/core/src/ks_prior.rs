//! Informative prior probability of association from single-variant tests.
//!
//! Each rare site gets a two-sided normal test on MAF-standardized carrier
//! counts. Highly correlated sites are pruned, and the gene's site p-values
//! are compared against the genome-wide distribution of site p-values with a
//! one-sided KS test. The KS p-value is the prior probability `p`.

use serde::{Deserialize, Serialize};

use crate::bf::P_PRIOR_FLOOR;
use crate::error::{domain, Error, Result};
use crate::stats::corr::sparse_r2;
use crate::stats::{ks_one_sided_sf, ks_statistic, normal_sf};

/// Upper MAF edge of a rare variant.
pub const RARE_MAF: f64 = 0.01;
/// Default lower MAF edge for sites used in single-variant tests.
pub const DEFAULT_MAF_FLOOR: f64 = 0.001;
/// Sites whose standardized counts sum below this get no p-value.
pub const MIN_SITE_COUNT: f64 = 5.0;
/// Genes with fewer valid sites fall back to `p = 1`.
pub const MIN_VALID_SITES: usize = 5;
/// Default pruning threshold on pairwise r².
pub const DEFAULT_R2_THRESHOLD: f64 = 0.99;
/// Default minimum number of pooled p-values for an empirical null.
pub const DEFAULT_MIN_NULL_VALUES: usize = 1000;

/// One rare site with the indices of carriers in each group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub site_id: String,
    pub maf: f64,
    /// Sorted indices of control carriers.
    pub controls: Vec<u32>,
    /// Sorted indices of case carriers.
    pub cases: Vec<u32>,
}

impl Site {
    /// Builds a site from dense carrier indicators.
    pub fn from_indicators(site_id: impl Into<String>, maf: f64, controls: &[bool], cases: &[bool]) -> Site {
        let idx = |v: &[bool]| v.iter().enumerate().filter(|(_, &c)| c).map(|(i, _)| i as u32).collect();
        Site { site_id: site_id.into(), maf, controls: idx(controls), cases: idx(cases) }
    }
}

/// Site-level carrier data for one gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantBlock {
    pub gene_id: String,
    pub n_controls: usize,
    pub n_cases: usize,
    pub sites: Vec<Site>,
}

impl VariantBlock {
    pub fn validate(&self) -> Result<()> {
        if self.n_controls == 0 || self.n_cases == 0 {
            return Err(Error::Validation(format!("gene {}: empty group in variant block", self.gene_id)));
        }
        for s in &self.sites {
            let sorted = |v: &[u32], n: usize| v.windows(2).all(|w| w[0] < w[1]) && v.last().is_none_or(|&i| (i as usize) < n);
            if !sorted(&s.controls, self.n_controls) || !sorted(&s.cases, self.n_cases) {
                return Err(Error::Validation(format!(
                    "gene {} site {}: carrier indices must be sorted, distinct and in range",
                    self.gene_id, s.site_id
                )));
            }
            if !(s.maf > 0.0 && s.maf <= RARE_MAF) {
                return Err(Error::Validation(format!(
                    "gene {} site {}: maf {} outside (0, {RARE_MAF}]",
                    self.gene_id, s.site_id, s.maf
                )));
            }
        }
        Ok(())
    }

    /// Carrier positions of a site in the pooled sample (controls first).
    fn pooled_carriers(&self, site: &Site) -> Vec<u32> {
        let off = self.n_controls as u32;
        site.controls.iter().copied().chain(site.cases.iter().map(|i| i + off)).collect()
    }
}

/// Whether a site's MAF lies in `(maf_floor, RARE_MAF]`.
pub fn passes_maf_filter(maf: f64, maf_floor: f64) -> bool {
    maf > maf_floor && maf <= RARE_MAF
}

/// Standardized carrier counts `(c·y₁, c·y₂, c)` with `c = ⌊0.01 / maf⌋`.
pub fn standardize(site: &Site) -> Result<(f64, f64, u32)> {
    if !(site.maf > 0.0 && site.maf <= RARE_MAF) {
        return Err(domain(format!("maf must lie in (0, {RARE_MAF}], got {}", site.maf)));
    }
    // the small offset keeps exact ratios such as 0.01/0.002 from rounding down
    let c = (RARE_MAF / site.maf + 1e-9).floor() as u32;
    let cf = c as f64;
    Ok((site.controls.len() as f64 * cf, site.cases.len() as f64 * cf, c))
}

/// Two-sided p-value of the normal test comparing standardized counts, or
/// `None` when the counts are too small.
pub fn single_variant_p(y1: f64, y2: f64, n1: usize, n2: usize) -> Result<Option<f64>> {
    if n1 == 0 || n2 == 0 {
        return Err(domain("single-variant test needs both groups non-empty"));
    }
    if !(y1 >= 0.0 && y2 >= 0.0) {
        return Err(domain(format!("counts must be non-negative, got {y1} and {y2}")));
    }
    if y1 + y2 < MIN_SITE_COUNT {
        return Ok(None);
    }
    let r = n2 as f64 / n1 as f64;
    let z = (r * y1 - y2) / (r * r * y1 + y2).sqrt();
    Ok(Some((2.0 * normal_sf(z.abs())).min(1.0)))
}

/// Greedy in-order pruning: a site is dropped when its pooled carrier vector
/// has r² above `r2_threshold` with any site kept before it.
pub fn prune(block: &VariantBlock, r2_threshold: f64) -> VariantBlock {
    let n = block.n_controls + block.n_cases;
    let mut kept: Vec<(usize, Vec<u32>)> = Vec::new();
    for (i, site) in block.sites.iter().enumerate() {
        let carriers = block.pooled_carriers(site);
        if kept.iter().all(|(_, k)| sparse_r2(n, k, &carriers) <= r2_threshold) {
            kept.push((i, carriers));
        }
    }
    VariantBlock {
        gene_id: block.gene_id.clone(),
        n_controls: block.n_controls,
        n_cases: block.n_cases,
        sites: kept.into_iter().map(|(i, _)| block.sites[i].clone()).collect(),
    }
}

/// Single-variant p-values of the pruned sites that have enough counts.
pub fn site_pvalues(block: &VariantBlock, r2_threshold: f64) -> Result<Vec<f64>> {
    let pruned = prune(block, r2_threshold);
    let mut out = Vec::with_capacity(pruned.sites.len());
    for site in &pruned.sites {
        let (y1, y2, _) = standardize(site)?;
        if let Some(p) = single_variant_p(y1, y2, block.n_controls, block.n_cases)? {
            out.push(p);
        }
    }
    Ok(out)
}

/// Right-continuous empirical CDF of pooled site p-values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalNull {
    sorted: Vec<f64>,
}

impl EmpiricalNull {
    pub fn new(mut values: Vec<f64>, min_values: usize) -> Result<EmpiricalNull> {
        if values.len() < min_values {
            return Err(Error::Config(format!(
                "empirical null needs at least {min_values} site p-values, got {}; \
                 use the uniform null option for small analyses",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(domain(format!("null p-value {bad} outside [0, 1]")));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalNull { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of pooled values `≤ t`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= t) as f64 / self.sorted.len() as f64
    }
}

/// Reference law for gene-level KS tests.
#[derive(Debug, Clone, PartialEq)]
pub enum NullCdf {
    Uniform,
    Empirical(EmpiricalNull),
}

impl NullCdf {
    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            NullCdf::Uniform => t.clamp(0.0, 1.0),
            NullCdf::Empirical(e) => e.cdf(t),
        }
    }
}

/// Prior probability of association for one gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsPriorResult {
    pub gene_id: String,
    pub p_prior: f64,
    pub n_valid_sites: usize,
    /// Fewer than [`MIN_VALID_SITES`] site p-values; `p = 1`.
    pub fallback: bool,
    /// One-sided KS statistic, absent on fallback.
    pub d_plus: Option<f64>,
}

/// KS prior from already computed site p-values.
pub fn prior_from_pvalues(gene_id: &str, pvalues: &[f64], null: &NullCdf) -> Result<KsPriorResult> {
    if pvalues.len() < MIN_VALID_SITES {
        return Ok(KsPriorResult {
            gene_id: gene_id.to_string(),
            p_prior: 1.0,
            n_valid_sites: pvalues.len(),
            fallback: true,
            d_plus: None,
        });
    }
    let d = ks_statistic(pvalues, |t| null.cdf(t))?;
    let p = ks_one_sided_sf(d, pvalues.len()).clamp(P_PRIOR_FLOOR, 1.0);
    Ok(KsPriorResult {
        gene_id: gene_id.to_string(),
        p_prior: p,
        n_valid_sites: pvalues.len(),
        fallback: false,
        d_plus: Some(d),
    })
}

/// Prune, test each site, and compare the gene's p-values with the null.
pub fn gene_prior(block: &VariantBlock, null: &NullCdf, r2_threshold: f64) -> Result<KsPriorResult> {
    let pvalues = site_pvalues(block, r2_threshold)?;
    prior_from_pvalues(&block.gene_id, &pvalues, null)
}
