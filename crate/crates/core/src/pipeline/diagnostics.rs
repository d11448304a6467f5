//! Model-fit diagnostics on a collection of genes: model rate against the
//! raw mean rate, fitted ICC against within-gene site correlation, rank
//! correlation between the two parts of the informative Bayes factor, and the
//! spread of the null hyperprior precision.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bf::{bf_beta, fit_diagnostic, Flag};
use crate::counts::{fit_k, icc, GeneCounts};
use crate::error::{Error, Result};
use crate::ks_prior::{
    gene_prior, passes_maf_filter, site_pvalues, EmpiricalNull, NullCdf, VariantBlock, DEFAULT_MAF_FLOOR,
    DEFAULT_MIN_NULL_VALUES, DEFAULT_R2_THRESHOLD,
};
use crate::sim::{default_size_bins, gene_name, simulate_gene, SimGene, SimScenario};
use crate::stats::corr::sparse_r2;
use crate::stats::{kendall_tau, spearman_rho, RandomSource};

/// Gene-size strata `[low, high)` for the component correlation; `None` is open.
pub const SIZE_STRATA: [(u32, Option<u32>); 4] = [(20, Some(30)), (30, Some(60)), (60, Some(100)), (100, None)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub r2_threshold: f64,
    pub maf_floor: f64,
    pub min_null_values: usize,
    pub uniform_null: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> DiagnosticsConfig {
        DiagnosticsConfig {
            r2_threshold: DEFAULT_R2_THRESHOLD,
            maf_floor: DEFAULT_MAF_FLOOR,
            min_null_values: DEFAULT_MIN_NULL_VALUES,
            uniform_null: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaRatePoint {
    pub gene_id: String,
    pub mean_rate: f64,
    pub eta_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccPoint {
    pub gene_id: String,
    pub icc: f64,
    /// Mean r² over pairs of sites with at least one carrier each.
    pub mean_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumTau {
    pub low: u32,
    pub high: Option<u32>,
    pub n: usize,
    /// Absent below two genes.
    pub tau: Option<f64>,
}

/// Five-number summary plus the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (i, frac) = (pos.floor() as usize, pos.fract());
            if i + 1 < v.len() {
                v[i] + frac * (v[i + 1] - v[i])
            } else {
                v[i]
            }
        };
        Some(Summary {
            n: v.len(),
            min: v[0],
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumK {
    pub low: u32,
    pub high: Option<u32>,
    pub log_kstar: Option<Summary>,
    pub log_kstar_eta: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub eta_rate: Vec<EtaRatePoint>,
    /// Least-squares slope of `η̂` on the mean rate.
    pub eta_rate_slope: Option<f64>,
    pub icc_r2: Vec<IccPoint>,
    pub icc_r2_spearman: Option<f64>,
    pub tau: Vec<StratumTau>,
    pub kstar: Vec<StratumK>,
}

fn stratum(n_sites: u32) -> Option<usize> {
    SIZE_STRATA.iter().position(|&(lo, hi)| n_sites >= lo && hi.is_none_or(|h| n_sites < h))
}

fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Mean pairwise r² across sites carried by at least one individual.
pub fn mean_pairwise_r2(block: &VariantBlock) -> Option<f64> {
    let n = block.n_controls + block.n_cases;
    let off = block.n_controls as u32;
    let carriers: Vec<Vec<u32>> = block
        .sites
        .iter()
        .map(|s| s.controls.iter().copied().chain(s.cases.iter().map(|i| i + off)).collect::<Vec<u32>>())
        .filter(|c| !c.is_empty())
        .collect();
    if carriers.len() < 2 {
        return None;
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..carriers.len() {
        for j in i + 1..carriers.len() {
            sum += sparse_r2(n, &carriers[i], &carriers[j]);
            pairs += 1;
        }
    }
    Some(sum / pairs as f64)
}

fn filtered(block: &VariantBlock, maf_floor: f64) -> VariantBlock {
    VariantBlock {
        sites: block.sites.iter().filter(|s| passes_maf_filter(s.maf, maf_floor)).cloned().collect(),
        ..block.clone()
    }
}

struct PerGene {
    eta_rate: Option<(f64, f64)>,
    icc_r2: Option<(f64, f64)>,
    /// First Bayes-factor term and `ln K*`, `ln K*η*` of the null hyperprior.
    bf: Option<(f64, f64, f64)>,
}

/// Builds the report; `blocks` must be aligned with `genes`.
pub fn diagnostics(genes: &[GeneCounts], blocks: &[VariantBlock], config: &DiagnosticsConfig) -> Result<DiagnosticsReport> {
    if genes.len() != blocks.len() {
        return Err(Error::Validation(format!("{} variant blocks for {} genes", blocks.len(), genes.len())));
    }
    let ks_blocks: Vec<VariantBlock> = blocks.par_iter().map(|b| filtered(b, config.maf_floor)).collect();

    let per_gene: Vec<PerGene> = genes
        .par_iter()
        .zip(blocks)
        .map(|(g, b)| {
            let eta_rate = fit_diagnostic(g).ok();
            let icc_r2 = fit_k(&g.pooled_table()).ok().zip(mean_pairwise_r2(b)).map(|(k, r2)| (icc(k.k), r2));
            let bf = bf_beta(g, 1.0)
                .ok()
                .filter(|r| r.flags.iter().all(|f| *f == Flag::EffectivelyBinomial)).map(|r| {
                let first = (r.eta1_hat - r.eta2_hat).powi(2) / (r.sigma1_hat + r.sigma2_hat);
                (first, r.log_kstar, r.log_kstar_eta)
            });
            PerGene { eta_rate, icc_r2, bf }
        })
        .collect();

    let null = if config.uniform_null {
        NullCdf::Uniform
    } else {
        let pool: Vec<f64> = ks_blocks
            .par_iter()
            .zip(genes)
            .filter(|(_, g)| stratum(g.n_sites()).is_some())
            .map(|(b, _)| site_pvalues(b, config.r2_threshold).unwrap_or_default())
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect();
        NullCdf::Empirical(EmpiricalNull::new(pool, config.min_null_values)?)
    };
    let priors: Vec<Option<f64>> = ks_blocks
        .par_iter()
        .map(|b| gene_prior(b, &null, config.r2_threshold).ok().filter(|p| !p.fallback).map(|p| p.p_prior))
        .collect();

    let mut eta_rate = Vec::new();
    let mut icc_r2 = Vec::new();
    let mut tau_pairs: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); SIZE_STRATA.len()];
    let mut kstar: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); SIZE_STRATA.len()];
    for ((g, pg), prior) in genes.iter().zip(&per_gene).zip(&priors) {
        if let Some((eta_hat, mean_rate)) = pg.eta_rate {
            eta_rate.push(EtaRatePoint { gene_id: g.gene_id.clone(), mean_rate, eta_hat });
        }
        if let Some((icc, mean_r2)) = pg.icc_r2 {
            icc_r2.push(IccPoint { gene_id: g.gene_id.clone(), icc, mean_r2 });
        }
        let Some(s) = stratum(g.n_sites()) else { continue };
        if let Some((first, lk, lke)) = pg.bf {
            kstar[s].0.push(lk);
            kstar[s].1.push(lke);
            if let Some(p) = prior {
                tau_pairs[s].0.push(first);
                tau_pairs[s].1.push(-2.0 * p.ln());
            }
        }
    }

    let xs: Vec<f64> = eta_rate.iter().map(|p| p.mean_rate).collect();
    let ys: Vec<f64> = eta_rate.iter().map(|p| p.eta_hat).collect();
    let eta_rate_slope = ols_slope(&xs, &ys);
    let icc_r2_spearman = if icc_r2.len() >= 2 {
        let a: Vec<f64> = icc_r2.iter().map(|p| p.icc).collect();
        let b: Vec<f64> = icc_r2.iter().map(|p| p.mean_r2).collect();
        Some(spearman_rho(&a, &b)?)
    } else {
        None
    };
    let tau = SIZE_STRATA
        .iter()
        .zip(&tau_pairs)
        .map(|(&(low, high), (a, b))| {
            let tau = if a.len() >= 2 { Some(kendall_tau(a, b)?) } else { None };
            Ok(StratumTau { low, high, n: a.len(), tau })
        })
        .collect::<Result<Vec<_>>>()?;
    let kstar = SIZE_STRATA
        .iter()
        .zip(&kstar)
        .map(|(&(low, high), (a, b))| StratumK { low, high, log_kstar: Summary::of(a), log_kstar_eta: Summary::of(b) })
        .collect();
    Ok(DiagnosticsReport { eta_rate, eta_rate_slope, icc_r2, icc_r2_spearman, tau, kstar })
}

/// Null genes with sizes from the default size mixture and a per-gene
/// precision drawn log-uniformly on `k_range`.
pub fn simulate_diagnostic_genes(
    n_genes: usize,
    k_range: (f64, f64),
    scenario: &SimScenario,
    source: &RandomSource,
) -> Result<Vec<SimGene>> {
    let (k_lo, k_hi) = k_range;
    if !(k_lo > 0.0 && k_hi >= k_lo && k_hi.is_finite()) {
        return Err(Error::Config(format!("k range ({k_lo}, {k_hi}) must be positive and ordered")));
    }
    scenario.validate()?;
    let bins = default_size_bins();
    let total: f64 = bins.iter().map(|b| b.weight).sum();
    let mut layout = source.split_named("layout").rng();
    let plans: Vec<(u32, f64)> = (0..n_genes)
        .map(|_| {
            let mut u = layout.random::<f64>() * total;
            let bin = bins
                .iter()
                .find(|b| {
                    u -= b.weight;
                    u < 0.0
                })
                .unwrap_or(&bins[bins.len() - 1]);
            let size = layout.random_range(bin.low..bin.high);
            let k = (k_lo.ln() + layout.random::<f64>() * (k_hi / k_lo).ln()).exp();
            (size, k)
        })
        .collect();
    let genes_source = source.split_named("genes");
    plans
        .par_iter()
        .enumerate()
        .map(|(i, &(n_sites, k))| {
            let sc = SimScenario { n_sites, k_overdispersion: k, causal_fraction: 0.0, ..*scenario };
            simulate_gene(&sc, &gene_name(i), &genes_source.split(i as u64))
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or("NA".to_string(), |x| format!("{x:?}"))
}

/// Writes `eta_rate.tsv`, `icc_r2.tsv`, `tau.tsv` and `summary.json` into `dir`.
pub fn write_report(dir: &Path, report: &DiagnosticsReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("eta_rate.tsv"))?);
    writeln!(w, "gene_id\tmean_rate\teta_hat")?;
    for p in &report.eta_rate {
        writeln!(w, "{}\t{:?}\t{:?}", p.gene_id, p.mean_rate, p.eta_hat)?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("icc_r2.tsv"))?);
    writeln!(w, "gene_id\ticc\tmean_r2")?;
    for p in &report.icc_r2 {
        writeln!(w, "{}\t{:?}\t{:?}", p.gene_id, p.icc, p.mean_r2)?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("tau.tsv"))?);
    writeln!(w, "low\thigh\tn\ttau")?;
    for t in &report.tau {
        writeln!(w, "{}\t{}\t{}\t{}", t.low, t.high.map_or("inf".to_string(), |h| h.to_string()), t.n, opt(t.tau))?;
    }
    w.flush()?;
    let summary = serde_json::json!({
        "n_eta_rate": report.eta_rate.len(),
        "eta_rate_slope": report.eta_rate_slope,
        "n_icc_r2": report.icc_r2.len(),
        "icc_r2_spearman": report.icc_r2_spearman,
        "tau": report.tau,
        "kstar": report.kstar,
    });
    let mut w = BufWriter::new(File::create(dir.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
