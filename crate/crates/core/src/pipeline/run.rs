//! Two-pass genome-wide analysis.
//!
//! Pass 1 pools single-variant p-values of every tested gene into the
//! empirical null of the KS prior. Pass 2 computes each gene's Bayes factors,
//! after which `π0`, `α` and the posterior probabilities `v_i` are derived
//! from the whole collection and the BFDR threshold is applied.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bf::{bayes_factor, bf_beta, BfMode, BfResult, Flag};
use crate::bfdr::{alpha_from_pi0, alpha_inf, estimate_pi0, posterior_v, select_threshold, Pi0Estimate};
use crate::counts::GeneCounts;
use crate::error::{Error, Result};
use crate::ks_prior::{gene_prior, site_pvalues, EmpiricalNull, NullCdf, VariantBlock};
use crate::pipeline::config::RunConfig;
use crate::pipeline::io::{read_counts, read_variants};

pub const RESULTS_HEADER: [&str; 14] = [
    "gene_id",
    "n_sites",
    "two_log_bf",
    "df",
    "p_value",
    "p_prior",
    "eta_hat",
    "eta1_hat",
    "eta2_hat",
    "k_tilde",
    "w0_tilde",
    "v_i",
    "discovered",
    "flags",
];

/// Flags that make a Bayes factor unfit for `π0` estimation.
const PI0_EXCLUDED: [Flag; 4] = [Flag::BoundaryMle, Flag::GroupBoundary, Flag::Filtered, Flag::Failed];

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneRow {
    pub gene_id: String,
    pub n_sites: u32,
    /// Bayes factor with the prior actually used for this gene.
    pub bf: Option<BfResult>,
    /// Bayes factor with `p = 1`; same as `bf` in non-informative runs.
    pub bf_noninformative: Option<BfResult>,
    pub p_prior: Option<f64>,
    pub v_i: Option<f64>,
    pub discovered: bool,
    pub flags: BTreeSet<Flag>,
}

impl GeneRow {
    fn bare(gene: &GeneCounts, flag: Flag) -> GeneRow {
        GeneRow {
            gene_id: gene.gene_id.clone(),
            n_sites: gene.n_sites(),
            bf: None,
            bf_noninformative: None,
            p_prior: None,
            v_i: None,
            discovered: false,
            flags: BTreeSet::from([flag]),
        }
    }

    pub fn two_log_bf(&self) -> Option<f64> {
        self.bf.as_ref().map(|b| b.two_log_bf)
    }

    fn pi0_eligible(&self) -> bool {
        self.bf.is_some() && !PI0_EXCLUDED.iter().any(|f| self.flags.contains(f))
    }
}

/// Genome-wide quantities of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub df: u32,
    pub n_genes: usize,
    pub n_analyzed: usize,
    pub n_filtered: usize,
    pub n_failed: usize,
    /// Site p-values in the empirical null; absent for a uniform null.
    pub n_null_values: Option<usize>,
    pub dropped_sites: usize,
    pub pi0: Option<Pi0Estimate>,
    pub pi0_hat: Option<f64>,
    pub alpha_hat: Option<f64>,
    pub alpha_capped: bool,
    pub pi0_inf: Option<Pi0Estimate>,
    pub alpha_inf_hat: Option<f64>,
    pub p0: Option<f64>,
    pub p0_clamped: bool,
    pub threshold: Option<f64>,
    pub attained_bfdr: Option<f64>,
    pub n_discoveries: usize,
    pub flag_counts: BTreeMap<String, usize>,
}

/// Rows in output order plus the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub rows: Vec<GeneRow>,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn discoveries(&self) -> impl Iterator<Item = &GeneRow> {
        self.rows.iter().filter(|r| r.discovered)
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Reads the configured inputs, analyses them and writes the results file
/// and manifest.
pub fn run_genome(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let records = read_counts(&config.counts_path)?;
    let genes: Vec<GeneCounts> = records.iter().map(|r| r.counts.clone()).collect();
    let (blocks, dropped) = match (&config.variants_path, config.informative) {
        (Some(path), true) => {
            let v = read_variants(path, &records, config.maf_floor)?;
            (Some(v.blocks), v.dropped_sites)
        }
        _ => (None, 0),
    };
    let mut outcome = analyze(config, &genes, blocks.as_deref())?;
    outcome.manifest.dropped_sites = dropped;
    fs::create_dir_all(&config.output_dir)?;
    write_results(&config.results_path(), &outcome.rows)?;
    let mut w = BufWriter::new(File::create(config.manifest_path())?);
    serde_json::to_writer_pretty(&mut w, &outcome.manifest)?;
    writeln!(w)?;
    w.flush()?;
    Ok(outcome)
}

/// Analyses in-memory genes; `blocks` must be present and aligned with
/// `genes` in informative mode.
pub fn analyze(config: &RunConfig, genes: &[GeneCounts], blocks: Option<&[VariantBlock]>) -> Result<RunOutcome> {
    let mut check = config.clone();
    if check.informative && check.variants_path.is_none() {
        // in-memory callers pass the blocks directly
        check.variants_path = Some("<memory>".into());
    }
    check.validate()?;
    let blocks = match (config.informative, blocks) {
        (false, _) => None,
        (true, Some(b)) if b.len() == genes.len() => Some(b),
        (true, Some(b)) => {
            return Err(Error::Validation(format!("{} variant blocks for {} genes", b.len(), genes.len())));
        }
        (true, None) => return Err(Error::Config("informative mode needs site-level data".into())),
    };
    if let Some(b) = blocks {
        if let Some((g, blk)) = genes.iter().zip(b).find(|(g, blk)| g.gene_id != blk.gene_id) {
            return Err(Error::Validation(format!(
                "variant block {} is not aligned with gene {}",
                blk.gene_id, g.gene_id
            )));
        }
    }
    with_pool(config.threads, || analyze_inner(config, genes, blocks))?
}

fn analyze_inner(config: &RunConfig, genes: &[GeneCounts], blocks: Option<&[VariantBlock]>) -> Result<RunOutcome> {
    let tested: Vec<bool> = genes.iter().map(|g| g.n_sites() >= config.min_sites_per_gene).collect();

    // pass 1: the reference law of single-variant p-values
    let null = match blocks {
        Some(_) if config.uniform_null => Some(NullCdf::Uniform),
        Some(blocks) => {
            let per_gene: Vec<Vec<f64>> = blocks
                .par_iter()
                .zip(&tested)
                .map(|(b, &t)| {
                    if !t {
                        return Vec::new();
                    }
                    site_pvalues(b, config.r2_threshold).unwrap_or_else(|e| {
                        log::warn!("gene {}: site p-values skipped in the null pool: {e}", b.gene_id);
                        Vec::new()
                    })
                })
                .collect();
            let pool: Vec<f64> = per_gene.into_iter().flatten().collect();
            Some(NullCdf::Empirical(EmpiricalNull::new(pool, config.min_null_values)?))
        }
        None => None,
    };

    // pass 2: per-gene Bayes factors
    let mut rows: Vec<GeneRow> = genes
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            if !tested[i] {
                return GeneRow::bare(g, Flag::Filtered);
            }
            let block = blocks.map(|b| &b[i]);
            gene_row(config, g, block, null.as_ref())
        })
        .collect();

    let base_df = RunConfig { informative: false, ..config.clone() }.df();
    let noninf: Vec<f64> = rows
        .iter()
        .filter(|r| r.pi0_eligible())
        .filter_map(|r| r.bf_noninformative.as_ref())
        .filter(|b| b.df == base_df)
        .map(|b| b.two_log_bf)
        .collect();

    let mut manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        df: config.df(),
        n_genes: genes.len(),
        n_analyzed: rows.iter().filter(|r| r.bf.is_some()).count(),
        n_filtered: rows.iter().filter(|r| r.flags.contains(&Flag::Filtered)).count(),
        n_failed: rows.iter().filter(|r| r.flags.contains(&Flag::Failed)).count(),
        n_null_values: match &null {
            Some(NullCdf::Empirical(e)) => Some(e.len()),
            _ => None,
        },
        dropped_sites: 0,
        pi0: None,
        pi0_hat: None,
        alpha_hat: None,
        alpha_capped: false,
        pi0_inf: None,
        alpha_inf_hat: None,
        p0: None,
        p0_clamped: false,
        threshold: None,
        attained_bfdr: None,
        n_discoveries: 0,
        flag_counts: BTreeMap::new(),
    };

    if noninf.is_empty() {
        log::warn!("no gene is eligible for π0 estimation; BFDR skipped");
    } else {
        let pi0 = estimate_pi0(&noninf, base_df, config.gamma)?;
        let alpha = alpha_from_pi0(pi0.pi0_hat)?;
        manifest.pi0 = Some(pi0);
        manifest.pi0_hat = Some(pi0.pi0_hat);
        manifest.alpha_hat = Some(alpha.alpha);
        manifest.alpha_capped = alpha.capped;
        let mut alpha_used = alpha.alpha;

        if config.informative {
            let inf_df = config.df();
            let inf: Vec<f64> = rows
                .iter()
                .filter(|r| r.pi0_eligible())
                .filter_map(|r| r.bf.as_ref())
                .filter(|b| b.df == inf_df)
                .map(|b| b.two_log_bf)
                .collect();
            let ks: Vec<f64> = rows
                .iter()
                .filter(|r| r.bf.is_some() && !r.flags.contains(&Flag::PriorFallback))
                .filter_map(|r| r.p_prior)
                .collect();
            if inf.is_empty() || ks.is_empty() {
                log::warn!("no informative prior was computed; BFDR uses α̂");
            } else {
                let pi0_inf = estimate_pi0(&inf, inf_df, config.gamma)?;
                let a = alpha_inf(alpha.alpha, &ks, pi0_inf.pi0_hat)?;
                manifest.pi0_inf = Some(pi0_inf);
                manifest.alpha_inf_hat = Some(a.alpha_inf);
                manifest.p0 = Some(a.p0);
                manifest.p0_clamped = a.clamped;
                alpha_used = a.alpha_inf;
            }
        }

        let scored: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].bf.is_some()).collect();
        let v: Vec<f64> = scored
            .par_iter()
            .map(|&i| posterior_v(rows[i].bf.as_ref().map_or(f64::NEG_INFINITY, |b| b.log_bf), alpha_used))
            .collect();
        for (&i, &vi) in scored.iter().zip(&v) {
            rows[i].v_i = Some(vi);
        }
        if !v.is_empty() {
            let sel = select_threshold(&v, config.alpha0)?;
            for &j in &sel.discoveries {
                rows[scored[j]].discovered = true;
            }
            manifest.threshold = Some(sel.threshold);
            manifest.attained_bfdr = Some(sel.attained_bfdr);
            manifest.n_discoveries = sel.discoveries.len();
        }
    }

    for r in &rows {
        for f in &r.flags {
            *manifest.flag_counts.entry(f.as_str().to_string()).or_default() += 1;
        }
    }
    rows.sort_by(|a, b| {
        let key = |r: &GeneRow| r.two_log_bf().filter(|x| !x.is_nan()).unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a)).then_with(|| a.gene_id.cmp(&b.gene_id))
    });
    Ok(RunOutcome { rows, manifest })
}

/// Non-informative Bayes factor; the joint mode falls back to the beta prior
/// when the zero-inflated fit is undefined.
fn noninformative(config: &RunConfig, gene: &GeneCounts, p_prior: f64) -> Result<BfResult> {
    match bayes_factor(gene, config.prior_kind, p_prior) {
        Err(Error::MixtureUndefined(why)) if config.prior_kind == BfMode::MixtureJoint => {
            log::debug!("gene {}: joint mixture undefined ({why}), beta prior used", gene.gene_id);
            let mut r = bf_beta(gene, p_prior)?;
            r.flags.insert(Flag::MixtureUndefined);
            Ok(r)
        }
        other => other,
    }
}

fn gene_row(config: &RunConfig, gene: &GeneCounts, block: Option<&VariantBlock>, null: Option<&NullCdf>) -> GeneRow {
    let failed = |e: Error| {
        log::warn!("gene {}: {e}", gene.gene_id);
        GeneRow::bare(gene, Flag::Failed)
    };
    let base = match noninformative(config, gene, 1.0) {
        Ok(b) => b,
        Err(e) => return failed(e),
    };
    let mut flags = base.flags.clone();
    let (bf, p_prior) = match (block, null) {
        (Some(block), Some(null)) => {
            let prior = match gene_prior(block, null, config.r2_threshold) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("gene {}: KS prior failed ({e}), p = 1 used", gene.gene_id);
                    crate::ks_prior::KsPriorResult {
                        gene_id: gene.gene_id.clone(),
                        p_prior: 1.0,
                        n_valid_sites: 0,
                        fallback: true,
                        d_plus: None,
                    }
                }
            };
            if prior.fallback {
                flags.insert(Flag::PriorFallback);
                (base.clone(), Some(prior.p_prior))
            } else {
                match noninformative(config, gene, prior.p_prior) {
                    Ok(b) => {
                        flags.extend(b.flags.iter().copied());
                        (b, Some(prior.p_prior))
                    }
                    Err(e) => return failed(e),
                }
            }
        }
        _ => (base.clone(), None),
    };
    GeneRow {
        gene_id: gene.gene_id.clone(),
        n_sites: gene.n_sites(),
        bf: Some(bf),
        bf_noninformative: Some(base),
        p_prior,
        v_i: None,
        discovered: false,
        flags,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if !x.is_nan() => format!("{x:?}"),
        _ => "NA".to_string(),
    }
}

/// Writes rows in the given order.
pub fn write_results(path: &std::path::Path, rows: &[GeneRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", RESULTS_HEADER.join("\t"))?;
    for r in rows {
        let b = r.bf.as_ref();
        let flags: Vec<&str> = r.flags.iter().map(Flag::as_str).collect();
        let fields = [
            r.gene_id.clone(),
            r.n_sites.to_string(),
            fmt_opt(b.map(|b| b.two_log_bf)),
            b.map_or("NA".to_string(), |b| b.df.to_string()),
            fmt_opt(b.map(|b| b.p_value)),
            fmt_opt(r.p_prior),
            fmt_opt(b.map(|b| b.eta_hat)),
            fmt_opt(b.map(|b| b.eta1_hat)),
            fmt_opt(b.map(|b| b.eta2_hat)),
            fmt_opt(b.map(|b| b.k_tilde)),
            fmt_opt(b.and_then(|b| b.w0_tilde)),
            fmt_opt(r.v_i),
            u8::from(r.discovered).to_string(),
            flags.join(","),
        ];
        writeln!(w, "{}", fields.join("\t"))?;
    }
    w.flush()?;
    Ok(())
}
