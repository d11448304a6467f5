//! Laplace approximation against the Monte Carlo oracle on real or simulated genes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bf::HyperSpec;
use crate::counts::{fit_eta, fit_k, BetaPrior, GeneCounts, Kernel};
use crate::error::{Error, Result};
use crate::marginal::{laplace_log_marginal, mc_log_marginal};
use crate::stats::RandomSource;

/// Fewest genes a validation report may cover.
pub const MIN_LAPLACE_GENES: usize = 3;

/// Null marginal of one gene by both methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceCheck {
    pub gene_id: String,
    pub k_tilde: f64,
    pub eta_star: f64,
    pub k_star: f64,
    pub laplace: f64,
    pub mc: f64,
    pub mc_se: f64,
    /// `laplace − mc`.
    pub delta: f64,
}

impl LaplaceCheck {
    /// `|Δ|` in Monte Carlo standard errors; 0 when both sides are exact.
    pub fn z(&self) -> f64 {
        if self.delta == 0.0 {
            0.0
        } else {
            self.delta.abs() / self.mc_se
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceReport {
    pub draws: usize,
    pub rows: Vec<LaplaceCheck>,
    /// Genes that could not be evaluated, with the reason.
    pub skipped: Vec<(String, String)>,
    pub max_abs_delta: f64,
    pub n_within_2se: usize,
}

/// Null marginal `ln ∫ L(η) Beta(η | η*, K*) dη` of the pooled sample at the
/// fitted precision, by Laplace and by `draws` hyperprior samples.
pub fn check_gene(gene: &GeneCounts, draws: usize, source: &RandomSource) -> Result<LaplaceCheck> {
    let pooled = gene.pooled_table();
    if pooled.is_empty() {
        // likelihood identically one: both integrals are exactly 0
        return Ok(LaplaceCheck {
            gene_id: gene.gene_id.clone(),
            k_tilde: f64::NAN,
            eta_star: f64::NAN,
            k_star: f64::NAN,
            laplace: 0.0,
            mc: 0.0,
            mc_se: 0.0,
            delta: 0.0,
        });
    }
    let k = fit_k(&pooled)?.k;
    let kernel = Kernel::Beta { k };
    let fits = [pooled, gene.control_table(), gene.case_table()].map(|t| fit_eta(&t, kernel));
    let [p, c, d] = fits;
    let hyper = HyperSpec::from_fits(&p?, &c?, &d?, 1.0);
    let prior = BetaPrior::new(hyper.eta_star, hyper.k_star)?;
    let pooled = gene.pooled_table();
    let laplace = laplace_log_marginal(&pooled, kernel, &prior)?.log_integral;
    let mc = mc_log_marginal(&pooled, kernel, &prior, draws, source)?;
    Ok(LaplaceCheck {
        gene_id: gene.gene_id.clone(),
        k_tilde: k,
        eta_star: hyper.eta_star,
        k_star: hyper.k_star,
        laplace,
        mc: mc.estimate,
        mc_se: mc.std_error,
        delta: laplace - mc.estimate,
    })
}

/// Compares both evaluators on `n_genes` genes sampled with `source`.
pub fn validate_laplace(genes: &[GeneCounts], n_genes: usize, draws: usize, source: &RandomSource) -> Result<LaplaceReport> {
    if n_genes < MIN_LAPLACE_GENES {
        return Err(Error::Config(format!("validate-laplace needs at least {MIN_LAPLACE_GENES} genes, got {n_genes}")));
    }
    if genes.len() < MIN_LAPLACE_GENES {
        return Err(Error::Validation(format!(
            "input holds {} genes, fewer than {MIN_LAPLACE_GENES}",
            genes.len()
        )));
    }
    let mut picked: Vec<usize> = if genes.len() > n_genes {
        sample(&mut source.split_named("pick").rng(), genes.len(), n_genes).into_vec()
    } else {
        (0..genes.len()).collect()
    };
    picked.sort_unstable();
    let draws_source = source.split_named("draws");
    let results: Vec<(usize, Result<LaplaceCheck>)> = picked
        .par_iter()
        .map(|&i| (i, check_gene(&genes[i], draws, &draws_source.split(i as u64))))
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (i, r) in results {
        match r {
            Ok(c) => rows.push(c),
            Err(e) => skipped.push((genes[i].gene_id.clone(), e.to_string())),
        }
    }
    let max_abs_delta = rows.iter().map(|r| r.delta.abs()).fold(0.0, f64::max);
    let n_within_2se = rows.iter().filter(|r| r.z() <= 2.0).count();
    Ok(LaplaceReport { draws, rows, skipped, max_abs_delta, n_within_2se })
}

/// Per-gene table of a report.
pub fn write_laplace_report(path: &Path, report: &LaplaceReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "gene_id\tk_tilde\teta_star\tk_star\tlaplace\tmc\tmc_se\tdelta\tz")?;
    for r in &report.rows {
        writeln!(
            w,
            "{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}",
            r.gene_id,
            r.k_tilde,
            r.eta_star,
            r.k_star,
            r.laplace,
            r.mc,
            r.mc_se,
            r.delta,
            r.z()
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counts::Obs;
    use crate::sim::{simulate_gene, SimScenario};

    fn genes(n: usize) -> Vec<GeneCounts> {
        let sc = SimScenario { n_sites: 40, n_controls: 100, n_cases: 100, ..SimScenario::default() };
        let src = RandomSource::new(3);
        (0..n).map(|i| simulate_gene(&sc, &format!("G{i}"), &src.split(i as u64)).unwrap().counts).collect()
    }

    #[test]
    fn report_covers_sampled_genes() {
        let g = genes(6);
        let rep = validate_laplace(&g, 4, 20_000, &RandomSource::new(1)).unwrap();
        assert_eq!(rep.rows.len() + rep.skipped.len(), 4);
        assert!(rep.rows.len() >= 3);
        for r in &rep.rows {
            assert!(r.laplace.is_finite() && r.mc.is_finite() && r.mc_se > 0.0);
            // same integral: the two evaluators agree to well under a nat
            assert!(r.delta.abs() < 0.5, "{r:?}");
        }
        assert_eq!(rep.max_abs_delta, rep.rows.iter().map(|r| r.delta.abs()).fold(0.0, f64::max));
    }

    #[test]
    fn gene_without_sites_is_exact() {
        let g = GeneCounts::new("empty", vec![Obs::new(0, 0); 3], vec![Obs::new(0, 0); 3]).unwrap();
        let c = check_gene(&g, 1000, &RandomSource::new(2)).unwrap();
        assert_eq!((c.laplace, c.mc, c.delta, c.z()), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn too_few_genes_is_an_error() {
        let g = genes(3);
        assert!(matches!(validate_laplace(&g, 2, 1000, &RandomSource::new(1)), Err(Error::Config(_))));
        assert!(matches!(validate_laplace(&g[..2], 3, 1000, &RandomSource::new(1)), Err(Error::Validation(_))));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let g = genes(5);
        let a = validate_laplace(&g, 3, 5000, &RandomSource::new(9)).unwrap();
        let b = validate_laplace(&g, 3, 5000, &RandomSource::new(9)).unwrap();
        assert_eq!(a, b);
    }
}
