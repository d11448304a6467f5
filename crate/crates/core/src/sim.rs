//! Case-control rare-variant data generator.
//!
//! Each site gets a MAF drawn log-uniformly and a carrier probability
//! `q_v = 1 − (1 − MAF)²`. Each individual gets a rate multiplier
//! `m_k = u_k / q̄` with `u_k ~ Beta(q̄, K)` in mean–precision form, which makes
//! per-individual counts beta-binomial with precision near `K`. Phenotypes
//! follow a logistic model on causal carrier indicators, and individuals are
//! drawn until both group quotas are filled.

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counts::{GeneCounts, Obs};
use crate::error::{Error, Result};
use crate::ks_prior::{Site, VariantBlock, RARE_MAF};
use crate::stats::rng::Rng;
use crate::stats::{expit, RandomSource};

/// Log-odds per unit `1/√MAF` for causal sites.
pub const DEFAULT_EFFECT_SCALE: f64 = 0.0802;
/// Per-variant odds ratios are clipped to this window.
pub const OR_RANGE: (f64, f64) = (2.23, 4.25);

/// Generator settings for one gene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub n_sites: u32,
    pub n_controls: usize,
    pub n_cases: usize,
    /// MAFs are drawn log-uniformly on `(low, high]`.
    pub maf_range: (f64, f64),
    pub k_overdispersion: f64,
    pub causal_fraction: f64,
    /// Share of causal sites that lower risk.
    pub protective_fraction: f64,
    pub effect_scale: f64,
}

impl Default for SimScenario {
    fn default() -> SimScenario {
        SimScenario {
            n_sites: 45,
            n_controls: 500,
            n_cases: 500,
            maf_range: (0.0005, 0.01),
            k_overdispersion: 200.0,
            causal_fraction: 0.0,
            protective_fraction: 0.0,
            effect_scale: DEFAULT_EFFECT_SCALE,
        }
    }
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.maf_range;
        if !(lo > 0.0 && lo < hi && hi <= RARE_MAF) {
            return Err(Error::Config(format!("maf_range ({lo}, {hi}] must be a non-empty part of (0, {RARE_MAF}]")));
        }
        if self.n_sites == 0 || self.n_controls == 0 || self.n_cases == 0 {
            return Err(Error::Config("sites and both group sizes must be positive".into()));
        }
        if !(self.k_overdispersion > 0.0 && self.k_overdispersion.is_finite()) {
            return Err(Error::Config(format!("k_overdispersion must be positive, got {}", self.k_overdispersion)));
        }
        for (name, v) in [("causal_fraction", self.causal_fraction), ("protective_fraction", self.protective_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.effect_scale > 0.0) {
            return Err(Error::Config(format!("effect_scale must be positive, got {}", self.effect_scale)));
        }
        Ok(())
    }

    /// Expected per-site carrier probability `E[1 − (1 − MAF)²]` under the MAF law.
    pub fn expected_rate(&self) -> f64 {
        let (a, b) = self.maf_range;
        let span = (b / a).ln();
        let m1 = (b - a) / span;
        let m2 = (b * b - a * a) / (2.0 * span);
        2.0 * m1 - m2
    }

    /// Null version of the scenario.
    pub fn null(&self) -> SimScenario {
        SimScenario { causal_fraction: 0.0, ..*self }
    }
}

/// Log-odds increment of a causal site: `c / √MAF` clipped to the odds-ratio window.
pub fn causal_log_odds(maf: f64, effect_scale: f64) -> f64 {
    (effect_scale / maf.sqrt()).clamp(OR_RANGE.0.ln(), OR_RANGE.1.ln())
}

/// Which sites of a simulated gene affect risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub gene_id: String,
    pub is_associated: bool,
    pub causal_sites: Vec<String>,
}

/// One simulated gene in both count and site-level form.
#[derive(Debug, Clone, PartialEq)]
pub struct SimGene {
    pub counts: GeneCounts,
    pub block: VariantBlock,
    pub truth: Truth,
}

/// Simulates one gene.
pub fn simulate_gene(scenario: &SimScenario, gene_id: &str, source: &RandomSource) -> Result<SimGene> {
    scenario.validate()?;
    let mut rng = source.rng();
    let s = scenario.n_sites as usize;
    let (lo, hi) = scenario.maf_range;
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    let maf: Vec<f64> = (0..s)
        .map(|_| {
            // (lo, hi]: 1 − U lies in (0, 1]
            let u = 1.0 - rng.random::<f64>();
            (ln_lo + u * (ln_hi - ln_lo)).exp().min(hi)
        })
        .collect();
    let q: Vec<f64> = maf.iter().map(|m| 1.0 - (1.0 - m) * (1.0 - m)).collect();
    let q_bar = q.iter().sum::<f64>() / s as f64;
    let q_max = q.iter().copied().fold(0.0, f64::max);

    let n_causal = (scenario.causal_fraction * s as f64).round() as usize;
    let causal: Vec<usize> = {
        let mut v = sample(&mut rng, s, n_causal).into_vec();
        v.sort_unstable();
        v
    };
    let n_protective = (scenario.protective_fraction * n_causal as f64).round() as usize;
    let mut beta = vec![0.0; s];
    for (j, &v) in causal.iter().enumerate() {
        let sign = if j < n_protective { -1.0 } else { 1.0 };
        beta[v] = sign * causal_log_odds(maf[v], scenario.effect_scale);
    }

    let k = scenario.k_overdispersion;
    let rate_law = Beta::new(q_bar * k, (1.0 - q_bar) * k)
        .map_err(|e| Error::Config(format!("individual rate law: {e}")))?;
    let mut controls: Vec<Vec<u32>> = Vec::with_capacity(scenario.n_controls);
    let mut cases: Vec<Vec<u32>> = Vec::with_capacity(scenario.n_cases);
    let mut carried: Vec<u32> = Vec::new();
    while controls.len() < scenario.n_controls || cases.len() < scenario.n_cases {
        let m = rate_law.sample(&mut rng) / q_bar;
        carried.clear();
        let p_max = m * q_max;
        if p_max >= 1.0 {
            for v in 0..s {
                if rng.random::<f64>() < (m * q[v]).min(1.0) {
                    carried.push(v as u32);
                }
            }
        } else if p_max > 0.0 {
            // jump between candidate sites by inverse-transform geometric
            // gaps, then thin to each site's own rate
            let ln_miss = (-p_max).ln_1p();
            let gap = |rng: &mut Rng| ((1.0 - rng.random::<f64>()).ln() / ln_miss).floor();
            let mut v = gap(&mut rng);
            while v < s as f64 {
                let site = v as usize;
                if rng.random::<f64>() * q_max < q[site] {
                    carried.push(site as u32);
                }
                v += 1.0 + gap(&mut rng);
            }
        }
        let eta: f64 = carried.iter().map(|&v| beta[v as usize]).sum();
        let is_case = rng.random::<f64>() < expit(eta);
        let group = if is_case { &mut cases } else { &mut controls };
        let quota = if is_case { scenario.n_cases } else { scenario.n_controls };
        if group.len() < quota {
            group.push(carried.clone());
        }
    }

    let obs = |g: &[Vec<u32>]| g.iter().map(|c| Obs::new(c.len() as u32, scenario.n_sites)).collect();
    let counts = GeneCounts::new(gene_id, obs(&controls), obs(&cases))?;
    let site_id = |v: usize| format!("{gene_id}:{}", v + 1);
    let mut sites: Vec<Site> = (0..s)
        .map(|v| Site { site_id: site_id(v), maf: maf[v], controls: Vec::new(), cases: Vec::new() })
        .collect();
    for (i, c) in controls.iter().enumerate() {
        for &v in c {
            sites[v as usize].controls.push(i as u32);
        }
    }
    for (i, c) in cases.iter().enumerate() {
        for &v in c {
            sites[v as usize].cases.push(i as u32);
        }
    }
    let block = VariantBlock {
        gene_id: gene_id.to_string(),
        n_controls: scenario.n_controls,
        n_cases: scenario.n_cases,
        sites,
    };
    let truth = Truth {
        gene_id: gene_id.to_string(),
        is_associated: n_causal > 0,
        causal_sites: causal.iter().map(|&v| site_id(v)).collect(),
    };
    Ok(SimGene { counts, block, truth })
}

/// One bin of the gene-size mixture: sizes uniform on `[low, high)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeBin {
    pub low: u32,
    pub high: u32,
    pub weight: f64,
    /// Causal share of sites for associated genes in this bin.
    pub causal_fraction: f64,
}

/// Default gene-size mixture with per-bin causal shares.
pub fn default_size_bins() -> Vec<SizeBin> {
    vec![
        SizeBin { low: 20, high: 50, weight: 0.46, causal_fraction: 0.5 },
        SizeBin { low: 50, high: 100, weight: 0.36, causal_fraction: 0.4 },
        SizeBin { low: 100, high: 500, weight: 0.17, causal_fraction: 0.3 },
        SizeBin { low: 500, high: 1000, weight: 0.01, causal_fraction: 0.2 },
    ]
}

/// Settings for a simulated genome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenomeSpec {
    pub n_genes: usize,
    pub n_associated: usize,
    pub size_bins: Vec<SizeBin>,
    /// Per-gene settings; `n_sites` and `causal_fraction` are overridden.
    pub scenario: SimScenario,
}

impl GenomeSpec {
    pub fn new(n_genes: usize, n_associated: usize, scenario: SimScenario) -> GenomeSpec {
        GenomeSpec { n_genes, n_associated, size_bins: default_size_bins(), scenario }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_associated > self.n_genes {
            return Err(Error::Config(format!(
                "{} associated genes requested out of {}",
                self.n_associated, self.n_genes
            )));
        }
        if self.size_bins.is_empty() || self.size_bins.iter().any(|b| b.low == 0 || b.high <= b.low || !(b.weight >= 0.0)) {
            return Err(Error::Config("size bins need 0 < low < high and non-negative weights".into()));
        }
        if !(self.size_bins.iter().map(|b| b.weight).sum::<f64>() > 0.0) {
            return Err(Error::Config("size bin weights sum to zero".into()));
        }
        self.scenario.validate()
    }
}

/// Gene identifier used by the genome simulator.
pub fn gene_name(index: usize) -> String {
    format!("G{:05}", index + 1)
}

/// Simulates a genome; genes are generated in parallel from per-gene child
/// sources and returned in index order.
pub fn simulate_genome(spec: &GenomeSpec, source: &RandomSource) -> Result<Vec<SimGene>> {
    spec.validate()?;
    let mut layout = source.split_named("layout").rng();
    let associated: Vec<bool> = {
        let mut v = vec![false; spec.n_genes];
        for i in sample(&mut layout, spec.n_genes, spec.n_associated) {
            v[i] = true;
        }
        v
    };
    let total: f64 = spec.size_bins.iter().map(|b| b.weight).sum();
    let plans: Vec<(u32, f64)> = (0..spec.n_genes)
        .map(|i| {
            let mut u = layout.random::<f64>() * total;
            let bin = spec
                .size_bins
                .iter()
                .find(|b| {
                    u -= b.weight;
                    u < 0.0
                })
                .unwrap_or(&spec.size_bins[spec.size_bins.len() - 1]);
            let size = layout.random_range(bin.low..bin.high);
            (size, if associated[i] { bin.causal_fraction } else { 0.0 })
        })
        .collect();
    let genes = source.split_named("genes");
    plans
        .par_iter()
        .enumerate()
        .map(|(i, &(n_sites, causal_fraction))| {
            let scenario = SimScenario { n_sites, causal_fraction, ..spec.scenario };
            simulate_gene(&scenario, &gene_name(i), &genes.split(i as u64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counts::{fit_k, icc};
    use crate::stats::normal_sf;

    fn scenario(n: usize, sites: u32) -> SimScenario {
        SimScenario { n_sites: sites, n_controls: n, n_cases: n, ..SimScenario::default() }
    }

    /// Two-sided Mann–Whitney p-value with the normal approximation and tie correction.
    fn mann_whitney(a: &[u32], b: &[u32]) -> f64 {
        let mut all: Vec<(u32, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
        all.sort_unstable();
        let n = all.len();
        let (mut rank_sum, mut tie_term, mut i) = (0.0, 0.0, 0);
        while i < n {
            let j = i + all[i..].iter().take_while(|e| e.0 == all[i].0).count();
            let mid = (i + j + 1) as f64 / 2.0;
            let t = (j - i) as f64;
            tie_term += t * t * t - t;
            rank_sum += all[i..j].iter().filter(|e| e.1).count() as f64 * mid;
            i = j;
        }
        let (n1, n2) = (a.len() as f64, b.len() as f64);
        let u = rank_sum - n1 * (n1 + 1.0) / 2.0;
        let nn = n1 + n2;
        let var = n1 * n2 / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
        2.0 * normal_sf(((u - n1 * n2 / 2.0) / var.sqrt()).abs())
    }

    #[test]
    fn null_groups_are_exchangeable() {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for seed in 0..200 {
            let g = simulate_gene(&scenario(100, 30), "g", &RandomSource::new(seed)).unwrap();
            a.extend(g.counts.controls.iter().map(|o| o.x));
            b.extend(g.counts.cases.iter().map(|o| o.x));
        }
        assert!(mann_whitney(&a, &b) > 0.01);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let sc = SimScenario { causal_fraction: 0.3, ..scenario(80, 40) };
        let a = simulate_gene(&sc, "g", &RandomSource::new(5)).unwrap();
        let b = simulate_gene(&sc, "g", &RandomSource::new(5)).unwrap();
        assert_eq!(a, b);
        let spec = GenomeSpec::new(40, 4, scenario(60, 30));
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let x = one.install(|| simulate_genome(&spec, &RandomSource::new(9)).unwrap());
        let y = four.install(|| simulate_genome(&spec, &RandomSource::new(9)).unwrap());
        assert_eq!(x, y);
    }

    #[test]
    fn mean_rate_matches_configuration() {
        let sc = scenario(50, 40);
        let mut rates = Vec::new();
        for seed in 0..20 {
            let g = simulate_gene(&sc, "g", &RandomSource::new(100 + seed)).unwrap();
            rates.extend(g.counts.controls.iter().chain(&g.counts.cases).map(|o| o.x as f64 / o.n as f64));
        }
        assert_eq!(rates.len(), 2000);
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        let target = sc.expected_rate();
        assert!((mean / target - 1.0).abs() <= 0.1, "{mean} vs {target}");
    }

    #[test]
    fn fitted_icc_follows_configured_overdispersion() {
        let grid = [10.0, 40.0, 160.0, 640.0, 2560.0];
        let mut medians = Vec::new();
        for (i, &k) in grid.iter().enumerate() {
            let sc = SimScenario { k_overdispersion: k, maf_range: (0.004, 0.01), ..scenario(1500, 60) };
            let mut iccs: Vec<f64> = (0..5)
                .map(|s| {
                    let g = simulate_gene(&sc, "g", &RandomSource::new(1000 * i as u64 + s)).unwrap();
                    icc(fit_k(&g.counts.pooled_table()).unwrap().k)
                })
                .collect();
            iccs.sort_by(f64::total_cmp);
            medians.push(iccs[2]);
        }
        // configured ICC falls along the grid; the fitted one must too
        assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
        assert!(medians[0] > 5.0 * medians[4], "{medians:?}");
    }

    #[test]
    fn causal_sites_enrich_cases() {
        let sc = SimScenario { causal_fraction: 0.5, ..scenario(500, 40) };
        let (mut ctrl, mut case) = (0u32, 0u32);
        for seed in 0..10 {
            let g = simulate_gene(&sc, "g", &RandomSource::new(seed)).unwrap();
            assert_eq!(g.truth.causal_sites.len(), 20);
            ctrl += g.counts.controls.iter().map(|o| o.x).sum::<u32>();
            case += g.counts.cases.iter().map(|o| o.x).sum::<u32>();
        }
        assert!(case as f64 > 1.5 * ctrl as f64, "{case} vs {ctrl}");
    }

    #[test]
    fn protective_share_flips_signs() {
        let sc = SimScenario { causal_fraction: 1.0, protective_fraction: 1.0, ..scenario(400, 30) };
        let g = simulate_gene(&sc, "g", &RandomSource::new(3)).unwrap();
        let ctrl: u32 = g.counts.controls.iter().map(|o| o.x).sum();
        let case: u32 = g.counts.cases.iter().map(|o| o.x).sum();
        assert!(ctrl > case);
    }

    #[test]
    fn effect_sizes_stay_in_window() {
        for maf in [0.0001, 0.001, 0.004, 0.01] {
            let b = causal_log_odds(maf, DEFAULT_EFFECT_SCALE).exp();
            assert!((OR_RANGE.0 - 1e-12..=OR_RANGE.1 + 1e-12).contains(&b));
        }
        assert!((causal_log_odds(0.01, DEFAULT_EFFECT_SCALE).exp() - 2.23).abs() < 0.01);
    }

    #[test]
    fn blocks_agree_with_counts() {
        let g = simulate_gene(&scenario(120, 25), "g", &RandomSource::new(17)).unwrap();
        g.block.validate().unwrap();
        let mut per = vec![0u32; 120];
        for s in &g.block.sites {
            for &i in &s.cases {
                per[i as usize] += 1;
            }
        }
        let xs: Vec<u32> = g.counts.cases.iter().map(|o| o.x).collect();
        assert_eq!(per, xs);
    }

    #[test]
    fn genome_without_associations_is_null() {
        let genes = simulate_genome(&GenomeSpec::new(30, 0, scenario(40, 30)), &RandomSource::new(1)).unwrap();
        assert!(genes.iter().all(|g| !g.truth.is_associated && g.truth.causal_sites.is_empty()));
    }

    #[test]
    fn genome_size_mixture() {
        // sizes only: tiny groups keep this fast
        let spec = GenomeSpec::new(10_000, 0, SimScenario { n_controls: 1, n_cases: 1, ..SimScenario::default() });
        let genes = simulate_genome(&spec, &RandomSource::new(2)).unwrap();
        for bin in default_size_bins() {
            let share = genes.iter().filter(|g| (bin.low..bin.high).contains(&g.counts.n_sites())).count() as f64 / 1e4;
            assert!((share - bin.weight).abs() <= 0.02, "{bin:?}: {share}");
        }
    }

    #[test]
    fn empty_maf_range_is_a_config_error() {
        let sc = SimScenario { maf_range: (0.005, 0.005), ..SimScenario::default() };
        assert!(matches!(simulate_gene(&sc, "g", &RandomSource::new(0)), Err(Error::Config(_))));
        let spec = GenomeSpec::new(3, 4, SimScenario::default());
        assert!(spec.validate().is_err());
    }
}
