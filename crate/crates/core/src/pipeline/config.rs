//! Settings of a genome-wide run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bf::BfMode;
use crate::bfdr::{DEFAULT_ALPHA0, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::ks_prior::{DEFAULT_MAF_FLOOR, DEFAULT_MIN_NULL_VALUES, DEFAULT_R2_THRESHOLD, RARE_MAF};

/// Genes with fewer sites are reported as filtered.
pub const DEFAULT_MIN_SITES: u32 = 20;

/// Everything `run_genome` needs besides the input files' contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub prior_kind: BfMode,
    /// Use KS-test priors from site-level data.
    pub informative: bool,
    /// Pruning threshold for pairwise r² between sites.
    pub r2_threshold: f64,
    pub gamma: f64,
    pub alpha0: f64,
    pub min_sites_per_gene: u32,
    /// Sites with MAF at or below this floor are dropped from the KS prior.
    pub maf_floor: f64,
    /// Worker threads; `None` uses the rayon default. Not echoed in the
    /// manifest so outputs do not depend on it.
    #[serde(skip)]
    pub threads: Option<usize>,
    pub seed: u64,
    /// Compare site p-values with the uniform law instead of the pooled null.
    pub uniform_null: bool,
    pub min_null_values: usize,
    pub counts_path: PathBuf,
    pub variants_path: Option<PathBuf>,
    /// Directory receiving `results.tsv` and `manifest.json`.
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Defaults for everything except the paths.
    pub fn new(counts_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            prior_kind: BfMode::Beta,
            informative: false,
            r2_threshold: DEFAULT_R2_THRESHOLD,
            gamma: DEFAULT_GAMMA,
            alpha0: DEFAULT_ALPHA0,
            min_sites_per_gene: DEFAULT_MIN_SITES,
            maf_floor: DEFAULT_MAF_FLOOR,
            threads: None,
            seed: 0,
            uniform_null: false,
            min_null_values: DEFAULT_MIN_NULL_VALUES,
            counts_path: counts_path.into(),
            variants_path: None,
            output_dir: output_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.r2_threshold > 0.0 && self.r2_threshold <= 1.0) {
            return bad(format!("r2_threshold must lie in (0, 1], got {}", self.r2_threshold));
        }
        if !(self.gamma > 0.5 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0.5, 1), got {}", self.gamma));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 < 1.0) {
            return bad(format!("alpha0 must lie in (0, 1), got {}", self.alpha0));
        }
        if self.min_sites_per_gene == 0 {
            return bad("min_sites_per_gene must be at least 1".into());
        }
        if !(self.maf_floor >= 0.0 && self.maf_floor < RARE_MAF) {
            return bad(format!("maf_floor must lie in [0, {RARE_MAF}), got {}", self.maf_floor));
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        if self.informative && self.variants_path.is_none() {
            return bad("informative mode needs a variants file".into());
        }
        Ok(())
    }

    /// Chi-square degrees of freedom of the null law for this configuration.
    pub fn df(&self) -> u32 {
        let base = match self.prior_kind {
            BfMode::MixtureJoint => 2,
            BfMode::Beta | BfMode::Mixture => 1,
        };
        if self.informative {
            base + 2
        } else {
            base
        }
    }

    pub fn results_path(&self) -> PathBuf {
        self.output_dir.join("results.tsv")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.output_dir.join("manifest.json")
    }
}
