//! Gene-level rare-variant association testing with Bayes factors.
//!
//! Case and control rare-variant counts are modelled as beta-binomial. Each
//! gene gets a Bayes factor comparing a shared rare-variant rate against
//! group-specific rates, with marginal likelihoods from a Laplace
//! approximation on the logit scale. An optional informative prior derived
//! from single-variant tests sharpens the null hyperprior, and a Bayesian FDR
//! procedure turns the genome-wide collection of Bayes factors into
//! discoveries.

pub mod bf;
pub mod bfdr;
pub mod counts;
pub mod error;
pub mod ks_prior;
pub mod marginal;
pub mod pipeline;
pub mod sim;
pub mod stats;

pub use bf::{BfMode, BfResult, Flag, HyperSpec};
pub use counts::{BetaPrior, CountTable, GeneCounts, Kernel, MixturePrior, Obs, ZeroPattern};
pub use error::{Boundary, Error, Result};
pub use stats::RandomSource;
