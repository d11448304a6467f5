//! `rvbf`: simulate rare-variant data, run the genome-wide Bayes factor
//! analysis, and produce validation reports.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 input validation error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rvbf_core::bf::BfMode;
use rvbf_core::bfdr::{DEFAULT_ALPHA0, DEFAULT_GAMMA};
use rvbf_core::ks_prior::{VariantBlock, DEFAULT_MAF_FLOOR, DEFAULT_MIN_NULL_VALUES, DEFAULT_R2_THRESHOLD};
use rvbf_core::marginal::MC_DRAWS;
use rvbf_core::pipeline::config::DEFAULT_MIN_SITES;
use rvbf_core::pipeline::diagnostics::{diagnostics, simulate_diagnostic_genes, write_report, DiagnosticsConfig};
use rvbf_core::pipeline::io::{read_counts, read_variants, write_counts, write_truth, write_variants};
use rvbf_core::pipeline::validate::{validate_laplace, write_laplace_report};
use rvbf_core::pipeline::{run_genome, RunConfig};
use rvbf_core::sim::{simulate_genome, GenomeSpec, SimGene, SimScenario, SizeBin, DEFAULT_EFFECT_SCALE};
use rvbf_core::{Error, GeneCounts, RandomSource};

#[derive(Parser)]
#[command(name = "rvbf", version, about = "Gene-level rare-variant Bayes factors with Bayesian FDR control")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a case-control genome and write counts, variants and truth files.
    Simulate(SimulateArgs),
    /// Analyse a counts file (and a variants file in informative mode).
    Run(RunArgs),
    /// Compare the Laplace marginal with a Monte Carlo estimate on sampled genes.
    ValidateLaplace(ValidateArgs),
    /// Model-fit and component-correlation diagnostics.
    Diagnostics(DiagnosticsArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    #[arg(long, default_value_t = 500)]
    controls: usize,
    #[arg(long, default_value_t = 500)]
    cases: usize,
    #[arg(long, default_value_t = 0.0005)]
    maf_low: f64,
    #[arg(long, default_value_t = 0.01)]
    maf_high: f64,
    /// Precision of the per-individual rate multiplier; smaller means more
    /// within-gene carrier correlation.
    #[arg(long, default_value_t = 200.0)]
    k_overdispersion: f64,
    #[arg(long, default_value_t = DEFAULT_EFFECT_SCALE)]
    effect_scale: f64,
    #[arg(long, default_value_t = 0.0)]
    protective_fraction: f64,
}

impl ScenarioArgs {
    fn scenario(&self) -> SimScenario {
        SimScenario {
            n_controls: self.controls,
            n_cases: self.cases,
            maf_range: (self.maf_low, self.maf_high),
            k_overdispersion: self.k_overdispersion,
            effect_scale: self.effect_scale,
            protective_fraction: self.protective_fraction,
            ..SimScenario::default()
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 2000)]
    genes: usize,
    #[arg(long, default_value_t = 10)]
    associated: usize,
    /// Give every gene this many sites instead of the default size mixture.
    #[arg(long)]
    sites: Option<u32>,
    /// Causal share of sites in associated genes when `--sites` is set.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    causal_fraction: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    counts: PathBuf,
    #[arg(long)]
    variants: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// beta, mixture or mixture_joint.
    #[arg(long, default_value = "beta")]
    prior: BfMode,
    /// Use KS-test priors built from the variants file.
    #[arg(long)]
    informative: bool,
    #[arg(long, default_value_t = DEFAULT_R2_THRESHOLD)]
    r2_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA0)]
    alpha0: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_SITES)]
    min_sites: u32,
    #[arg(long, default_value_t = DEFAULT_MAF_FLOOR)]
    maf_floor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Compare site p-values with the uniform law instead of the pooled null.
    #[arg(long)]
    uniform_null: bool,
    #[arg(long, default_value_t = DEFAULT_MIN_NULL_VALUES)]
    min_null_values: usize,
}

#[derive(Args)]
struct ValidateArgs {
    /// Counts file to sample genes from; without it genes are simulated.
    #[arg(long)]
    counts: Option<PathBuf>,
    /// Genes to compare.
    #[arg(long, default_value_t = 20)]
    genes: usize,
    #[arg(long, default_value_t = MC_DRAWS)]
    draws: usize,
    /// Sites per simulated gene.
    #[arg(long, default_value_t = 50)]
    sites: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Per-gene table; printed summary only when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args)]
struct DiagnosticsArgs {
    /// Counts file; without it null genes are simulated.
    #[arg(long, requires = "variants")]
    counts: Option<PathBuf>,
    #[arg(long)]
    variants: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Genes to simulate.
    #[arg(long, default_value_t = 500)]
    genes: usize,
    /// Per-gene precision is drawn log-uniformly on [k-min, k-max].
    #[arg(long, default_value_t = 200.0)]
    k_min: f64,
    #[arg(long, default_value_t = 200.0)]
    k_max: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_R2_THRESHOLD)]
    r2_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_MAF_FLOOR)]
    maf_floor: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_NULL_VALUES)]
    min_null_values: usize,
    #[arg(long)]
    uniform_null: bool,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let mut spec = GenomeSpec::new(args.genes, args.associated, args.scenario.scenario());
    if let Some(sites) = args.sites {
        spec.size_bins = vec![SizeBin { low: sites, high: sites + 1, weight: 1.0, causal_fraction: args.causal_fraction }];
    }
    let genes = simulate_genome(&spec, &RandomSource::new(args.seed))?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    write_counts(&args.out_dir.join("counts.tsv"), &genes)?;
    write_variants(&args.out_dir.join("variants.tsv"), &genes)?;
    write_truth(&args.out_dir.join("truth.tsv"), &genes)?;
    println!("simulated {} genes ({} associated) into {}", genes.len(), args.associated, args.out_dir.display());
    Ok(())
}

fn run(args: &RunArgs, threads: Option<usize>) -> anyhow::Result<()> {
    let mut config = RunConfig::new(&args.counts, &args.out_dir);
    config.prior_kind = args.prior;
    config.informative = args.informative;
    config.r2_threshold = args.r2_threshold;
    config.gamma = args.gamma;
    config.alpha0 = args.alpha0;
    config.min_sites_per_gene = args.min_sites;
    config.maf_floor = args.maf_floor;
    config.threads = threads;
    config.seed = args.seed;
    config.uniform_null = args.uniform_null;
    config.min_null_values = args.min_null_values;
    config.variants_path = args.variants.clone();
    let out = run_genome(&config)?;
    let m = &out.manifest;
    println!(
        "genes {} analysed {} filtered {} failed {} pi0 {} discoveries {}",
        m.n_genes,
        m.n_analyzed,
        m.n_filtered,
        m.n_failed,
        m.pi0_hat.map_or("NA".to_string(), |p| format!("{p:.4}")),
        m.n_discoveries
    );
    println!("results in {}", config.results_path().display());
    Ok(())
}

fn simulated_genes(scenario: SimScenario, n_genes: usize, sites: u32, seed: u64) -> anyhow::Result<Vec<SimGene>> {
    let mut spec = GenomeSpec::new(n_genes, 0, scenario);
    spec.size_bins = vec![SizeBin { low: sites, high: sites + 1, weight: 1.0, causal_fraction: 0.0 }];
    Ok(simulate_genome(&spec, &RandomSource::new(seed).split_named("simulate"))?)
}

fn validate(args: &ValidateArgs) -> anyhow::Result<()> {
    let genes = match &args.counts {
        Some(path) => read_counts(path)?.into_iter().map(|r| r.counts).collect(),
        None => simulated_genes(args.scenario.scenario(), args.genes, args.sites, args.seed)?
            .into_iter()
            .map(|g| g.counts)
            .collect::<Vec<_>>(),
    };
    let report = validate_laplace(&genes, args.genes, args.draws, &RandomSource::new(args.seed))?;
    if let Some(out) = &args.out {
        write_laplace_report(out, &report)?;
    }
    for (gene, why) in &report.skipped {
        println!("skipped {gene}: {why}");
    }
    println!(
        "genes {} within 2 SE {} max |delta| {:.4}",
        report.rows.len(),
        report.n_within_2se,
        report.max_abs_delta
    );
    Ok(())
}

fn run_diagnostics(args: &DiagnosticsArgs) -> anyhow::Result<()> {
    let (genes, blocks): (Vec<GeneCounts>, Vec<VariantBlock>) = match (&args.counts, &args.variants) {
        (Some(c), Some(v)) => {
            let records = read_counts(c)?;
            let vars = read_variants(v, &records, 0.0)?;
            (records.into_iter().map(|r| r.counts).collect(), vars.blocks)
        }
        _ => {
            let src = RandomSource::new(args.seed);
            let sim = simulate_diagnostic_genes(args.genes, (args.k_min, args.k_max), &args.scenario.scenario(), &src)?;
            sim.into_iter().map(|g| (g.counts, g.block)).unzip()
        }
    };
    let config = DiagnosticsConfig {
        r2_threshold: args.r2_threshold,
        maf_floor: args.maf_floor,
        min_null_values: args.min_null_values,
        uniform_null: args.uniform_null,
    };
    let report = diagnostics(&genes, &blocks, &config)?;
    write_report(&args.out_dir, &report)?;
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.4}"));
    println!("eta_hat vs mean rate slope {}", fmt(report.eta_rate_slope));
    println!("ICC vs mean r2 spearman {}", fmt(report.icc_r2_spearman));
    for t in &report.tau {
        let high = t.high.map_or("inf".to_string(), |h| h.to_string());
        println!("kendall tau [{}, {high}) n {} tau {}", t.low, t.n, fmt(t.tau));
    }
    println!("report in {}", args.out_dir.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(Error::Validation(_) | Error::Parse { .. }) => 3,
        _ => 1,
    }
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    init_threads(cli.threads)?;
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a, cli.threads),
        Command::ValidateLaplace(a) => validate(a),
        Command::Diagnostics(a) => run_diagnostics(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
