//! Timings for the per-gene kernels that dominate a genome run.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rvbf_core::bf::bf_beta;
use rvbf_core::bfdr::{posterior_v, select_threshold};
use rvbf_core::counts::{bb_loglik, fit_k};
use rvbf_core::ks_prior::{gene_prior, NullCdf, DEFAULT_R2_THRESHOLD};
use rvbf_core::sim::{simulate_gene, SimGene, SimScenario};
use rvbf_core::RandomSource;

fn gene() -> SimGene {
    let sc = SimScenario { n_sites: 50, ..SimScenario::default() };
    simulate_gene(&sc, "B1", &RandomSource::new(11)).expect("simulated gene")
}

fn kernels(c: &mut Criterion) {
    let g = gene();
    let pooled = g.counts.pooled_table();
    let k = fit_k(&pooled).expect("fit").k;
    let eta = pooled.total_x() / pooled.total_n();

    c.bench_function("bb_loglik", |b| b.iter(|| bb_loglik(black_box(&pooled), black_box(eta), black_box(k))));
    c.bench_function("fit_k", |b| b.iter(|| fit_k(black_box(&pooled))));
    c.bench_function("bf_beta", |b| b.iter(|| bf_beta(black_box(&g.counts), black_box(1.0))));
    c.bench_function("ks_prior", |b| {
        b.iter(|| gene_prior(black_box(&g.block), &NullCdf::Uniform, DEFAULT_R2_THRESHOLD))
    });
}

fn bfdr(c: &mut Criterion) {
    let log_bfs: Vec<f64> = (0..2000).map(|i| (i as f64 / 100.0) - 5.0).collect();
    c.bench_function("posterior_v", |b| b.iter(|| posterior_v(black_box(3.0), black_box(250.0))));
    c.bench_function("bfdr_2000_genes", |b| {
        b.iter(|| {
            let v: Vec<f64> = log_bfs.iter().map(|&l| posterior_v(l, 250.0)).collect();
            select_threshold(&v, 0.05)
        })
    });
}

criterion_group!(benches, kernels, bfdr);
criterion_main!(benches);
