use std::time::Instant;

use serde::Serialize;
use trace_core::model::{DatasetBundle, Embedding};
use trace_core::neighbors::Exactness;
use trace_core::pipeline::{compute_in_memory, PrecomputeConfig, StageTimes};
use trace_core::synth::{gaussian_mixture, random_projection};

use crate::{CliError, CliResult};

pub const MIN_BENCH_N: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub n: usize,
    pub d: usize,
    pub embeddings: usize,
    pub k: usize,
    pub clusters: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 5000,
            d: 50,
            embeddings: 5,
            k: 50,
            clusters: 8,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub n: usize,
    pub d: usize,
    pub embedding_count: usize,
    pub k: usize,
    pub clusters: usize,
    pub seed: u64,
    /// Worker threads used for the run.
    pub threads: usize,
    /// Cores the machine reports.
    pub cores: usize,
    pub hd_exactness: Exactness,
    pub columns: usize,
    /// Wall time per stage in seconds.
    pub stages: StageTimes,
    /// Sum of `stages`.
    pub total_seconds: f64,
    /// Synthetic data generation, excluded from the total.
    pub data_seconds: f64,
}

/// Gaussian-mixture points, `embeddings` random 2-D projections of them,
/// then the whole precompute in memory. The data depends only on the
/// config; the timings do not.
pub fn run_bench(cfg: &BenchConfig) -> CliResult<BenchReport> {
    if cfg.n < MIN_BENCH_N {
        return Err(CliError::Usage(format!(
            "bench needs --n >= {MIN_BENCH_N}, got {}",
            cfg.n
        )));
    }
    if cfg.d == 0 || cfg.embeddings == 0 || cfg.clusters == 0 {
        return Err(CliError::Usage(
            "--d, --embeddings and --clusters must be positive".into(),
        ));
    }
    if cfg.k == 0 || cfg.k >= cfg.n {
        return Err(CliError::Usage(format!("--k must be in 1..{}", cfg.n)));
    }
    let start = Instant::now();
    let mix = gaussian_mixture(cfg.n, cfg.d, cfg.clusters, cfg.seed);
    let embeddings = (0..cfg.embeddings)
        .map(|v| {
            Embedding::new(
                format!("projection{v}"),
                random_projection(&mix.points, cfg.seed, v as u64),
            )
        })
        .collect();
    let bundle = DatasetBundle::new("bench", mix.points, embeddings, vec![])?;
    let data_seconds = start.elapsed().as_secs_f64();

    let computed = compute_in_memory(
        &bundle,
        &PrecomputeConfig {
            k_list: vec![cfg.k],
            seed: cfg.seed,
            ..PrecomputeConfig::default()
        },
    )?;
    Ok(BenchReport {
        n: cfg.n,
        d: cfg.d,
        embedding_count: cfg.embeddings,
        k: cfg.k,
        clusters: cfg.clusters,
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        cores: std::thread::available_parallelism()
            .map(|c| c.get())
            .unwrap_or(1),
        hd_exactness: computed.plan.graphs[0].exactness,
        columns: computed.columns.len(),
        total_seconds: computed.times.total(),
        stages: computed.times,
        data_seconds,
    })
}
