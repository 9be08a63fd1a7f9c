//! Wall-clock timing of whole-model forward passes.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{forward, ModelParams};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Shape4;

pub const MIN_WARMUP: usize = 5;
pub const MIN_MEASURED: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub structure: String,
    pub batch: usize,
    pub dtype: String,
    pub threads: usize,
    pub warmup_iters: usize,
    pub measured_iters: usize,
    pub median_ms: f64,
    pub p10_ms: f64,
    pub p90_ms: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct BenchConfig {
    pub batch: usize,
    pub frames: usize,
    pub warmup: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            batch: 64,
            frames: 64,
            warmup: MIN_WARMUP,
            iters: MIN_MEASURED,
            seed: 0,
        }
    }
}

/// Worker threads a forward pass can use under the current execution mode.
pub fn active_threads() -> usize {
    #[cfg(feature = "parallel")]
    if exec::parallel_enabled() {
        return rayon::current_num_threads();
    }
    let _ = exec::parallel_enabled;
    1
}

/// Linear-interpolated percentile of sorted samples, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Times `forward` on one preallocated random input. Warmup and measured
/// counts below the minimums are rejected.
pub fn bench_forward<S: Scalar>(params: &ModelParams<S>, cfg: &BenchConfig) -> Result<BenchReport> {
    let mut reports = bench_interleaved(&[params], cfg)?;
    Ok(reports.remove(0))
}

/// Time several models on the same host conditions.
///
/// Every model gets `cfg.warmup` warmup passes, then `cfg.iters` rounds run
/// each model once in turn. A slow stretch on the host lands in the same
/// rounds for every model instead of inflating whichever one was running.
pub fn bench_interleaved<S: Scalar>(models: &[&ModelParams<S>], cfg: &BenchConfig) -> Result<Vec<BenchReport>> {
    if cfg.warmup < MIN_WARMUP || cfg.iters < MIN_MEASURED {
        return Err(Error::config(format!(
            "benchmark needs at least {MIN_WARMUP} warmup and {MIN_MEASURED} measured iterations, got {} and {}",
            cfg.warmup, cfg.iters
        )));
    }
    let inputs = models
        .iter()
        .map(|params| {
            let shape = Shape4::new(cfg.batch, params.spec.in_channels, cfg.frames, params.spec.joints);
            params.check_input(shape)?;
            Ok(Rng::new(cfg.seed).tensor::<S>(shape, 1.0))
        })
        .collect::<Result<Vec<_>>>()?;
    for (params, x) in models.iter().zip(&inputs) {
        for _ in 0..cfg.warmup {
            std::hint::black_box(forward(params, x)?);
        }
    }
    let mut samples = vec![Vec::with_capacity(cfg.iters); models.len()];
    for _ in 0..cfg.iters {
        for ((params, x), times) in models.iter().zip(&inputs).zip(&mut samples) {
            let start = Instant::now();
            std::hint::black_box(forward(params, x)?);
            times.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    Ok(models
        .iter()
        .zip(samples)
        .map(|(params, mut times)| {
            times.sort_by(f64::total_cmp);
            BenchReport {
                structure: params.structure().to_string(),
                batch: cfg.batch,
                dtype: S::DTYPE.name().to_string(),
                threads: active_threads(),
                warmup_iters: cfg.warmup,
                measured_iters: cfg.iters,
                median_ms: percentile(&times, 0.5),
                p10_ms: percentile(&times, 0.1),
                p90_ms: percentile(&times, 0.9),
            }
        })
        .collect())
}
