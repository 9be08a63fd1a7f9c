use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hpigcn::bench::{bench_forward, bench_interleaved, BenchConfig, BenchReport, MIN_MEASURED, MIN_WARMUP};
use hpigcn::ensemble::ensemble_average;
use hpigcn::io::{load_matrix, load_tensor, model_from_store, model_to_store, save_matrix, ConfigDocument, WeightStore};
use hpigcn::model::{build_model, forward, fuse_model, ModelParams, ModelSpec, Structure, Variant};
use hpigcn::rng::Rng;
use hpigcn::{DType, Scalar, Shape4};

#[derive(Parser)]
#[command(name = "hpigcn", version, about = "Build, fuse, verify and benchmark HPI-GCN skeleton models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a random training-structure model and write PREFIX.toml and PREFIX.hpiw.
    Init(InitArgs),
    /// Re-parameterize a training-structure model into its inference structure.
    Fuse(FuseArgs),
    /// Check that the fused structure reproduces the training structure on random inputs.
    Verify(VerifyArgs),
    /// Run one forward pass over a stored input tensor.
    Infer(InferArgs),
    /// Time forward passes and print a JSON report.
    Bench(BenchArgs),
    /// Average per-stream class scores and pick the top class per sample.
    Ensemble(EnsembleArgs),
}

#[derive(Args)]
struct ModelFiles {
    /// Config document (TOML).
    #[arg(long)]
    model: PathBuf,
    /// Weight file (HPIW).
    #[arg(long)]
    weights: PathBuf,
}

#[derive(Args)]
struct InitArgs {
    #[arg(long, default_value = "rp")]
    arch: Variant,
    #[arg(long, default_value_t = 5)]
    kmax: usize,
    /// Adjacency matrices per block (RP variant).
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    pas: u32,
    #[arg(long, default_value_t = 25)]
    joints: usize,
    #[arg(long, default_value_t = 120)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "f32")]
    dtype: DTypeArg,
    /// Output prefix; writes PREFIX.toml and PREFIX.hpiw.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    #[command(flatten)]
    files: ModelFiles,
    /// Output prefix; writes PREFIX.toml and PREFIX.hpiw.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    files: ModelFiles,
    /// Maximum allowed |Δ| on the logits (default 1e-4 for f32, 1e-9 for f64).
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Engine dtype; weights are converted if they are stored in the other one.
    #[arg(long, value_enum)]
    dtype: Option<DTypeArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    batch: usize,
    #[arg(long, default_value_t = 64)]
    frames: usize,
    /// Compare against this fused config instead of fusing in memory.
    #[arg(long, requires = "fused_weights")]
    fused_model: Option<PathBuf>,
    #[arg(long, requires = "fused_model")]
    fused_weights: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    files: ModelFiles,
    /// Input tensor file holding one (N, C, T, V) tensor.
    #[arg(long)]
    input: PathBuf,
    /// Output score file.
    #[arg(long)]
    out: PathBuf,
    /// Engine dtype; weights are converted if they are stored in the other one.
    #[arg(long, value_enum)]
    dtype: Option<DTypeArg>,
    /// Convert the input tensor when its dtype differs from the engine dtype.
    #[arg(long)]
    convert_input: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Train,
    Fused,
    Both,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    files: ModelFiles,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 64)]
    frames: usize,
    #[arg(long, value_enum, default_value = "both")]
    mode: Mode,
    /// Measured iterations.
    #[arg(long, default_value_t = MIN_MEASURED)]
    iters: usize,
    #[arg(long, default_value_t = MIN_WARMUP)]
    warmup: usize,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    dtype: Option<DTypeArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Score files, one per stream.
    #[arg(long, num_args = 1.., required = true)]
    scores: Vec<PathBuf>,
    /// Per-stream weights (default: uniform).
    #[arg(long, num_args = 1..)]
    weights: Option<Vec<f64>>,
    /// Output file for the averaged scores.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DTypeArg {
    F32,
    F64,
}

impl From<DTypeArg> for DType {
    fn from(d: DTypeArg) -> Self {
        match d {
            DTypeArg::F32 => DType::F32,
            DTypeArg::F64 => DType::F64,
        }
    }
}

/// Failure modes with their exit codes.
enum Failure {
    Verification(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Init(a) => cmd_init(a).map_err(Failure::from),
        Command::Fuse(a) => cmd_fuse(a).map_err(Failure::from),
        Command::Verify(a) => cmd_verify(a),
        Command::Infer(a) => cmd_infer(a).map_err(Failure::from),
        Command::Bench(a) => cmd_bench(a).map_err(Failure::from),
        Command::Ensemble(a) => cmd_ensemble(a).map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn prefixed(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_model<S: Scalar>(params: &ModelParams<S>, prefix: &Path) -> Result<(PathBuf, PathBuf)> {
    let (cfg, w) = (prefixed(prefix, "toml"), prefixed(prefix, "hpiw"));
    ConfigDocument::new(&params.spec, params.structure())
        .write(&cfg)
        .with_context(|| format!("writing {}", cfg.display()))?;
    model_to_store(params)?
        .write(&w)
        .with_context(|| format!("writing {}", w.display()))?;
    Ok((cfg, w))
}

enum AnyModel {
    F32(ModelParams<f32>),
    F64(ModelParams<f64>),
}

/// Loads a model in `want` (converting) or, if unset, in its stored dtype.
fn load_any(files: &ModelFiles, want: Option<DTypeArg>) -> Result<AnyModel> {
    let doc = ConfigDocument::read(&files.model).with_context(|| format!("reading {}", files.model.display()))?;
    let store = WeightStore::read(&files.weights).with_context(|| format!("reading {}", files.weights.display()))?;
    let dtype = match want {
        Some(d) => d.into(),
        None => store
            .dtype()
            .ok_or_else(|| anyhow!("weights mix dtypes; pass --dtype to pick an engine dtype"))?,
    };
    let convert = want.is_some();
    Ok(match dtype {
        DType::F32 => AnyModel::F32(model_from_store(&doc, &store, convert)?),
        DType::F64 => AnyModel::F64(model_from_store(&doc, &store, convert)?),
    })
}

fn cmd_init(a: InitArgs) -> Result<()> {
    let spec = ModelSpec {
        n_pas: a.pas as usize,
        joints: a.joints,
        num_classes: a.classes,
        ..ModelSpec::new(a.arch, a.kmax)
    };
    let (cfg, w) = match a.dtype {
        DTypeArg::F32 => write_model(&build_model::<f32>(&spec, a.seed)?, &a.out)?,
        DTypeArg::F64 => write_model(&build_model::<f64>(&spec, a.seed)?, &a.out)?,
    };
    println!("wrote {} and {}", cfg.display(), w.display());
    Ok(())
}

fn fuse_and_report<S: Scalar>(params: &ModelParams<S>, out: &Path) -> Result<()> {
    if params.structure() == Structure::Fused {
        println!("model is already fused; nothing to do");
        return Ok(());
    }
    let fused = fuse_model(params)?;
    for (i, (t, f)) in params.blocks.iter().zip(&fused.blocks).enumerate() {
        println!(
            "block {}: PAs {} -> {}, temporal branches {} -> {}",
            i + 1,
            t.pa_count(),
            f.pa_count(),
            t.tcn_branch_count(),
            f.tcn_branch_count()
        );
    }
    println!("parameters: {} -> {}", params.param_count(), fused.param_count());
    let (cfg, w) = write_model(&fused, out)?;
    println!("wrote {} and {}", cfg.display(), w.display());
    Ok(())
}

fn cmd_fuse(a: FuseArgs) -> Result<()> {
    match load_any(&a.files, None)? {
        AnyModel::F32(p) => fuse_and_report(&p, &a.out),
        AnyModel::F64(p) => fuse_and_report(&p, &a.out),
    }
}

fn verify_typed<S: Scalar>(
    train: &ModelParams<S>,
    fused: &ModelParams<S>,
    a: &VerifyArgs,
) -> std::result::Result<(), Failure> {
    let tol = a.tolerance.unwrap_or(match S::DTYPE {
        DType::F32 => 1e-4,
        DType::F64 => 1e-9,
    });
    if a.trials == 0 {
        return Err(anyhow!("--trials must be at least 1").into());
    }
    if train.spec != fused.spec {
        return Err(anyhow!("fused config describes a different architecture").into());
    }
    let shape = Shape4::new(a.batch, train.spec.in_channels, a.frames, train.spec.joints);
    let mut worst = (f64::NEG_INFINITY, 0usize, Vec::new());
    for trial in 0..a.trials {
        let x = Rng::new(a.seed.wrapping_add(trial as u64)).tensor::<S>(shape, 1.0);
        let (ta, la) = train.forward_trace(&x).map_err(anyhow::Error::from)?;
        let (tb, lb) = fused.forward_trace(&x).map_err(anyhow::Error::from)?;
        let d = la.max_abs_diff(&lb).map_err(anyhow::Error::from)?.to_f64_lossless();
        if d.is_nan() || d > worst.0 {
            let blocks = ta
                .iter()
                .zip(&tb)
                .map(|(p, q)| p.max_abs_diff(q).map(|v| v.to_f64_lossless()))
                .collect::<hpigcn::Result<Vec<_>>>()
                .map_err(anyhow::Error::from)?;
            worst = (d, trial, blocks);
        }
        if d.is_nan() {
            break;
        }
    }
    let (d, trial, blocks) = worst;
    println!(
        "max |Δ| = {d:e} over {} trial(s) (dtype {}, tolerance {tol:e})",
        a.trials,
        S::DTYPE
    );
    if d <= tol {
        return Ok(());
    }
    let (worst_block, _) = blocks
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 || v.is_nan() { (i, v) } else { acc });
    let first_over = blocks.iter().position(|&v| v.is_nan() || v > tol);
    eprintln!("worst trial {trial}; per-block max |Δ|:");
    for (i, v) in blocks.iter().enumerate() {
        let mut mark = String::new();
        if Some(i) == first_over {
            mark.push_str("  <- first over tolerance");
        }
        if i == worst_block {
            mark.push_str("  <- worst");
        }
        eprintln!("  block {}: {v:e}{mark}", i + 1);
    }
    Err(Failure::Verification(format!("max |Δ| {d:e} exceeds {tol:e}")))
}

fn cmd_verify(a: VerifyArgs) -> std::result::Result<(), Failure> {
    let train = load_any(&a.files, a.dtype)?;
    let fused_files = match (&a.fused_model, &a.fused_weights) {
        (Some(m), Some(w)) => Some(ModelFiles {
            model: m.clone(),
            weights: w.clone(),
        }),
        _ => None,
    };
    // Both sides run in the training model's engine dtype.
    let engine = a.dtype.or(Some(match &train {
        AnyModel::F32(_) => DTypeArg::F32,
        AnyModel::F64(_) => DTypeArg::F64,
    }));
    let fused = fused_files.map(|f| load_any(&f, engine)).transpose()?;
    match (train, fused) {
        (AnyModel::F32(t), Some(AnyModel::F32(f))) => verify_typed(&t, &f, &a),
        (AnyModel::F64(t), Some(AnyModel::F64(f))) => verify_typed(&t, &f, &a),
        (AnyModel::F32(t), None) => verify_typed(&t, &fuse_model(&t).map_err(anyhow::Error::from)?, &a),
        (AnyModel::F64(t), None) => verify_typed(&t, &fuse_model(&t).map_err(anyhow::Error::from)?, &a),
        _ => unreachable!("both models load in the same engine dtype"),
    }
}

fn infer_typed<S: Scalar>(params: &ModelParams<S>, a: &InferArgs) -> Result<()> {
    let x = load_tensor::<S>(&a.input, a.convert_input).with_context(|| format!("reading {}", a.input.display()))?;
    let scores = forward(params, &x)?;
    save_matrix(&a.out, "scores", &scores).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "wrote {} x {} scores to {}",
        scores.rows,
        scores.cols,
        a.out.display()
    );
    Ok(())
}

fn cmd_infer(a: InferArgs) -> Result<()> {
    match load_any(&a.files, a.dtype)? {
        AnyModel::F32(p) => infer_typed(&p, &a),
        AnyModel::F64(p) => infer_typed(&p, &a),
    }
}

fn bench_typed<S: Scalar>(params: &ModelParams<S>, a: &BenchArgs) -> Result<serde_json::Value> {
    let cfg = BenchConfig {
        batch: a.batch,
        frames: a.frames,
        warmup: a.warmup,
        iters: a.iters,
        seed: a.seed,
    };
    let is_train = params.structure() == Structure::Train;
    if a.mode != Mode::Fused && !is_train {
        bail!("--mode train/both needs a training-structure model");
    }
    let run = |p: &ModelParams<S>| -> Result<BenchReport> { Ok(bench_forward(p, &cfg)?) };
    Ok(match a.mode {
        Mode::Train => serde_json::to_value(run(params)?)?,
        Mode::Fused => {
            let fused = if is_train { fuse_model(params)? } else { params.clone() };
            serde_json::to_value(run(&fused)?)?
        }
        Mode::Both => {
            let fused = fuse_model(params)?;
            let mut reports = bench_interleaved(&[params, &fused], &cfg)?.into_iter();
            let (train, fused) = (reports.next().unwrap(), reports.next().unwrap());
            let speedup = train.median_ms / fused.median_ms;
            json!({ "train": train, "fused": fused, "speedup": speedup })
        }
    })
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let model = load_any(&a.files, a.dtype)?;
    let body = || match &model {
        AnyModel::F32(p) => bench_typed(p, &a),
        AnyModel::F64(p) => bench_typed(p, &a),
    };
    #[cfg(feature = "parallel")]
    let report = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = a.threads {
            if n == 0 {
                bail!("--threads must be at least 1");
            }
            builder = builder.num_threads(n);
        }
        builder.build()?.install(body)?
    };
    #[cfg(not(feature = "parallel"))]
    let report = {
        if a.threads.is_some_and(|n| n != 1) {
            bail!("this build has no parallel support; --threads must be 1");
        }
        body()?
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_ensemble(a: EnsembleArgs) -> Result<()> {
    let streams = a
        .scores
        .iter()
        .map(|p| load_matrix::<f64>(p, true).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let result = ensemble_average(&streams, a.weights.as_deref())?;
    save_matrix(&a.out, "scores", &result.scores).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", json!({ "predictions": result.predictions }));
    Ok(())
}
