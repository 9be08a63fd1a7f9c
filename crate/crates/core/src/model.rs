//! The nine-block network: 1×1 stem, blocks of (graph module → Rep-TCN) with a
//! residual, global average pool and a linear classifier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::hpi_gc::{
    hpi_gc_op_fold_bn, hpi_gc_op_forward, hpi_gc_rp_fold_bn, hpi_gc_rp_forward, hpi_gc_rp_fuse,
    HpiGcOpParams, HpiGcRpParams, DEFAULT_PAS, OP_GROUPS,
};
use crate::ops::{global_avg_pool, linear_head, pointwise_conv, relu_in_place, temporal_conv};
use crate::params::{conv_out_len, init, LinearParams, PointwiseConvParams, TemporalConvParams};
use crate::rep_tcn::{
    rep_tcn_forward_infer, rep_tcn_forward_train, rep_tcn_fuse, RepTcnConfig, RepTcnInferParams,
    RepTcnTrainParams, POOL_KERNEL,
};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Shape4, Tensor4};

pub const DEFAULT_CHANNELS: [usize; 9] = [64, 64, 64, 128, 128, 128, 256, 256, 256];
pub const DEFAULT_DOWNSAMPLE: [usize; 2] = [4, 7];
pub const NUM_BLOCKS: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Rp,
    Op,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rp" => Ok(Variant::Rp),
            "op" => Ok(Variant::Op),
            other => Err(format!("unknown architecture `{other}` (expected rp or op)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Rp => "rp",
            Variant::Op => "op",
        })
    }
}

/// Architecture description. Block indices in `downsample_blocks` are 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub k_max: usize,
    pub n_pas: usize,
    pub joints: usize,
    pub num_classes: usize,
    pub in_channels: usize,
    pub channels: Vec<usize>,
    pub downsample_blocks: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockGeometry {
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
}

impl ModelSpec {
    pub fn new(variant: Variant, k_max: usize) -> Self {
        Self {
            variant,
            k_max,
            n_pas: DEFAULT_PAS,
            joints: 25,
            num_classes: 120,
            in_channels: 3,
            channels: DEFAULT_CHANNELS.to_vec(),
            downsample_blocks: DEFAULT_DOWNSAMPLE.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != NUM_BLOCKS {
            return Err(Error::config(format!(
                "channel schedule must have {NUM_BLOCKS} entries, got {}",
                self.channels.len()
            )));
        }
        if self.k_max < 5 || self.k_max.is_multiple_of(2) {
            return Err(Error::config(format!("k_max must be odd and >= 5, got {}", self.k_max)));
        }
        if self.variant == Variant::Rp && self.n_pas == 0 {
            return Err(Error::config("RP variant needs at least one adjacency matrix per block"));
        }
        if self.joints == 0 || self.num_classes == 0 || self.in_channels == 0 {
            return Err(Error::config("joints, classes and input channels must be positive"));
        }
        if self.channels[0] == 0 {
            return Err(Error::config("channel widths must be positive"));
        }
        let mut sorted = self.downsample_blocks.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.downsample_blocks.len()
            || sorted.iter().any(|&b| !(2..=NUM_BLOCKS).contains(&b))
        {
            return Err(Error::config(format!(
                "downsample blocks must be distinct indices in 2..={NUM_BLOCKS}, got {:?}",
                self.downsample_blocks
            )));
        }
        for (i, g) in self.block_geometry().iter().enumerate() {
            let down = g.stride == 2;
            if down && g.c_out != 2 * g.c_in {
                return Err(Error::config(format!(
                    "downsampling block {} must double channels ({} -> {})",
                    i + 1,
                    g.c_in,
                    g.c_out
                )));
            }
            if !down && g.c_out != g.c_in {
                return Err(Error::config(format!(
                    "block {} changes channels ({} -> {}) without downsampling",
                    i + 1,
                    g.c_in,
                    g.c_out
                )));
            }
            if self.variant == Variant::Op && g.c_out % OP_GROUPS != 0 {
                return Err(Error::config(format!(
                    "OP variant needs widths divisible by {OP_GROUPS}; block {} has {}",
                    i + 1,
                    g.c_out
                )));
            }
        }
        Ok(())
    }

    /// Input width, output width and temporal stride of every block.
    pub fn block_geometry(&self) -> Vec<BlockGeometry> {
        (0..self.channels.len())
            .map(|i| BlockGeometry {
                c_in: if i == 0 { self.channels[0] } else { self.channels[i - 1] },
                c_out: self.channels[i],
                stride: if self.downsample_blocks.contains(&(i + 1)) { 2 } else { 1 },
            })
            .collect()
    }

    /// Input frame counts must be divisible by this.
    pub fn time_divisor(&self) -> usize {
        1 << self.downsample_blocks.len()
    }

    pub fn feature_width(&self) -> usize {
        *self.channels.last().unwrap_or(&0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GcParams<S> {
    Rp(HpiGcRpParams<S>),
    Op(HpiGcOpParams<S>),
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum TcnParams<S> {
    Train(RepTcnTrainParams<S>),
    Fused(RepTcnInferParams<S>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Residual<S> {
    None,
    Identity,
    /// 1×1 conv with the block's stride.
    Projection(TemporalConvParams<S>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<S> {
    pub gc: GcParams<S>,
    pub tcn: TcnParams<S>,
    pub residual: Residual<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Structure {
    Train,
    Fused,
}

impl std::fmt::Display for Structure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Structure::Train => "train",
            Structure::Fused => "fused",
        })
    }
}

impl<S: Scalar> BlockParams<S> {
    pub fn pa_count(&self) -> usize {
        match &self.gc {
            GcParams::Rp(p) => p.pas.len(),
            GcParams::Op(p) => p.pas.len(),
        }
    }

    /// Number of temporal kernels the block's TCN evaluates per call.
    pub fn tcn_branch_count(&self) -> usize {
        match &self.tcn {
            TcnParams::Train(p) => p.branch_count(),
            TcnParams::Fused(_) => 1,
        }
    }

    pub fn is_fused(&self) -> bool {
        let gc_fused = match &self.gc {
            GcParams::Rp(p) => p.pas.len() == 1 && p.bn.is_none(),
            GcParams::Op(p) => p.bn.is_none(),
        };
        gc_fused && matches!(self.tcn, TcnParams::Fused(_))
    }

    pub fn param_count(&self) -> usize {
        let gc = match &self.gc {
            GcParams::Rp(p) => p.param_count(),
            GcParams::Op(p) => p.param_count(),
        };
        let tcn = match &self.tcn {
            TcnParams::Train(p) => p.param_count(),
            TcnParams::Fused(p) => p.param_count(),
        };
        let res = match &self.residual {
            Residual::Projection(p) => p.param_count(),
            _ => 0,
        };
        gc + tcn + res
    }

    pub fn forward(&self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        let h = match &self.gc {
            GcParams::Rp(p) => hpi_gc_rp_forward(x, p),
            GcParams::Op(p) => hpi_gc_op_forward(x, p),
        }
        .context(|| "graph module".into())?;
        let mut y = match &self.tcn {
            TcnParams::Train(p) => rep_tcn_forward_train(&h, p),
            TcnParams::Fused(p) => rep_tcn_forward_infer(&h, p),
        }
        .context(|| "temporal module".into())?;
        match &self.residual {
            Residual::None => {}
            Residual::Identity => y.add_assign(x).context(|| "identity residual".into())?,
            Residual::Projection(p) => {
                let r = temporal_conv(x, p).context(|| "residual projection".into())?;
                y.add_assign(&r).context(|| "residual projection".into())?;
            }
        }
        relu_in_place(&mut y);
        Ok(y)
    }

    pub fn cast<D: Scalar>(&self) -> BlockParams<D> {
        BlockParams {
            gc: match &self.gc {
                GcParams::Rp(p) => GcParams::Rp(p.cast()),
                GcParams::Op(p) => GcParams::Op(p.cast()),
            },
            tcn: match &self.tcn {
                TcnParams::Train(p) => TcnParams::Train(p.cast()),
                TcnParams::Fused(p) => TcnParams::Fused(RepTcnInferParams { fused: p.fused.cast() }),
            },
            residual: match &self.residual {
                Residual::None => Residual::None,
                Residual::Identity => Residual::Identity,
                Residual::Projection(p) => Residual::Projection(p.cast()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<S> {
    pub spec: ModelSpec,
    pub stem: PointwiseConvParams<S>,
    pub blocks: Vec<BlockParams<S>>,
    pub head: LinearParams<S>,
}

/// Deterministic random training-structure parameters for `spec`.
pub fn build_model<S: Scalar>(spec: &ModelSpec, seed: u64) -> Result<ModelParams<S>> {
    spec.validate()?;
    let mut rng = Rng::new(seed);
    let stem = init::pointwise(&mut rng, spec.channels[0], spec.in_channels, 1.0, true);
    let mut blocks = Vec::with_capacity(NUM_BLOCKS);
    for (i, g) in spec.block_geometry().into_iter().enumerate() {
        let gc = match spec.variant {
            Variant::Rp => GcParams::Rp(HpiGcRpParams::random(g.c_in, g.c_out, spec.joints, spec.n_pas, &mut rng)?),
            Variant::Op => GcParams::Op(HpiGcOpParams::random(g.c_in, g.c_out, spec.joints, &mut rng)?),
        };
        let cfg = RepTcnConfig::new(g.c_out, g.c_out, spec.k_max, g.stride).context(|| format!("block {}", i + 1))?;
        let tcn = TcnParams::Train(RepTcnTrainParams::random(&cfg, &mut rng)?);
        let residual = if g.c_in == g.c_out && g.stride == 1 {
            Residual::Identity
        } else {
            Residual::Projection(init::temporal(&mut rng, g.c_out, g.c_in, 1, g.stride, 1.0, true))
        };
        blocks.push(BlockParams { gc, tcn, residual });
    }
    let f = spec.feature_width();
    let head = LinearParams::new(
        spec.num_classes,
        f,
        rng.vec(spec.num_classes * f, init::fan_in_bound(f, 1.0)),
        rng.vec(spec.num_classes, 0.1),
    )?;
    Ok(ModelParams {
        spec: spec.clone(),
        stem,
        blocks,
        head,
    })
}

impl<S: Scalar> ModelParams<S> {
    pub fn structure(&self) -> Structure {
        if self.blocks.iter().all(BlockParams::is_fused) {
            Structure::Fused
        } else {
            Structure::Train
        }
    }

    pub fn param_count(&self) -> usize {
        self.stem.param_count()
            + self.blocks.iter().map(BlockParams::param_count).sum::<usize>()
            + self.head.param_count()
    }

    pub fn cast<D: Scalar>(&self) -> ModelParams<D> {
        ModelParams {
            spec: self.spec.clone(),
            stem: self.stem.cast(),
            blocks: self.blocks.iter().map(BlockParams::cast).collect(),
            head: self.head.cast(),
        }
    }

    /// Checks that an input tensor fits the architecture.
    pub fn check_input(&self, shape: Shape4) -> Result<()> {
        let spec = &self.spec;
        let div = spec.time_divisor();
        if shape.c != spec.in_channels || shape.v != spec.joints || !shape.t.is_multiple_of(div) {
            return Err(Error::shape(format!(
                "model expects input (N, {}, T, {}) with T divisible by {div}, got {shape}",
                spec.in_channels, spec.joints
            )));
        }
        Ok(())
    }

    /// Logits plus the output of every block, for diagnostics.
    pub fn forward_trace(&self, x: &Tensor4<S>) -> Result<(Vec<Tensor4<S>>, Matrix<S>)> {
        self.check_input(x.shape())?;
        let mut h = pointwise_conv(x, &self.stem).context(|| "stem".into())?;
        let mut trace = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            h = b.forward(&h).context(|| format!("block {}", i + 1))?;
            trace.push(h.clone());
        }
        let logits = linear_head(&global_avg_pool(&h), &self.head).context(|| "classifier".into())?;
        Ok((trace, logits))
    }
}

/// Class logits (N × num_classes).
pub fn forward<S: Scalar>(params: &ModelParams<S>, x: &Tensor4<S>) -> Result<Matrix<S>> {
    params.check_input(x.shape())?;
    let mut h = pointwise_conv(x, &params.stem).context(|| "stem".into())?;
    for (i, b) in params.blocks.iter().enumerate() {
        h = b.forward(&h).context(|| format!("block {}", i + 1))?;
    }
    linear_head(&global_avg_pool(&h), &params.head).context(|| "classifier".into())
}

/// Re-parameterize every block into its inference structure. Idempotent.
pub fn fuse_model<S: Scalar>(params: &ModelParams<S>) -> Result<ModelParams<S>> {
    let blocks = params
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| fuse_block(b).context(|| format!("block {}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelParams {
        spec: params.spec.clone(),
        stem: params.stem.clone(),
        blocks,
        head: params.head.clone(),
    })
}

fn fuse_block<S: Scalar>(b: &BlockParams<S>) -> Result<BlockParams<S>> {
    let gc = match &b.gc {
        GcParams::Rp(p) => GcParams::Rp(hpi_gc_rp_fold_bn(&hpi_gc_rp_fuse(p)?)?),
        GcParams::Op(p) => GcParams::Op(hpi_gc_op_fold_bn(p)?),
    };
    let tcn = match &b.tcn {
        TcnParams::Train(p) => TcnParams::Fused(rep_tcn_fuse(p)?),
        TcnParams::Fused(p) => TcnParams::Fused(p.clone()),
    };
    Ok(BlockParams {
        gc,
        tcn,
        residual: b.residual.clone(),
    })
}

/// Analytic FLOP and parameter totals for one piece of the network.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CostEntry {
    pub name: String,
    pub flops: u64,
    pub params: u64,
}

/// FLOPs count each multiply-add as two operations. Only convolutions,
/// graph products, pooling windows and the classifier are counted; batch
/// norm, ReLU and residual additions are not.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlopParamReport {
    pub total_flops: u64,
    pub total_params: u64,
    pub entries: Vec<CostEntry>,
}

impl FlopParamReport {
    pub fn gflops(&self) -> f64 {
        self.total_flops as f64 / 1e9
    }

    pub fn mparams(&self) -> f64 {
        self.total_params as f64 / 1e6
    }
}

fn conv_flops(n: usize, c_out: usize, c_in: usize, k: usize, t_out: usize, v: usize) -> u64 {
    2 * (n * c_out * c_in * k * t_out * v) as u64
}

fn graph_flops(n: usize, c: usize, t: usize, v: usize) -> u64 {
    2 * (n * c * t * v * v) as u64
}

/// Count FLOPs and parameters for an input of `input` shape without executing.
pub fn count_flops_params<S: Scalar>(params: &ModelParams<S>, input: Shape4) -> Result<FlopParamReport> {
    params.check_input(input)?;
    let (n, v) = (input.n, input.v);
    let mut t = input.t;
    let mut entries = Vec::new();
    entries.push(CostEntry {
        name: "stem".into(),
        flops: conv_flops(n, params.stem.c_out, params.stem.c_in, 1, t, v),
        params: params.stem.param_count() as u64,
    });
    for (i, b) in params.blocks.iter().enumerate() {
        let mut flops = 0;
        let (pre, post, n_graph, width) = match &b.gc {
            GcParams::Rp(p) => (&p.pre, &p.post, p.pas.len(), p.pre.c_out),
            // each of the 8 groups multiplies C/8 channels: same total as one full-width product
            GcParams::Op(p) => (&p.pre, &p.post, 1, p.pre.c_out),
        };
        flops += conv_flops(n, pre.c_out, pre.c_in, 1, t, v);
        flops += n_graph as u64 * graph_flops(n, width, t, v);
        flops += conv_flops(n, post.c_out, post.c_in, 1, t, v);
        let t_in = t;
        match &b.tcn {
            TcnParams::Fused(p) => {
                let f = &p.fused;
                t = f.out_len(t_in)?;
                flops += conv_flops(n, f.c_out, f.c_in, f.kernel, t, v);
            }
            TcnParams::Train(p) => {
                let stride = p.stride().unwrap_or(1);
                if let Some(a) = &p.a {
                    t = a.conv.out_len(t_in)?;
                    flops += conv_flops(n, a.conv.c_out, a.conv.c_in, a.conv.kernel, t, v);
                }
                for br in [&p.b, &p.c].into_iter().flatten() {
                    flops += conv_flops(n, br.first.c_out, br.first.c_in, 1, t_in, v);
                    t = br.second.out_len(t_in)?;
                    flops += conv_flops(n, br.second.c_out, br.second.c_in, br.second.kernel, t, v);
                }
                if let Some(d) = &p.d {
                    t = conv_out_len(t_in, d.kernel, stride, d.padding)?;
                    flops += 2 * (n * d.bn.channels() * POOL_KERNEL.min(d.kernel) * t * v) as u64;
                }
            }
        }
        if let Residual::Projection(r) = &b.residual {
            flops += conv_flops(n, r.c_out, r.c_in, 1, r.out_len(t_in)?, v);
        }
        entries.push(CostEntry {
            name: format!("block{}", i + 1),
            flops,
            params: b.param_count() as u64,
        });
    }
    entries.push(CostEntry {
        name: "head".into(),
        flops: 2 * (n * params.head.in_features * params.head.out_features) as u64,
        params: params.head.param_count() as u64,
    });
    Ok(FlopParamReport {
        total_flops: entries.iter().map(|e| e.flops).sum(),
        total_params: entries.iter().map(|e| e.params).sum(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_spec(variant: Variant, k_max: usize) -> ModelSpec {
        ModelSpec {
            channels: vec![8, 8, 8, 16, 16, 16, 32, 32, 32],
            joints: 5,
            num_classes: 6,
            n_pas: 3,
            ..ModelSpec::new(variant, k_max)
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(Variant::Rp, 5).validate().is_ok());
        assert!(ModelSpec::new(Variant::Op, 9).validate().is_ok());
        assert!(ModelSpec::new(Variant::Rp, 4).validate().is_err());
        let mut s = ModelSpec::new(Variant::Rp, 5);
        s.n_pas = 0;
        assert!(s.validate().is_err());
        let mut s = ModelSpec::new(Variant::Rp, 5);
        s.channels.pop();
        assert!(s.validate().is_err());
        let mut s = ModelSpec::new(Variant::Rp, 5);
        s.downsample_blocks = vec![4, 6];
        assert!(s.validate().is_err());
        let mut s = ModelSpec::new(Variant::Op, 5);
        s.channels = vec![12, 12, 12, 24, 24, 24, 48, 48, 48];
        assert!(s.validate().is_err());
    }

    #[test]
    fn geometry_doubles_and_halves_at_four_and_seven() {
        let g = ModelSpec::new(Variant::Rp, 5).block_geometry();
        let strides: Vec<_> = g.iter().map(|b| b.stride).collect();
        assert_eq!(strides, vec![1, 1, 1, 2, 1, 1, 2, 1, 1]);
        assert_eq!((g[3].c_in, g[3].c_out), (64, 128));
        assert_eq!((g[6].c_in, g[6].c_out), (128, 256));
    }

    #[test]
    fn build_is_deterministic() {
        let spec = small_spec(Variant::Rp, 5);
        let a = build_model::<f32>(&spec, 3).unwrap();
        assert_eq!(a, build_model::<f32>(&spec, 3).unwrap());
        assert_ne!(a, build_model::<f32>(&spec, 4).unwrap());
        assert_eq!(build_model::<f64>(&spec, 3).unwrap().cast::<f32>(), a);
    }

    #[test]
    fn shapes_through_the_stack() {
        let spec = small_spec(Variant::Op, 5);
        let m = build_model::<f32>(&spec, 1).unwrap();
        let x = Rng::new(2).tensor::<f32>(Shape4::new(2, 3, 16, 5), 1.0);
        let (trace, logits) = m.forward_trace(&x).unwrap();
        let ts: Vec<_> = trace.iter().map(|h| h.shape().t).collect();
        assert_eq!(ts, vec![16, 16, 16, 8, 8, 8, 4, 4, 4]);
        let cs: Vec<_> = trace.iter().map(|h| h.shape().c).collect();
        assert_eq!(cs, spec.channels);
        assert_eq!((logits.rows, logits.cols), (2, 6));
        assert!(forward(&m, &Rng::new(0).tensor::<f32>(Shape4::new(1, 3, 10, 5), 1.0)).is_err());
    }

    #[test]
    fn fuse_is_idempotent_and_equivalent() {
        for variant in [Variant::Rp, Variant::Op] {
            for k in [5, 9] {
                let spec = small_spec(variant, k);
                let m = build_model::<f64>(&spec, 11).unwrap();
                let f = fuse_model(&m).unwrap();
                assert_eq!(f.structure(), Structure::Fused);
                assert_eq!(m.structure(), Structure::Train);
                assert_eq!(fuse_model(&f).unwrap(), f);
                let x = Rng::new(5).tensor::<f64>(Shape4::new(2, 3, 16, 5), 1.0);
                let d = forward(&m, &x).unwrap().max_abs_diff(&forward(&f, &x).unwrap()).unwrap();
                assert!(d <= 1e-9, "{variant} k{k}: {d}");
                assert!(f.param_count() < m.param_count());
            }
        }
    }

    #[test]
    fn zero_input_and_zero_biases_give_zero_pre_head_logits() {
        let spec = small_spec(Variant::Rp, 5);
        let mut m = fuse_model(&build_model::<f64>(&spec, 2).unwrap()).unwrap();
        m.stem.bias = None;
        for b in &mut m.blocks {
            if let GcParams::Rp(p) = &mut b.gc {
                p.pre.bias = None;
                p.post.bias = None;
            }
            if let TcnParams::Fused(p) = &mut b.tcn {
                p.fused.bias.fill(0.0);
            }
            if let Residual::Projection(r) = &mut b.residual {
                r.bias.fill(0.0);
            }
        }
        m.head.bias.fill(0.0);
        let x = Tensor4::zeros(Shape4::new(1, 3, 8, 5)).unwrap();
        assert!(forward(&m, &x).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_conv_flops_example() {
        // 2 * 64 * 3 * 1 * 64 * 25
        assert_eq!(conv_flops(1, 64, 3, 1, 64, 25), 614_400);
    }

    #[test]
    fn op_and_fused_rp_flops_match() {
        for k in [5, 9] {
            let rp = fuse_model(&build_model::<f32>(&ModelSpec::new(Variant::Rp, k), 0).unwrap()).unwrap();
            let op = fuse_model(&build_model::<f32>(&ModelSpec::new(Variant::Op, k), 0).unwrap()).unwrap();
            let shape = Shape4::new(1, 3, 64, 25);
            assert_eq!(
                count_flops_params(&rp, shape).unwrap().total_flops,
                count_flops_params(&op, shape).unwrap().total_flops
            );
        }
    }
}
