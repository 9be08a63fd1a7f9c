//! Re-parameterized temporal convolution.
//!
//! Training structure: four parallel branches without nonlinearities,
//!
//! * A: K_max×1 conv → BN
//! * B: 1×1 conv → 5×1 conv → BN
//! * C: 1×1 conv → 3×1 conv → BN
//! * D: 3×1 average pool → BN (only when C_in == C_out)
//!
//! summed element-wise. Inference structure: one K_max×1 conv.

use crate::blending::{
    blend1_avgpool_to_conv, blend2_fuse_bn, blend3_fuse_serial, merge_branches, SerialBranchParams,
};
use crate::error::{Error, Result, ResultExt};
use crate::ops::{avg_pool_time, batch_norm_infer, pointwise_conv, temporal_conv};
use crate::params::{init, same_padding, BatchNormParams, TemporalConvParams};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

pub const SERIAL_B_KERNEL: usize = 5;
pub const SERIAL_C_KERNEL: usize = 3;
pub const POOL_KERNEL: usize = 3;

/// Which branches a Rep-TCN block trains with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BranchSet {
    pub a: bool,
    pub b: bool,
    pub c: bool,
    pub d: bool,
}

impl BranchSet {
    pub const ALL: BranchSet = BranchSet {
        a: true,
        b: true,
        c: true,
        d: true,
    };
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepTcnConfig {
    pub c_in: usize,
    pub c_out: usize,
    pub k_max: usize,
    pub stride: usize,
    pub branches: BranchSet,
}

impl RepTcnConfig {
    /// Default four-branch inventory; the pooling branch is dropped when channels change.
    pub fn new(c_in: usize, c_out: usize, k_max: usize, stride: usize) -> Result<Self> {
        let cfg = Self {
            c_in,
            c_out,
            k_max,
            stride,
            branches: BranchSet {
                d: c_in == c_out,
                ..BranchSet::ALL
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max < SERIAL_B_KERNEL || self.k_max.is_multiple_of(2) {
            return Err(Error::config(format!(
                "Rep-TCN maximum kernel must be odd and >= 5, got {}",
                self.k_max
            )));
        }
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::config(format!("Rep-TCN stride must be 1 or 2, got {}", self.stride)));
        }
        if self.c_in == 0 || self.c_out == 0 {
            return Err(Error::config("Rep-TCN channel counts must be positive"));
        }
        let b = self.branches;
        if !(b.a || b.b || b.c || b.d) {
            return Err(Error::config("Rep-TCN needs at least one branch"));
        }
        if b.d && self.c_in != self.c_out {
            return Err(Error::config(format!(
                "pooling branch cannot map {} channels to {}",
                self.c_in, self.c_out
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBnBranch<S> {
    pub conv: TemporalConvParams<S>,
    pub bn: BatchNormParams<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolBnBranch<S> {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub bn: BatchNormParams<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepTcnTrainParams<S> {
    pub k_max: usize,
    pub a: Option<ConvBnBranch<S>>,
    pub b: Option<SerialBranchParams<S>>,
    pub c: Option<SerialBranchParams<S>>,
    pub d: Option<PoolBnBranch<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepTcnInferParams<S> {
    pub fused: TemporalConvParams<S>,
}

impl<S: Scalar> RepTcnInferParams<S> {
    pub fn param_count(&self) -> usize {
        self.fused.param_count()
    }
}

impl<S: Scalar> RepTcnTrainParams<S> {
    /// Random training parameters. Branch outputs are scaled so their sum stays O(1).
    pub fn random(cfg: &RepTcnConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let (c_in, c_out, s) = (cfg.c_in, cfg.c_out, cfg.stride);
        let gain = 0.5;
        let a = cfg.branches.a.then(|| ConvBnBranch {
            conv: init::temporal(rng, c_out, c_in, cfg.k_max, s, gain, true),
            bn: init::batch_norm(rng, c_out, 0.5, 1.5),
        });
        let serial = |k: usize, rng: &mut Rng| SerialBranchParams {
            first: init::pointwise(rng, c_out, c_in, 1.0, false),
            second: init::temporal(rng, c_out, c_out, k, s, gain, false),
            bn: init::batch_norm(rng, c_out, 0.5, 1.5),
        };
        let b = cfg.branches.b.then(|| serial(SERIAL_B_KERNEL, rng));
        let c = cfg.branches.c.then(|| serial(SERIAL_C_KERNEL, rng));
        let d = cfg.branches.d.then(|| PoolBnBranch {
            kernel: POOL_KERNEL,
            stride: s,
            padding: same_padding(POOL_KERNEL),
            bn: init::batch_norm(rng, c_out, 0.25, 0.75),
        });
        let p = Self { k_max: cfg.k_max, a, b, c, d };
        p.validate()?;
        Ok(p)
    }

    pub fn c_in(&self) -> Option<usize> {
        self.a
            .as_ref()
            .map(|a| a.conv.c_in)
            .or_else(|| self.b.as_ref().map(|b| b.first.c_in))
            .or_else(|| self.c.as_ref().map(|c| c.first.c_in))
            .or_else(|| self.d.as_ref().map(|d| d.bn.channels()))
    }

    pub fn c_out(&self) -> Option<usize> {
        self.a
            .as_ref()
            .map(|a| a.conv.c_out)
            .or_else(|| self.b.as_ref().map(|b| b.second.c_out))
            .or_else(|| self.c.as_ref().map(|c| c.second.c_out))
            .or_else(|| self.d.as_ref().map(|d| d.bn.channels()))
    }

    pub fn stride(&self) -> Option<usize> {
        self.a
            .as_ref()
            .map(|a| a.conv.stride)
            .or_else(|| self.b.as_ref().map(|b| b.second.stride))
            .or_else(|| self.c.as_ref().map(|c| c.second.stride))
            .or_else(|| self.d.as_ref().map(|d| d.stride))
    }

    pub fn branch_count(&self) -> usize {
        [self.a.is_some(), self.b.is_some(), self.c.is_some(), self.d.is_some()]
            .iter()
            .filter(|&&x| x)
            .count()
    }

    /// Checks that all branches agree on channels, stride and output geometry.
    pub fn validate(&self) -> Result<()> {
        let (c_in, c_out, stride) = match (self.c_in(), self.c_out(), self.stride()) {
            (Some(i), Some(o), Some(s)) => (i, o, s),
            _ => return Err(Error::config("Rep-TCN has no branches")),
        };
        if self.k_max.is_multiple_of(2) {
            return Err(Error::config(format!("Rep-TCN maximum kernel {} is even", self.k_max)));
        }
        let check_conv = |name: &str, p: &TemporalConvParams<S>, c_in: usize| -> Result<()> {
            if (p.c_in, p.c_out, p.stride) != (c_in, c_out, stride)
                || p.kernel > self.k_max
                || p.kernel.is_multiple_of(2)
                || p.padding != same_padding(p.kernel)
            {
                return Err(Error::config(format!(
                    "branch {name}: conv ({}->{}, k={}, stride={}, pad={}) does not fit block ({c_in}->{c_out}, k_max={}, stride={stride})",
                    p.c_in, p.c_out, p.kernel, p.stride, p.padding, self.k_max
                )));
            }
            Ok(())
        };
        if let Some(a) = &self.a {
            check_conv("A", &a.conv, c_in)?;
            if a.bn.channels() != c_out {
                return Err(Error::shape("branch A: batch norm width differs from conv outputs"));
            }
        }
        for (name, br) in [("B", &self.b), ("C", &self.c)] {
            if let Some(br) = br {
                br.validate().context(|| format!("branch {name}"))?;
                if br.first.c_in != c_in {
                    return Err(Error::config(format!("branch {name}: input channels differ")));
                }
                check_conv(name, &br.second, br.first.c_out)?;
            }
        }
        if let Some(d) = &self.d {
            if c_in != c_out || d.bn.channels() != c_out {
                return Err(Error::config("branch D: pooling needs C_in == C_out"));
            }
            if d.stride != stride || d.kernel % 2 == 0 || d.kernel > self.k_max || d.padding != same_padding(d.kernel) {
                return Err(Error::config("branch D: pooling geometry does not fit block"));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.a.as_ref().map_or(0, |a| a.conv.param_count() + a.bn.param_count())
            + self.b.as_ref().map_or(0, |b| b.param_count())
            + self.c.as_ref().map_or(0, |c| c.param_count())
            + self.d.as_ref().map_or(0, |d| d.bn.param_count())
    }

    pub fn cast<D: Scalar>(&self) -> RepTcnTrainParams<D> {
        RepTcnTrainParams {
            k_max: self.k_max,
            a: self.a.as_ref().map(|a| ConvBnBranch {
                conv: a.conv.cast(),
                bn: a.bn.cast(),
            }),
            b: self.b.as_ref().map(cast_serial),
            c: self.c.as_ref().map(cast_serial),
            d: self.d.as_ref().map(|d| PoolBnBranch {
                kernel: d.kernel,
                stride: d.stride,
                padding: d.padding,
                bn: d.bn.cast(),
            }),
        }
    }
}

fn cast_serial<S: Scalar, D: Scalar>(b: &SerialBranchParams<S>) -> SerialBranchParams<D> {
    SerialBranchParams {
        first: b.first.cast(),
        second: b.second.cast(),
        bn: b.bn.cast(),
    }
}

/// Output of each present branch, in order A, B, C, D.
pub fn branch_outputs<S: Scalar>(
    x: &Tensor4<S>,
    p: &RepTcnTrainParams<S>,
) -> Result<Vec<(&'static str, Tensor4<S>)>> {
    p.validate()?;
    let mut outs = Vec::with_capacity(4);
    if let Some(a) = &p.a {
        let y = batch_norm_infer(&temporal_conv(x, &a.conv)?, &a.bn).context(|| "branch A".into())?;
        outs.push(("A", y));
    }
    for (name, br) in [("B", &p.b), ("C", &p.c)] {
        if let Some(br) = br {
            let y = (|| batch_norm_infer(&temporal_conv(&pointwise_conv(x, &br.first)?, &br.second)?, &br.bn))()
                .context(|| format!("branch {name}"))?;
            outs.push((name, y));
        }
    }
    if let Some(d) = &p.d {
        let y = batch_norm_infer(&avg_pool_time(x, d.kernel, d.stride, d.padding)?, &d.bn)
            .context(|| "branch D".into())?;
        outs.push(("D", y));
    }
    Ok(outs)
}

/// Training-structure forward: the element-wise sum of all branches.
pub fn rep_tcn_forward_train<S: Scalar>(x: &Tensor4<S>, p: &RepTcnTrainParams<S>) -> Result<Tensor4<S>> {
    let mut outs = branch_outputs(x, p)?.into_iter();
    let (_, mut acc) = outs.next().expect("validated non-empty");
    for (_, y) in outs {
        acc.add_assign(&y)?;
    }
    Ok(acc)
}

/// Fold the training structure into one K_max×1 conv.
///
/// Step 1: pool → conv (1) and conv-BN → conv (2). Step 2: serial branches
/// collapse (3), everything is padded to K_max (5). Step 3: branches are
/// summed (4).
pub fn rep_tcn_fuse<S: Scalar>(p: &RepTcnTrainParams<S>) -> Result<RepTcnInferParams<S>> {
    p.validate()?;
    let mut branches = Vec::with_capacity(4);
    if let Some(a) = &p.a {
        branches.push(("A", blend2_fuse_bn(&a.conv, &a.bn).context(|| "branch A".into())?));
    }
    for (name, br) in [("B", &p.b), ("C", &p.c)] {
        if let Some(br) = br {
            branches.push((name, blend3_fuse_serial(br).context(|| format!("branch {name}"))?));
        }
    }
    if let Some(d) = &p.d {
        let c = d.bn.channels();
        let conv = blend1_avgpool_to_conv(d.kernel, c, d.stride, d.padding)
            .and_then(|conv| blend2_fuse_bn(&conv, &d.bn))
            .context(|| "branch D".into())?;
        branches.push(("D", conv));
    }
    Ok(RepTcnInferParams {
        fused: merge_branches(branches, p.k_max)?,
    })
}

/// Inference-structure forward: a single temporal conv.
pub fn rep_tcn_forward_infer<S: Scalar>(x: &Tensor4<S>, p: &RepTcnInferParams<S>) -> Result<Tensor4<S>> {
    temporal_conv(x, &p.fused)
}
