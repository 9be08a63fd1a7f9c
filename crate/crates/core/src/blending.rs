//! The six parameter-space rewrites that turn a multi-branch training
//! structure into a single inference kernel.
//!
//! | rewrite | input                              | output            |
//! |---------|------------------------------------|-------------------|
//! | 1       | K×1 average pool                   | K×1 conv          |
//! | 2       | K×1 conv → batch norm              | K×1 conv          |
//! | 3       | 1×1 conv → K×1 conv → batch norm   | K×1 conv          |
//! | 4       | parallel K×1 convs, summed         | K×1 conv          |
//! | 5       | K₁×1 conv                          | K₂×1 conv, K₂ ≥ K₁ |
//! | 6       | parallel adjacency products, summed| one adjacency     |

use crate::error::{Error, Result, ResultExt};
use crate::params::{AdjacencyParam, BatchNormParams, PointwiseConvParams, TemporalConvParams};
use crate::scalar::Scalar;

/// Bias-free 1×1 conv, then bias-free K×1 conv, then batch norm.
///
/// The first conv carries no bias and the only batch norm sits after the
/// K×1 conv, so the zero padding seen by the K×1 conv is the same before and
/// after fusion.
#[derive(Clone, Debug, PartialEq)]
pub struct SerialBranchParams<S> {
    pub first: PointwiseConvParams<S>,
    pub second: TemporalConvParams<S>,
    pub bn: BatchNormParams<S>,
}

impl<S: Scalar> SerialBranchParams<S> {
    pub fn validate(&self) -> Result<()> {
        if self.first.bias.is_some() {
            return Err(Error::config(
                "serial branch: the 1x1 conv must be bias-free for exact fusion at padded borders",
            ));
        }
        if self.first.c_out != self.second.c_in {
            return Err(Error::shape(format!(
                "serial branch: 1x1 conv emits {} channels but the K x 1 conv takes {}",
                self.first.c_out, self.second.c_in
            )));
        }
        if self.bn.channels() != self.second.c_out {
            return Err(Error::shape(format!(
                "serial branch: batch norm has {} channels, conv emits {}",
                self.bn.channels(),
                self.second.c_out
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.first.param_count() + self.second.param_count() + self.bn.param_count()
    }
}

/// Convolutions evaluated on the same input and summed.
#[derive(Clone, Debug, PartialEq)]
pub struct ParallelBranchSet<S> {
    pub branches: Vec<TemporalConvParams<S>>,
}

/// K×1 average pooling as a full (C, C, K) conv with 1/K on the channel diagonal.
pub fn blend1_avgpool_to_conv<S: Scalar>(
    k: usize,
    c: usize,
    stride: usize,
    padding: usize,
) -> Result<TemporalConvParams<S>> {
    if k < 1 {
        return Err(Error::config("average pool kernel must be >= 1"));
    }
    if c < 1 || stride < 1 {
        return Err(Error::config("average pool needs >= 1 channel and stride >= 1"));
    }
    let inv_k = S::one() / S::from_usize(k).unwrap();
    let mut p = TemporalConvParams::zeros(c, c, k, stride, padding)?;
    for o in 0..c {
        let base = (o * c + o) * k;
        p.weight[base..base + k].fill(inv_k);
    }
    Ok(p)
}

/// Fold an inference batch norm into the preceding conv:
/// W' = W·w_bn/σ, B' = (B − μ)·w_bn/σ + b_bn.
pub fn blend2_fuse_bn<S: Scalar>(
    conv: &TemporalConvParams<S>,
    bn: &BatchNormParams<S>,
) -> Result<TemporalConvParams<S>> {
    if conv.c_out != bn.channels() {
        return Err(Error::shape(format!(
            "cannot fold a {}-channel batch norm into a conv with {} outputs",
            bn.channels(),
            conv.c_out
        )));
    }
    let factor = bn.factor();
    let per_out = conv.c_in * conv.kernel;
    let mut out = conv.clone();
    for (o, f) in factor.iter().enumerate() {
        for w in &mut out.weight[o * per_out..(o + 1) * per_out] {
            *w = *w * *f;
        }
        out.bias[o] = (conv.bias[o] - bn.mean[o]) * *f + bn.shift[o];
    }
    Ok(out)
}

/// Fold a batch norm into a 1×1 conv (rewrite 2 with K = 1).
pub fn fold_bn_pointwise<S: Scalar>(
    conv: &PointwiseConvParams<S>,
    bn: &BatchNormParams<S>,
) -> Result<PointwiseConvParams<S>> {
    let fused = blend2_fuse_bn(&conv.to_temporal(1), bn)?;
    PointwiseConvParams::new(fused.c_out, fused.c_in, fused.weight, Some(fused.bias))
}

/// Contract the 1×1 conv into every tap of the K×1 conv, then fold the batch norm:
/// W'[o,i,k] = Σ_m W₂[o,m,k]·W₁[m,i].
pub fn blend3_fuse_serial<S: Scalar>(branch: &SerialBranchParams<S>) -> Result<TemporalConvParams<S>> {
    branch.validate()?;
    let (first, second) = (&branch.first, &branch.second);
    let (c_out, c_mid, c_in, k) = (second.c_out, second.c_in, first.c_in, second.kernel);
    let mut weight = vec![S::zero(); c_out * c_in * k];
    let mut rows = vec![S::zero(); k * c_in];
    for o in 0..c_out {
        rows.fill(S::zero());
        for m in 0..c_mid {
            let w1 = &first.weight[m * c_in..(m + 1) * c_in];
            let taps = &second.weight[(o * c_mid + m) * k..(o * c_mid + m + 1) * k];
            for (row, &w) in rows.chunks_exact_mut(c_in).zip(taps) {
                for (acc, &f) in row.iter_mut().zip(w1) {
                    *acc = *acc + w * f;
                }
            }
        }
        for (kk, row) in rows.chunks_exact(c_in).enumerate() {
            for (i, &v) in row.iter().enumerate() {
                weight[(o * c_in + i) * k + kk] = v;
            }
        }
    }
    let contracted = TemporalConvParams::new(
        c_out,
        c_in,
        k,
        weight,
        second.bias.clone(),
        second.stride,
        second.padding,
    )?;
    blend2_fuse_bn(&contracted, &branch.bn)
}

/// Sum parallel convs with identical geometry: W' = ΣWᵢ, B' = ΣBᵢ (in list order).
pub fn blend4_add_parallel<S: Scalar>(set: &ParallelBranchSet<S>) -> Result<TemporalConvParams<S>> {
    let (head, rest) = set
        .branches
        .split_first()
        .ok_or_else(|| Error::config("cannot merge an empty branch set"))?;
    let mut out = head.clone();
    for (idx, b) in rest.iter().enumerate() {
        let geom = |p: &TemporalConvParams<S>| (p.c_out, p.c_in, p.kernel, p.stride, p.padding);
        if geom(b) != geom(head) {
            return Err(Error::config(format!(
                "branch {} has (c_out, c_in, k, stride, padding) = {:?}, branch 0 has {:?}; pad kernels first",
                idx + 1,
                geom(b),
                geom(head)
            )));
        }
        for (w, &x) in out.weight.iter_mut().zip(&b.weight) {
            *w = *w + x;
        }
        for (w, &x) in out.bias.iter_mut().zip(&b.bias) {
            *w = *w + x;
        }
    }
    Ok(out)
}

/// Zero-pad the kernel symmetrically to `k2` taps and widen the padding to match.
pub fn blend5_pad_kernel<S: Scalar>(conv: &TemporalConvParams<S>, k2: usize) -> Result<TemporalConvParams<S>> {
    let k = conv.kernel;
    if k.is_multiple_of(2) || k2.is_multiple_of(2) {
        return Err(Error::config(format!(
            "kernel padding needs odd sizes, got {k} -> {k2}"
        )));
    }
    if k2 < k {
        return Err(Error::config(format!("cannot pad a {k}-tap kernel down to {k2}")));
    }
    let extra = (k2 - k) / 2;
    let mut out = TemporalConvParams::zeros(conv.c_out, conv.c_in, k2, conv.stride, conv.padding + extra)?;
    for oi in 0..conv.c_out * conv.c_in {
        out.weight[oi * k2 + extra..oi * k2 + extra + k]
            .copy_from_slice(&conv.weight[oi * k..(oi + 1) * k]);
    }
    out.bias.copy_from_slice(&conv.bias);
    Ok(out)
}

/// X·A₁ + … + X·Aₙ = X·(A₁ + … + Aₙ).
pub fn blend6_fuse_adjacency<S: Scalar>(pas: &[AdjacencyParam<S>]) -> Result<AdjacencyParam<S>> {
    let (head, rest) = pas
        .split_first()
        .ok_or_else(|| Error::shape("cannot fuse an empty adjacency list"))?;
    let mut out = head.clone();
    for (idx, a) in rest.iter().enumerate() {
        if a.v != head.v {
            return Err(Error::shape(format!(
                "adjacency {} is {}x{} but adjacency 0 is {}x{}",
                idx + 1,
                a.v,
                a.v,
                head.v,
                head.v
            )));
        }
        for (m, &x) in out.matrix.iter_mut().zip(&a.matrix) {
            *m = *m + x;
        }
    }
    Ok(out)
}

/// Pad every branch to `k_max`, then sum. Errors name the offending branch.
pub fn merge_branches<S: Scalar>(
    branches: Vec<(&'static str, TemporalConvParams<S>)>,
    k_max: usize,
) -> Result<TemporalConvParams<S>> {
    let padded = branches
        .into_iter()
        .map(|(name, b)| blend5_pad_kernel(&b, k_max).context(|| format!("branch {name}")))
        .collect::<Result<Vec<_>>>()?;
    blend4_add_parallel(&ParallelBranchSet { branches: padded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{avg_pool_time, batch_norm_infer, temporal_conv};
    use crate::rng::Rng;
    use crate::tensor::Shape4;

    #[test]
    fn blend1_kernel_layout() {
        let p = blend1_avgpool_to_conv::<f64>(3, 2, 1, 1).unwrap();
        for o in 0..2 {
            for i in 0..2 {
                for k in 0..3 {
                    let want = if o == i { 1.0 / 3.0 } else { 0.0 };
                    assert_eq!(p.w(o, i, k), want);
                }
            }
        }
        assert!(p.bias.iter().all(|&b| b == 0.0));
        assert_eq!(blend1_avgpool_to_conv::<f64>(1, 3, 1, 0).unwrap(), TemporalConvParams::identity(3, 1).unwrap());
        assert!(blend1_avgpool_to_conv::<f64>(0, 3, 1, 0).is_err());
    }

    #[test]
    fn blend1_matches_pool_exactly() {
        let mut rng = Rng::new(21);
        for _ in 0..50 {
            let x = rng.tensor::<f32>(Shape4::new(2, 3, 9, 4), 2.0);
            for &(k, s) in &[(3, 1), (3, 2), (5, 1)] {
                let pad = k / 2;
                let pooled = avg_pool_time(&x, k, s, pad).unwrap();
                let conv = temporal_conv(&x, &blend1_avgpool_to_conv(k, 3, s, pad).unwrap()).unwrap();
                assert_eq!(pooled.max_abs_diff(&conv).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn blend2_scalar_case() {
        let conv = TemporalConvParams::new(1, 1, 1, vec![2.0f64], vec![0.0], 1, 0).unwrap();
        let eps = 1e-5;
        let bn = BatchNormParams::new(vec![1.0], vec![4.0 - eps], vec![4.0], vec![0.5], eps).unwrap();
        let f = blend2_fuse_bn(&conv, &bn).unwrap();
        assert!((f.weight[0] - 4.0).abs() < 1e-12);
        assert!((f.bias[0] + 1.5).abs() < 1e-12);
    }

    #[test]
    fn blend2_identity_and_idempotence() {
        let mut rng = Rng::new(8);
        let conv = TemporalConvParams::new(3, 2, 3, rng.vec(18, 1.0), rng.vec(3, 1.0), 1, 1).unwrap();
        let id = BatchNormParams::<f64>::identity(3);
        let once = blend2_fuse_bn(&conv, &id).unwrap();
        let twice = blend2_fuse_bn(&once, &id).unwrap();
        for (a, b) in conv.weight.iter().zip(&once.weight) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in once.weight.iter().zip(&twice.weight) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(blend2_fuse_bn(&conv, &BatchNormParams::identity(2)).is_err());
    }

    #[test]
    fn blend2_forward_equivalence_with_borders() {
        let mut rng = Rng::new(9);
        let conv = TemporalConvParams::new(4, 3, 5, rng.vec(60, 0.5), rng.vec(4, 0.5), 1, 2).unwrap();
        let bn = BatchNormParams::new(
            rng.vec(4, 0.3),
            rng.vec_range(4, 0.5, 1.5),
            rng.vec_range(4, 0.5, 1.5),
            rng.vec(4, 0.3),
            1e-5,
        )
        .unwrap();
        let x = rng.tensor::<f32>(Shape4::new(2, 3, 7, 5), 1.0);
        let want = batch_norm_infer(&temporal_conv(&x, &conv).unwrap(), &bn).unwrap();
        let got = temporal_conv(&x, &blend2_fuse_bn(&conv, &bn).unwrap()).unwrap();
        assert!(want.max_abs_diff(&got).unwrap() <= 1e-5);
    }

    #[test]
    fn blend3_hand_contraction() {
        let first = PointwiseConvParams::new(2, 2, vec![1.0f64, 2.0, 3.0, 4.0], None).unwrap();
        let second = TemporalConvParams::new(2, 2, 1, vec![1.0; 4], vec![0.0; 2], 1, 0).unwrap();
        let bn = BatchNormParams::new(vec![0.0; 2], vec![1.0; 2], vec![1.0; 2], vec![0.0; 2], 1e-300).unwrap();
        let f = blend3_fuse_serial(&SerialBranchParams { first, second, bn }).unwrap();
        assert_eq!(f.weight, vec![4.0, 6.0, 4.0, 6.0]);
    }

    #[test]
    fn blend3_channel_identity_first_reduces_to_blend2() {
        let mut rng = Rng::new(10);
        let second = TemporalConvParams::new(3, 3, 3, rng.vec(27, 1.0), vec![0.0; 3], 1, 1).unwrap();
        let bn = BatchNormParams::new(rng.vec(3, 0.2), rng.vec_range(3, 0.5, 2.0), rng.vec_range(3, 0.5, 2.0), rng.vec(3, 0.2), 1e-5)
            .unwrap();
        let branch = SerialBranchParams {
            first: PointwiseConvParams::<f64>::identity(3),
            second: second.clone(),
            bn: bn.clone(),
        };
        assert_eq!(blend3_fuse_serial(&branch).unwrap(), blend2_fuse_bn(&second, &bn).unwrap());
    }

    #[test]
    fn blend3_rejects_biased_first_and_mismatch() {
        let first = PointwiseConvParams::new(2, 2, vec![1.0f64; 4], Some(vec![0.0; 2])).unwrap();
        let second = TemporalConvParams::zeros(2, 2, 3, 1, 1).unwrap();
        let bn = BatchNormParams::identity(2);
        let r = blend3_fuse_serial(&SerialBranchParams { first, second: second.clone(), bn: bn.clone() });
        assert!(matches!(r, Err(Error::Config(_))));
        let first = PointwiseConvParams::new(3, 2, vec![1.0f64; 6], None).unwrap();
        let r = blend3_fuse_serial(&SerialBranchParams { first, second, bn });
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn blend4_sums() {
        let a = TemporalConvParams::new(1, 1, 3, vec![1.0f64, 2.0, 3.0], vec![1.0], 1, 1).unwrap();
        let b = TemporalConvParams::new(1, 1, 3, vec![0.5, 0.5, 0.5], vec![-1.0], 1, 1).unwrap();
        let m = blend4_add_parallel(&ParallelBranchSet { branches: vec![a.clone(), b] }).unwrap();
        assert_eq!(m.weight, vec![1.5, 2.5, 3.5]);
        assert_eq!(m.bias, vec![0.0]);
        let z = TemporalConvParams::zeros(1, 1, 3, 1, 1).unwrap();
        assert_eq!(blend4_add_parallel(&ParallelBranchSet { branches: vec![a.clone(), z] }).unwrap(), a);
        let wide = TemporalConvParams::zeros(1, 1, 5, 1, 2).unwrap();
        assert!(matches!(
            blend4_add_parallel(&ParallelBranchSet { branches: vec![a, wide] }),
            Err(Error::Config(_))
        ));
        assert!(blend4_add_parallel::<f64>(&ParallelBranchSet { branches: vec![] }).is_err());
    }

    #[test]
    fn blend5_pads_centrally() {
        let p = TemporalConvParams::new(1, 1, 1, vec![7.0f64], vec![2.0], 1, 0).unwrap();
        let q = blend5_pad_kernel(&p, 5).unwrap();
        assert_eq!(q.weight, vec![0.0, 0.0, 7.0, 0.0, 0.0]);
        assert_eq!(q.bias, vec![2.0]);
        assert_eq!(q.padding, 2);
        assert_eq!(blend5_pad_kernel(&p, 1).unwrap(), p);
        assert!(blend5_pad_kernel(&q, 3).is_err());
        assert!(blend5_pad_kernel(&p, 4).is_err());
    }

    #[test]
    fn blend5_forward_is_exact() {
        let mut rng = Rng::new(12);
        let p = TemporalConvParams::new(3, 2, 3, rng.vec(18, 1.0), rng.vec(3, 1.0), 1, 1).unwrap();
        let x = rng.tensor::<f32>(Shape4::new(1, 2, 8, 3), 1.0);
        let a = temporal_conv(&x, &p).unwrap();
        for k2 in [3, 5, 9] {
            let b = temporal_conv(&x, &blend5_pad_kernel(&p, k2).unwrap()).unwrap();
            assert_eq!(a.max_abs_diff(&b).unwrap(), 0.0);
        }
    }

    #[test]
    fn blend6_examples() {
        let mut rng = Rng::new(13);
        let a = AdjacencyParam::new(4, rng.vec::<f64>(16, 1.0)).unwrap();
        assert_eq!(blend6_fuse_adjacency(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(blend6_fuse_adjacency(&[a.clone(), AdjacencyParam::zeros(4)]).unwrap(), a);
        assert!(blend6_fuse_adjacency(&[a, AdjacencyParam::zeros(3)]).is_err());
        assert!(blend6_fuse_adjacency::<f64>(&[]).is_err());
        let many = vec![AdjacencyParam::<f32>::identity(25); 5];
        assert_eq!(blend6_fuse_adjacency(&many).unwrap().param_count(), 625);
    }

    #[test]
    fn merge_names_failing_branch() {
        let wide = TemporalConvParams::<f64>::zeros(1, 1, 9, 1, 4).unwrap();
        let err = merge_branches(vec![("A", wide)], 5).unwrap_err();
        assert!(err.to_string().contains("branch A"), "{err}");
    }
}
