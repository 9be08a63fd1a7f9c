//! Spatial graph-convolution modules.
//!
//! Both share `relu(bn(post(graph(pre(x)))))`:
//!
//! * RP: `graph` is a sum over n learnable adjacencies, collapsible to one.
//! * OP: channels are split into 8 contiguous groups, each with its own
//!   adjacency. Same multiply-add count as fused RP, not collapsible.

use crate::blending::{blend6_fuse_adjacency, fold_bn_pointwise};
use crate::error::{Error, Result};
use crate::ops::{batch_norm_infer, graph_conv, grouped_graph_conv, pointwise_conv, relu_in_place};
use crate::params::{init, AdjacencyParam, BatchNormParams, PointwiseConvParams};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

pub const OP_GROUPS: usize = 8;
pub const DEFAULT_PAS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct HpiGcRpParams<S> {
    pub pre: PointwiseConvParams<S>,
    pub pas: Vec<AdjacencyParam<S>>,
    pub post: PointwiseConvParams<S>,
    /// `None` once folded into `post`.
    pub bn: Option<BatchNormParams<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HpiGcOpParams<S> {
    pub pre: PointwiseConvParams<S>,
    pub pas: Vec<AdjacencyParam<S>>,
    pub post: PointwiseConvParams<S>,
    pub bn: Option<BatchNormParams<S>>,
}

fn check_common<S: Scalar>(
    pre: &PointwiseConvParams<S>,
    pas: &[AdjacencyParam<S>],
    post: &PointwiseConvParams<S>,
    bn: Option<&BatchNormParams<S>>,
) -> Result<()> {
    let v = pas
        .first()
        .ok_or_else(|| Error::config("graph module needs at least one adjacency matrix"))?
        .v;
    if pas.iter().any(|a| a.v != v) {
        return Err(Error::shape("adjacency matrices disagree on joint count"));
    }
    if pre.c_out != post.c_in {
        return Err(Error::shape(format!(
            "pre conv emits {} channels, post conv takes {}",
            pre.c_out, post.c_in
        )));
    }
    if let Some(bn) = bn {
        if bn.channels() != post.c_out {
            return Err(Error::shape(format!(
                "batch norm has {} channels, post conv emits {}",
                bn.channels(),
                post.c_out
            )));
        }
    }
    Ok(())
}

fn tail<S: Scalar>(
    h: Tensor4<S>,
    post: &PointwiseConvParams<S>,
    bn: Option<&BatchNormParams<S>>,
) -> Result<Tensor4<S>> {
    let mut y = pointwise_conv(&h, post)?;
    if let Some(bn) = bn {
        y = batch_norm_infer(&y, bn)?;
    }
    relu_in_place(&mut y);
    Ok(y)
}

impl<S: Scalar> HpiGcRpParams<S> {
    /// Random module with `n` identity-plus-noise adjacencies; `post` is scaled by 1/n.
    pub fn random(c_in: usize, c_out: usize, joints: usize, n: usize, rng: &mut Rng) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("HPI-GC-RP needs at least one adjacency matrix"));
        }
        Ok(Self {
            pre: init::pointwise(rng, c_out, c_in, 1.0, true),
            pas: (0..n).map(|_| init::adjacency(rng, joints)).collect(),
            post: init::pointwise(rng, c_out, c_out, 1.0 / n as f64, true),
            bn: Some(init::batch_norm(rng, c_out, 0.5, 1.5)),
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_common(&self.pre, &self.pas, &self.post, self.bn.as_ref())
    }

    pub fn c_in(&self) -> usize {
        self.pre.c_in
    }

    pub fn c_out(&self) -> usize {
        self.post.c_out
    }

    pub fn param_count(&self) -> usize {
        self.pre.param_count()
            + self.pas.iter().map(AdjacencyParam::param_count).sum::<usize>()
            + self.post.param_count()
            + self.bn.as_ref().map_or(0, BatchNormParams::param_count)
    }

    pub fn cast<D: Scalar>(&self) -> HpiGcRpParams<D> {
        HpiGcRpParams {
            pre: self.pre.cast(),
            pas: self.pas.iter().map(AdjacencyParam::cast).collect(),
            post: self.post.cast(),
            bn: self.bn.as_ref().map(BatchNormParams::cast),
        }
    }
}

impl<S: Scalar> HpiGcOpParams<S> {
    pub fn random(c_in: usize, c_out: usize, joints: usize, rng: &mut Rng) -> Result<Self> {
        if !c_out.is_multiple_of(OP_GROUPS) {
            return Err(Error::config(format!(
                "HPI-GC-OP needs channels divisible by {OP_GROUPS}, got {c_out}"
            )));
        }
        Ok(Self {
            pre: init::pointwise(rng, c_out, c_in, 1.0, true),
            pas: (0..OP_GROUPS).map(|_| init::adjacency(rng, joints)).collect(),
            post: init::pointwise(rng, c_out, c_out, 1.0, true),
            bn: Some(init::batch_norm(rng, c_out, 0.5, 1.5)),
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_common(&self.pre, &self.pas, &self.post, self.bn.as_ref())?;
        if self.pas.len() != OP_GROUPS {
            return Err(Error::config(format!(
                "HPI-GC-OP needs exactly {OP_GROUPS} adjacency matrices, got {}",
                self.pas.len()
            )));
        }
        if !self.pre.c_out.is_multiple_of(OP_GROUPS) {
            return Err(Error::config(format!(
                "HPI-GC-OP needs channels divisible by {OP_GROUPS}, got {}",
                self.pre.c_out
            )));
        }
        Ok(())
    }

    pub fn c_in(&self) -> usize {
        self.pre.c_in
    }

    pub fn c_out(&self) -> usize {
        self.post.c_out
    }

    pub fn param_count(&self) -> usize {
        self.pre.param_count()
            + self.pas.iter().map(AdjacencyParam::param_count).sum::<usize>()
            + self.post.param_count()
            + self.bn.as_ref().map_or(0, BatchNormParams::param_count)
    }

    pub fn cast<D: Scalar>(&self) -> HpiGcOpParams<D> {
        HpiGcOpParams {
            pre: self.pre.cast(),
            pas: self.pas.iter().map(AdjacencyParam::cast).collect(),
            post: self.post.cast(),
            bn: self.bn.as_ref().map(BatchNormParams::cast),
        }
    }
}

/// `relu(bn(post(Σᵢ pre(x)·PAᵢ)))`. With one adjacency this is the inference form.
pub fn hpi_gc_rp_forward<S: Scalar>(x: &Tensor4<S>, p: &HpiGcRpParams<S>) -> Result<Tensor4<S>> {
    p.validate()?;
    let h = pointwise_conv(x, &p.pre)?;
    let mut pas = p.pas.iter();
    let mut acc = graph_conv(&h, pas.next().expect("validated non-empty"))?;
    for pa in pas {
        acc.add_assign(&graph_conv(&h, pa)?)?;
    }
    tail(acc, &p.post, p.bn.as_ref())
}

/// Training-structure forward (n parallel adjacency products).
pub fn hpi_gc_rp_forward_train<S: Scalar>(x: &Tensor4<S>, p: &HpiGcRpParams<S>) -> Result<Tensor4<S>> {
    hpi_gc_rp_forward(x, p)
}

/// Replace the n adjacencies by their sum. Pre, post and BN are untouched.
pub fn hpi_gc_rp_fuse<S: Scalar>(p: &HpiGcRpParams<S>) -> Result<HpiGcRpParams<S>> {
    p.validate()?;
    Ok(HpiGcRpParams {
        pre: p.pre.clone(),
        pas: vec![blend6_fuse_adjacency(&p.pas)?],
        post: p.post.clone(),
        bn: p.bn.clone(),
    })
}

/// Fold the batch norm into the post 1×1 conv. No-op when already folded.
pub fn hpi_gc_rp_fold_bn<S: Scalar>(p: &HpiGcRpParams<S>) -> Result<HpiGcRpParams<S>> {
    let mut out = p.clone();
    if let Some(bn) = out.bn.take() {
        out.post = fold_bn_pointwise(&p.post, &bn)?;
    }
    Ok(out)
}

pub fn hpi_gc_op_fold_bn<S: Scalar>(p: &HpiGcOpParams<S>) -> Result<HpiGcOpParams<S>> {
    let mut out = p.clone();
    if let Some(bn) = out.bn.take() {
        out.post = fold_bn_pointwise(&p.post, &bn)?;
    }
    Ok(out)
}

/// `relu(bn(post(grouped(pre(x)))))` with 8 channel groups.
pub fn hpi_gc_op_forward<S: Scalar>(x: &Tensor4<S>, p: &HpiGcOpParams<S>) -> Result<Tensor4<S>> {
    p.validate()?;
    let h = pointwise_conv(x, &p.pre)?;
    let g = grouped_graph_conv(&h, &p.pas, OP_GROUPS)?;
    tail(g, &p.post, p.bn.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::relu;
    use crate::tensor::Shape4;

    #[test]
    fn single_identity_pa_reduces_to_relu_bn() {
        let mut rng = Rng::new(1);
        let bn = init::batch_norm::<f64>(&mut rng, 3, 0.5, 1.5);
        let p = HpiGcRpParams {
            pre: PointwiseConvParams::identity(3),
            pas: vec![AdjacencyParam::identity(4)],
            post: PointwiseConvParams::identity(3),
            bn: Some(bn.clone()),
        };
        let x = rng.tensor::<f64>(Shape4::new(2, 3, 5, 4), 1.0);
        let want = relu(&batch_norm_infer(&x, &bn).unwrap());
        assert_eq!(hpi_gc_rp_forward_train(&x, &p).unwrap(), want);
    }

    #[test]
    fn rp_output_shape_and_recomputation() {
        let mut rng = Rng::new(2);
        let p = HpiGcRpParams::<f64>::random(3, 8, 6, 5, &mut rng).unwrap();
        let x = rng.tensor::<f64>(Shape4::new(2, 3, 7, 6), 1.0);
        let y = hpi_gc_rp_forward_train(&x, &p).unwrap();
        assert_eq!(y.shape(), Shape4::new(2, 8, 7, 6));

        let h = pointwise_conv(&x, &p.pre).unwrap();
        let mut s = Tensor4::zeros(h.shape()).unwrap();
        for pa in &p.pas {
            s.add_assign(&graph_conv(&h, pa).unwrap()).unwrap();
        }
        let want = relu(&batch_norm_infer(&pointwise_conv(&s, &p.post).unwrap(), p.bn.as_ref().unwrap()).unwrap());
        assert!(y.max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn rp_fuse_equivalence_and_counts() {
        let mut rng = Rng::new(3);
        let p = HpiGcRpParams::<f32>::random(4, 8, 25, 5, &mut rng).unwrap();
        let fused = hpi_gc_rp_fuse(&p).unwrap();
        assert_eq!(fused.pas.len(), 1);
        assert_eq!(fused.pas[0].param_count(), 625);
        let folded = hpi_gc_rp_fold_bn(&fused).unwrap();
        assert!(folded.bn.is_none());
        let x = rng.tensor::<f32>(Shape4::new(2, 4, 6, 25), 1.0);
        let y = hpi_gc_rp_forward_train(&x, &p).unwrap();
        assert!(y.max_abs_diff(&hpi_gc_rp_forward(&x, &fused).unwrap()).unwrap() <= 1e-5);
        assert!(y.max_abs_diff(&hpi_gc_rp_forward(&x, &folded).unwrap()).unwrap() <= 1e-5);

        let single = HpiGcRpParams::<f32>::random(4, 8, 25, 1, &mut rng).unwrap();
        assert_eq!(hpi_gc_rp_fuse(&single).unwrap(), single);
        assert!(HpiGcRpParams::<f32>::random(4, 8, 25, 0, &mut rng).is_err());
    }

    #[test]
    fn op_with_equal_pas_matches_fused_rp() {
        let mut rng = Rng::new(4);
        let op = HpiGcOpParams::<f32>::random(3, 16, 25, &mut rng).unwrap();
        let m = init::adjacency::<f32>(&mut rng, 25);
        let op = HpiGcOpParams {
            pas: vec![m.clone(); OP_GROUPS],
            ..op
        };
        let rp = HpiGcRpParams {
            pre: op.pre.clone(),
            pas: vec![m],
            post: op.post.clone(),
            bn: op.bn.clone(),
        };
        let x = rng.tensor::<f32>(Shape4::new(2, 3, 4, 25), 1.0);
        let d = hpi_gc_op_forward(&x, &op)
            .unwrap()
            .max_abs_diff(&hpi_gc_rp_forward(&x, &rp).unwrap())
            .unwrap();
        assert!(d <= 1e-6, "{d}");
        assert_eq!(op.pas.iter().map(|a| a.param_count()).sum::<usize>(), 5000);
    }

    #[test]
    fn op_rejects_indivisible_channels() {
        let mut rng = Rng::new(5);
        assert!(matches!(HpiGcOpParams::<f32>::random(3, 12, 5, &mut rng), Err(Error::Config(_))));
        let mut op = HpiGcOpParams::<f32>::random(3, 16, 5, &mut rng).unwrap();
        op.pas.pop();
        let x = rng.tensor::<f32>(Shape4::new(1, 3, 4, 5), 1.0);
        assert!(matches!(hpi_gc_op_forward(&x, &op), Err(Error::Config(_))));
    }
}
