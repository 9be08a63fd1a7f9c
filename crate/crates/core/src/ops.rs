//! Operators over [`Tensor4`]. All are pure; outputs depend only on inputs.

use crate::error::{Error, Result};
use crate::exec::for_each_chunk;
use crate::kernel;
use crate::params::{
    conv_out_len, AdjacencyParam, BatchNormParams, LinearParams, PointwiseConvParams,
    TemporalConvParams,
};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Shape4, Tensor4};

/// K×1 convolution along time. The vertex axis is never mixed.
pub fn temporal_conv<S: Scalar>(x: &Tensor4<S>, p: &TemporalConvParams<S>) -> Result<Tensor4<S>> {
    let s = x.shape();
    if s.c != p.c_in {
        return Err(Error::shape(format!(
            "temporal conv expects {} input channels, got tensor {s}",
            p.c_in
        )));
    }
    if p.weight.len() != p.c_out * p.c_in * p.kernel || p.bias.len() != p.c_out {
        return Err(Error::shape("temporal conv parameter lengths do not match (c_out, c_in, k)"));
    }
    p.check_finite()?;
    let t_out = conv_out_len(s.t, p.kernel, p.stride, p.padding)?;
    let out_shape = Shape4::new(s.n, p.c_out, t_out, s.v);
    let mut out = vec![S::zero(); out_shape.numel()];
    let in_len = s.c * s.plane();
    let out_len = p.c_out * t_out * s.v;
    for n in 0..s.n {
        kernel::conv_time_sample(
            &x.data()[n * in_len..(n + 1) * in_len],
            s.c,
            s.t,
            s.v,
            &p.weight,
            &p.bias,
            p.kernel,
            p.stride,
            p.padding,
            t_out,
            &mut out[n * out_len..(n + 1) * out_len],
        );
    }
    Ok(Tensor4::from_parts(out_shape, out))
}

/// 1×1 convolution: per-position channel mixing.
pub fn pointwise_conv<S: Scalar>(x: &Tensor4<S>, p: &PointwiseConvParams<S>) -> Result<Tensor4<S>> {
    if x.shape().c != p.c_in {
        return Err(Error::shape(format!(
            "pointwise conv expects {} input channels, got tensor {}",
            p.c_in,
            x.shape()
        )));
    }
    p.check_finite()?;
    temporal_conv(x, &p.to_temporal(1))
}

/// Right-multiplication of every (n, c, t) joint row by the adjacency matrix.
pub fn graph_conv<S: Scalar>(x: &Tensor4<S>, a: &AdjacencyParam<S>) -> Result<Tensor4<S>> {
    let s = x.shape();
    if s.v != a.v || a.matrix.len() != a.v * a.v {
        return Err(Error::shape(format!(
            "graph conv with a {0}x{0} adjacency cannot take tensor {s}",
            a.v
        )));
    }
    a.check_finite()?;
    let mut out = vec![S::zero(); s.numel()];
    kernel::graph_rows(x.data(), &a.matrix, s.v, &mut out);
    Ok(Tensor4::from_parts(s, out))
}

/// Graph conv with a separate adjacency per contiguous block of C/groups channels.
pub fn grouped_graph_conv<S: Scalar>(
    x: &Tensor4<S>,
    pas: &[AdjacencyParam<S>],
    groups: usize,
) -> Result<Tensor4<S>> {
    let s = x.shape();
    if groups == 0 || !s.c.is_multiple_of(groups) {
        return Err(Error::config(format!(
            "{} channels cannot be split into {groups} groups",
            s.c
        )));
    }
    if pas.len() != groups {
        return Err(Error::config(format!(
            "grouped graph conv needs {groups} adjacency matrices, got {}",
            pas.len()
        )));
    }
    let width = s.c / groups;
    let parts = pas
        .iter()
        .enumerate()
        .map(|(g, pa)| graph_conv(&x.channel_slice(g * width, width)?, pa))
        .collect::<Result<Vec<_>>>()?;
    Tensor4::concat_channels(&parts)
}

/// Average over a K-frame window; padded frames count as zeros and the divisor is always K.
pub fn avg_pool_time<S: Scalar>(
    x: &Tensor4<S>,
    k: usize,
    stride: usize,
    padding: usize,
) -> Result<Tensor4<S>> {
    if k.is_multiple_of(2) {
        return Err(Error::shape(format!("average pool kernel must be odd, got {k}")));
    }
    let s = x.shape();
    let t_out = conv_out_len(s.t, k, stride, padding)?;
    let out_shape = Shape4::new(s.n, s.c, t_out, s.v);
    let inv_k = S::one() / S::from_usize(k).unwrap();
    let mut out = vec![S::zero(); out_shape.numel()];
    let in_plane = s.plane();
    let out_plane = t_out * s.v;
    let data = x.data();
    for_each_chunk(&mut out, out_plane, |nc, o| {
        let src = &data[nc * in_plane..(nc + 1) * in_plane];
        for to in 0..t_out {
            let row = &mut o[to * s.v..(to + 1) * s.v];
            for kk in 0..k {
                let src_t = (to * stride + kk) as isize - padding as isize;
                if src_t >= 0 && (src_t as usize) < s.t {
                    let st = src_t as usize * s.v;
                    for (r, &xv) in row.iter_mut().zip(&src[st..st + s.v]) {
                        *r = *r + inv_k * xv;
                    }
                } else {
                    for r in row.iter_mut() {
                        *r = *r + inv_k * S::zero();
                    }
                }
            }
        }
    });
    Ok(Tensor4::from_parts(out_shape, out))
}

/// (x − μ)·w_bn/σ + b_bn per channel, σ = sqrt(variance + eps).
pub fn batch_norm_infer<S: Scalar>(x: &Tensor4<S>, p: &BatchNormParams<S>) -> Result<Tensor4<S>> {
    let s = x.shape();
    if s.c != p.channels() {
        return Err(Error::shape(format!(
            "batch norm over {} channels cannot take tensor {s}",
            p.channels()
        )));
    }
    let factor = p.factor();
    let plane = s.plane();
    let mut out = x.data().to_vec();
    for_each_chunk(&mut out, plane, |nc, o| {
        let c = nc % s.c;
        let (mu, f, b) = (p.mean[c], factor[c], p.shift[c]);
        for y in o.iter_mut() {
            *y = (*y - mu) * f + b;
        }
    });
    Ok(Tensor4::from_parts(s, out))
}

pub fn relu<S: Scalar>(x: &Tensor4<S>) -> Tensor4<S> {
    let mut y = x.clone();
    relu_in_place(&mut y);
    y
}

pub fn relu_in_place<S: Scalar>(x: &mut Tensor4<S>) {
    for v in x.data_mut() {
        if *v < S::zero() {
            *v = S::zero();
        }
    }
}

/// Mean over time and vertices: (N, C, T, V) → (N × C).
pub fn global_avg_pool<S: Scalar>(x: &Tensor4<S>) -> Matrix<S> {
    let s = x.shape();
    let denom = S::from_usize(s.plane()).unwrap();
    let data = x
        .data()
        .chunks(s.plane())
        .map(|p| p.iter().fold(S::zero(), |a, &b| a + b) / denom)
        .collect();
    Matrix {
        rows: s.n,
        cols: s.c,
        data,
    }
}

/// Dense map from pooled features to class logits.
pub fn linear_head<S: Scalar>(features: &Matrix<S>, p: &LinearParams<S>) -> Result<Matrix<S>> {
    if features.cols != p.in_features {
        return Err(Error::shape(format!(
            "classifier expects {} features, got {}",
            p.in_features, features.cols
        )));
    }
    let mut data = Vec::with_capacity(features.rows * p.out_features);
    for r in 0..features.rows {
        let f = features.row(r);
        for o in 0..p.out_features {
            let w = &p.weight[o * p.in_features..(o + 1) * p.in_features];
            let acc = w.iter().zip(f).fold(p.bias[o], |a, (&w, &x)| a + w * x);
            data.push(acc);
        }
    }
    Matrix::from_vec(features.rows, p.out_features, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn t1(values: &[f64]) -> Tensor4<f64> {
        Tensor4::from_vec(Shape4::new(1, 1, values.len(), 1), values.to_vec()).unwrap()
    }

    /// Direct evaluation of the conv definition with an explicit padded index.
    fn conv_oracle(x: &Tensor4<f64>, p: &TemporalConvParams<f64>) -> Tensor4<f64> {
        let s = x.shape();
        let t_out = conv_out_len(s.t, p.kernel, p.stride, p.padding).unwrap();
        Tensor4::from_fn(Shape4::new(s.n, p.c_out, t_out, s.v), |n, o, t, v| {
            let mut acc = p.bias[o];
            for i in 0..p.c_in {
                for k in 0..p.kernel {
                    let src = (t * p.stride + k) as isize - p.padding as isize;
                    if src >= 0 && (src as usize) < s.t {
                        acc += p.w(o, i, k) * x.at(n, i, src as usize, v);
                    }
                }
            }
            acc
        })
        .unwrap()
    }

    #[test]
    fn conv_sliding_window_example() {
        let x = t1(&[1.0, 2.0, 3.0, 4.0]);
        let p = TemporalConvParams::new(1, 1, 3, vec![1.0; 3], vec![0.0], 1, 1).unwrap();
        assert_eq!(temporal_conv(&x, &p).unwrap().data(), &[3.0, 6.0, 9.0, 7.0]);
    }

    #[test]
    fn conv_identity_and_zero_input() {
        let mut rng = Rng::new(1);
        let x = rng.tensor::<f64>(Shape4::new(2, 3, 5, 4), 1.0);
        let id = TemporalConvParams::identity(3, 1).unwrap();
        assert_eq!(temporal_conv(&x, &id).unwrap(), x);

        let mut p = TemporalConvParams::<f64>::zeros(2, 3, 3, 1, 1).unwrap();
        p.weight = rng.vec(18, 1.0);
        p.bias = vec![0.25, -1.5];
        let y = temporal_conv(&Tensor4::zeros(Shape4::new(1, 3, 4, 2)).unwrap(), &p).unwrap();
        for o in 0..2 {
            assert!(y.plane(0, o).iter().all(|&v| v == p.bias[o]));
        }
    }

    #[test]
    fn conv_matches_direct_definition() {
        let mut rng = Rng::new(7);
        for &(k, stride, pad, t) in &[(3, 1, 1, 7), (5, 2, 2, 8), (1, 2, 0, 6), (9, 1, 4, 5), (3, 3, 0, 10)] {
            let x = rng.tensor::<f64>(Shape4::new(2, 3, t, 40), 1.0);
            let p = TemporalConvParams::new(5, 3, k, rng.vec(15 * k, 1.0), rng.vec(5, 1.0), stride, pad)
                .unwrap();
            let got = temporal_conv(&x, &p).unwrap();
            let want = conv_oracle(&x, &p);
            assert!(got.max_abs_diff(&want).unwrap() < 1e-12, "k={k} s={stride}");
        }
    }

    #[test]
    fn conv_rejects_bad_input() {
        let x = Tensor4::<f32>::zeros(Shape4::new(1, 2, 4, 3)).unwrap();
        let p = TemporalConvParams::<f32>::zeros(1, 3, 3, 1, 1).unwrap();
        assert!(matches!(temporal_conv(&x, &p), Err(Error::Shape(_))));
        let mut p = TemporalConvParams::<f32>::zeros(1, 2, 3, 1, 1).unwrap();
        p.weight[2] = f32::NAN;
        assert!(matches!(temporal_conv(&x, &p), Err(Error::NonFinite(_))));
        let p = TemporalConvParams::<f32>::zeros(1, 2, 7, 1, 0).unwrap();
        assert!(matches!(temporal_conv(&x, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn pointwise_examples() {
        let mut rng = Rng::new(3);
        let x = rng.tensor::<f64>(Shape4::new(1, 2, 3, 2), 1.0);
        assert_eq!(pointwise_conv(&x, &PointwiseConvParams::identity(2)).unwrap(), x);

        let p = PointwiseConvParams::new(1, 2, vec![1.0, 2.0], None).unwrap();
        let y = pointwise_conv(&x, &p).unwrap();
        for (i, &yv) in y.data().iter().enumerate() {
            assert_eq!(yv, x.plane(0, 0)[i] + 2.0 * x.plane(0, 1)[i]);
        }

        let p = PointwiseConvParams::new(1, 2, vec![0.0, 0.0], Some(vec![5.0])).unwrap();
        assert!(pointwise_conv(&x, &p).unwrap().data().iter().all(|&v| v == 5.0));
        assert!(pointwise_conv(&x, &PointwiseConvParams::identity(3)).is_err());
    }

    #[test]
    fn graph_conv_examples() {
        let x = Tensor4::from_vec(Shape4::new(1, 1, 1, 2), vec![1.0, 2.0]).unwrap();
        let swap = AdjacencyParam::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(graph_conv(&x, &swap).unwrap().data(), &[2.0, 1.0]);
        assert_eq!(graph_conv(&x, &AdjacencyParam::identity(2)).unwrap(), x);
        assert!(graph_conv(&x, &AdjacencyParam::zeros(2)).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(graph_conv(&x, &AdjacencyParam::identity(3)).is_err());
    }

    #[test]
    fn graph_conv_keeps_channel_time_slices_separate() {
        let mut rng = Rng::new(11);
        let s = Shape4::new(2, 3, 4, 5);
        let mut x = rng.tensor::<f64>(s, 1.0);
        let a = AdjacencyParam::new(5, rng.vec(25, 1.0)).unwrap();
        let (n, c, t) = (1, 2, 3);
        for v in 0..5 {
            let i = x.index(n, c, t, v);
            x.data_mut()[i] = 0.0;
        }
        let y = graph_conv(&x, &a).unwrap();
        for v in 0..5 {
            assert_eq!(y.at(n, c, t, v), 0.0);
        }
        assert!(y.at(n, c, t - 1, 0) != 0.0);
    }

    #[test]
    fn grouped_graph_conv_examples() {
        let mut rng = Rng::new(5);
        let x = rng.tensor::<f64>(Shape4::new(2, 4, 3, 3), 1.0);
        let a = AdjacencyParam::new(3, rng.vec(9, 1.0)).unwrap();
        let single = graph_conv(&x, &a).unwrap();
        assert_eq!(grouped_graph_conv(&x, std::slice::from_ref(&a), 1).unwrap(), single);
        assert_eq!(grouped_graph_conv(&x, &[a.clone(), a.clone()], 2).unwrap(), single);

        let y = grouped_graph_conv(&x, &[AdjacencyParam::identity(3), AdjacencyParam::zeros(3)], 2).unwrap();
        for n in 0..2 {
            for c in 0..4 {
                if c < 2 {
                    assert_eq!(y.plane(n, c), x.plane(n, c));
                } else {
                    assert!(y.plane(n, c).iter().all(|&v| v == 0.0));
                }
            }
        }
        assert!(matches!(grouped_graph_conv(&x, &[a.clone(), a.clone(), a], 3), Err(Error::Config(_))));
    }

    #[test]
    fn avg_pool_examples() {
        let y = avg_pool_time(&t1(&[3.0, 3.0, 3.0]), 3, 1, 1).unwrap();
        assert_eq!(y.data(), &[2.0, 3.0, 2.0]);
        let mut rng = Rng::new(2);
        let x = rng.tensor::<f32>(Shape4::new(1, 2, 6, 3), 1.0);
        assert_eq!(avg_pool_time(&x, 1, 1, 0).unwrap(), x);
        assert!(avg_pool_time(&x, 2, 1, 0).is_err());
        assert!(avg_pool_time(&x, 9, 1, 0).is_err());
    }

    #[test]
    fn batch_norm_examples() {
        let x = t1(&[4.0]);
        let eps = 1e-5;
        let bn = BatchNormParams::new(vec![1.0], vec![4.0 - eps], vec![4.0], vec![0.5], eps).unwrap();
        let y = batch_norm_infer(&x, &bn).unwrap();
        assert!((y.data()[0] - 6.5).abs() < 1e-12);

        let mut rng = Rng::new(4);
        let x = rng.tensor::<f64>(Shape4::new(2, 3, 4, 2), 1.0);
        let y = batch_norm_infer(&x, &BatchNormParams::identity(3)).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() < 1e-15);

        let mut bn = BatchNormParams::<f64>::identity(3);
        bn.scale = vec![0.0; 3];
        bn.shift = vec![1.0, 2.0, 3.0];
        let y = batch_norm_infer(&x, &bn).unwrap();
        for c in 0..3 {
            assert!(y.plane(1, c).iter().all(|&v| v == bn.shift[c]));
        }
        assert!(batch_norm_infer(&x, &BatchNormParams::identity(2)).is_err());
    }

    #[test]
    fn tail_ops() {
        let x = t1(&[-1.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);

        let c = Tensor4::full(Shape4::new(2, 3, 4, 5), 1.75f64).unwrap();
        let pooled = global_avg_pool(&c);
        assert_eq!((pooled.rows, pooled.cols), (2, 3));
        assert!(pooled.data.iter().all(|&v| v == 1.75));

        let f = Matrix::from_vec(1, 2, vec![0.5, -3.0]).unwrap();
        let id = LinearParams::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(linear_head(&f, &id).unwrap(), f);
        let bad = LinearParams::new(2, 3, vec![0.0; 6], vec![0.0; 2]).unwrap();
        assert!(linear_head(&f, &bad).is_err());
    }
}
