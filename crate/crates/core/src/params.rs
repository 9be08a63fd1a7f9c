//! Parameter containers shared by the kernels, the blendings and the model.

use crate::error::{Error, Result};
use crate::scalar::{cast_vec, Scalar};

/// Output length of a window of `kernel` taps sliding over `len` frames.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::shape(format!(
            "kernel ({kernel}) and stride ({stride}) must be >= 1"
        )));
    }
    let padded = len + 2 * padding;
    if padded < kernel {
        return Err(Error::shape(format!(
            "kernel {kernel} does not fit {len} frames with padding {padding}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Symmetric padding that keeps the frame count at stride 1 for odd kernels.
pub fn same_padding(kernel: usize) -> usize {
    kernel.saturating_sub(1) / 2
}

fn check_finite<S: Scalar>(what: &str, v: &[S]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// A K×1 convolution over the time axis: weight (C_out, C_in, K) plus bias.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalConvParams<S> {
    pub c_out: usize,
    pub c_in: usize,
    pub kernel: usize,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
    pub stride: usize,
    pub padding: usize,
}

impl<S: Scalar> TemporalConvParams<S> {
    pub fn new(
        c_out: usize,
        c_in: usize,
        kernel: usize,
        weight: Vec<S>,
        bias: Vec<S>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if c_out == 0 || c_in == 0 || kernel == 0 || stride == 0 {
            return Err(Error::config(format!(
                "temporal conv needs positive c_out/c_in/kernel/stride, got {c_out}/{c_in}/{kernel}/{stride}"
            )));
        }
        if weight.len() != c_out * c_in * kernel {
            return Err(Error::shape(format!(
                "temporal conv weight ({c_out}, {c_in}, {kernel}) needs {} values, got {}",
                c_out * c_in * kernel,
                weight.len()
            )));
        }
        if bias.len() != c_out {
            return Err(Error::shape(format!(
                "temporal conv bias needs {c_out} values, got {}",
                bias.len()
            )));
        }
        Ok(Self {
            c_out,
            c_in,
            kernel,
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn zeros(c_out: usize, c_in: usize, kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        Self::new(
            c_out,
            c_in,
            kernel,
            vec![S::zero(); c_out * c_in * kernel],
            vec![S::zero(); c_out],
            stride,
            padding,
        )
    }

    /// Channel-identity map with a single centred tap.
    pub fn identity(c: usize, kernel: usize) -> Result<Self> {
        let mut p = Self::zeros(c, c, kernel, 1, same_padding(kernel))?;
        let mid = kernel / 2;
        for o in 0..c {
            p.weight[(o * c + o) * kernel + mid] = S::one();
        }
        Ok(p)
    }

    #[inline]
    pub fn w(&self, o: usize, i: usize, k: usize) -> S {
        self.weight[(o * self.c_in + i) * self.kernel + k]
    }

    pub fn out_len(&self, t: usize) -> Result<usize> {
        conv_out_len(t, self.kernel, self.stride, self.padding)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite("temporal conv weight", &self.weight)?;
        check_finite("temporal conv bias", &self.bias)
    }

    pub fn cast<D: Scalar>(&self) -> TemporalConvParams<D> {
        TemporalConvParams {
            c_out: self.c_out,
            c_in: self.c_in,
            kernel: self.kernel,
            weight: cast_vec(&self.weight),
            bias: cast_vec(&self.bias),
            stride: self.stride,
            padding: self.padding,
        }
    }
}

/// A 1×1 convolution: pure channel mixing.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseConvParams<S> {
    pub c_out: usize,
    pub c_in: usize,
    pub weight: Vec<S>,
    pub bias: Option<Vec<S>>,
}

impl<S: Scalar> PointwiseConvParams<S> {
    pub fn new(c_out: usize, c_in: usize, weight: Vec<S>, bias: Option<Vec<S>>) -> Result<Self> {
        if c_out == 0 || c_in == 0 {
            return Err(Error::config("pointwise conv needs positive channel counts"));
        }
        if weight.len() != c_out * c_in {
            return Err(Error::shape(format!(
                "pointwise weight ({c_out}, {c_in}) needs {} values, got {}",
                c_out * c_in,
                weight.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != c_out {
                return Err(Error::shape(format!(
                    "pointwise bias needs {c_out} values, got {}",
                    b.len()
                )));
            }
        }
        Ok(Self {
            c_out,
            c_in,
            weight,
            bias,
        })
    }

    pub fn identity(c: usize) -> Self {
        let mut weight = vec![S::zero(); c * c];
        for i in 0..c {
            weight[i * c + i] = S::one();
        }
        Self {
            c_out: c,
            c_in: c,
            weight,
            bias: None,
        }
    }

    #[inline]
    pub fn w(&self, o: usize, i: usize) -> S {
        self.weight[o * self.c_in + i]
    }

    /// Bias values, zeros when absent.
    pub fn bias_or_zero(&self) -> Vec<S> {
        self.bias.clone().unwrap_or_else(|| vec![S::zero(); self.c_out])
    }

    /// The same map viewed as a 1-tap temporal conv with the given stride.
    pub fn to_temporal(&self, stride: usize) -> TemporalConvParams<S> {
        TemporalConvParams {
            c_out: self.c_out,
            c_in: self.c_in,
            kernel: 1,
            weight: self.weight.clone(),
            bias: self.bias_or_zero(),
            stride,
            padding: 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite("pointwise conv weight", &self.weight)?;
        if let Some(b) = &self.bias {
            check_finite("pointwise conv bias", b)?;
        }
        Ok(())
    }

    pub fn cast<D: Scalar>(&self) -> PointwiseConvParams<D> {
        PointwiseConvParams {
            c_out: self.c_out,
            c_in: self.c_in,
            weight: cast_vec(&self.weight),
            bias: self.bias.as_deref().map(cast_vec),
        }
    }
}

pub const DEFAULT_BN_EPS: f64 = 1e-5;

/// Inference-mode batch norm statistics and affine parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
    pub scale: Vec<S>,
    pub shift: Vec<S>,
    pub eps: S,
}

impl<S: Scalar> BatchNormParams<S> {
    pub fn new(mean: Vec<S>, var: Vec<S>, scale: Vec<S>, shift: Vec<S>, eps: S) -> Result<Self> {
        let c = mean.len();
        if c == 0 || var.len() != c || scale.len() != c || shift.len() != c {
            return Err(Error::shape(format!(
                "batch norm vectors must share a positive length, got {}/{}/{}/{}",
                c,
                var.len(),
                scale.len(),
                shift.len()
            )));
        }
        if eps.is_nan() || eps <= S::zero() {
            return Err(Error::config("batch norm epsilon must be positive"));
        }
        if let Some(ch) = var.iter().position(|&v| v.is_nan() || v < S::zero()) {
            return Err(Error::config(format!(
                "batch norm variance must be >= 0 (channel {ch})"
            )));
        }
        Ok(Self {
            mean,
            var,
            scale,
            shift,
            eps,
        })
    }

    /// μ = 0, σ = 1, unit scale, zero shift.
    pub fn identity(c: usize) -> Self {
        let eps = S::from_f64_lossy(DEFAULT_BN_EPS);
        Self {
            mean: vec![S::zero(); c],
            var: vec![S::one() - eps; c],
            scale: vec![S::one(); c],
            shift: vec![S::zero(); c],
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// σ = sqrt(variance + eps) per channel.
    pub fn sigma(&self) -> Vec<S> {
        self.var.iter().map(|&v| (v + self.eps).sqrt()).collect()
    }

    /// Per-channel multiplier w_bn / σ.
    pub fn factor(&self) -> Vec<S> {
        self.scale
            .iter()
            .zip(self.sigma())
            .map(|(&w, s)| w / s)
            .collect()
    }

    /// Learnable parameters only (scale and shift); running statistics are not counted.
    pub fn param_count(&self) -> usize {
        2 * self.channels()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, v) in [
            ("mean", &self.mean),
            ("variance", &self.var),
            ("scale", &self.scale),
            ("shift", &self.shift),
        ] {
            check_finite(&format!("batch norm {name}"), v)?;
        }
        Ok(())
    }

    pub fn cast<D: Scalar>(&self) -> BatchNormParams<D> {
        BatchNormParams {
            mean: cast_vec(&self.mean),
            var: cast_vec(&self.var),
            scale: cast_vec(&self.scale),
            shift: cast_vec(&self.shift),
            eps: D::from_f64_lossy(self.eps.to_f64_lossless()),
        }
    }
}

/// Learnable V×V joint-topology matrix (PA). Unconstrained.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyParam<S> {
    pub v: usize,
    pub matrix: Vec<S>,
}

impl<S: Scalar> AdjacencyParam<S> {
    pub fn new(v: usize, matrix: Vec<S>) -> Result<Self> {
        if v == 0 || matrix.len() != v * v {
            return Err(Error::shape(format!(
                "adjacency of {v} joints needs {} values, got {}",
                v * v,
                matrix.len()
            )));
        }
        Ok(Self { v, matrix })
    }

    pub fn identity(v: usize) -> Self {
        let mut matrix = vec![S::zero(); v * v];
        for i in 0..v {
            matrix[i * v + i] = S::one();
        }
        Self { v, matrix }
    }

    pub fn zeros(v: usize) -> Self {
        Self {
            v,
            matrix: vec![S::zero(); v * v],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, w: usize) -> S {
        self.matrix[u * self.v + w]
    }

    pub fn param_count(&self) -> usize {
        self.matrix.len()
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite("adjacency matrix", &self.matrix)
    }

    pub fn cast<D: Scalar>(&self) -> AdjacencyParam<D> {
        AdjacencyParam {
            v: self.v,
            matrix: cast_vec(&self.matrix),
        }
    }
}

/// Dense classifier map: weight (out, in) plus bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams<S> {
    pub out_features: usize,
    pub in_features: usize,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> LinearParams<S> {
    pub fn new(out_features: usize, in_features: usize, weight: Vec<S>, bias: Vec<S>) -> Result<Self> {
        if weight.len() != out_features * in_features || bias.len() != out_features {
            return Err(Error::shape(format!(
                "linear ({out_features}, {in_features}) got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            out_features,
            in_features,
            weight,
            bias,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn cast<D: Scalar>(&self) -> LinearParams<D> {
        LinearParams {
            out_features: self.out_features,
            in_features: self.in_features,
            weight: cast_vec(&self.weight),
            bias: cast_vec(&self.bias),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_len_formula() {
        assert_eq!(conv_out_len(4, 3, 1, 1).unwrap(), 4);
        assert_eq!(conv_out_len(64, 5, 2, 2).unwrap(), 32);
        assert_eq!(conv_out_len(64, 1, 2, 0).unwrap(), 32);
        assert_eq!(conv_out_len(10, 9, 1, 4).unwrap(), 10);
        assert!(conv_out_len(2, 5, 1, 0).is_err());
        assert!(conv_out_len(2, 1, 0, 0).is_err());
    }

    #[test]
    fn stride_one_same_padding_preserves_length() {
        for k in [1, 3, 5, 7, 9] {
            for t in 1..20 {
                assert_eq!(conv_out_len(t.max(1), k, 1, same_padding(k)).unwrap(), t);
            }
        }
    }

    #[test]
    fn bn_rejects_negative_variance() {
        let r = BatchNormParams::new(vec![0.0f32], vec![-1.0], vec![1.0], vec![0.0], 1e-5);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn identity_bn_has_unit_sigma() {
        let bn = BatchNormParams::<f64>::identity(3);
        for s in bn.sigma() {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }
}

/// Random initialisers used by model construction and randomized tests.
pub mod init {
    use super::*;
    use crate::rng::Rng;

    /// Uniform weights with variance 1/fan_in, scaled by `gain`.
    pub fn fan_in_bound(fan_in: usize, gain: f64) -> f64 {
        gain * (3.0 / fan_in as f64).sqrt()
    }

    pub fn temporal<S: Scalar>(
        rng: &mut Rng,
        c_out: usize,
        c_in: usize,
        kernel: usize,
        stride: usize,
        gain: f64,
        with_bias: bool,
    ) -> TemporalConvParams<S> {
        let weight = rng.vec(c_out * c_in * kernel, fan_in_bound(c_in * kernel, gain));
        let bias = if with_bias {
            rng.vec(c_out, 0.1)
        } else {
            vec![S::zero(); c_out]
        };
        TemporalConvParams::new(c_out, c_in, kernel, weight, bias, stride, same_padding(kernel))
            .expect("dimensions are consistent by construction")
    }

    pub fn pointwise<S: Scalar>(
        rng: &mut Rng,
        c_out: usize,
        c_in: usize,
        gain: f64,
        with_bias: bool,
    ) -> PointwiseConvParams<S> {
        let weight = rng.vec(c_out * c_in, fan_in_bound(c_in, gain));
        let bias = with_bias.then(|| rng.vec(c_out, 0.1));
        PointwiseConvParams::new(c_out, c_in, weight, bias).expect("consistent dimensions")
    }

    /// Plausible trained statistics: small means and shifts, variance and scale near 1.
    pub fn batch_norm<S: Scalar>(rng: &mut Rng, c: usize, scale_lo: f64, scale_hi: f64) -> BatchNormParams<S> {
        BatchNormParams::new(
            rng.vec(c, 0.1),
            rng.vec_range(c, 0.5, 1.5),
            rng.vec_range(c, scale_lo, scale_hi),
            rng.vec(c, 0.1),
            S::from_f64_lossy(DEFAULT_BN_EPS),
        )
        .expect("positive variance by construction")
    }

    /// Identity plus uniform noise in [-0.05, 0.05].
    pub fn adjacency<S: Scalar>(rng: &mut Rng, v: usize) -> AdjacencyParam<S> {
        let mut a = AdjacencyParam::<S>::identity(v);
        for m in &mut a.matrix {
            *m = S::from_f64_lossy(m.to_f64_lossless() + rng.symmetric(0.05));
        }
        a
    }
}
