//! Dense rank-4 activations in (batch, channel, time, vertex) order.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{cast_vec, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub t: usize,
    pub v: usize,
}

impl Shape4 {
    pub const fn new(n: usize, c: usize, t: usize, v: usize) -> Self {
        Self { n, c, t, v }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.t * self.v
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.t, self.v]
    }

    /// Elements in one (n, c) plane.
    pub fn plane(&self) -> usize {
        self.t * self.v
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.t, self.v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<S> {
    shape: Shape4,
    data: Vec<S>,
}

impl<S: Scalar> Tensor4<S> {
    pub fn from_vec(shape: Shape4, data: Vec<S>) -> Result<Self> {
        if shape.dims().contains(&0) {
            return Err(Error::shape(format!("tensor dimensions must be >= 1, got {shape}")));
        }
        if data.len() != shape.numel() {
            return Err(Error::shape(format!(
                "tensor {shape} needs {} elements, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape4) -> Result<Self> {
        Self::from_vec(shape, vec![S::zero(); shape.numel()])
    }

    pub fn full(shape: Shape4, value: S) -> Result<Self> {
        Self::from_vec(shape, vec![value; shape.numel()])
    }

    pub fn from_fn(shape: Shape4, mut f: impl FnMut(usize, usize, usize, usize) -> S) -> Result<Self> {
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for t in 0..shape.t {
                    for v in 0..shape.v {
                        data.push(f(n, c, t, v));
                    }
                }
            }
        }
        Self::from_vec(shape, data)
    }

    /// Crate-internal constructor for kernel outputs whose shape is already checked.
    pub(crate) fn from_parts(shape: Shape4, data: Vec<S>) -> Self {
        debug_assert_eq!(data.len(), shape.numel());
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, t: usize, v: usize) -> usize {
        let s = &self.shape;
        ((n * s.c + c) * s.t + t) * s.v + v
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, t: usize, v: usize) -> S {
        self.data[self.index(n, c, t, v)]
    }

    /// The (t, v) plane of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[S] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn cast<D: Scalar>(&self) -> Tensor4<D> {
        Tensor4 {
            shape: self.shape,
            data: cast_vec(&self.data),
        }
    }

    /// Element-wise sum; shapes must match.
    pub fn add(&self, other: &Tensor4<S>) -> Result<Tensor4<S>> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Tensor4<S>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "cannot add tensors of shape {} and {}",
                self.shape, other.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn scale(&self, alpha: S) -> Tensor4<S> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&x| x * alpha).collect(),
        }
    }

    /// Channels `start..start + len` of every sample.
    pub fn channel_slice(&self, start: usize, len: usize) -> Result<Tensor4<S>> {
        let s = self.shape;
        if len == 0 || start + len > s.c {
            return Err(Error::shape(format!(
                "channel range {start}..{} out of bounds for {s}",
                start + len
            )));
        }
        let p = s.plane();
        let mut data = Vec::with_capacity(s.n * len * p);
        for n in 0..s.n {
            let base = (n * s.c + start) * p;
            data.extend_from_slice(&self.data[base..base + len * p]);
        }
        Ok(Tensor4::from_parts(Shape4::new(s.n, len, s.t, s.v), data))
    }

    /// Concatenate along the channel axis, in order.
    pub fn concat_channels(parts: &[Tensor4<S>]) -> Result<Tensor4<S>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("cannot concatenate zero tensors"))?
            .shape;
        for p in parts {
            let s = p.shape;
            if (s.n, s.t, s.v) != (first.n, first.t, first.v) {
                return Err(Error::shape(format!(
                    "cannot concatenate {s} with {first} along channels"
                )));
            }
        }
        let c: usize = parts.iter().map(|p| p.shape.c).sum();
        let plane = first.plane();
        let mut data = Vec::with_capacity(first.n * c * plane);
        for n in 0..first.n {
            for p in parts {
                let len = p.shape.c * plane;
                data.extend_from_slice(&p.data[n * len..(n + 1) * len]);
            }
        }
        Ok(Tensor4::from_parts(Shape4::new(first.n, c, first.t, first.v), data))
    }

    pub fn max_abs_diff(&self, other: &Tensor4<S>) -> Result<S> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "cannot compare tensors of shape {} and {}",
                self.shape, other.shape
            )));
        }
        Ok(max_abs_diff(&self.data, &other.data))
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Largest element-wise absolute difference; NaN anywhere yields NaN.
pub fn max_abs_diff<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut m = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = (x - y).abs();
        if d.is_nan() {
            return d;
        }
        m = m.max(d);
    }
    m
}

/// Row-major (rows × cols) matrix, used for pooled features and logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "matrix {rows}x{cols} needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn max_abs_diff(&self, other: &Matrix<S>) -> Result<S> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::shape(format!(
                "cannot compare {}x{} with {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(max_abs_diff(&self.data, &other.data))
    }

    pub fn cast<D: Scalar>(&self) -> Matrix<D> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: cast_vec(&self.data),
        }
    }
}
