//! Seeded random source for parameter initialisation and test inputs.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.0.gen_range(lo..hi)
    }

    /// Uniform on [-bound, bound).
    pub fn symmetric(&mut self, bound: f64) -> f64 {
        self.uniform(-bound, bound)
    }

    pub fn vec<S: Scalar>(&mut self, len: usize, bound: f64) -> Vec<S> {
        (0..len).map(|_| S::from_f64_lossy(self.symmetric(bound))).collect()
    }

    pub fn vec_range<S: Scalar>(&mut self, len: usize, lo: f64, hi: f64) -> Vec<S> {
        (0..len).map(|_| S::from_f64_lossy(self.uniform(lo, hi))).collect()
    }

    pub fn tensor<S: Scalar>(&mut self, shape: Shape4, bound: f64) -> Tensor4<S> {
        Tensor4::from_vec(shape, self.vec(shape.numel(), bound)).expect("shape checked by caller")
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }

    pub fn coin(&mut self) -> bool {
        self.0.gen()
    }
}
