//! Spatio-temporal graph convolution inference engine with structural
//! re-parameterization.
//!
//! Multi-branch training structures (Rep-TCN temporal blocks, HPI-GC graph
//! blocks) are folded into single-branch inference structures by six
//! parameter-space rewrites ([`blending`]). The fused network computes the
//! same function with fewer kernels; [`model`] assembles the nine-block
//! network and [`io`] serializes it.

pub mod bench;
pub mod blending;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod hpi_gc;
pub mod io;
mod kernel;
pub mod model;
pub mod ops;
pub mod params;
pub mod rep_tcn;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{Error, FormatError, Result};
pub use params::{
    AdjacencyParam, BatchNormParams, LinearParams, PointwiseConvParams, TemporalConvParams,
};
pub use scalar::{DType, Scalar};
pub use tensor::{Matrix, Shape4, Tensor4};
