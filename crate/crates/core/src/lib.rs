//! Quantitative periodic homogenization of the oscillating Dirichlet problem.
//!
//! Numerical kernels are generic over [`Scalar`]; the boundary-layer, homogenized-datum and
//! finite element stages are `f64` only. The aliases below fix the scalar to `f64`.

pub mod cell;
pub mod config;
pub mod convergence;
pub mod czdecomp;
pub mod dioph;
pub mod ergodic;
pub mod error;
pub mod fem;
pub mod fft;
pub mod fields;
pub mod gbar;
pub mod halfspace;
pub mod mollifier;
pub mod quad;
pub mod run;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Complex, Scalar};

pub type PeriodicTensor = fields::PeriodicTensor<f64>;
pub type PeriodicField = fields::PeriodicField<f64>;
pub type TwoScaleBoundaryDatum = fields::TwoScaleBoundaryDatum<f64>;
pub type SlowFactor = fields::SlowFactor<f64>;
pub type CellSolution = cell::CellSolution<f64>;
pub type Direction = dioph::Direction<f64>;
pub type Frame = dioph::Frame<f64>;
pub type SmoothWindow = ergodic::SmoothWindow<f64>;
pub use fields::ConvexDomain;
pub use halfspace::{LayerParams, LayerSolution};
pub use fem::DiscreteSolution;
pub use czdecomp::CubePartition;
