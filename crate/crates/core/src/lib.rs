//! Generalised linear models with extreme-value errors.
//!
//! Error families (GEVD, GPD, Poisson, binomial, Gaussian location) with
//! closed-form scores and Fisher information, coordinate-wise links including
//! the slowly growing shape links, partitioned GLM scores and information,
//! numerical checkers for the L₂-differentiability regularity conditions,
//! Fisher-scoring estimation and an AR-type extreme-value time-series
//! simulator.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common double-precision case.

// `!(x > 0.0)` style checks deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod family;
pub mod glm;
pub mod linalg;
pub mod link;
pub mod mc;
pub mod partition;
pub mod quadrature;
pub mod scalar;
pub mod special;
pub mod ts;

pub use diagnostics::{CheckConfig, ConditionId, ConditionReport, Verdict};
pub use error::{Error, Result};
pub use estimation::{default_start, fisher_scoring_fit, FitConfig, FitResult};
pub use family::{ErrorFamily, Theta};
pub use glm::{Design, DesignScheme, GlmSpec, RegressorSampler};
pub use linalg::Matrix;
pub use link::{LinkFunction, ScalarLink};
pub use partition::PartitionSpec;
pub use quadrature::QuantileGrid;
pub use scalar::Scalar;
pub use ts::{simulate, TsConfig, TsSeries};

pub type ErrorFamily64 = ErrorFamily<f64>;
pub type Theta64 = Theta<f64>;
pub type GlmSpec64 = GlmSpec<f64>;
pub type Design64 = Design<f64>;
pub type Matrix64 = Matrix<f64>;
pub type QuantileGrid64 = QuantileGrid<f64>;

pub type ErrorFamily32 = ErrorFamily<f32>;
pub type GlmSpec32 = GlmSpec<f32>;
