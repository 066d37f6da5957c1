//! Learning time-varying linear causal models from nonstationary
//! multivariate time series.
//!
//! The model is a linear structural equation model whose coefficients and
//! noise variances follow autoregressive processes. Estimation runs a
//! stochastic approximation EM whose E-step is a conditional particle filter
//! with ancestor sampling; the causal graph is read off the posterior
//! coefficient trajectories by mean/variance thresholding, and one-step
//! forecasts are drawn from the posterior predictive by Metropolis-Hastings.
//!
//! All numerics are generic over the scalar type via [`scalar::Real`]
//! (implemented for `f32` and `f64`); the `*64` aliases below cover the
//! common case.

pub mod error;
pub mod eval;
pub mod forecast;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod saem;
pub mod scalar;
pub mod smoother;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

/// Model parameters over `f64`.
pub type SemParameters64 = model::SemParameters<f64>;
/// Latent trajectory over `f64`.
pub type LatentTrajectory64 = model::LatentTrajectory<f64>;
/// Causal graph over `f64` edge scores.
pub type CausalGraph64 = model::CausalGraph<f64>;
/// Dataset over `f64`.
pub type TimeSeriesDataset64 = model::TimeSeriesDataset<f64>;
/// Generator configuration over `f64`.
pub type GeneratorConfig64 = model::GeneratorConfig<f64>;
/// Fit configuration over `f64`.
pub type FitConfig64 = saem::FitConfig<f64>;
/// Fit result over `f64`.
pub type FitResult64 = saem::FitResult<f64>;
/// Benchmark configuration over `f64`.
pub type BenchmarkConfig64 = eval::BenchmarkConfig<f64>;
/// Benchmark report over `f64`.
pub type BenchmarkReport64 = eval::BenchmarkReport<f64>;
