//! Core model: domain types, synthetic data generation, the observation
//! likelihood, and AR stationary-moment utilities.

mod ops;
mod types;

pub use ops::{
    ar_stationary_moments, generate_benchmark_instance, lag_contribution, observation_loglik,
    simulate_latents, simulate_observations, simulate_observations_with_noise, validate_acyclic,
};
pub(crate) use ops::topological_order;
pub use types::{
    CausalGraph, GeneratorConfig, LatentSlice, LatentTrajectory, Scenario, SemParameters,
    TimeSeriesDataset,
};
