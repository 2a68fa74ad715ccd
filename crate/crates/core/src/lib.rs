//! Desk-scale laboratory for diagnosing gradient conflict in
//! physics-informed neural network (PINN) training.
//!
//! The crate provides:
//!
//! * a scalar computation-graph autodiff engine with nested forward-mode
//!   input derivatives up to second order ([`autodiff`]),
//! * a shared-trunk PINN with per-loss low-rank adapters and
//!   conflict-aware mixing ([`model`]),
//! * conflict metrics and windowed profiling statistics ([`metrics`]),
//! * loss-weighting and gradient-surgery baselines ([`balance`]),
//! * a registry of small PDE benchmark problems ([`problems`]),
//! * the adapter training loop ([`trainer`]),
//! * the profiler and regime-aware method selector ([`regime`]),
//! * Monte Carlo and closed-form validation of the regime-transition
//!   theory ([`theorysim`]).
//!
//! Low-level numeric kernels are generic over the scalar type via
//! [`scalar::Scalar`]; the training stack instantiates everything at
//! [`Real`] (`f64`).

pub mod autodiff;
pub mod balance;
pub mod config;
pub mod metrics;
pub mod model;
pub mod params;
pub mod problems;
pub mod regime;
pub mod scalar;
pub mod theorysim;
pub mod trainer;

/// Scalar type used by the training stack. Profiling statistics involve
/// logs of small gradient norms, so everything runs in 64-bit floats.
pub type Real = f64;

/// Flat parameter vector partitioned into named blocks, at the default
/// scalar type.
pub type ParamVector = params::ParamVec<Real>;

/// Computation graph at the default scalar type.
pub type Graph = autodiff::Graph<Real>;
