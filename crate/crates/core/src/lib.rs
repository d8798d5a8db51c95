//! Spectral analysis of spatio-temporal kernels for time-varying Bayesian optimization.
//!
//! * [`kernels`]: temporal and spatial correlation functions, spectral densities,
//!   class tags and low-rank cosine approximations.
//! * [`spectral`]: kernel matrices, exact eigendecompositions and spectrum approximations.
//! * [`gp`]: exact and Mercer-approximated GP posteriors, prior path sampling.
//! * [`tvbo`]: the GP-UCB loop and regret traces.
//! * [`bounds`]: mutual information, regret upper/lower bounds, scaling diagnostics.

pub mod bounds;
pub mod exec;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod spectral;
pub mod tvbo;

pub use exec::Execution;
