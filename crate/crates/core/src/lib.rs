//! Numerical laboratory for the continuous-time random walk pinning model on ℤ^d.
//!
//! A walk `X` with unit jump rate is rewarded by `e^{β L_t(X,Y)}`, where `L_t`
//! is the time it spends on a second, independent walk `Y` of rate ρ (the
//! disorder). The crate computes every finite object that governs this model:
//!
//! * [`kernels`]: transition probabilities by uniformisation, the Green
//!   function and the lattice kernel estimates;
//! * [`lattice_walk`]: exact event-driven path sampling and collision local times;
//! * [`renewal`]: the heavy-tailed return-time law K, its sampler and the
//!   renewal density P;
//! * [`pinning_model`]: quenched and annealed partition functions via Monte
//!   Carlo and via the renewal Volterra equation;
//! * [`disorder_relevance`]: the self-intersection functional H_L, tilted
//!   disorder, fractional moments and coarse graining.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the formulas in the lattice and quadrature code.
#![allow(clippy::needless_range_loop, clippy::explicit_counter_loop)]

pub mod disorder_relevance;
pub mod error;
pub mod estimate;
pub mod kernels;
pub mod lattice_walk;
pub mod pinning_model;
pub mod quad;
pub mod renewal;
pub mod rng;

pub use error::{Error, Result};
pub use estimate::{Estimate, Scale};
pub use kernels::{build_kernel, JumpKernel, KernelTable, Site, TransitionGrid};
pub use rng::Stream;
