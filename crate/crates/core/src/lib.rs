//! Exponential stability certificates for linear neutral delay systems
//!
//! ```text
//! ẋ(t) − A(t)ẋ(g(t)) = Σ_k B_k(t)x(h_k(t)) + f(t)
//! ```
//!
//! with time-varying coefficients, together with a method-of-steps integrator
//! used to check the resulting solution bounds against trajectories.

pub mod catalog;
pub mod exprlang;
pub mod matfun;
pub mod model;
pub mod certify;
pub mod simulate;
