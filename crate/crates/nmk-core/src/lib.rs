//! Certified Markovian dilations of non-Markovian open quantum systems.
//!
//! A bath is described by a memory kernel (a Radon measure on the time axis,
//! or equivalently its spectral density). The pipeline turns it into something
//! a classical computer can propagate:
//!
//! 1. [`kernels::regularize`] smooths the kernel with a mollifier of width ε,
//!    giving a square-integrable coupling `v_ε`.
//! 2. [`chain::star_to_chain`] restricts `|v̂_ε|²` to `[-ω_c, ω_c]` and maps the
//!    bath onto a nearest-neighbour chain of `N_m` modes.
//! 3. [`fock`] truncates every chain to at most `p` particles and builds the
//!    sparse dilated Hamiltonian.
//! 4. [`dynamics::evolve`] propagates, and the `*_bound` functions in
//!    [`dynamics`] price each approximation into an [`dynamics::ErrorBudget`].
//!
//! [`oracle`] holds the independent references used to check all of the above:
//! a uniform star discretization of the same coupling and a Lindblad integrator.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod chain;
pub mod dynamics;
pub mod fock;
pub mod kernels;
pub mod linalg;
pub mod oracle;
pub mod quad;

pub use num_complex::Complex64 as C64;

/// Everything that can go wrong in the numerical pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("spectral density is negative or complex at omega = {omega}")]
    NonPositiveDensity { omega: f64 },
    #[error("adaptive quadrature did not reach tolerance (estimate {estimate:e})")]
    QuadratureNotConverged { estimate: f64 },
    #[error("epsilon = {epsilon} must be below half the interval length {half_width}")]
    EpsilonTooLarge { epsilon: f64, half_width: f64 },
    #[error("sample grid too coarse: error estimate {estimate:e} exceeds {tolerance:e}")]
    GridTooCoarse { estimate: f64, tolerance: f64 },
    #[error("mollified spectral tail not negligible at the grid edge ({value:e})")]
    TailNotNegligible { value: f64 },
    #[error("weight has only {points} points of increase, {needed} needed")]
    DegenerateWeight { points: usize, needed: usize },
    #[error("recurrence broke down at index {index}")]
    RecursionBreakdown { index: usize },
    #[error("truncated space of dimension {dimension} exceeds cap {cap}")]
    DimensionOverflow { dimension: u128, cap: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("step control failed at t = {time}")]
    StepControlFailure { time: f64 },
    #[error("initial state has no computable occupation constants")]
    UnsupportedInitialState,
    #[error("operation not available for this kernel kind")]
    UnsupportedKernel,
    #[error("eigensolver did not converge")]
    NoConvergence,
}

pub type Result<T> = core::result::Result<T, Error>;
