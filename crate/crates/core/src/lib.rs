//! Simulation laboratory for weighted approximations of self-normalized
//! partial sum processes under the domain of attraction of the normal law.
//!
//! The crate is organised bottom-up:
//!
//! - [`weights`]: weight functions `q` on `(0,1]` and class-Q checks.
//! - [`criterion`]: numerical classification of the integral criterion
//!   `I(q,c) = ∫ t^{-1} exp(-c q²(t)/t) dt` and the `L_p` criterion.
//! - [`dan_models`]: zero-mean laws in the normal domain of attraction, the
//!   truncated second moment `l(x)` and the norming sequence `η_j`, `b_n²`.
//! - [`processes`]: partial-sum paths and their normalized, self-normalized
//!   and Studentized weighted sup / `L_p` functionals.
//! - [`wiener`]: Wiener reference functionals on refinement grids.
//! - [`experiments`]: seeded Monte Carlo runs comparing the two.
//! - [`config`] and [`artifact`]: experiment configuration and on-disk formats.

// NaN-rejecting guards are written as `!(x >= 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod config;
pub mod criterion;
pub mod dan_models;
pub mod empirical;
pub mod experiments;
pub mod processes;
pub mod quadrature;
pub mod seeding;
pub mod weights;
pub mod wiener;

pub use criterion::{classify_criterion, integral_blocks, lp_criterion, CriterionVerdict, Verdict};
pub use dan_models::{DistributionModel, NormingTable};
pub use empirical::{ks_distance, EmpiricalDistribution};
pub use processes::{FunctionalKind, Normalization, PathSample};
pub use weights::WeightFunction;
pub use wiener::WienerGrid;

/// Version string embedded in every output artifact.
pub const CODE_VERSION: &str = concat!("wapprox ", env!("CARGO_PKG_VERSION"));
