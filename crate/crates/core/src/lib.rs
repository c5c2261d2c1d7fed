//! Kernel discrepancy estimators.
//!
//! The crate covers maximum mean discrepancy (MMD) and kernel Stein
//! discrepancy (KSD) between an empirical sample and an isotropic target, in
//! three flavours:
//!
//! * unsliced pairwise U/V-statistics ([`mmd`], [`ksd`]),
//! * finite slicing with Gauss–Hermite quadrature of the one-dimensional
//!   characteristic-function form ([`sliced`]),
//! * analytic infinite slicing, where the average over all directions of a
//!   Gaussian kernel collapses to a Kummer confluent hypergeometric function
//!   ([`mmd::mmd_kummer_analytic_sliced`], [`ksd::sliced_ksd_analytic`]).
//!
//! The special functions these need live in [`specfun`]. [`flow`] runs
//! particle gradient flows that use any estimator as a regularizer.
//!
//! ```
//! use kerdisc::{mmd, PriorSpec, RngState, Statistic};
//!
//! let prior = PriorSpec::gaussian(4, 1.0).unwrap();
//! let x = prior.sample(512, &RngState::new(1)).unwrap();
//! let est = mmd::mmd_gaussian_closed_form(0.5, 1.0, &x, Statistic::U).unwrap();
//! assert!(est.value.abs() < 0.01);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod estimate;
pub mod flow;
pub mod io;
pub mod kernels;
pub mod ksd;
pub mod mmd;
mod pairwise;
pub mod priors;
pub mod rng;
pub mod sliced;
pub mod specfun;

pub use batch::{project, sample_directions, DirectionSet, Projections, SampleBatch};
pub use estimate::DiscrepancyEstimate;
pub use flow::{FlowState, RegularizerKind, RegularizerSpec};
pub use io::{load_samples, save_samples, SampleFormat};
pub use kernels::KernelSpec;
pub use ksd::{Score1d, SteinKernelSpec, VmfSteinForm};
pub use mmd::{EmpiricalCf, Statistic};
pub use priors::{PriorKind, PriorSpec};
pub use rng::RngState;
pub use sliced::{Slice1dMetric, SliceFamily, SliceScoreMode, SlicedRegSpec};
pub use specfun::{KummerMode, QuadratureRule};

/// Errors reported by every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("flow diverged at step {step}: {msg}")]
    Diverged { step: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

pub(crate) fn unsupported<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Unsupported(msg.into()))
}
