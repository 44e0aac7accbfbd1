//! Compressed sensing from anisotropic measurement ensembles.
//!
//! The crate is organised around five pieces:
//!
//! * [`ensemble`]: measurement distributions, their second moments, incoherence,
//!   s-sparse condition numbers, the commutator constant and global rescaling.
//! * [`solver`]: equality-constrained l1 minimisation (basis pursuit).
//! * [`certifier`]: golfing-scheme construction of inexact dual certificates and
//!   a verifier for the sufficient conditions they must meet.
//! * [`concentration`]: closed-form tail bounds and Monte Carlo estimates of the
//!   matching deviation statistics.
//! * [`harness`]: seeded, parallel experiment drivers that emit CSV and plots.
//!
//! Everything numerical is generic over [`Scalar`], implemented for `f64` and
//! [`Complex64`](num_complex::Complex64).

// NaN must fail every range check, so `!(x > 0.0)` is used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certifier;
pub mod concentration;
pub mod ensemble;
mod error;
mod field;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod solver;

pub use certifier::{
    default_params, golf, golfing_identity_check, verify_inexact_duality, CertificateResult,
    DualityReport, FailureReason, GolfingParams,
};
pub use concentration::{
    binomial_tail_bound, clopper_pearson, estimate_tail, fundamental_estimates, lemma_bound,
    matrix_bernstein_bound, vector_bernstein_bound, FundamentalCheck, Statistic, TailEstimate,
    TailExperiment, ZMode,
};
pub use ensemble::{
    kappa_s, sparse_eigs, AnyEnsemble, Atom, EnsembleKind, EnsembleProfile, EnsembleSpec,
    Exactness, SamplingMatrix, SparseEigs, DEFAULT_SPARSE_BUDGET,
};
pub use error::{Error, Result};
pub use field::{Field, Scalar};
pub use solver::{basis_pursuit, exact_recovery_check, BpOptions, BpSolution};

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
