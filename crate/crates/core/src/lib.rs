//! Flat Higgs bundles over flat affine tori: the (p,q)-form calculus of
//! affine manifolds, extended Chern-Weil quantities, slope stability, and a
//! continuity-method solver for affine Yang-Mills-Higgs metrics.
//!
//! Everything is discretized on a uniform periodic grid over `[0,1)^n` and
//! differentiated spectrally. Bundle-valued fields are stored in the
//! periodic gauge `W(x) = exp(sum_k x^k L_k)`, where `L_k` are logarithms of
//! the monodromy matrices; in that frame the flat connection has constant
//! connection matrix `sum_k L_k dx^k`.

pub mod bundle;
pub mod calculus;
pub mod error;
pub mod geometry;
pub mod hermitian;
pub mod linalg;
pub mod report;
pub mod scenario;
pub mod selfcheck;
pub mod solver;
pub mod spectral;
pub mod stability;

pub use bundle::FlatHiggsBundle;
pub use calculus::{PQField, ValueShape};
pub use error::{Error, Result};
pub use geometry::{AffineTorus, MetricSpec};
pub use hermitian::{CurvatureBundle, MetricField};
pub use solver::{SolverOptions, SolverStatus, SolverTrace};
pub use stability::{StabilityReport, Verdict};

/// Complex scalar used for all field coefficients.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
