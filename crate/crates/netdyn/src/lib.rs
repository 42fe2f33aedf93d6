//! Low-dimensional modeling and forecasting of dynamics on networks.
//!
//! The crate covers the full pipeline:
//!
//! 1. [`graph`] — build or load the network (stochastic block model, balanced
//!    trees, paths, edge-list files, embedded reference datasets).
//! 2. [`dynamics`] — define coupled-ODE dynamics on the network (SIS
//!    epidemics, consensus) and integrate them with fixed-step RK4 to obtain
//!    equidistant snapshot trajectories.
//! 3. [`pod`] — compress snapshots with proper orthogonal decomposition:
//!    thin SVD, mode selection, projection to time-dependent coefficients,
//!    reconstruction.
//! 4. [`sindy`] — identify the governing equations of the coefficients by
//!    sparse regression over a candidate-function library (STLSQ and SR3
//!    solvers).
//! 5. [`predict`] — fit on an observation window, integrate the identified
//!    model forward, reconstruct nodal states, and score against ground
//!    truth; plus a surrogate-adjacency predictor for the case where the
//!    dynamics parameters are known.
//! 6. [`analysis`] — Laplacian eigenstructure and spectral clustering of
//!    either the adjacency matrix or the snapshot matrix.
//!
//! All numerical kernels are generic over the floating-point type through
//! [`Scalar`]; `f64` aliases for the main types live at the crate root.
//! Every randomized operation takes an explicit 64-bit seed and is
//! reproducible bit-for-bit across platforms (see [`rng`]).

// Validation guards are written `!(x > 0)` instead of `x <= 0` so NaN fails
// the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod graph;
pub mod linalg;
pub mod pod;
pub mod predict;
pub mod rng;
pub mod scalar;
pub mod sindy;

mod error;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` graph.
pub type GraphF64 = graph::Graph<f64>;
/// `f64` trajectory of nodal states.
pub type TrajectoryF64 = dynamics::Trajectory<f64>;
/// `f64` snapshot matrix.
pub type SnapshotMatrixF64 = pod::SnapshotMatrix<f64>;
/// `f64` POD basis.
pub type PodBasisF64 = pod::PodBasis<f64>;
/// `f64` coefficient series.
pub type CoeffSeriesF64 = pod::CoeffSeries<f64>;
/// `f64` identified sparse model.
pub type SindyModelF64 = sindy::SindyModel<f64>;
/// `f64` forecast.
pub type ForecastF64 = predict::Forecast<f64>;
