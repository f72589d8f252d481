//! Center-outward (measure-transportation) rank-based tests for vector
//! autoregressive models.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: regular grids over the unit ball and the `n = n_R n_S + n_0`
//!   factorization.
//! - [`transport`]: the optimal coupling between residuals and gridpoints,
//!   yielding empirical center-outward distribution values, ranks and signs.
//! - [`var`]: VAR models, simulation, residual filtering, least-squares
//!   fitting and the Green/Casorati operator matrices.
//! - [`scores`]: sign, Spearman and van der Waerden scores, their covariance
//!   matrices, the finite-grid centering term and chi-square quantiles.
//! - [`rank_tests`]: rank-based cross-covariances, central sequences and the
//!   specified-parameter and order tests, with permutational calibration.
//! - [`gaussian`]: the pseudo-Gaussian benchmark tests.
//! - [`order_id`]: sequential VAR order identification.
//! - [`simulation`]: innovation samplers, additive outliers and the Monte
//!   Carlo study engine.
//! - [`diagnostics`]: Kolmogorov–Smirnov machinery used to validate samplers
//!   and null distributions.

pub mod diagnostics;
pub mod error;
pub mod gaussian;
pub mod grid;
pub mod order_id;
pub mod rng;
pub mod scores;
pub mod series;
pub mod simulation;
pub mod transport;
pub mod var;

pub use error::{Error, Result};
pub use grid::{factorize, make_grid, make_sphere_grid, BallGrid, GridFactorization};
pub use rank_tests::{Calibration, TestOutcome};
pub use scores::{ScoreKind, ScoreSpec};
pub use series::SeriesMatrix;
pub use transport::{solve_coupling, Coupling};
pub use var::VarModel;
