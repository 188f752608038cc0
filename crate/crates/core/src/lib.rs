//! Gaussian-gated localized mixture-of-experts (GLoME) regression.
//!
//! The crate fits GLLiM models by EM in the inverse direction, maps them to
//! forward conditional densities, selects the number of components with
//! penalized likelihood (AIC, BIC, fixed κ, or slope-heuristic calibration),
//! and scores estimators with Monte Carlo tensorized divergences.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod divergence;
pub mod em;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod selection;
pub mod simulate;

pub use em::{fit, fit_range, EmConfig, FitResult, InitStrategy, RangeFit};
pub use error::{GlomeError, Result};
pub use model::{
    CovStructure, Dataset, Direction, ForwardParams, GaussianParams, GllimParams, InverseParams, ParameterBounds,
};
pub use selection::{CriterionTable, SelectionMethod, SelectionResult};
pub use simulate::{Scenario, TrialReport, TrialSettings};
