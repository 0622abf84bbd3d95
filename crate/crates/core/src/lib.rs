//! Local linear quantile curves for locally stationary time series.
//!
//! The pipeline estimates `Q_α(t)` on rescaled time `t ∈ [0, 1]` by
//! kernel-weighted check-loss minimization ([`solver`], [`curvefit`]), picks
//! the bandwidth from a rule of thumb corrected for serial dependence
//! ([`bandwidth`]), removes curvature bias with a jackknife combination, and
//! attaches pointwise bands from plug-in long-run variance and density
//! estimates ([`inference`]). [`procsim`] simulates locally stationary
//! processes with known quantile curves for validation.

pub mod bandwidth;
pub mod curvefit;
pub mod error;
pub mod flags;
pub mod inference;
pub mod kernel;
pub mod normal;
pub mod procsim;
pub mod quad;
pub mod series;
pub mod solver;

pub use curvefit::{Bandwidth, EvaluationGrid, QuantileCurve, Stage};
pub use error::{Error, Result};
pub use flags::PointFlags;
pub use kernel::Kernel;
pub use series::UnitTimeSeries;
