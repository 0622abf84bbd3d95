use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("quadrature did not converge on [{lo}, {hi}]")]
    Quadrature { lo: f64, hi: f64 },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("degenerate boundary denominator mu2 - 4 mu1^2 = {0}")]
    DegenerateBoundary(f64),

    #[error("series must be nonempty and finite (bad value at index {index})")]
    InvalidSeries { index: usize },

    #[error("quantile level {0} outside (0, 1)")]
    InvalidAlpha(f64),

    #[error("bandwidth {value} outside {range}")]
    InvalidBandwidth { value: f64, range: &'static str },

    #[error("insufficient support: {found} weighted observations, need {needed}")]
    InsufficientSupport { found: usize, needed: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid evaluation grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate smoothing window at t = {0}")]
    DegenerateWindow(f64),

    #[error("invalid process specification: {0}")]
    InvalidProcess(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}
