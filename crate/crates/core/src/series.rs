use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observations `X_1..X_n`, the `i`-th attributed to rescaled time `i/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitTimeSeries {
    values: Vec<f64>,
}

impl UnitTimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries { index: 0 });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries { index });
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rescaled time of the zero-based index `idx`, i.e. `(idx + 1) / n`.
    #[inline]
    pub fn time(&self, idx: usize) -> f64 {
        (idx + 1) as f64 / self.values.len() as f64
    }

    /// Applies `x -> scale * x + shift` to every observation.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|x| scale * x + shift).collect())
    }

    /// Zero-based index range of observations whose time lies in `[lo, hi]`.
    pub fn index_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let n = self.values.len() as f64;
        // i/n >= lo  <=>  i >= lo n ; zero-based idx = i - 1
        let first = ((lo * n).ceil().max(1.0) as usize).saturating_sub(1);
        let last = (hi * n).floor().min(n) as usize;
        let mut first = first.min(self.values.len());
        // guard against rounding on both ends
        while first > 0 && self.time(first - 1) >= lo {
            first -= 1;
        }
        while first < self.values.len() && self.time(first) < lo {
            first += 1;
        }
        let mut end = last.max(first).min(self.values.len());
        while end < self.values.len() && self.time(end) <= hi {
            end += 1;
        }
        while end > first && self.time(end - 1) > hi {
            end -= 1;
        }
        first..end
    }
}

impl TryFrom<Vec<f64>> for UnitTimeSeries {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<UnitTimeSeries> for Vec<f64> {
    fn from(s: UnitTimeSeries) -> Self {
        s.values
    }
}
