use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled real signal starting at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample {bad} of time series")));
        }
        Ok(Self { dt, values })
    }

    pub fn zeros(dt: f64, len: usize) -> Self {
        Self { dt, values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time of the last sample.
    pub fn duration(&self) -> f64 {
        self.dt * self.values.len().saturating_sub(1) as f64
    }

    pub fn time(&self, index: usize) -> f64 {
        self.dt * index as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dt: self.dt,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Linear interpolation at an arbitrary time; clamps outside `[0, duration]`.
    pub fn sample_at(&self, t: f64) -> f64 {
        let n = self.values.len();
        if n == 0 {
            return 0.0;
        }
        let pos = (t / self.dt).clamp(0.0, (n - 1) as f64);
        let lo = pos.floor() as usize;
        if lo + 1 >= n {
            return self.values[n - 1];
        }
        let frac = pos - lo as f64;
        if frac == 0.0 {
            self.values[lo]
        } else {
            self.values[lo] * (1.0 - frac) + self.values[lo + 1] * frac
        }
    }

    /// `Σ wᵢ·sᵢ` over series sharing `dt` and length.
    pub fn linear_combination(series: &[&TimeSeries], weights: &[f64]) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| Error::invalid("linear combination of zero series"))?;
        if series.len() != weights.len() {
            return Err(Error::LengthMismatch {
                what: "combination weights",
                expected: series.len(),
                actual: weights.len(),
            });
        }
        let mut values = vec![0.0; first.len()];
        for (s, &w) in series.iter().zip(weights) {
            if s.len() != first.len() {
                return Err(Error::LengthMismatch {
                    what: "series length",
                    expected: first.len(),
                    actual: s.len(),
                });
            }
            if (s.dt - first.dt).abs() > 1e-12 * first.dt {
                return Err(Error::invalid("series in a combination must share dt"));
            }
            for (acc, v) in values.iter_mut().zip(&s.values) {
                *acc += w * v;
            }
        }
        Ok(Self { dt: first.dt, values })
    }
}

/// `‖a − b‖₂ / ‖b‖₂` over flattened values.
pub fn relative_l2_error(a: &[f64], b: &[f64]) -> f64 {
    let (num, den) = a.iter().zip(b).fold((0.0, 0.0), |(n, d), (x, y)| {
        (n + (x - y) * (x - y), d + y * y)
    });
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}
