//! Malthusian growth rate from a total-population time series, by ordinary
//! least squares on `ln(N(t) / N(0))`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSeries<T> {
    times: Vec<T>,
    counts: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit<T> {
    pub lambda: T,
    pub intercept: T,
    pub r_squared: T,
    pub doubling_time: Option<T>,
}

impl<T: Scalar> GrowthSeries<T> {
    pub fn new(times: Vec<T>, counts: Vec<T>) -> Result<Self> {
        if times.len() != counts.len() {
            return Err(Error::Validation(format!(
                "{} times but {} counts",
                times.len(),
                counts.len()
            )));
        }
        if times.len() < 3 {
            return Err(Error::Validation(format!(
                "growth fit needs at least 3 points, got {}",
                times.len()
            )));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(format!("times not strictly increasing at row {}", i + 2)));
        }
        if let Some((i, n)) = counts.iter().enumerate().find(|(_, n)| !(**n > T::zero()) || !n.is_finite()) {
            return Err(Error::Validation(format!("count at row {} must be positive, got {n}", i + 1)));
        }
        Ok(Self { times, counts })
    }

    /// Two comma-separated columns `t,N`; a non-numeric first row is a header.
    pub fn parse(text: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut counts = Vec::new();
        let mut seen_data = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected 2 columns, found {}", fields.len()),
                });
            }
            let parsed = (fields[0].parse::<f64>(), fields[1].parse::<f64>());
            match parsed {
                (Ok(t), Ok(n)) => {
                    times.push(T::c(t));
                    counts.push(T::c(n));
                    seen_data = true;
                }
                _ if !seen_data && times.is_empty() && fields[0].parse::<f64>().is_err() => {}
                (Err(e), _) | (_, Err(e)) => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: format!("{line:?}: {e}"),
                    })
                }
            }
        }
        Self::new(times, counts)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn counts(&self) -> &[T] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Keeps only the points with `lo <= t <= hi`.
    pub fn window(&self, lo: T, hi: T) -> Result<Self> {
        let (times, counts) = self
            .times
            .iter()
            .zip(&self.counts)
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(t, n)| (*t, *n))
            .unzip();
        Self::new(times, counts)
    }
}

/// Log-linear fit of the series. R^2 is computed on the log-transformed data.
pub fn fit_growth<T: Scalar>(series: &GrowthSeries<T>) -> GrowthFit<T> {
    let n0 = series.counts[0];
    let y: Vec<T> = series.counts.iter().map(|n| (*n / n0).ln()).collect();
    let x = &series.times;
    let k = T::from_usize_lossy(x.len());
    let mean_x = x.iter().copied().sum::<T>() / k;
    let mean_y = y.iter().copied().sum::<T>() / k;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for (xi, yi) in x.iter().zip(&y) {
        let dx = *xi - mean_x;
        let dy = *yi - mean_y;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    let lambda = sxy / sxx;
    let intercept = mean_y - lambda * mean_x;
    let ss_res: T = x
        .iter()
        .zip(&y)
        .map(|(xi, yi)| {
            let r = *yi - (intercept + lambda * *xi);
            r * r
        })
        .sum();
    let r_squared = if syy > T::zero() { T::one() - ss_res / syy } else { T::one() };
    let doubling_time = (lambda > T::zero()).then(|| T::LN_2() / lambda);
    GrowthFit {
        lambda,
        intercept,
        r_squared,
        doubling_time,
    }
}

impl<T: Scalar> GrowthFit<T> {
    /// Fitted `ln(N/N(0))` at each time, for plotting against the data.
    pub fn fitted_line(&self, times: &[T]) -> Vec<T> {
        times.iter().map(|t| self.intercept + self.lambda * *t).collect()
    }
}
