//! Intermitotic-time histograms: loading, normalization to a density and
//! reweighting by the population growth rate.
//!
//! Bins are numbered `i = 1..=N` and bin `i` covers ages `[i*da, (i+1)*da]`,
//! so its mean age is `(i + 1/2) * da`. The first `da` hours of the age axis
//! are not covered by any bin.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramKind {
    RawCounts,
    Density,
    Reweighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram<T> {
    bin_width: T,
    heights: Vec<T>,
    kind: HistogramKind,
    lambda_used: Option<T>,
}

/// Mean age of the 1-based bin `i`.
pub fn bin_mid_age<T: Scalar>(bin_width: T, i: usize) -> T {
    (T::from_usize_lossy(i) + T::c(0.5)) * bin_width
}

impl<T: Scalar> Histogram<T> {
    /// Raw bin heights (counts or unnormalized densities).
    pub fn from_counts(bin_width: T, heights: Vec<T>) -> Result<Self> {
        if !(bin_width > T::zero()) || !bin_width.is_finite() {
            return Err(Error::Validation(format!("bin width must be positive, got {bin_width}")));
        }
        if heights.is_empty() {
            return Err(Error::Validation("histogram has no bins".into()));
        }
        if let Some((i, h)) = heights.iter().enumerate().find(|(_, h)| !(**h >= T::zero()) || !h.is_finite()) {
            return Err(Error::Validation(format!("bin {} has invalid height {h}", i + 1)));
        }
        Ok(Self {
            bin_width,
            heights,
            kind: HistogramKind::RawCounts,
            lambda_used: None,
        })
    }

    /// Parses one height per line; `#` comment lines and blank lines are skipped.
    pub fn parse(text: &str, bin_width: T) -> Result<Self> {
        let mut heights = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line.parse().map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("{line:?}: {e}"),
            })?;
            if v < 0.0 {
                return Err(Error::Validation(format!("negative height {v} at line {}", idx + 1)));
            }
            heights.push(T::c(v));
        }
        if heights.is_empty() {
            return Err(Error::Validation("histogram file contains no bins".into()));
        }
        if heights.len() < 2 {
            return Err(Error::Validation("histogram needs at least two bins".into()));
        }
        Self::from_counts(bin_width, heights)
    }

    pub fn load(path: impl AsRef<Path>, bin_width: T) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, bin_width)
    }

    pub fn bin_width(&self) -> T {
        self.bin_width
    }

    pub fn heights(&self) -> &[T] {
        &self.heights
    }

    pub fn kind(&self) -> HistogramKind {
        self.kind
    }

    pub fn lambda_used(&self) -> Option<T> {
        self.lambda_used
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    /// Mean age of each bin, in file order.
    pub fn mid_ages(&self) -> Vec<T> {
        (1..=self.len()).map(|i| bin_mid_age(self.bin_width, i)).collect()
    }

    /// `da * sum(H_i)`.
    pub fn mass(&self) -> T {
        self.bin_width * self.heights.iter().copied().sum::<T>()
    }

    /// Divides every height by `da * sum(H)` so that the histogram is a density.
    pub fn normalize(&self) -> Result<Self> {
        if self.kind != HistogramKind::RawCounts {
            return Err(Error::State(format!(
                "normalize expects raw counts, histogram is {:?}",
                self.kind
            )));
        }
        let mass = self.mass();
        if !(mass > T::zero()) {
            return Err(Error::Degenerate("histogram has zero total mass".into()));
        }
        Ok(Self {
            bin_width: self.bin_width,
            heights: self.heights.iter().map(|h| *h / mass).collect(),
            kind: HistogramKind::Density,
            lambda_used: None,
        })
    }

    /// Weights each bin by `2 exp(-lambda * a_i)` and renormalizes.
    pub fn reweight(&self, lambda: T) -> Result<Self> {
        if self.kind != HistogramKind::Density {
            return Err(Error::State(format!(
                "reweight expects a density histogram, histogram is {:?}",
                self.kind
            )));
        }
        if !lambda.is_finite() {
            return Err(Error::Validation(format!("growth rate must be finite, got {lambda}")));
        }
        let two = T::c(2.0);
        let weighted: Vec<T> = self
            .mid_ages()
            .into_iter()
            .zip(&self.heights)
            .map(|(a, h)| two * *h * (-lambda * a).exp())
            .collect();
        let mass = self.bin_width * weighted.iter().copied().sum::<T>();
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(Error::Degenerate(format!("reweighted mass is {mass}")));
        }
        Ok(Self {
            bin_width: self.bin_width,
            heights: weighted.into_iter().map(|h| h / mass).collect(),
            kind: HistogramKind::Reweighted,
            lambda_used: Some(lambda),
        })
    }

    /// Checks the normalization invariant of densities and reweighted histograms.
    pub fn check_invariants(&self) -> Result<()> {
        if self.heights.iter().any(|h| *h < T::zero()) {
            return Err(Error::Validation("negative bin height".into()));
        }
        match self.kind {
            HistogramKind::RawCounts => Ok(()),
            HistogramKind::Density | HistogramKind::Reweighted => {
                let dev = (self.mass() - T::one()).abs();
                if dev > T::c(NORMALIZATION_TOL) {
                    Err(Error::Validation(format!("density mass deviates from 1 by {dev}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# age,height\n");
        for (a, h) in self.mid_ages().iter().zip(&self.heights) {
            out.push_str(&format!("{a},{h}\n"));
        }
        out
    }
}
