//! Numerical recovery of a division rate from a tabulated IMT density
//! (zero death rate): `beta(a) = I(a) / int_a^inf I`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitter::r_squared;
use crate::fitter::simplex::{minimize, SimplexOptions};
use crate::imt_models::{erfc, TabulatedRate};
use crate::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct InversionOptions<T> {
    /// Rates are reported only where the tail integral exceeds this fraction
    /// of the total mass.
    pub floor_fraction: T,
    /// Rates are reported only where the estimated mass beyond the table is
    /// at most this fraction of the tail integral.
    pub closure_share: T,
}

impl<T: Scalar> Default for InversionOptions<T> {
    fn default() -> Self {
        Self {
            floor_fraction: T::c(1e-10),
            closure_share: T::c(1e-5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InversionWarning<T> {
    /// The reliable range ends before the table does.
    Truncated { last_reliable_age: T },
    /// The density at the last age is not small compared with the peak.
    HeavyTail { last_to_peak: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InvertedRate<T: Scalar> {
    pub rate: TabulatedRate<T>,
    pub reliable_until: T,
    /// Estimated density mass beyond the last table age.
    pub tail_closure: T,
    pub warnings: Vec<InversionWarning<T>>,
}

/// Mass beyond the table end, assuming the last two samples decay exponentially.
fn tail_closure<T: Scalar>(ages: &[T], values: &[T]) -> (T, bool) {
    let n = ages.len();
    let (last, prev) = (values[n - 1], values[n - 2]);
    if last == T::zero() {
        return (T::zero(), true);
    }
    if prev > last {
        let rate = (prev / last).ln() / (ages[n - 1] - ages[n - 2]);
        (last / rate, true)
    } else {
        (last * (ages[n - 1] - ages[0]), false)
    }
}

pub fn invert_imt<T: Scalar>(ages: &[T], values: &[T]) -> Result<InvertedRate<T>> {
    invert_imt_with(ages, values, InversionOptions::default())
}

pub fn invert_imt_with<T: Scalar>(ages: &[T], values: &[T], opts: InversionOptions<T>) -> Result<InvertedRate<T>> {
    if ages.len() != values.len() || ages.len() < 3 {
        return Err(Error::Validation("density table needs matching columns with at least 3 rows".into()));
    }
    if ages.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation("density table ages must be strictly increasing".into()));
    }
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= T::zero()) || !v.is_finite()) {
        return Err(Error::Validation(format!("density at row {} is invalid: {v}", i + 1)));
    }
    let n = ages.len();
    let mut tails = crate::quadrature::trapezoid_tail(ages, values);
    let (closure, decaying) = tail_closure(ages, values);
    for t in tails.iter_mut() {
        *t = *t + closure;
    }
    let mass = tails[0];
    if !(mass > T::zero()) {
        return Err(Error::Degenerate("density has zero mass".into()));
    }
    let peak = values.iter().copied().fold(T::zero(), T::max);
    let mut warnings = Vec::new();
    let last_to_peak = values[n - 1] / peak;
    if !decaying || last_to_peak > T::c(1e-6) {
        warnings.push(InversionWarning::HeavyTail { last_to_peak });
    }

    let floor = opts.floor_fraction * mass;
    let above_floor = tails.iter().take_while(|t| **t >= floor).count();
    let reliable = tails[..above_floor]
        .iter()
        .take_while(|t| closure <= opts.closure_share * **t)
        .count();
    // Without any reliable prefix the rates are still returned, flagged as
    // resting entirely on the tail estimate.
    let reported = if reliable >= 2 { reliable } else { above_floor };
    if reported < 2 {
        return Err(Error::Degenerate("density mass is concentrated in a single sample".into()));
    }
    let rates: Vec<T> = values[..reported].iter().zip(&tails).map(|(v, t)| *v / *t).collect();
    let reliable_until = if reliable >= 2 { ages[reliable - 1] } else { ages[0] };
    if reliable < n {
        warnings.push(InversionWarning::Truncated { last_reliable_age: reliable_until });
    }
    Ok(InvertedRate {
        rate: TabulatedRate::new(ages[..reported].to_vec(), rates)?,
        reliable_until,
        tail_closure: closure,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErfcDistance<T> {
    pub r_squared: T,
    pub max_abs_err: T,
}

/// Compares a tabulated rate with `beta0 * erfc((m - a) / sigma)` on the table nodes.
pub fn erfc_distance<T: Scalar>(rate: &TabulatedRate<T>, beta0: T, m: T, sigma: T) -> Result<ErfcDistance<T>> {
    if !(sigma > T::zero()) {
        return Err(Error::Validation(format!("sigma must be positive, got {sigma}")));
    }
    if rate.ages().is_empty() {
        return Err(Error::Degenerate("empty reliable range".into()));
    }
    let residuals: Vec<T> = rate
        .ages()
        .iter()
        .zip(rate.values())
        .map(|(a, b)| *b - beta0 * erfc((m - *a) / sigma))
        .collect();
    let max_abs_err = residuals.iter().fold(T::zero(), |acc, r| acc.max(r.abs()));
    Ok(ErfcDistance {
        r_squared: r_squared(rate.values(), &residuals),
        max_abs_err,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErfcFit<T> {
    pub beta0: T,
    pub m: T,
    pub sigma: T,
    pub distance: ErfcDistance<T>,
}

/// Least-squares error-function rate closest to a tabulated rate.
pub fn best_erfc<T: Scalar>(rate: &TabulatedRate<T>) -> Result<ErfcFit<T>> {
    let ages = rate.ages();
    let values = rate.values();
    let top = values.iter().copied().fold(T::zero(), T::max);
    if !(top > T::zero()) {
        return Err(Error::Degenerate("rate table is identically zero".into()));
    }
    // Half-height crossing approximates m; the plateau is 2 * beta0.
    let half = values.iter().position(|v| *v >= T::c(0.5) * top).unwrap_or(0);
    let m0 = ages[half];
    let q = values.iter().position(|v| *v >= T::c(0.1) * top).unwrap_or(0);
    let sigma0 = (m0 - ages[q]).max(T::c(0.5));
    let x0 = vec![T::c(0.5) * top, m0, sigma0];
    let f = |p: &[T]| -> T {
        ages.iter()
            .zip(values)
            .map(|(a, b)| {
                let r = *b - p[0] * erfc((p[1] - *a) / p[2]);
                r * r
            })
            .sum()
    };
    let span = *ages.last().expect("non-empty");
    let opts = SimplexOptions {
        lower: vec![T::c(1e-9), -span, T::c(1e-3)],
        upper: vec![T::c(1e3), T::c(2.0) * span, span],
        scale: vec![x0[0].max(T::c(1e-3)), m0.abs().max(T::one()), sigma0],
        initial_step: T::c(0.1),
        max_evaluations: 20_000,
        f_tol_abs: T::c(1e-30),
        f_tol_rel: T::c(1e-13),
        x_tol: T::c(1e-10),
        max_restarts: 6,
    };
    let r = minimize(&f, &x0, &opts);
    Ok(ErfcFit {
        beta0: r.x[0],
        m: r.x[1],
        sigma: r.x[2],
        distance: erfc_distance(rate, r.x[0], r.x[1], r.x[2])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imt_models::ModelFamily;

    fn sample(model: ModelFamily<f64>, step: f64, end: f64) -> (Vec<f64>, Vec<f64>) {
        let n = (end / step).round() as usize;
        let ages: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
        let vals = model.i_infinity_curve(&ages);
        (ages, vals)
    }

    fn max_err(model: ModelFamily<f64>, step: f64) -> f64 {
        let (a, v) = sample(model, step, 60.0);
        let inv = invert_imt(&a, &v).unwrap();
        inv.rate
            .ages()
            .iter()
            .zip(inv.rate.values())
            .map(|(a, b)| (b - model.beta(*a).unwrap()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn gamma_round_trip_converges_second_order() {
        for model in [ModelFamily::Gamma1 { m: 17.0, sigma: 2.0 }, ModelFamily::Gamma2 { m: 17.0, sigma: 2.0 }] {
            let coarse = max_err(model, 0.01);
            let fine = max_err(model, 0.005);
            assert!(coarse < 1e-4, "{model:?} {coarse:e}");
            assert!(coarse / fine > 3.0, "{model:?} ratio {}", coarse / fine);
        }
    }

    #[test]
    fn positivity_and_support() {
        let (a, v) = sample(ModelFamily::Gamma1 { m: 17.0, sigma: 2.0 }, 0.05, 80.0);
        let inv = invert_imt(&a, &v).unwrap();
        assert!(inv.rate.values().iter().all(|b| *b >= 0.0));
        for (age, b) in inv.rate.ages().iter().zip(inv.rate.values()) {
            if *age < 17.0 - 10.0 {
                assert_eq!(*b, 0.0);
            }
        }
    }

    #[test]
    fn emg_rate_is_an_error_function() {
        let (a, v) = sample(ModelFamily::Emg { beta0: 0.2, m: 22.0, sigma: 2.0 }, 0.01, 120.0);
        let inv = invert_imt(&a, &v).unwrap();
        let best = best_erfc(&inv.rate).unwrap();
        assert!(best.distance.r_squared >= 0.9999, "{best:?}");
        assert!((best.beta0 - 0.2).abs() < 1e-3, "{best:?}");
        // The same parameters read as an error-function rate are close but not equal.
        let same = erfc_distance(&inv.rate, 0.2, 22.0, 2.0).unwrap();
        assert!(same.r_squared > 0.99 && same.r_squared < best.distance.r_squared);
    }

    #[test]
    fn self_comparison() {
        let model = ModelFamily::ErfcRate { beta0: 0.14, m: 24.0, sigma: 3.3 };
        let ages: Vec<f64> = (0..500).map(|i| i as f64 * 0.1).collect();
        let vals = ages.iter().map(|x| model.beta(*x).unwrap()).collect();
        let t = TabulatedRate::new(ages, vals).unwrap();
        let d = erfc_distance(&t, 0.14, 24.0, 3.3).unwrap();
        assert_eq!(d.r_squared, 1.0);
        assert_eq!(d.max_abs_err, 0.0);
    }

    #[test]
    fn gamma_rate_is_not_an_error_function() {
        let (a, v) = sample(ModelFamily::Gamma1 { m: 17.0, sigma: 2.0 }, 0.01, 60.0);
        let inv = invert_imt(&a, &v).unwrap();
        let best = best_erfc(&inv.rate).unwrap();
        assert!(best.distance.r_squared < 1.0);
        assert!(best.distance.r_squared < 0.9999, "{best:?}");
    }

    #[test]
    fn short_fat_tail_warns() {
        let (a, v) = sample(ModelFamily::Gamma1 { m: 17.0, sigma: 2.0 }, 0.05, 24.0);
        let inv = invert_imt(&a, &v).unwrap();
        assert!(inv.warnings.iter().any(|w| matches!(w, InversionWarning::HeavyTail { .. })));
        assert!(inv.warnings.iter().any(|w| matches!(w, InversionWarning::Truncated { .. })));
        assert!(inv.reliable_until < 24.0);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(invert_imt(&[0.0, 1.0, 2.0], &[0.1, -0.1, 0.0]).is_err());
        assert!(invert_imt(&[0.0, 2.0, 1.0], &[0.1, 0.1, 0.0]).is_err());
        assert!(invert_imt(&[0.0, 1.0, 2.0], &[0.0, 0.0, 0.0]).is_err());
    }
}
