//! Closed-form intermitotic-time (IMT) model families, their division rates
//! and the reweighted densities used for fitting.
//!
//! Every family describes the IMT density `I(a)` of a population whose
//! cells divide with hazard `beta(a)` (and die with rate `mu` for the
//! `ErfcRateDeath` family). For `mu = 0` the density is
//! `I(a) = beta(a) exp(-int_0^a beta)`.

mod erfc;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use self::erfc::{erf, erfc};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadConfig};
use crate::Scalar;

/// Parametric IMT model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelFamily<T> {
    /// Shifted gamma with shape 2.
    Gamma1 { m: T, sigma: T },
    /// Shifted gamma with shape 3.
    Gamma2 { m: T, sigma: T },
    /// Exponentially modified Gaussian.
    Emg { beta0: T, m: T, sigma: T },
    /// Division rate `beta0 * erfc((m - a) / sigma)`.
    #[serde(rename = "erfc")]
    ErfcRate { beta0: T, m: T, sigma: T },
    /// Same rate plus a constant death rate `mu`.
    #[serde(rename = "erfc-mu")]
    ErfcRateDeath { beta0: T, m: T, sigma: T, mu: T },
}

/// Family selector without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Gamma1,
    Gamma2,
    Emg,
    #[serde(rename = "erfc")]
    ErfcRate,
    #[serde(rename = "erfc-mu")]
    ErfcRateDeath,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 5] = [
        FamilyKind::Gamma1,
        FamilyKind::Gamma2,
        FamilyKind::Emg,
        FamilyKind::ErfcRate,
        FamilyKind::ErfcRateDeath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Gamma1 => "gamma1",
            FamilyKind::Gamma2 => "gamma2",
            FamilyKind::Emg => "emg",
            FamilyKind::ErfcRate => "erfc",
            FamilyKind::ErfcRateDeath => "erfc-mu",
        }
    }

    pub fn n_params(self) -> usize {
        match self {
            FamilyKind::Gamma1 | FamilyKind::Gamma2 => 2,
            FamilyKind::Emg | FamilyKind::ErfcRate => 3,
            FamilyKind::ErfcRateDeath => 4,
        }
    }

    /// Parameter names in the order used by [`ModelFamily::params`].
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            FamilyKind::Gamma1 | FamilyKind::Gamma2 => &["m", "sigma"],
            FamilyKind::Emg | FamilyKind::ErfcRate => &["beta0", "m", "sigma"],
            FamilyKind::ErfcRateDeath => &["beta0", "m", "sigma", "mu"],
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FamilyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown family {s:?}; expected one of gamma1, gamma2, emg, erfc, erfc-mu"
                ))
            })
    }
}

fn frac_1_sqrt_pi<T: Scalar>() -> T {
    T::FRAC_2_SQRT_PI() * T::c(0.5)
}

/// `int_0^a erfc((m - s) / sigma) ds` in closed form.
pub fn erfc_primitive<T: Scalar>(m: T, sigma: T, a: T) -> T {
    let k = sigma * frac_1_sqrt_pi::<T>();
    let z0 = m / sigma;
    let za = (m - a) / sigma;
    m * erfc(z0) - k * (-z0 * z0).exp() - (m - a) * erfc(za) + k * (-za * za).exp()
}

impl<T: Scalar> ModelFamily<T> {
    pub fn kind(&self) -> FamilyKind {
        match self {
            ModelFamily::Gamma1 { .. } => FamilyKind::Gamma1,
            ModelFamily::Gamma2 { .. } => FamilyKind::Gamma2,
            ModelFamily::Emg { .. } => FamilyKind::Emg,
            ModelFamily::ErfcRate { .. } => FamilyKind::ErfcRate,
            ModelFamily::ErfcRateDeath { .. } => FamilyKind::ErfcRateDeath,
        }
    }

    /// Builds a model from a parameter vector ordered as in [`FamilyKind::param_names`].
    pub fn from_params(kind: FamilyKind, p: &[T]) -> Result<Self> {
        if p.len() != kind.n_params() {
            return Err(Error::Validation(format!(
                "{kind} takes {} parameters, got {}",
                kind.n_params(),
                p.len()
            )));
        }
        let model = match kind {
            FamilyKind::Gamma1 => ModelFamily::Gamma1 { m: p[0], sigma: p[1] },
            FamilyKind::Gamma2 => ModelFamily::Gamma2 { m: p[0], sigma: p[1] },
            FamilyKind::Emg => ModelFamily::Emg { beta0: p[0], m: p[1], sigma: p[2] },
            FamilyKind::ErfcRate => ModelFamily::ErfcRate { beta0: p[0], m: p[1], sigma: p[2] },
            FamilyKind::ErfcRateDeath => ModelFamily::ErfcRateDeath {
                beta0: p[0],
                m: p[1],
                sigma: p[2],
                mu: p[3],
            },
        };
        model.validate()?;
        Ok(model)
    }

    pub fn params(&self) -> Vec<T> {
        match *self {
            ModelFamily::Gamma1 { m, sigma } | ModelFamily::Gamma2 { m, sigma } => vec![m, sigma],
            ModelFamily::Emg { beta0, m, sigma } | ModelFamily::ErfcRate { beta0, m, sigma } => {
                vec![beta0, m, sigma]
            }
            ModelFamily::ErfcRateDeath { beta0, m, sigma, mu } => vec![beta0, m, sigma, mu],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.params();
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation(format!("non-finite parameter in {self:?}")));
        }
        let (m, sigma) = (self.m(), self.sigma());
        if !(sigma > T::zero()) {
            return Err(Error::Validation(format!("sigma must be positive, got {sigma}")));
        }
        if m < T::zero() {
            return Err(Error::Validation(format!("m must be nonnegative, got {m}")));
        }
        if let Some(b) = self.beta0() {
            if !(b > T::zero()) {
                return Err(Error::Validation(format!("beta0 must be positive, got {b}")));
            }
        }
        if self.mu() < T::zero() {
            return Err(Error::Validation(format!("mu must be nonnegative, got {}", self.mu())));
        }
        Ok(())
    }

    pub fn m(&self) -> T {
        match *self {
            ModelFamily::Gamma1 { m, .. }
            | ModelFamily::Gamma2 { m, .. }
            | ModelFamily::Emg { m, .. }
            | ModelFamily::ErfcRate { m, .. }
            | ModelFamily::ErfcRateDeath { m, .. } => m,
        }
    }

    pub fn sigma(&self) -> T {
        match *self {
            ModelFamily::Gamma1 { sigma, .. }
            | ModelFamily::Gamma2 { sigma, .. }
            | ModelFamily::Emg { sigma, .. }
            | ModelFamily::ErfcRate { sigma, .. }
            | ModelFamily::ErfcRateDeath { sigma, .. } => sigma,
        }
    }

    pub fn beta0(&self) -> Option<T> {
        match *self {
            ModelFamily::Emg { beta0, .. }
            | ModelFamily::ErfcRate { beta0, .. }
            | ModelFamily::ErfcRateDeath { beta0, .. } => Some(beta0),
            _ => None,
        }
    }

    /// Death rate; zero for every family but `ErfcRateDeath`.
    pub fn mu(&self) -> T {
        match *self {
            ModelFamily::ErfcRateDeath { mu, .. } => mu,
            _ => T::zero(),
        }
    }

    /// Division rate at age `a`. The EMG family has no closed-form rate; use
    /// [`crate::inversion::invert_imt`] on its density instead.
    pub fn beta(&self, a: T) -> Result<T> {
        match *self {
            ModelFamily::Gamma1 { m, sigma } => {
                if a <= m {
                    Ok(T::zero())
                } else {
                    let x = a - m;
                    Ok(x / (sigma * (sigma + x)))
                }
            }
            ModelFamily::Gamma2 { m, sigma } => {
                if a <= m {
                    Ok(T::zero())
                } else {
                    let x = a - m;
                    let two = T::c(2.0);
                    Ok(x * x / (sigma * (two * sigma * sigma + two * sigma * x + x * x)))
                }
            }
            ModelFamily::ErfcRate { beta0, m, sigma } | ModelFamily::ErfcRateDeath { beta0, m, sigma, .. } => {
                Ok(beta0 * erfc((m - a) / sigma))
            }
            ModelFamily::Emg { .. } => Err(Error::UnsupportedVariant(
                "the EMG family has no closed-form division rate; invert its density numerically".into(),
            )),
        }
    }

    /// `int_0^a beta`, closed form.
    pub fn cumulative_beta(&self, a: T) -> Result<T> {
        match *self {
            ModelFamily::Gamma1 { m, sigma } => {
                if a <= m {
                    Ok(T::zero())
                } else {
                    let x = a - m;
                    Ok(x / sigma - (x / sigma).ln_1p())
                }
            }
            ModelFamily::Gamma2 { m, sigma } => {
                if a <= m {
                    Ok(T::zero())
                } else {
                    let u = (a - m) / sigma;
                    Ok(u - (u + T::c(0.5) * u * u).ln_1p())
                }
            }
            ModelFamily::ErfcRate { beta0, m, sigma } | ModelFamily::ErfcRateDeath { beta0, m, sigma, .. } => {
                Ok(beta0 * erfc_primitive(m, sigma, a))
            }
            ModelFamily::Emg { .. } => Err(Error::UnsupportedVariant(
                "the EMG family has no closed-form division rate".into(),
            )),
        }
    }

    /// Age beyond which every density of this model is negligible.
    pub fn a_max(&self) -> T {
        let forty = T::c(40.0);
        let scale = match self.beta0() {
            Some(b) => self.sigma().max(b.recip()),
            None => self.sigma(),
        };
        self.m() + forty * scale
    }

    /// Unnormalized survival-weighted rate `beta(a) exp(-int_0^a (beta + mu))`.
    fn division_density(&self, a: T) -> T {
        match *self {
            ModelFamily::Gamma1 { m, sigma } => {
                if a <= m {
                    T::zero()
                } else {
                    let x = a - m;
                    x / (sigma * sigma) * (-x / sigma).exp()
                }
            }
            ModelFamily::Gamma2 { m, sigma } => {
                if a <= m {
                    T::zero()
                } else {
                    let x = a - m;
                    x * x / (T::c(2.0) * sigma * sigma * sigma) * (-x / sigma).exp()
                }
            }
            ModelFamily::Emg { beta0, m, sigma } => {
                let exponent = -T::c(2.0) * beta0 * (T::c(0.5) * beta0 * sigma * sigma - m + a);
                beta0 * erfc((m - a) / sigma) * exponent.exp()
            }
            ModelFamily::ErfcRate { beta0, m, sigma } => {
                beta0 * erfc((m - a) / sigma) * (-beta0 * erfc_primitive(m, sigma, a)).exp()
            }
            ModelFamily::ErfcRateDeath { beta0, m, sigma, mu } => {
                beta0 * erfc((m - a) / sigma) * (-beta0 * erfc_primitive(m, sigma, a) - mu * a).exp()
            }
        }
    }

    /// Integral of `f` over `[0, a_max]`, split at `m` where the gamma
    /// families have a kink.
    fn integrate_model<F: Fn(T) -> T>(&self, f: F) -> T {
        let cfg = QuadConfig::default();
        let m = self.m();
        let end = self.a_max();
        integrate(&f, T::zero(), m, cfg) + integrate(&f, m, end, cfg)
    }

    /// Normalization constant `int_0^inf beta exp(-int (beta + mu))`; one when `mu = 0`.
    pub fn c_infinity(&self) -> T {
        match self {
            ModelFamily::ErfcRateDeath { .. } => self.integrate_model(|a| self.division_density(a)),
            _ => T::one(),
        }
    }

    /// IMT density at age `a`.
    pub fn i_infinity(&self, a: T) -> T {
        self.division_density(a) / self.c_infinity()
    }

    /// IMT density on many ages, normalizing once.
    pub fn i_infinity_curve(&self, ages: &[T]) -> Vec<T> {
        let c = self.c_infinity();
        ages.iter().map(|a| self.division_density(*a) / c).collect()
    }

    /// Reweighted density `2 I(a) exp(-lambda a)`; for `ErfcRateDeath` this is
    /// `2 beta(a) exp(-int_0^a (beta + mu + lambda))`, free of `C_inf`.
    pub fn i_tilde(&self, lambda: T, a: T) -> T {
        T::c(2.0) * self.division_density(a) * (-lambda * a).exp()
    }

    pub fn i_tilde_curve(&self, lambda: T, ages: &[T]) -> Vec<T> {
        ages.iter().map(|a| self.i_tilde(lambda, *a)).collect()
    }

    /// `int_0^inf I~(a) da`, close to one when `lambda` is consistent with the model.
    pub fn integral_i_tilde(&self, lambda: T) -> T {
        self.integrate_model(|a| self.i_tilde(lambda, a))
    }

    pub fn integral_i_infinity(&self) -> T {
        self.integrate_model(|a| self.division_density(a)) / self.c_infinity()
    }
}

/// Cumulative trapezoid integral of a piecewise-linear table.
fn prefix_integral<T: Scalar>(ages: &[T], values: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(ages.len());
    let mut acc = T::zero();
    out.push(acc);
    for i in 1..ages.len() {
        acc = acc + T::c(0.5) * (ages[i] - ages[i - 1]) * (values[i] + values[i - 1]);
        out.push(acc);
    }
    out
}

/// Division rate sampled on a grid, linearly interpolated between nodes and
/// held constant outside the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RateTable<T>", try_from = "RateTable<T>", bound = "T: Scalar")]
pub struct TabulatedRate<T: Scalar> {
    ages: Vec<T>,
    values: Vec<T>,
    cumulative: Vec<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct RateTable<T> {
    ages: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> From<TabulatedRate<T>> for RateTable<T> {
    fn from(t: TabulatedRate<T>) -> Self {
        RateTable { ages: t.ages, values: t.values }
    }
}

impl<T: Scalar> TryFrom<RateTable<T>> for TabulatedRate<T> {
    type Error = Error;

    fn try_from(t: RateTable<T>) -> Result<Self> {
        TabulatedRate::new(t.ages, t.values)
    }
}

impl<T: Scalar> TabulatedRate<T> {
    pub fn new(ages: Vec<T>, values: Vec<T>) -> Result<Self> {
        if ages.len() != values.len() || ages.len() < 2 {
            return Err(Error::Validation(format!(
                "rate table needs matching columns with at least 2 rows ({} ages, {} values)",
                ages.len(),
                values.len()
            )));
        }
        if ages.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("rate table ages must be strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= T::zero()) || !v.is_finite()) {
            return Err(Error::Validation(format!("rate table has invalid value {v}")));
        }
        let cumulative = prefix_integral(&ages, &values);
        Ok(Self { ages, values, cumulative })
    }

    pub fn ages(&self) -> &[T] {
        &self.ages
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    fn locate(&self, a: T) -> usize {
        self.ages.partition_point(|x| *x <= a).saturating_sub(1).min(self.ages.len() - 2)
    }

    pub fn eval(&self, a: T) -> T {
        let n = self.ages.len();
        if a <= self.ages[0] {
            return self.values[0];
        }
        if a >= self.ages[n - 1] {
            return self.values[n - 1];
        }
        let i = self.locate(a);
        let w = (a - self.ages[i]) / (self.ages[i + 1] - self.ages[i]);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    pub fn cumulative(&self, a: T) -> T {
        let n = self.ages.len();
        let first = self.ages[0];
        if a <= first {
            return self.values[0] * a.max(T::zero());
        }
        let head = self.values[0] * first.max(T::zero());
        if a >= self.ages[n - 1] {
            return head + self.cumulative[n - 1] + self.values[n - 1] * (a - self.ages[n - 1]);
        }
        let i = self.locate(a);
        let v = self.eval(a);
        head + self.cumulative[i] + T::c(0.5) * (a - self.ages[i]) * (self.values[i] + v)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("age,beta\n");
        for (a, b) in self.ages.iter().zip(&self.values) {
            out.push_str(&format!("{a},{b}\n"));
        }
        out
    }

    /// Reads the two-column `age,beta` format written by [`Self::to_csv`].
    pub fn parse_csv(text: &str) -> Result<Self> {
        let (ages, values) = parse_two_columns(text)?;
        Self::new(ages, values)
    }
}

/// Two numeric comma-separated columns; an optional non-numeric header and
/// `#` comments are skipped.
pub fn parse_two_columns<T: Scalar>(text: &str) -> Result<(Vec<T>, Vec<T>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                line: idx + 1,
                message: "expected two comma-separated columns".into(),
            });
        };
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                xs.push(T::c(x));
                ys.push(T::c(y));
            }
            _ if xs.is_empty() && a.parse::<f64>().is_err() => {}
            (Err(e), _) | (_, Err(e)) => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("{line:?}: {e}"),
                })
            }
        }
    }
    Ok((xs, ys))
}

/// Age-dependent division rate usable by the spectral solver and simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", bound = "T: Scalar")]
pub enum DivisionRate<T: Scalar> {
    ClosedForm { model: ModelFamily<T> },
    Constant { value: T },
    Tabulated { table: TabulatedRate<T> },
}

impl<T: Scalar> DivisionRate<T> {
    pub fn closed_form(model: ModelFamily<T>) -> Result<Self> {
        model.validate()?;
        if model.kind() == FamilyKind::Emg {
            return Err(Error::UnsupportedVariant(
                "the EMG family has no closed-form division rate; invert its density numerically".into(),
            ));
        }
        Ok(DivisionRate::ClosedForm { model })
    }

    pub fn constant(value: T) -> Result<Self> {
        if !(value >= T::zero()) || !value.is_finite() {
            return Err(Error::Validation(format!("constant rate must be nonnegative, got {value}")));
        }
        Ok(DivisionRate::Constant { value })
    }

    pub fn tabulated(table: TabulatedRate<T>) -> Self {
        DivisionRate::Tabulated { table }
    }

    pub fn eval(&self, a: T) -> T {
        match self {
            DivisionRate::ClosedForm { model } => model.beta(a).unwrap_or_else(|_| T::nan()),
            DivisionRate::Constant { value } => *value,
            DivisionRate::Tabulated { table } => table.eval(a),
        }
    }

    /// `int_0^a beta`.
    pub fn cumulative(&self, a: T) -> T {
        match self {
            DivisionRate::ClosedForm { model } => model.cumulative_beta(a).unwrap_or_else(|_| T::nan()),
            DivisionRate::Constant { value } => *value * a,
            DivisionRate::Tabulated { table } => table.cumulative(a),
        }
    }

    /// `int_lo^hi beta`, evaluated without cancellation for nearby ages when possible.
    pub fn integral(&self, lo: T, hi: T) -> T {
        match self {
            DivisionRate::Constant { value } => *value * (hi - lo),
            _ => self.cumulative(hi) - self.cumulative(lo),
        }
    }

    /// Smallest age (to within 1e-6 relative) at which `int_0^a beta >= level`.
    pub fn age_at_cumulative(&self, level: T) -> Result<T> {
        let mut hi = T::one();
        let cap = T::c(1e7);
        while self.cumulative(hi) < level {
            hi = hi * T::c(2.0);
            if hi > cap {
                return Err(Error::Configuration(
                    "division rate does not diverge: cumulative rate stays bounded".into(),
                ));
            }
        }
        let mut lo = T::zero();
        for _ in 0..200 {
            if hi - lo <= T::c(1e-6) * hi {
                break;
            }
            let mid = T::c(0.5) * (lo + hi);
            if self.cumulative(mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    /// Ages at which the rate changes character (kinks or table nodes are
    /// not listed; only the onset `m` of closed forms).
    pub fn breakpoints(&self) -> Vec<T> {
        match self {
            DivisionRate::ClosedForm { model } => vec![model.m()],
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use proptest::prelude::*;

    const FIG5: ModelFamily<f64> = ModelFamily::ErfcRate { beta0: 0.14204, m: 24.456, sigma: 3.3451 };
    const REFERENCE: ModelFamily<f64> = ModelFamily::ErfcRateDeath {
        beta0: 0.17879,
        m: 25.007,
        sigma: 3.6141,
        mu: 0.00333,
    };

    fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        integrate(f, a, b, QuadConfig { abs_tol: 1e-14, rel_tol: 1e-13, max_depth: 50 })
    }

    #[test]
    fn gamma1_rate() {
        let g = ModelFamily::Gamma1 { m: 17.0_f64, sigma: 2.0 };
        assert_eq!(g.beta(17.0).unwrap(), 0.0);
        assert_eq!(g.beta(3.0).unwrap(), 0.0);
        assert!((g.beta(19.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((g.beta(1e9).unwrap() - 0.5).abs() < 1e-8);
        assert_eq!(g.i_infinity(16.0), 0.0);
    }

    #[test]
    fn erfc_rate_at_midpoint() {
        assert!((FIG5.beta(24.456).unwrap() - 0.14204).abs() < 1e-15);
    }

    #[test]
    fn emg_has_no_closed_rate() {
        let e = ModelFamily::Emg { beta0: 0.2_f64, m: 22.0, sigma: 2.0 };
        assert!(matches!(e.beta(20.0), Err(Error::UnsupportedVariant(_))));
        assert!(matches!(DivisionRate::closed_form(e), Err(Error::UnsupportedVariant(_))));
    }

    #[test]
    fn emg_is_skewed_unimodal_density() {
        let e = ModelFamily::Emg { beta0: 0.2_f64, m: 22.0, sigma: 2.0 };
        assert!((e.integral_i_infinity() - 1.0).abs() < 1e-8);
        let ages: Vec<f64> = (0..8000).map(|i| i as f64 * 0.01).collect();
        let vals = e.i_infinity_curve(&ages);
        let peak = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(vals[..peak].windows(2).all(|w| w[1] >= w[0]));
        assert!(vals[peak..].windows(2).all(|w| w[1] <= w[0]));
        let mean: f64 = ages.iter().zip(&vals).map(|(a, v)| a * v * 0.01).sum();
        // Right-skewed: mean to the right of the mode.
        assert!(mean > ages[peak] + 0.5);
    }

    #[test]
    fn primitive_examples() {
        assert!(erfc_primitive(24.0, 3.0, 0.0_f64).abs() < 1e-13);
        let oracle = quad(|s| erfc(-s), 0.0, 5.0);
        assert!((erfc_primitive(0.0, 1.0, 5.0) - oracle).abs() < 1e-9);
        let d: f64 = erfc_primitive(20.0, 3.0, 301.0) - erfc_primitive(20.0, 3.0, 300.0);
        assert!((d - 2.0).abs() < 1e-10);
    }

    #[test]
    fn densities_have_unit_mass() {
        let models = [
            ModelFamily::Gamma1 { m: 17.0, sigma: 2.0 },
            ModelFamily::Gamma2 { m: 17.0, sigma: 2.0 },
            ModelFamily::Emg { beta0: 0.2, m: 22.0, sigma: 2.0 },
            FIG5,
            REFERENCE,
        ];
        for model in models {
            assert!((model.integral_i_infinity() - 1.0).abs() < 1e-8, "{model:?}");
            let expected = 2.0 * model.c_infinity();
            assert!((model.integral_i_tilde(0.0) - expected).abs() < 2e-8, "{model:?}");
        }
        assert!(REFERENCE.c_infinity() < 1.0);
    }

    #[test]
    fn reweighted_masses_near_reference_values() {
        assert!((REFERENCE.integral_i_tilde(0.022) - 1.0132).abs() < 5e-3);
        assert!((FIG5.integral_i_tilde(0.022) - 1.0983).abs() < 5e-3);
    }

    #[test]
    fn death_form_bypasses_normalization() {
        let a = 27.0;
        let ModelFamily::ErfcRateDeath { beta0, m, sigma, mu } = REFERENCE else { unreachable!() };
        let direct = 2.0 * beta0 * erfc((m - a) / sigma)
            * (-(beta0 * erfc_primitive(m, sigma, a) + (mu + 0.022) * a)).exp();
        assert!((REFERENCE.i_tilde(0.022, a) - direct).abs() < 1e-15);
        let via_c = 2.0 * REFERENCE.i_infinity(a) * (-0.022 * a).exp() * REFERENCE.c_infinity();
        assert!((via_c - direct).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_agree_with_inversion_identity() {
        for model in [
            ModelFamily::Gamma1 { m: 17.0, sigma: 2.0 },
            ModelFamily::Gamma2 { m: 17.0, sigma: 2.0 },
            FIG5,
        ] {
            for i in 0..60 {
                let a = i as f64;
                let beta = model.beta(a).unwrap();
                let cum = quad(|s| model.beta(s).unwrap(), 0.0, a.max(1e-12));
                let forward = beta * (-cum).exp();
                assert!((model.i_infinity(a) - forward).abs() < 1e-8, "{model:?} a={a}");
                assert!((model.cumulative_beta(a).unwrap() - cum).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn json_shape() {
        let s = serde_json::to_string(&REFERENCE).unwrap();
        assert_eq!(s, r#"{"family":"erfc-mu","beta0":0.17879,"m":25.007,"sigma":3.6141,"mu":0.00333}"#);
        let g: ModelFamily<f64> = serde_json::from_str(r#"{"family":"gamma1","m":17,"sigma":2}"#).unwrap();
        assert_eq!(g, ModelFamily::Gamma1 { m: 17.0, sigma: 2.0 });
        assert_eq!("erfc-mu".parse::<FamilyKind>().unwrap(), FamilyKind::ErfcRateDeath);
        assert!("lognormal".parse::<FamilyKind>().is_err());
    }

    #[test]
    fn validation() {
        assert!(ModelFamily::from_params(FamilyKind::Gamma1, &[17.0, 0.0]).is_err());
        assert!(ModelFamily::from_params(FamilyKind::ErfcRate, &[-0.1, 17.0, 2.0]).is_err());
        assert!(ModelFamily::from_params(FamilyKind::ErfcRateDeath, &[0.1, 17.0, 2.0, -1e-3]).is_err());
        assert!(ModelFamily::from_params(FamilyKind::Emg, &[0.1, 17.0]).is_err());
    }

    #[test]
    fn tabulated_rate() {
        let t = TabulatedRate::new(vec![0.0_f64, 1.0, 2.0], vec![0.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.eval(0.5), 0.5);
        assert_eq!(t.eval(5.0), 1.0);
        assert!((t.cumulative(1.0) - 0.5).abs() < 1e-15);
        assert!((t.cumulative(0.5) - 0.125).abs() < 1e-15);
        assert!((t.cumulative(4.0) - 3.5).abs() < 1e-15);
        assert!(TabulatedRate::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(TabulatedRate::new(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        let back = TabulatedRate::<f64>::parse_csv(&t.to_csv()).unwrap();
        assert_eq!(back.values(), t.values());
    }

    #[test]
    fn horizon_search() {
        let r = DivisionRate::constant(0.5_f64).unwrap();
        assert!((r.age_at_cumulative(10.0).unwrap() - 20.0).abs() < 1e-4);
        assert!(DivisionRate::constant(0.0).unwrap().age_at_cumulative(1.0).is_err());
    }

    proptest! {
        #[test]
        fn primitive_matches_quadrature(m in 0.0f64..40.0, sigma in 0.5f64..8.0, a in 0.0f64..90.0) {
            let oracle = quad(|s| erfc((m - s) / sigma), 0.0, a.max(1e-300));
            prop_assert!((erfc_primitive(m, sigma, a) - oracle).abs() < 1e-9);
        }

        #[test]
        fn rates_are_nondecreasing(m in 0.0f64..40.0, sigma in 0.5f64..8.0, b in 0.01f64..1.0) {
            for model in [
                ModelFamily::Gamma1 { m, sigma },
                ModelFamily::Gamma2 { m, sigma },
                ModelFamily::ErfcRate { beta0: b, m, sigma },
                ModelFamily::ErfcRateDeath { beta0: b, m, sigma, mu: 0.01 },
            ] {
                let mut prev = 0.0;
                for i in 0..400 {
                    let v = model.beta(i as f64 * 0.25).unwrap();
                    prop_assert!(v >= prev - 1e-15);
                    prev = v;
                }
            }
        }
    }
}
