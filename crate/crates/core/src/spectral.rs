//! Stable age distribution of the renewal equation.
//!
//! For a division rate `beta` and death rate `mu` the Malthusian parameter
//! `lambda` is the root of
//!
//! ```text
//! g(lambda) = 2 int_0^inf beta(a) exp(-int_0^a (beta + mu + lambda)) da - 1,
//! ```
//!
//! which is strictly decreasing. The equilibrium profile is
//! `p(a) ∝ exp(-int_0^a (beta + mu + lambda))`, and the adjoint `phi`
//! solves `lambda phi - phi' + (beta + mu) phi = 2 phi(0) beta` with
//! `int p phi = 1`. Together they give the conserved quantity
//! `exp(-lambda t) int p(t, a) phi(a) da` of any solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imt_models::DivisionRate;
use crate::quadrature::{integrate, AgeGrid, QuadConfig};
use crate::Scalar;

/// Cumulative hazard beyond which survival is treated as zero.
const NEGLIGIBLE_LOG: f64 = 45.0;

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions<T> {
    /// Age step of the default equilibrium grid.
    pub step: T,
    /// Survival level at which the default grid ends.
    pub survival_floor: T,
}

impl<T: Scalar> Default for SpectralOptions<T> {
    fn default() -> Self {
        Self {
            step: T::c(0.05),
            survival_floor: T::c(1e-12),
        }
    }
}

/// Values sampled on an [`AgeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeProfile<T> {
    pub grid: AgeGrid<T>,
    pub values: Vec<T>,
}

impl<T: Scalar> AgeProfile<T> {
    pub fn new(grid: AgeGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} ages",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: AgeGrid<T>, f: impl Fn(T) -> T) -> Self {
        let values = (0..grid.len()).map(|j| f(grid.age(j))).collect();
        Self { grid, values }
    }

    pub fn integral(&self) -> T {
        self.grid.integrate(&self.values)
    }

    pub fn ages(&self) -> Vec<T> {
        self.grid.ages()
    }

    pub fn to_csv(&self, header: &str) -> String {
        let mut out = format!("age,{header}\n");
        for (j, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.grid.age(j), v));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair<T> {
    pub lambda: T,
    pub mu: T,
    pub grid: AgeGrid<T>,
    pub p_hat: Vec<T>,
    pub phi: Vec<T>,
    /// Continuous boundary value `p(0) = 1 / int exp(-int (beta + mu + lambda))`.
    pub p_hat_at_zero: T,
}

fn quad_cfg() -> QuadConfig {
    QuadConfig {
        abs_tol: 1e-15,
        rel_tol: 1e-14,
        max_depth: 48,
    }
}

/// Integral over `[lo, hi]` split at the rate's breakpoints.
fn integrate_split<T: Scalar, F: Fn(T) -> T>(beta: &DivisionRate<T>, f: F, lo: T, hi: T) -> T {
    let mut cuts = vec![lo];
    cuts.extend(beta.breakpoints().into_iter().filter(|b| *b > lo && *b < hi));
    cuts.push(hi);
    cuts.windows(2).map(|w| integrate(&f, w[0], w[1], quad_cfg())).sum()
}

/// Age at which `int_0^a beta + rate * a` reaches `level`.
fn age_at_exponent<T: Scalar>(beta: &DivisionRate<T>, rate: T, level: T) -> Result<T> {
    let h = |a: T| beta.cumulative(a) + rate * a;
    let mut hi = T::one();
    while h(hi) < level {
        hi = hi * T::c(2.0);
        if hi > T::c(1e7) {
            return Err(Error::Configuration("survival does not decay; rate not divergent".into()));
        }
    }
    let mut lo = T::zero();
    for _ in 0..100 {
        let mid = T::c(0.5) * (lo + hi);
        if h(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < T::c(1e-9) * hi {
            break;
        }
    }
    Ok(hi)
}

/// `g` written in terms of `s = lambda + mu`.
fn characteristic<T: Scalar>(beta: &DivisionRate<T>, s: T, horizon: T) -> T {
    let two = T::c(2.0);
    two * integrate_split(beta, |a| beta.eval(a) * (-beta.cumulative(a) - s * a).exp(), T::zero(), horizon)
        - T::one()
}

/// Residual of the characteristic equation at `lambda`.
pub fn characteristic_residual<T: Scalar>(beta: &DivisionRate<T>, mu: T, lambda: T) -> Result<T> {
    let horizon = beta.age_at_cumulative(T::c(NEGLIGIBLE_LOG))?;
    Ok(characteristic(beta, lambda + mu, horizon))
}

/// Brent's method on a bracketing interval.
fn brent<T: Scalar, F: Fn(T) -> T>(f: F, mut a: T, mut b: T, mut fa: T, mut fb: T, tol: T) -> T {
    let two = T::c(2.0);
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if (fb > T::zero()) == (fc > T::zero()) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = two * T::epsilon() * b.abs() + T::c(0.5) * tol;
        let xm = T::c(0.5) * (c - b);
        if xm.abs() <= tol1 || fb == T::zero() {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * xm * s;
                q = T::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qq * (qq - r) - (b - a) * (r - T::one()));
                q = (qq - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = T::c(3.0) * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol1 { b + d } else { b + tol1 * xm.signum() };
        fb = f(b);
    }
    b
}

/// Malthusian parameter of `(beta, mu)`.
pub fn solve_lambda<T: Scalar>(beta: &DivisionRate<T>, mu: T) -> Result<T> {
    if !(mu >= T::zero()) || !mu.is_finite() {
        return Err(Error::Validation(format!("death rate must be nonnegative, got {mu}")));
    }
    let horizon = beta.age_at_cumulative(T::c(NEGLIGIBLE_LOG))?;
    let g = |s: T| characteristic(beta, s, horizon);
    // At s = 0 every cell eventually divides, so g = 1 > 0.
    let lo = T::zero();
    let g_lo = g(lo);
    if !(g_lo > T::zero()) {
        return Err(Error::Configuration(format!(
            "characteristic function not positive at lambda = -mu ({g_lo})"
        )));
    }
    let cap = T::c(10.0) + mu;
    let mut hi = T::c(0.125).min(cap);
    let mut g_hi = g(hi);
    while g_hi > T::zero() {
        if hi >= cap {
            return Err(Error::Configuration(format!(
                "no sign change of the characteristic function in [-mu, 10] (g(10) = {g_hi})"
            )));
        }
        hi = (hi * T::c(2.0)).min(cap);
        g_hi = g(hi);
    }
    let s = brent(g, lo, hi, g_lo, g_hi, T::c(1e-15));
    Ok(s - mu)
}

/// Equilibrium and adjoint on the default node grid.
pub fn equilibrium<T: Scalar>(beta: &DivisionRate<T>, mu: T) -> Result<EigenPair<T>> {
    let opts = SpectralOptions::<T>::default();
    let lambda = solve_lambda(beta, mu)?;
    let end = age_at_exponent(beta, lambda + mu, -opts.survival_floor.ln())?;
    let grid = AgeGrid::nodes(opts.step, end)?;
    equilibrium_with_lambda(beta, mu, lambda, grid)
}

/// Equilibrium and adjoint sampled on a caller-provided grid.
pub fn equilibrium_on<T: Scalar>(beta: &DivisionRate<T>, mu: T, grid: AgeGrid<T>) -> Result<EigenPair<T>> {
    let lambda = solve_lambda(beta, mu)?;
    equilibrium_with_lambda(beta, mu, lambda, grid)
}

fn equilibrium_with_lambda<T: Scalar>(
    beta: &DivisionRate<T>,
    mu: T,
    lambda: T,
    grid: AgeGrid<T>,
) -> Result<EigenPair<T>> {
    let s = lambda + mu;
    let survival = |a: T| (-beta.cumulative(a) - s * a).exp();
    let far = age_at_exponent(beta, s, T::c(NEGLIGIBLE_LOG))?;
    let p_hat_at_zero = integrate_split(beta, survival, T::zero(), far).recip();

    let ages = grid.ages();
    let surv: Vec<T> = ages.iter().map(|a| survival(*a)).collect();
    let norm = grid.integrate(&surv);
    let p_hat: Vec<T> = surv.iter().map(|v| *v / norm).collect();

    // phi(a) = int_a^inf 2 beta(b) S(b) / S(a) db with S the survival, filled backward.
    let two = T::c(2.0);
    let n = ages.len();
    let relative = |from: T, a: T| (-beta.integral(from, a) - s * (a - from)).exp();
    let segment = |lo: T, hi: T| integrate_split(beta, |a| two * beta.eval(a) * relative(lo, a), lo, hi);
    let last = ages[n - 1];
    let reach = age_at_exponent(beta, s, beta.cumulative(last) + s * last + T::c(NEGLIGIBLE_LOG))?;
    let mut phi = vec![T::zero(); n];
    phi[n - 1] = segment(last, reach);
    for j in (0..n - 1).rev() {
        phi[j] = segment(ages[j], ages[j + 1]) + phi[j + 1] * relative(ages[j], ages[j + 1]);
    }
    let weighted: Vec<T> = p_hat.iter().zip(&phi).map(|(p, f)| *p * *f).collect();
    let scale = grid.integrate(&weighted);
    if !(scale > T::zero()) {
        return Err(Error::Degenerate("adjoint normalization vanished".into()));
    }
    for v in phi.iter_mut() {
        *v = *v / scale;
    }
    Ok(EigenPair {
        lambda,
        mu,
        grid,
        p_hat,
        phi,
        p_hat_at_zero,
    })
}

impl<T: Scalar> EigenPair<T> {
    pub fn p_hat_profile(&self) -> AgeProfile<T> {
        AgeProfile {
            grid: self.grid,
            values: self.p_hat.clone(),
        }
    }

    pub fn phi_profile(&self) -> AgeProfile<T> {
        AgeProfile {
            grid: self.grid,
            values: self.phi.clone(),
        }
    }

    /// Relative mismatch of the renewal boundary condition `p(0) = 2 int beta p`.
    pub fn boundary_residual(&self, beta: &DivisionRate<T>) -> T {
        let births: Vec<T> = (0..self.grid.len())
            .map(|j| beta.eval(self.grid.age(j)) * self.p_hat[j])
            .collect();
        let rhs = T::c(2.0) * self.grid.integrate(&births);
        let p0 = match self.grid {
            AgeGrid::Nodes { .. } => self.p_hat[0],
            AgeGrid::Cells { .. } => self.p_hat_at_zero,
        };
        (p0 - rhs).abs() / p0
    }

    /// Largest centered-difference residual of the adjoint equation at
    /// interior nodes, relative to `phi(0)`.
    pub fn adjoint_residual(&self, beta: &DivisionRate<T>) -> T {
        let h = self.grid.step();
        let two = T::c(2.0);
        let phi0 = self.phi[0];
        let mut worst = T::zero();
        for j in 1..self.phi.len().saturating_sub(1) {
            let a = self.grid.age(j);
            let dphi = (self.phi[j + 1] - self.phi[j - 1]) / (two * h);
            let r = (self.lambda + beta.eval(a) + self.mu) * self.phi[j] - dphi - two * phi0 * beta.eval(a);
            worst = worst.max(r.abs());
        }
        worst / phi0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("age,p_hat,phi\n");
        for j in 0..self.grid.len() {
            out.push_str(&format!("{},{},{}\n", self.grid.age(j), self.p_hat[j], self.phi[j]));
        }
        out
    }
}

/// `exp(-lambda t) int p(a) phi(a) da`.
pub fn gre_functional<T: Scalar>(p: &AgeProfile<T>, phi: &AgeProfile<T>, lambda: T, t: T) -> Result<T> {
    if !p.grid.same_as(&phi.grid) {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", p.grid, phi.grid)));
    }
    let prod: Vec<T> = p.values.iter().zip(&phi.values).map(|(a, b)| *a * *b).collect();
    Ok(p.grid.integrate(&prod) * (-lambda * t).exp())
}

/// `int |p(a) exp(-lambda t) / rho0 - p_hat(a)| phi(a) da` with
/// `rho0 = int p0 phi`; nonincreasing in time for renewal dynamics.
pub fn weighted_gap<T: Scalar>(p: &AgeProfile<T>, eig: &EigenPair<T>, rho0: T, t: T) -> Result<T> {
    if !p.grid.same_as(&eig.grid) {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", p.grid, eig.grid)));
    }
    let decay = (-eig.lambda * t).exp() / rho0;
    let vals: Vec<T> = p
        .values
        .iter()
        .zip(eig.p_hat.iter().zip(&eig.phi))
        .map(|(v, (ph, f))| (*v * decay - *ph).abs() * *f)
        .collect();
    Ok(p.grid.integrate(&vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imt_models::ModelFamily;

    fn reference_rate_rate() -> DivisionRate<f64> {
        DivisionRate::closed_form(ModelFamily::ErfcRate { beta0: 0.17879, m: 25.007, sigma: 3.6141 }).unwrap()
    }

    #[test]
    fn constant_rate_lambda_equals_rate() {
        for b in [0.05_f64, 0.2, 1.3] {
            let r = DivisionRate::constant(b).unwrap();
            assert!((solve_lambda(&r, 0.0).unwrap() - b).abs() < 1e-10);
        }
    }

    #[test]
    fn death_shifts_lambda() {
        let r = reference_rate_rate();
        let base = solve_lambda(&r, 0.0).unwrap();
        assert!(base > 0.0);
        for d in [0.001, 0.00333, 0.02] {
            assert!((solve_lambda(&r, d).unwrap() - (base - d)).abs() < 1e-10);
        }
        let lam = solve_lambda(&r, 0.00333).unwrap();
        assert!(characteristic_residual(&r, 0.00333, lam).unwrap().abs() < 1e-10);
    }

    #[test]
    fn characteristic_is_decreasing() {
        let r = reference_rate_rate();
        let h = r.age_at_cumulative(45.0).unwrap();
        let vals: Vec<f64> = [0.0, 0.01, 0.03, 0.1, 0.5].iter().map(|s| characteristic(&r, *s, h)).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
    }

    #[test]
    fn zero_rate_is_rejected() {
        let r = DivisionRate::constant(0.0).unwrap();
        assert!(matches!(solve_lambda(&r, 0.0), Err(Error::Configuration(_))));
        assert!(equilibrium(&r, 0.0).is_err());
    }

    #[test]
    fn constant_rate_equilibrium() {
        let b = 0.1_f64;
        let r = DivisionRate::constant(b).unwrap();
        let eig = equilibrium(&r, 0.0).unwrap();
        assert!((eig.lambda - b).abs() < 1e-10);
        assert!((eig.p_hat_at_zero - 2.0 * b).abs() < 1e-10);
        for (j, p) in eig.p_hat.iter().enumerate().step_by(50) {
            let a = eig.grid.age(j);
            assert!((p - 2.0 * b * (-2.0 * b * a).exp()).abs() < 1e-8);
        }
        assert!(eig.phi.iter().all(|f| (f - 1.0).abs() < 1e-8));
        assert!(eig.adjoint_residual(&r) < 1e-8);
    }

    #[test]
    fn equilibrium_invariants() {
        let r = reference_rate_rate();
        let eig = equilibrium(&r, 0.00333).unwrap();
        assert!((eig.p_hat_profile().integral() - 1.0).abs() < 1e-8);
        let pp: Vec<f64> = eig.p_hat.iter().zip(&eig.phi).map(|(a, b)| a * b).collect();
        assert!((eig.grid.integrate(&pp) - 1.0).abs() < 1e-6);
        assert!(eig.boundary_residual(&r) < 1e-6);
        assert!(eig.p_hat.windows(2).all(|w| w[1] <= w[0]));
        assert!(eig.p_hat.iter().all(|p| *p > 0.0));
        assert!(eig.phi.iter().all(|p| *p >= 0.0));
        assert!(eig.adjoint_residual(&r) < 1e-4, "{}", eig.adjoint_residual(&r));
        // Essentially all of the profile sits below m + 6 sigma.
        let cut = eig.grid.ages().iter().position(|a| *a > 25.007 + 6.0 * 3.6141).unwrap();
        let head: f64 = eig.grid.integrate(&eig.p_hat[..=cut].iter().copied().chain(std::iter::repeat(0.0)).take(eig.p_hat.len()).collect::<Vec<_>>());
        assert!(head > 0.99);
        assert!((eig.lambda - 0.022).abs() < 0.1 * 0.022);
    }

    #[test]
    fn gre_functional_examples() {
        let r = reference_rate_rate();
        let eig = equilibrium(&r, 0.0).unwrap();
        let p = eig.p_hat_profile();
        let phi = eig.phi_profile();
        assert!((gre_functional(&p, &phi, eig.lambda, 0.0).unwrap() - 1.0).abs() < 1e-12);
        let scaled = AgeProfile::new(p.grid, p.values.iter().map(|v| 3.5 * v).collect()).unwrap();
        assert!((gre_functional(&scaled, &phi, eig.lambda, 0.0).unwrap() - 3.5).abs() < 1e-12);
        let other = AgeProfile::from_fn(AgeGrid::cells(0.05, 10.0).unwrap(), |_| 1.0);
        assert!(matches!(gre_functional(&other, &phi, eig.lambda, 0.0), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn cells_grid_equilibrium() {
        let r = reference_rate_rate();
        let grid = AgeGrid::cells(0.05, 150.0).unwrap();
        let eig = equilibrium_on(&r, 0.00333, grid).unwrap();
        assert!((eig.p_hat_profile().integral() - 1.0).abs() < 1e-12);
        assert!(eig.boundary_residual(&r) < 1e-5);
    }
}
