//! Time stepping of the age-structured population with a quiescent
//! compartment.
//!
//! The proliferating density is stored as cell averages on an age grid
//! whose step equals the time step, so transport is an exact shift along
//! characteristics. During one step a cohort loses the fraction
//! `1 - exp(-int beta - mu dt)` of its mass, split between divisions and
//! deaths in proportion to the two hazards. Each division feeds
//! `2 (1 - f)` cells into the youngest cell and `2 f` cells into `Q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imt_models::DivisionRate;
use crate::quadrature::{integrate, AgeGrid, QuadConfig};
use crate::spectral::{equilibrium_on, solve_lambda, AgeProfile};
use crate::Scalar;

/// Initial proliferating density, scaled to unit mass unless custom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum InitialProfile<T: Scalar> {
    /// Stable age distribution of the division and death rates.
    Equilibrium,
    /// Stable age distribution restricted to ages below `t0`.
    TruncatedEquilibrium { t0: T },
    /// Uniform density on `[0, width]`.
    Uniform { width: T },
    /// Piecewise-linear density through `(ages, values)`, zero outside.
    Custom { ages: Vec<T>, values: Vec<T> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SimConfig<T: Scalar> {
    pub beta: DivisionRate<T>,
    /// Death rate of proliferating cells.
    pub mu: T,
    /// Death rate of quiescent cells.
    pub mu_q: T,
    /// Probability that a daughter becomes quiescent.
    pub f: T,
    pub dt: T,
    pub a_max: T,
    pub t_end: T,
    pub initial: InitialProfile<T>,
    pub q0: T,
    /// Times at which the age profile is recorded.
    #[serde(default)]
    pub snapshots: Vec<T>,
}

impl<T: Scalar> SimConfig<T> {
    /// Defaults: `mu_q = mu`, `dt = 0.05`, `Q(0) = 0`, equilibrium start
    /// and an age range covering survival down to `1e-14`.
    pub fn new(beta: DivisionRate<T>, mu: T, f: T, t_end: T) -> Result<Self> {
        let a_max = default_a_max(&beta, mu)?;
        Ok(Self {
            beta,
            mu,
            mu_q: mu,
            f,
            dt: T::c(0.05),
            a_max,
            t_end,
            initial: InitialProfile::Equilibrium,
            q0: T::zero(),
            snapshots: Vec::new(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: T| Err(Error::Validation(format!("{what} out of range: {v}")));
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return bad("time step", self.dt);
        }
        if !(self.f >= T::zero() && self.f <= T::one()) {
            return bad("quiescence probability f", self.f);
        }
        if !(self.mu >= T::zero()) || !self.mu.is_finite() {
            return bad("death rate mu", self.mu);
        }
        if !(self.mu_q >= T::zero()) || !self.mu_q.is_finite() {
            return bad("quiescent death rate", self.mu_q);
        }
        if !(self.t_end >= T::zero()) || !self.t_end.is_finite() {
            return bad("end time", self.t_end);
        }
        if !(self.a_max > self.dt) || !self.a_max.is_finite() {
            return bad("maximum age", self.a_max);
        }
        if !(self.q0 >= T::zero()) {
            return bad("initial quiescent mass", self.q0);
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<AgeGrid<T>> {
        AgeGrid::cells(self.dt, self.a_max)
    }
}

/// Age by which survival under `beta + mu` drops below `1e-14`.
pub fn default_a_max<T: Scalar>(beta: &DivisionRate<T>, mu: T) -> Result<T> {
    let level = T::c(14.0) * T::c(10.0).ln();
    if mu > T::zero() {
        let by_death = level / mu;
        let by_division = beta.age_at_cumulative(level).unwrap_or(by_death);
        Ok(by_division.min(by_death))
    } else {
        beta.age_at_cumulative(level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SimOutput<T: Scalar> {
    pub times: Vec<T>,
    /// Proliferating mass `int p da`.
    pub proliferating: Vec<T>,
    pub quiescent: Vec<T>,
    pub total: Vec<T>,
    /// Proliferating birth flux `p(t, 0)`, averaged over the preceding step.
    pub births: Vec<T>,
    /// Flux into the quiescent compartment, averaged over the preceding step.
    pub quiescence_influx: Vec<T>,
    /// Division events per hour, averaged over the preceding step.
    pub divisions: Vec<T>,
    /// Cumulative proliferating births `int_0^t p(s, 0) ds`.
    pub cumulative_births: Vec<T>,
    pub final_profile: AgeProfile<T>,
    pub snapshots: Vec<(T, AgeProfile<T>)>,
}

impl<T: Scalar> SimOutput<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,P,Q,N,births\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.times[i], self.proliferating[i], self.quiescent[i], self.total[i], self.births[i]
            ));
        }
        out
    }

    /// Least-squares slope of `ln N` over samples with `t >= from`.
    pub fn log_growth_rate(&self, from: T) -> Option<T> {
        let pts: Vec<(T, T)> = self
            .times
            .iter()
            .zip(&self.total)
            .filter(|(t, n)| **t >= from && **n > T::zero())
            .map(|(t, n)| (*t, n.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let k = T::from_usize_lossy(pts.len());
        let mt = pts.iter().map(|p| p.0).sum::<T>() / k;
        let my = pts.iter().map(|p| p.1).sum::<T>() / k;
        let sxy: T = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: T = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
        Some(sxy / sxx)
    }
}

/// Per-cell survival over one step and the share of losses that are divisions.
struct StepTables<T> {
    survival: Vec<T>,
    division_share: Vec<T>,
}

fn step_tables<T: Scalar>(beta: &DivisionRate<T>, mu: T, grid: &AgeGrid<T>) -> StepTables<T> {
    let h = grid.step();
    let death = mu * h;
    let mut survival = Vec::with_capacity(grid.len());
    let mut division_share = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let a = grid.age(j);
        let hazard = beta.integral(a, a + h).max(T::zero());
        let total = hazard + death;
        survival.push((-total).exp());
        division_share.push(if total > T::zero() { hazard / total } else { T::zero() });
    }
    StepTables {
        survival,
        division_share,
    }
}

fn initial_density<T: Scalar>(cfg: &SimConfig<T>, grid: &AgeGrid<T>) -> Result<Vec<T>> {
    let unit = |mut v: Vec<T>| -> Result<Vec<T>> {
        let mass = grid.integrate(&v);
        if !(mass > T::zero()) {
            return Err(Error::Degenerate("initial profile has no mass on the age grid".into()));
        }
        v.iter_mut().for_each(|x| *x = *x / mass);
        Ok(v)
    };
    let h = grid.step();
    match &cfg.initial {
        InitialProfile::Equilibrium => Ok(equilibrium_on(&cfg.beta, cfg.mu, *grid)?.p_hat),
        InitialProfile::TruncatedEquilibrium { t0 } => {
            let eig = equilibrium_on(&cfg.beta, cfg.mu, *grid)?;
            let v = (0..grid.len())
                .map(|j| {
                    let upper = h * T::from_usize_lossy(j + 1);
                    if upper <= *t0 + T::c(1e-9) * h {
                        eig.p_hat[j]
                    } else {
                        T::zero()
                    }
                })
                .collect();
            unit(v)
        }
        InitialProfile::Uniform { width } => {
            let v = (0..grid.len())
                .map(|j| {
                    let lo = h * T::from_usize_lossy(j);
                    ((*width - lo) / h).max(T::zero()).min(T::one())
                })
                .collect();
            unit(v)
        }
        InitialProfile::Custom { ages, values } => {
            if ages.len() != values.len() || ages.len() < 2 {
                return Err(Error::Validation("custom profile needs matching ages and values".into()));
            }
            if values.iter().any(|v| !(*v >= T::zero())) {
                return Err(Error::Validation("custom profile must be nonnegative".into()));
            }
            let interp = |a: T| {
                if a < ages[0] || a > ages[ages.len() - 1] {
                    return T::zero();
                }
                let k = ages.partition_point(|x| *x <= a).clamp(1, ages.len() - 1);
                let w = (a - ages[k - 1]) / (ages[k] - ages[k - 1]);
                values[k - 1] + w * (values[k] - values[k - 1])
            };
            Ok((0..grid.len()).map(|j| interp(grid.age(j))).collect())
        }
    }
}

/// Runs the model from `t = 0` to `t_end`.
pub fn simulate<T: Scalar>(cfg: &SimConfig<T>) -> Result<SimOutput<T>> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let h = grid.step();
    let n = grid.len();
    let tables = step_tables(&cfg.beta, cfg.mu, &grid);
    let mut p = initial_density(cfg, &grid)?;
    let mut q = cfg.q0;
    let two = T::c(2.0);
    let q_decay = (-cfg.mu_q * h).exp();
    let q_half = (-cfg.mu_q * h * T::c(0.5)).exp();
    let steps = (cfg.t_end / h - T::c(1e-9)).ceil().max(T::zero()).to_usize().unwrap_or(0);

    let mut snaps: Vec<T> = cfg.snapshots.clone();
    snaps.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut snap_iter = snaps.into_iter().peekable();
    let mut snapshots = Vec::new();

    let p_mass = |p: &[T]| h * p.iter().copied().sum::<T>();
    let mut out = SimOutput {
        times: vec![T::zero()],
        proliferating: vec![p_mass(&p)],
        quiescent: vec![q],
        total: vec![p_mass(&p) + q],
        births: vec![T::zero()],
        quiescence_influx: vec![T::zero()],
        divisions: vec![T::zero()],
        cumulative_births: vec![T::zero()],
        final_profile: AgeProfile { grid, values: Vec::new() },
        snapshots: Vec::new(),
    };
    let mut take_snapshots = |t: T, p: &[T], snapshots: &mut Vec<(T, AgeProfile<T>)>| {
        while let Some(s) = snap_iter.peek() {
            if *s <= t + T::c(1e-9) * h {
                snapshots.push((t, AgeProfile { grid, values: p.to_vec() }));
                snap_iter.next();
            } else {
                break;
            }
        }
    };
    take_snapshots(T::zero(), &p, &mut snapshots);

    let mut outflow = T::zero();
    let mut peak = p_mass(&p);
    let mut cumulative = T::zero();
    for k in 1..=steps {
        let mut divisions = T::zero();
        for j in 0..n {
            let lost = p[j] * h * (T::one() - tables.survival[j]);
            divisions = divisions + lost * tables.division_share[j];
        }
        outflow = outflow + p[n - 1] * h * tables.survival[n - 1];
        for j in (1..n).rev() {
            p[j] = p[j - 1] * tables.survival[j - 1];
        }
        let newborn = two * (T::one() - cfg.f) * divisions;
        let to_quiescence = two * cfg.f * divisions;
        p[0] = newborn / h;
        q = q * q_decay + to_quiescence * q_half;
        cumulative = cumulative + newborn;

        let t = h * T::from_usize_lossy(k);
        let mass = p_mass(&p);
        peak = peak.max(mass);
        if outflow > T::c(1e-9) * peak.max(T::min_positive_value()) {
            return Err(Error::GridTooSmall(format!(
                "mass {outflow} left the age grid at a_max = {} by t = {t}",
                grid.extent()
            )));
        }
        out.times.push(t);
        out.proliferating.push(mass);
        out.quiescent.push(q);
        out.total.push(mass + q);
        out.births.push(newborn / h);
        out.quiescence_influx.push(to_quiescence / h);
        out.divisions.push(divisions / h);
        out.cumulative_births.push(cumulative);
        take_snapshots(t, &p, &mut snapshots);
    }
    out.final_profile = AgeProfile { grid, values: p };
    out.snapshots = snapshots;
    Ok(out)
}

/// `Q(t0) / (Q(t0) + int_0^t0 p(s, 0) ds)` for a run started with `Q(0) = 0`.
pub fn quiescent_fraction<T: Scalar>(cfg: &SimConfig<T>, t0: T) -> Result<T> {
    if !(t0 > T::zero()) || t0 > cfg.t_end {
        return Err(Error::Validation(format!(
            "observation time {t0} must lie in (0, {}]",
            cfg.t_end
        )));
    }
    let mut run = cfg.clone();
    run.q0 = T::zero();
    run.t_end = t0;
    run.snapshots.clear();
    let out = simulate(&run)?;
    let q = *out.quiescent.last().unwrap_or(&T::zero());
    let b = *out.cumulative_births.last().unwrap_or(&T::zero());
    if q + b > T::zero() {
        Ok(q / (q + b))
    } else {
        Ok(T::zero())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ImtExperiment<T: Scalar> {
    pub ages: Vec<T>,
    /// Division-age density of the labeled cohort after the observation time.
    pub observed: Vec<T>,
    /// Limiting density `beta exp(-int (beta + mu)) / C`.
    pub limit: Vec<T>,
    pub l1_gap: T,
    pub lambda: T,
}

/// Follows the cells present at time zero with age below `t0`, drawn from
/// the stable age distribution, for `observation` hours and histograms the
/// ages at which they divide.
pub fn imt_experiment<T: Scalar>(
    beta: &DivisionRate<T>,
    mu: T,
    t0: T,
    observation: T,
    dt: T,
) -> Result<ImtExperiment<T>> {
    if !(t0 >= T::zero()) || !(observation > t0) || !(dt > T::zero()) {
        return Err(Error::Validation(format!(
            "need 0 <= t0 < observation time and dt > 0 (t0 = {t0}, T = {observation}, dt = {dt})"
        )));
    }
    if beta.cumulative(t0) > T::c(1e-6) {
        return Err(Error::Validation(format!(
            "cells divide before the labeling age {t0}: int_0^t0 beta = {}",
            beta.cumulative(t0)
        )));
    }
    let lambda = solve_lambda(beta, mu)?;
    let steps = (observation / dt).round().to_usize().unwrap_or(0);
    let span = dt * T::from_usize_lossy(steps) + t0 + dt * T::c(2.0);
    let grid = AgeGrid::cells(dt, span)?;
    let n = grid.len();
    let tables = step_tables(beta, mu, &grid);

    let mut p: Vec<T> = (0..n)
        .map(|j| {
            let upper = dt * T::from_usize_lossy(j + 1);
            if upper <= t0 + T::c(1e-9) * dt {
                let a = grid.age(j);
                (-beta.cumulative(a) - (mu + lambda) * a).exp()
            } else {
                T::zero()
            }
        })
        .collect();
    if p.iter().all(|v| *v == T::zero()) {
        p[0] = T::one();
    }

    let mut by_age = vec![T::zero(); n + 1];
    let mut lo = 0usize;
    let mut hi = p.iter().rposition(|v| *v > T::zero()).unwrap_or(0);
    for _ in 0..steps {
        for j in (lo..=hi).rev() {
            let lost = p[j] * (T::one() - tables.survival[j]);
            by_age[j + 1] = by_age[j + 1] + lost * tables.division_share[j];
            p[j + 1] = p[j] * tables.survival[j];
        }
        p[lo] = T::zero();
        lo += 1;
        hi = (hi + 1).min(n - 2);
    }
    let total: T = by_age.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::Degenerate("no divisions observed".into()));
    }
    let ages: Vec<T> = (0..by_age.len()).map(|k| dt * T::from_usize_lossy(k)).collect();
    let observed: Vec<T> = by_age.iter().map(|v| *v / (dt * total)).collect();

    let far = crate::simulator::default_a_max(beta, mu)?.max(span);
    let density = |a: T| beta.eval(a) * (-beta.cumulative(a) - mu * a).exp();
    let cfg = QuadConfig::default();
    let mut cuts = vec![T::zero()];
    cuts.extend(beta.breakpoints().into_iter().filter(|b| *b > T::zero() && *b < far));
    cuts.push(far);
    let c_inf: T = cuts.windows(2).map(|w| integrate(density, w[0], w[1], cfg)).sum();
    let limit: Vec<T> = ages.iter().map(|a| density(*a) / c_inf).collect();
    let diff: Vec<T> = observed.iter().zip(&limit).map(|(o, l)| (*o - *l).abs()).collect();
    let l1_gap = crate::quadrature::trapezoid(&ages, &diff);
    Ok(ImtExperiment {
        ages,
        observed,
        limit,
        l1_gap,
        lambda,
    })
}
