//! Quadrature: adaptive Gauss-Kronrod for closed-form integrands and fixed
//! rules for data sampled on uniform age grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerance and recursion controls for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_depth: 40,
        }
    }
}

fn gk15<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = T::c(0.5);
    let center = half * (a + b);
    let h = half * (b - a);
    let fc = f(center);
    let mut kronrod = fc * T::c(WGK[7]);
    let mut gauss = fc * T::c(WG[3]);
    for j in 0..7 {
        let dx = h * T::c(XGK[j]);
        let sum = f(center - dx) + f(center + dx);
        kronrod = kronrod + T::c(WGK[j]) * sum;
        if j % 2 == 1 {
            gauss = gauss + T::c(WG[j / 2]) * sum;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive 7/15-point Gauss-Kronrod integration of `f` over `[a, b]`.
pub fn integrate<T: Scalar, F: Fn(T) -> T>(f: F, a: T, b: T, cfg: QuadConfig) -> T {
    if a == b {
        return T::zero();
    }
    let (whole, err) = gk15(&f, a, b);
    let tol = T::c(cfg.abs_tol).max(T::c(cfg.rel_tol) * whole.abs());
    let floor = T::c(50.0) * T::epsilon() * whole.abs();
    recurse(&f, a, b, whole, err, tol, floor, cfg.max_depth)
}

#[allow(clippy::too_many_arguments)]
fn recurse<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T, whole: T, err: T, tol: T, floor: T, depth: u32) -> T {
    if err <= tol.max(floor) || depth == 0 {
        return whole;
    }
    let mid = T::c(0.5) * (a + b);
    if mid <= a || mid >= b {
        return whole;
    }
    let (left, el) = gk15(f, a, mid);
    let (right, er) = gk15(f, mid, b);
    let half_tol = tol * T::c(0.5);
    recurse(f, a, mid, left, el, half_tol, floor, depth - 1) + recurse(f, mid, b, right, er, half_tol, floor, depth - 1)
}

/// Composite trapezoid rule over an arbitrary (strictly increasing) abscissa.
pub fn trapezoid<T: Scalar>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    let half = T::c(0.5);
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| half * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Running trapezoid integral from `x[i]` to the last abscissa.
pub fn trapezoid_tail<T: Scalar>(x: &[T], y: &[T]) -> Vec<T> {
    let n = x.len();
    let mut out = vec![T::zero(); n];
    let half = T::c(0.5);
    for i in (0..n.saturating_sub(1)).rev() {
        out[i] = out[i + 1] + half * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
    }
    out
}

/// Composite Simpson on `n` equally spaced samples with step `h`; an odd
/// number of intervals finishes with the 3/8 rule on the last three.
pub fn simpson_uniform<T: Scalar>(h: T, y: &[T]) -> T {
    let n = y.len();
    match n {
        0 | 1 => T::zero(),
        2 => T::c(0.5) * h * (y[0] + y[1]),
        3 => h / T::c(3.0) * (y[0] + T::c(4.0) * y[1] + y[2]),
        _ => {
            let intervals = n - 1;
            let (simpson_end, tail) = if intervals % 2 == 0 {
                (n - 1, T::zero())
            } else {
                let k = n - 4;
                let t = T::c(3.0) * h / T::c(8.0)
                    * (y[k] + T::c(3.0) * y[k + 1] + T::c(3.0) * y[k + 2] + y[k + 3]);
                (n - 4, t)
            };
            let mut s = y[0] + y[simpson_end];
            for (i, v) in y.iter().enumerate().take(simpson_end).skip(1) {
                s = s + if i % 2 == 1 { T::c(4.0) } else { T::c(2.0) } * *v;
            }
            s * h / T::c(3.0) + tail
        }
    }
}

/// Uniform age grid.
///
/// `Nodes` samples ages `j*h`, `j = 0..n` and integrates with Simpson.
/// `Cells` stores cell averages over `[j*h, (j+1)*h]`, located at the
/// midpoints, and integrates by summing `h * value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgeGrid<T> {
    Nodes { step: T, len: usize },
    Cells { step: T, len: usize },
}

impl<T: Scalar> AgeGrid<T> {
    pub fn nodes(step: T, a_max: T) -> Result<Self> {
        Self::check(step, a_max)?;
        let len = (a_max / step).ceil().to_usize().unwrap_or(0) + 1;
        Ok(AgeGrid::Nodes { step, len })
    }

    pub fn cells(step: T, a_max: T) -> Result<Self> {
        Self::check(step, a_max)?;
        let len = (a_max / step).ceil().to_usize().unwrap_or(0).max(1);
        Ok(AgeGrid::Cells { step, len })
    }

    fn check(step: T, a_max: T) -> Result<()> {
        if !(step > T::zero()) || !step.is_finite() {
            return Err(Error::Validation(format!("grid step must be positive, got {step}")));
        }
        if !(a_max > step) || !a_max.is_finite() {
            return Err(Error::Validation(format!(
                "grid extent {a_max} must exceed the step {step}"
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> T {
        match *self {
            AgeGrid::Nodes { step, .. } | AgeGrid::Cells { step, .. } => step,
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            AgeGrid::Nodes { len, .. } | AgeGrid::Cells { len, .. } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn age(&self, j: usize) -> T {
        match *self {
            AgeGrid::Nodes { step, .. } => step * T::from_usize_lossy(j),
            AgeGrid::Cells { step, .. } => step * (T::from_usize_lossy(j) + T::c(0.5)),
        }
    }

    pub fn ages(&self) -> Vec<T> {
        (0..self.len()).map(|j| self.age(j)).collect()
    }

    /// Upper end of the covered age range.
    pub fn extent(&self) -> T {
        match *self {
            AgeGrid::Nodes { step, len } => step * T::from_usize_lossy(len.saturating_sub(1)),
            AgeGrid::Cells { step, len } => step * T::from_usize_lossy(len),
        }
    }

    /// Integral over the covered age range of a function sampled on this grid.
    pub fn integrate(&self, values: &[T]) -> T {
        debug_assert_eq!(values.len(), self.len());
        match *self {
            AgeGrid::Nodes { step, .. } => simpson_uniform(step, values),
            AgeGrid::Cells { step, .. } => step * values.iter().copied().sum::<T>(),
        }
    }

    pub fn same_as(&self, other: &Self) -> bool {
        match (self, other) {
            (AgeGrid::Nodes { step: a, len: n }, AgeGrid::Nodes { step: b, len: m })
            | (AgeGrid::Cells { step: a, len: n }, AgeGrid::Cells { step: b, len: m }) => {
                n == m && (*a - *b).abs() <= T::tiny() * a.abs()
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_kronrod_polynomials_and_exponentials() {
        let cfg = QuadConfig::default();
        let v: f64 = integrate(|x: f64| x.powi(5) - 3.0 * x, 0.0, 2.0, cfg);
        assert!((v - (64.0 / 6.0 - 6.0)).abs() < 1e-13);
        let e: f64 = integrate(|x: f64| (-x).exp(), 0.0, 50.0, cfg);
        assert!((e - (1.0 - (-50.0_f64).exp())).abs() < 1e-13);
        let s: f64 = integrate(|x: f64| x.sqrt(), 0.0, 1.0, cfg);
        assert!((s - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        for n in 2..12usize {
            let h = 0.3;
            let y: Vec<f64> = (0..n).map(|j| (j as f64 * h).powi(3)).collect();
            let b = (n - 1) as f64 * h;
            let exact = if n == 2 { 0.5 * h * (y[0] + y[1]) } else { b.powi(4) / 4.0 };
            assert!((simpson_uniform(h, &y) - exact).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn trapezoid_tail_accumulates() {
        let x = [0.0, 1.0, 2.0, 4.0];
        let y = [1.0, 1.0, 3.0, 3.0];
        let t = trapezoid_tail(&x, &y);
        assert_eq!(t, vec![9.0, 8.0, 6.0, 0.0]);
        assert_eq!(trapezoid(&x, &y), 9.0);
    }

    #[test]
    fn grids() {
        let g = AgeGrid::<f64>::cells(0.5, 10.0).unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g.age(0), 0.25);
        assert_eq!(g.extent(), 10.0);
        assert_eq!(g.integrate(&vec![1.0; 20]), 10.0);
        let n = AgeGrid::<f64>::nodes(0.5, 10.0).unwrap();
        assert_eq!(n.len(), 21);
        assert!((n.integrate(&vec![2.0; 21]) - 20.0).abs() < 1e-12);
        assert!(!g.same_as(&n));
        assert!(AgeGrid::<f64>::nodes(0.0, 1.0).is_err());
    }
}
