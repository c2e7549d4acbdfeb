//! Box-constrained Nelder-Mead simplex minimizer.
//!
//! Trial points are projected onto the box before evaluation. Coordinates are
//! rescaled by `scale` so that the initial simplex is isotropic in relative
//! terms. After convergence the simplex is rebuilt around the best vertex and
//! the search repeated until a restart yields no further improvement.

use crate::Scalar;

#[derive(Debug, Clone)]
pub struct SimplexOptions<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    /// Characteristic magnitude of each coordinate.
    pub scale: Vec<T>,
    /// Initial simplex edge, relative to `scale`.
    pub initial_step: T,
    pub max_evaluations: usize,
    pub f_tol_abs: T,
    pub f_tol_rel: T,
    pub x_tol: T,
    pub max_restarts: usize,
}

#[derive(Debug, Clone)]
pub struct SimplexResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evaluations: usize,
    pub converged: bool,
}

struct Problem<'a, T, F> {
    f: &'a F,
    lower: &'a [T],
    upper: &'a [T],
    scale: &'a [T],
    evaluations: usize,
}

impl<T: Scalar, F: Fn(&[T]) -> T> Problem<'_, T, F> {
    fn to_params(&self, y: &[T]) -> Vec<T> {
        y.iter()
            .zip(self.scale)
            .zip(self.lower.iter().zip(self.upper))
            .map(|((v, s), (lo, hi))| (*v * *s).max(*lo).min(*hi))
            .collect()
    }

    fn eval(&mut self, y: &[T]) -> T {
        self.evaluations += 1;
        let v = (self.f)(&self.to_params(y));
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    }

    fn project(&self, y: &mut [T]) {
        for ((v, s), (lo, hi)) in y.iter_mut().zip(self.scale).zip(self.lower.iter().zip(self.upper)) {
            *v = (*v).max(*lo / *s).min(*hi / *s);
        }
    }
}

fn combine<T: Scalar>(a: &[T], b: &[T], t: T) -> Vec<T> {
    // a + t * (b - a)
    a.iter().zip(b).map(|(x, y)| *x + t * (*y - *x)).collect()
}

pub fn minimize<T: Scalar, F: Fn(&[T]) -> T>(f: &F, x0: &[T], opts: &SimplexOptions<T>) -> SimplexResult<T> {
    let n = x0.len();
    assert!(n > 0 && opts.lower.len() == n && opts.upper.len() == n && opts.scale.len() == n);
    let mut problem = Problem {
        f,
        lower: &opts.lower,
        upper: &opts.upper,
        scale: &opts.scale,
        evaluations: 0,
    };
    let mut start: Vec<T> = x0.iter().zip(&opts.scale).map(|(x, s)| *x / *s).collect();
    problem.project(&mut start);
    let mut best_val = problem.eval(&start);
    let mut best = start;
    let mut converged = false;

    for _ in 0..=opts.max_restarts {
        let (y, v, ok) = run(&mut problem, &best, opts);
        let improved = v < best_val;
        let gain = best_val - v;
        if improved {
            best = y;
            best_val = v;
        }
        converged = ok;
        if !ok || problem.evaluations >= opts.max_evaluations {
            break;
        }
        if !improved || gain <= opts.f_tol_abs + opts.f_tol_rel * best_val.abs() {
            break;
        }
    }
    SimplexResult {
        x: problem.to_params(&best),
        value: best_val,
        evaluations: problem.evaluations,
        converged,
    }
}

fn run<T: Scalar, F: Fn(&[T]) -> T>(
    p: &mut Problem<'_, T, F>,
    start: &[T],
    opts: &SimplexOptions<T>,
) -> (Vec<T>, T, bool) {
    let n = start.len();
    let nf = T::from_usize_lossy(n);
    // Adaptive coefficients (Gao & Han) behave better in higher dimension.
    let alpha = T::one();
    let gamma = T::one() + T::c(2.0) / nf;
    let rho = T::c(0.75) - T::one() / (T::c(2.0) * nf);
    let shrink = T::one() - T::one() / nf;

    let mut verts: Vec<Vec<T>> = Vec::with_capacity(n + 1);
    verts.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        let step = opts.initial_step * if v[i].abs() > T::c(1e-3) { v[i].abs() } else { T::one() };
        v[i] = v[i] + step;
        p.project(&mut v);
        if (v[i] - start[i]).abs() < step * T::c(0.5) {
            v[i] = start[i] - step;
            p.project(&mut v);
        }
        verts.push(v);
    }
    let mut vals: Vec<T> = verts.iter().map(|v| p.eval(v)).collect();

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|a, b| vals[*a].partial_cmp(&vals[*b]).unwrap_or(std::cmp::Ordering::Equal));
        verts = order.iter().map(|i| verts[*i].clone()).collect();
        vals = order.iter().map(|i| vals[*i]).collect();

        let f_spread = vals[n] - vals[0];
        let x_spread = verts[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&verts[0]).map(|(a, b)| (*a - *b).abs()))
            .fold(T::zero(), T::max);
        if f_spread <= opts.f_tol_abs + opts.f_tol_rel * vals[0].abs() && x_spread <= opts.x_tol {
            return (verts[0].clone(), vals[0], true);
        }
        if x_spread <= T::epsilon() * T::c(4.0) {
            return (verts[0].clone(), vals[0], true);
        }
        if p.evaluations >= opts.max_evaluations {
            return (verts[0].clone(), vals[0], false);
        }

        let mut centroid = vec![T::zero(); n];
        for v in &verts[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c = *c + *x / nf;
            }
        }

        let mut reflected = combine(&centroid, &verts[n], -alpha);
        p.project(&mut reflected);
        let fr = p.eval(&reflected);
        if fr < vals[0] {
            let mut expanded = combine(&centroid, &verts[n], -gamma);
            p.project(&mut expanded);
            let fe = p.eval(&expanded);
            if fe < fr {
                verts[n] = expanded;
                vals[n] = fe;
            } else {
                verts[n] = reflected;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            verts[n] = reflected;
            vals[n] = fr;
            continue;
        }
        let (mut contracted, outside) = if fr < vals[n] {
            (combine(&centroid, &reflected, rho), true)
        } else {
            (combine(&centroid, &verts[n], rho), false)
        };
        p.project(&mut contracted);
        let fc = p.eval(&contracted);
        if (outside && fc <= fr) || (!outside && fc < vals[n]) {
            verts[n] = contracted;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            let mut v = combine(&verts[0], &verts[i], shrink);
            p.project(&mut v);
            vals[i] = p.eval(&v);
            verts[i] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(n: usize) -> SimplexOptions<f64> {
        SimplexOptions {
            lower: vec![-10.0; n],
            upper: vec![10.0; n],
            scale: vec![1.0; n],
            initial_step: 0.2,
            max_evaluations: 20_000,
            f_tol_abs: 1e-20,
            f_tol_rel: 1e-14,
            x_tol: 1e-10,
            max_restarts: 5,
        }
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(&f, &[-1.2, 1.0], &opts(2));
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| (x[0] + 3.0).powi(2) + (x[1] - 2.0).powi(2);
        let mut o = opts(2);
        o.lower = vec![0.0, 0.0];
        let r = minimize(&f, &[1.0, 1.0], &o);
        assert!(r.x[0] >= 0.0 && r.x[0] < 1e-12);
        assert!((r.x[1] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn stops_at_budget() {
        let f = |x: &[f64]| x.iter().map(|v| v.abs().sqrt()).sum::<f64>() + 1.0;
        let mut o = opts(4);
        o.max_evaluations = 30;
        let r = minimize(&f, &[3.0, -2.0, 1.0, 5.0], &o);
        assert!(!r.converged);
        assert!(r.evaluations >= 30);
    }
}
