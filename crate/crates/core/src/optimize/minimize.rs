//! Bound-constrained sequential quadratic minimization with finite-difference
//! gradients and a damped BFGS Hessian model.

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct MinimizeOptions<T> {
    pub max_iterations: usize,
    /// Central-difference step.
    pub gradient_step: T,
    /// Relative cost-decrease tolerance.
    pub tolerance: T,
}

impl<T: Real> Default for MinimizeOptions<T> {
    fn default() -> Self {
        Self { max_iterations: 100, gradient_step: T::lit(1e-6), tolerance: T::lit(1e-8) }
    }
}

impl<T: Real> MinimizeOptions<T> {
    pub fn with_iterations(max_iterations: usize) -> Self {
        Self { max_iterations, ..Self::default() }
    }
}

pub struct BoundConstrainedProblem<T, F> {
    pub objective: F,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub initial: Vec<T>,
}

impl<T: Real, F: Fn(&[T]) -> T> BoundConstrainedProblem<T, F> {
    /// Clamps the initial guess into the bounds.
    pub fn new(objective: F, lower: Vec<T>, upper: Vec<T>, initial: Vec<T>) -> Result<Self> {
        let n = initial.len();
        for len in [lower.len(), upper.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        if lower.iter().zip(&upper).any(|(l, u)| !l.is_finite() || !u.is_finite() || l > u) {
            return Err(Error::InvalidArgument("bounds must be finite with lower <= upper".into()));
        }
        let initial = initial.iter().zip(lower.iter().zip(&upper)).map(|(x, (l, u))| x.max(*l).min(*u)).collect();
        Ok(Self { objective, lower, upper, initial })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult<T> {
    pub solution: Vec<T>,
    pub cost: T,
    pub iterations: usize,
    pub converged: bool,
}

fn eval<T: Real, F: Fn(&[T]) -> T>(f: &F, x: &[T], iteration: usize) -> Result<T> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteObjective { iteration })
    }
}

fn gradient<T: Real, F: Fn(&[T]) -> T>(f: &F, x: &[T], h: T, iteration: usize) -> Result<Vec<T>> {
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = eval(f, &probe, iteration)?;
        probe[i] = x[i] - h;
        let fm = eval(f, &probe, iteration)?;
        probe[i] = x[i];
        g.push((fp - fm) / (T::two() * h));
    }
    Ok(g)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn mat_vec<T: Real>(m: &[Vec<T>], v: &[T]) -> Vec<T> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Primal active-set solve of `min ½dᵀBd + gᵀd` s.t. `lo ≤ d ≤ hi`, with
/// `lo ≤ 0 ≤ hi` so `d = 0` is feasible.
pub(crate) fn box_qp<T: Real>(b: &[Vec<T>], g: &[T], lo: &[T], hi: &[T]) -> Vec<T> {
    let n = g.len();
    let zero = T::zero();
    let mut d = vec![zero; n];
    let mut fixed: Vec<bool> =
        (0..n).map(|i| (lo[i] >= zero && g[i] > zero) || (hi[i] <= zero && g[i] < zero)).collect();
    for _ in 0..4 * n + 10 {
        let r: Vec<T> = mat_vec(b, &d).iter().zip(g).map(|(a, c)| *a + *c).collect();
        let free: Vec<usize> = (0..n).filter(|i| !fixed[*i]).collect();
        let p_free = if free.is_empty() {
            Vec::new()
        } else {
            let sub: Vec<Vec<T>> = free.iter().map(|&i| free.iter().map(|&j| b[i][j]).collect()).collect();
            let rhs: Vec<T> = free.iter().map(|&i| -r[i]).collect();
            match cholesky_solve(&sub, &rhs) {
                Some(p) => p,
                None => rhs,
            }
        };
        let step_norm = p_free.iter().fold(zero, |m, v| m.max(v.abs()));
        if step_norm <= T::epsilon() {
            // stationary on the working set: release the worst wrong-signed multiplier
            let mut worst = None;
            let mut worst_val = zero;
            for i in (0..n).filter(|i| fixed[*i]) {
                let at_lower = d[i] <= lo[i];
                let violation = if at_lower { -r[i] } else { r[i] };
                if violation > worst_val {
                    worst_val = violation;
                    worst = Some(i);
                }
            }
            match worst {
                Some(i) => fixed[i] = false,
                None => return d,
            }
            continue;
        }
        let mut alpha = T::one();
        let mut block = None;
        for (k, &i) in free.iter().enumerate() {
            let p = p_free[k];
            let room = if p > zero { hi[i] - d[i] } else { lo[i] - d[i] };
            if p != zero {
                let a = room / p;
                if a < alpha {
                    alpha = a.max(zero);
                    block = Some((i, p > zero));
                }
            }
        }
        for (k, &i) in free.iter().enumerate() {
            d[i] = (d[i] + alpha * p_free[k]).max(lo[i]).min(hi[i]);
        }
        if let Some((i, upper)) = block {
            d[i] = if upper { hi[i] } else { lo[i] };
            fixed[i] = true;
        }
    }
    d
}

fn bfgs_update<T: Real>(b: &mut [Vec<T>], s: &[T], y: &[T]) {
    let bs = mat_vec(b, s);
    let sbs = dot(s, &bs);
    if sbs <= T::lit(1e-300) || !sbs.is_finite() {
        return;
    }
    let sy = dot(s, y);
    // Powell damping keeps the model positive definite
    let theta = if sy >= T::lit(0.2) * sbs { T::one() } else { T::lit(0.8) * sbs / (sbs - sy) };
    let r: Vec<T> = y.iter().zip(&bs).map(|(yi, bi)| theta * *yi + (T::one() - theta) * *bi).collect();
    let sr = dot(s, &r);
    if sr <= T::zero() || !sr.is_finite() {
        return;
    }
    for i in 0..s.len() {
        for j in 0..s.len() {
            b[i][j] = b[i][j] + r[i] * r[j] / sr - bs[i] * bs[j] / sbs;
        }
    }
}

/// Infinity norm of `P(x − g) − x`.
fn projected_gradient_norm<T: Real>(g: &[T], x: &[T], lower: &[T], upper: &[T]) -> T {
    g.iter()
        .zip(x)
        .zip(lower.iter().zip(upper))
        .map(|((gi, xi), (l, u))| ((*xi - *gi).max(*l).min(*u) - *xi).abs())
        .fold(T::zero(), T::max)
}

fn scaled_identity<T: Real>(n: usize, s: T) -> Vec<Vec<T>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { s } else { T::zero() }).collect()).collect()
}

const MAX_FIRST_STEP: f64 = 0.05;

/// Initial Hessian model whose first step is at most `MAX_FIRST_STEP` per coordinate.
fn initial_model<T: Real>(g: &[T]) -> Vec<Vec<T>> {
    let gmax = g.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    scaled_identity(g.len(), (gmax / T::lit(MAX_FIRST_STEP)).max(T::one()))
}

/// Minimizes `problem.objective` within its bounds.
pub fn minimize<T: Real, F: Fn(&[T]) -> T>(
    problem: &BoundConstrainedProblem<T, F>,
    opts: &MinimizeOptions<T>,
) -> Result<SolveResult<T>> {
    let f = &problem.objective;
    let (lower, upper) = (&problem.lower, &problem.upper);
    let n = problem.initial.len();
    let mut x = problem.initial.clone();
    let mut fx = eval(f, &x, 0)?;
    if n == 0 {
        return Ok(SolveResult { solution: x, cost: fx, iterations: 0, converged: true });
    }
    let mut g = gradient(f, &x, opts.gradient_step, 0)?;
    let mut b = initial_model(&g);
    let mut fresh = true;
    let mut converged = false;
    let mut iterations = 0;
    let step_tol = T::lit(1e-12);
    while iterations < opts.max_iterations {
        let lo: Vec<T> = lower.iter().zip(&x).map(|(l, v)| *l - *v).collect();
        let hi: Vec<T> = upper.iter().zip(&x).map(|(u, v)| *u - *v).collect();
        let mut d = box_qp(&b, &g, &lo, &hi);
        let mut slope = dot(&g, &d);
        if !(slope < T::zero()) {
            // model is stale; fall back to projected steepest descent
            b = initial_model(&g);
            fresh = true;
            d = box_qp(&b, &g, &lo, &hi);
            slope = dot(&g, &d);
        }
        if slope >= -T::lit(1e-14) * (T::one() + fx.abs()) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut alpha = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<T> = x
                .iter()
                .zip(&d)
                .zip(lower.iter().zip(upper))
                .map(|((v, di), (l, u))| (*v + alpha * *di).max(*l).min(*u))
                .collect();
            let ft = eval(f, &trial, iterations)?;
            if ft <= fx + T::lit(1e-4) * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha = alpha * T::half();
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                converged = true;
                break;
            }
            b = initial_model(&g);
            fresh = true;
            continue;
        };
        let g_new = gradient(f, &x_new, opts.gradient_step, iterations)?;
        let s: Vec<T> = x_new.iter().zip(&x).map(|(a, c)| *a - *c).collect();
        let y: Vec<T> = g_new.iter().zip(&g).map(|(a, c)| *a - *c).collect();
        bfgs_update(&mut b, &s, &y);
        let stepped_fresh = std::mem::replace(&mut fresh, false);
        let decrease = fx - f_new;
        let step = s.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        x = x_new;
        fx = f_new;
        g = g_new;
        if step <= step_tol || decrease <= opts.tolerance * (T::one() + fx.abs()) {
            // a stalled step with a large projected gradient means the model is bad
            if projected_gradient_norm(&g, &x, lower, upper) <= T::lit(1e-4) || stepped_fresh {
                converged = true;
                break;
            }
            b = initial_model(&g);
            fresh = true;
        }
    }
    Ok(SolveResult { solution: x, cost: fx, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bowl(c: Vec<f64>) -> impl Fn(&[f64]) -> f64 {
        move |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    #[test]
    fn bowl_interior_minimum() {
        let p = BoundConstrainedProblem::new(bowl(vec![0.3, -0.7, 1.1]), vec![-2.0; 3], vec![2.0; 3], vec![0.0; 3])
            .unwrap();
        let r = minimize(&p, &MinimizeOptions::default()).unwrap();
        for (a, b) in r.solution.iter().zip([0.3, -0.7, 1.1]) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(r.converged);
    }

    #[test]
    fn bowl_outside_bounds_hits_nearest_bound() {
        let p = BoundConstrainedProblem::new(bowl(vec![3.0, -0.5, -4.0]), vec![-1.0; 3], vec![1.0; 3], vec![0.0; 3])
            .unwrap();
        let r = minimize(&p, &MinimizeOptions::default()).unwrap();
        for (a, b) in r.solution.iter().zip([1.0, -0.5, -1.0]) {
            assert!((a - b).abs() < 1e-6, "{:?}", r.solution);
        }
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let p = BoundConstrainedProblem::new(f, vec![-5.0; 2], vec![5.0; 2], vec![-1.2, 1.0]).unwrap();
        let r = minimize(&p, &MinimizeOptions::with_iterations(500)).unwrap();
        assert!(r.cost < 1e-4, "{r:?}");
    }

    #[test]
    fn non_finite_objective_aborts() {
        let p = BoundConstrainedProblem::new(|x: &[f64]| 1.0 / x[0], vec![-1.0], vec![1.0], vec![0.0]).unwrap();
        assert!(matches!(minimize(&p, &MinimizeOptions::default()), Err(Error::NonFiniteObjective { .. })));
    }

    #[test]
    fn initial_guess_is_clamped() {
        let p = BoundConstrainedProblem::new(bowl(vec![0.0]), vec![-1.0], vec![1.0], vec![7.0]).unwrap();
        assert_eq!(p.initial, vec![1.0]);
        assert!(BoundConstrainedProblem::new(bowl(vec![0.0]), vec![1.0], vec![-1.0], vec![0.0]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let f = |x: &[f32]| (x[0] - 0.25) * (x[0] - 0.25) + (x[1] + 0.5) * (x[1] + 0.5);
        let opts = MinimizeOptions { gradient_step: 1e-3f32, ..MinimizeOptions::default() };
        let p = BoundConstrainedProblem::new(f, vec![-1.0; 2], vec![1.0; 2], vec![0.0; 2]).unwrap();
        let r = minimize(&p, &opts).unwrap();
        assert!((r.solution[0] - 0.25).abs() < 1e-3 && (r.solution[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn box_qp_matches_enumeration() {
        // separable case: each coordinate is the clamped unconstrained optimum
        let b = vec![vec![2.0, 0.0], vec![0.0, 4.0]];
        let d = box_qp(&b, &[-4.0, 8.0], &[-1.0, -1.0], &[1.0, 1.0]);
        assert_eq!(d, vec![1.0, -1.0]);
    }

    proptest! {
        #[test]
        fn never_leaves_bounds(c in prop::collection::vec(-3.0f64..3.0, 3), x0 in prop::collection::vec(-3.0f64..3.0, 3)) {
            let p = BoundConstrainedProblem::new(
                move |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b).powi(4) + a * b).sum(),
                vec![-1.0, -0.5, 0.0], vec![1.0, 0.5, 2.0], x0).unwrap();
            let r = minimize(&p, &MinimizeOptions::with_iterations(50)).unwrap();
            for (v, (l, u)) in r.solution.iter().zip([(-1.0, 1.0), (-0.5, 0.5), (0.0, 2.0)]) {
                prop_assert!(*v >= l && *v <= u);
            }
            prop_assert!(r.cost <= (p.objective)(&p.initial));
        }

        #[test]
        fn box_qp_is_kkt(a in prop::collection::vec(-1.0f64..1.0, 9), g in prop::collection::vec(-2.0f64..2.0, 3)) {
            // B = AᵀA + I is positive definite
            let m: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| {
                (0..3).map(|k| a[3 * k + i] * a[3 * k + j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 }
            }).collect()).collect();
            let lo = [-0.3, -1.0, 0.0];
            let hi = [0.3, 0.0, 1.0];
            let d = box_qp(&m, &g, &lo, &hi);
            let r: Vec<f64> = (0..3).map(|i| dot(&m[i], &d) + g[i]).collect();
            for i in 0..3 {
                prop_assert!(d[i] >= lo[i] - 1e-12 && d[i] <= hi[i] + 1e-12);
                if d[i] > lo[i] + 1e-9 && d[i] < hi[i] - 1e-9 {
                    prop_assert!(r[i].abs() < 1e-9);
                } else if d[i] <= lo[i] + 1e-9 {
                    prop_assert!(r[i] >= -1e-9);
                } else {
                    prop_assert!(r[i] <= 1e-9);
                }
            }
        }
    }
}
