use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::{
    max_abs, CoordinateBound, PenaltySpec, SmoothObjective, SolveReport, SolverOptions, StopReason,
};
use crate::error::{Error, Result};

const MAX_HALVINGS: usize = 40;
const STEP_TOL: f64 = 1e-6;
const CD_MAX_SWEEPS: usize = 10_000;
const CD_TOL: f64 = 1e-14;

/// Diagonal shift that makes `a` comfortably positive definite: the most
/// negative eigenvalue plus a margin relative to the diagonal scale.
fn pd_shift(a: &DMatrix<f64>) -> f64 {
    let scale = a.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let min_eig = a.clone().symmetric_eigenvalues().min();
    (-min_eig).max(0.0) + 1e-3 * scale
}

/// Solve `a · step = rhs`, shifting `a` when it is not positive definite.
/// Returns the step and whether a shift was needed.
fn positive_definite_solve(a: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, bool) {
    if let Some(ch) = a.clone().cholesky() {
        let step = ch.solve(rhs);
        if step.iter().all(|v| v.is_finite()) {
            return (step, false);
        }
    }
    let (shifted, _) = shifted_until_pd(a);
    (shifted.cholesky().expect("shifted matrix is positive definite").solve(rhs), true)
}

fn shifted_until_pd(a: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if a.clone().cholesky().is_some() {
        return (a.clone(), false);
    }
    let n = a.nrows();
    let mut mu = pd_shift(a);
    loop {
        let shifted = a + DMatrix::identity(n, n) * mu;
        if shifted.clone().cholesky().is_some() {
            return (shifted, true);
        }
        mu *= 10.0;
    }
}

fn covariance(neg_hessian: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = neg_hessian.clone().cholesky()?.inverse();
    inv.iter().all(|v| v.is_finite()).then_some(inv)
}

fn check_bound(bound: Option<CoordinateBound>, x: &DVector<f64>) -> Option<StopReason> {
    let b = bound?;
    (b.from..x.len()).find_map(|k| {
        (x[k].abs() > b.limit).then_some(StopReason::BoundExceeded {
            index: k,
            value: x[k],
        })
    })
}

fn slack(f: f64) -> f64 {
    1e-12 * (1.0 + f.abs())
}

fn check_init(init: &DVector<f64>, dim: usize, value: f64) -> Result<()> {
    if init.len() != dim {
        return Err(Error::arg(format!(
            "initial point has length {}, objective has dimension {dim}",
            init.len()
        )));
    }
    if init.iter().any(|v| !v.is_finite()) || !value.is_finite() {
        return Err(Error::arg("objective is not finite at the initial point"));
    }
    Ok(())
}

/// Maximize a smooth concave objective with Newton steps and step halving.
///
/// Steps use the negative Hessian when it is positive definite and a diagonal
/// shift of it otherwise (`damped` is then set on the report).
pub fn newton_maximize<O: SmoothObjective + ?Sized>(
    obj: &O,
    init: &DVector<f64>,
    options: &SolverOptions,
) -> Result<SolveReport> {
    let mut x = init.clone();
    let mut f = obj.value(&x);
    check_init(&x, obj.dim(), f)?;

    let mut damped = false;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;
    let mut der = obj.derivatives(&x);
    loop {
        let neg_h = -&der.hessian;
        let (step, shifted) = positive_definite_solve(&neg_h, &der.gradient);
        // A small gradient alone is not enough: along a separating direction
        // the gradient vanishes while the Newton step stays large.
        if max_abs(&der.gradient) <= options.tol
            && !shifted
            && max_abs(&step) <= STEP_TOL * (1.0 + max_abs(&x))
        {
            stop = StopReason::Converged;
            break;
        }
        if iterations >= options.max_iter {
            break;
        }
        damped |= shifted;

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &x + &step * t;
            let fc = obj.value(&candidate);
            if fc.is_finite() && fc >= f - slack(f) {
                accepted = Some((candidate, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            stop = StopReason::Stalled;
            break;
        };
        iterations += 1;
        x = next;
        f = fnext;
        der = obj.derivatives(&x);
        if let Some(reason) = check_bound(options.bound, &x) {
            stop = reason;
            break;
        }
    }

    let grad_norm = max_abs(&der.gradient);
    let converged = matches!(stop, StopReason::Converged);
    Ok(SolveReport {
        covariance: covariance(&-&der.hessian),
        solution: x,
        value: der.value,
        converged,
        stop,
        iterations,
        grad_norm,
        damped,
    })
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Minimum-norm element of the composite subdifferential, coordinate-wise.
fn prox_optimality(x: &DVector<f64>, grad: &DVector<f64>, l1: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let g = grad[k];
        let viol = if l1[k] == 0.0 {
            g.abs()
        } else if x[k] > 0.0 {
            (g - l1[k]).abs()
        } else if x[k] < 0.0 {
            (g + l1[k]).abs()
        } else {
            (g.abs() - l1[k]).max(0.0)
        };
        worst = worst.max(viol);
    }
    worst
}

/// Minimize `½ (u − x)ᵀ A (u − x) − gᵀ(u − x) + Σ l1_k |u_k|` by cyclic
/// coordinate descent, starting from `u = x`.
fn lasso_subproblem(a: &DMatrix<f64>, g: &DVector<f64>, x: &DVector<f64>, l1: &[f64]) -> DVector<f64> {
    let n = x.len();
    let mut u = x.clone();
    // r = A (u - x)
    let mut r = DVector::<f64>::zeros(n);
    for _ in 0..CD_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for k in 0..n {
            let akk = a[(k, k)];
            let target = akk * u[k] - r[k] + g[k];
            let new = soft_threshold(target, l1[k]) / akk;
            let delta = new - u[k];
            if delta != 0.0 {
                for i in 0..n {
                    r[i] += a[(i, k)] * delta;
                }
                u[k] = new;
                max_change = max_change.max(delta.abs() / (1.0 + new.abs()));
            }
        }
        if max_change < CD_TOL {
            break;
        }
    }
    u
}

/// Maximize `obj(x) − penalty(x[penalized])`.
///
/// The ridge part is folded into the Newton model; the lasso part is handled
/// by soft-thresholding coordinate descent on each local quadratic model, so
/// coordinates can land exactly on zero. A zero penalty defers to
/// [`newton_maximize`].
pub fn proximal_newton_maximize<O: SmoothObjective + ?Sized>(
    obj: &O,
    penalty: &PenaltySpec,
    penalized: Range<usize>,
    init: &DVector<f64>,
    options: &SolverOptions,
) -> Result<SolveReport> {
    let dim = obj.dim();
    if penalized.end > dim || penalized.start > penalized.end {
        return Err(Error::arg(format!(
            "penalized range {penalized:?} outside objective dimension {dim}"
        )));
    }
    let weights = penalty.weights(penalized.len())?;
    if penalty.is_zero() {
        return newton_maximize(obj, init, options);
    }
    let r = penalty.l1_ratio;
    let mut ridge = vec![0.0; dim];
    let mut l1 = vec![0.0; dim];
    for (k, w) in penalized.clone().zip(&weights) {
        ridge[k] = w * (1.0 - r);
        l1[k] = w * r;
    }
    let has_l1 = l1.iter().any(|v| *v > 0.0);
    let composite = |x: &DVector<f64>, smooth: f64| -> f64 {
        smooth
            - (0..dim)
                .map(|k| 0.5 * ridge[k] * x[k] * x[k] + l1[k] * x[k].abs())
                .sum::<f64>()
    };

    let mut x = init.clone();
    let mut f = composite(&x, obj.value(&x));
    check_init(&x, dim, f)?;

    let mut damped = false;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;
    let (mut grad, mut neg_h, mut smooth_value);
    loop {
        let der = obj.derivatives(&x);
        smooth_value = der.value;
        grad = der.gradient;
        neg_h = -der.hessian;
        for k in 0..dim {
            grad[k] -= ridge[k] * x[k];
            neg_h[(k, k)] += ridge[k];
        }
        if prox_optimality(&x, &grad, &l1) <= options.tol {
            stop = StopReason::Converged;
            break;
        }
        if iterations >= options.max_iter {
            break;
        }

        let direction = if has_l1 {
            let (a, shifted) = shifted_until_pd(&neg_h);
            damped |= shifted;
            lasso_subproblem(&a, &grad, &x, &l1) - &x
        } else {
            let (step, shifted) = positive_definite_solve(&neg_h, &grad);
            damped |= shifted;
            step
        };

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &x + &direction * t;
            let fc = composite(&candidate, obj.value(&candidate));
            if fc.is_finite() && fc >= f - slack(f) {
                accepted = Some((candidate, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            stop = StopReason::Stalled;
            break;
        };
        iterations += 1;
        x = next;
        f = fnext;
        if let Some(reason) = check_bound(options.bound, &x) {
            stop = reason;
            let der = obj.derivatives(&x);
            smooth_value = der.value;
            grad = der.gradient;
            neg_h = -der.hessian;
            break;
        }
    }

    let grad_norm = prox_optimality(&x, &grad, &l1);
    Ok(SolveReport {
        covariance: covariance(&neg_h),
        value: composite(&x, smooth_value),
        solution: x,
        converged: matches!(stop, StopReason::Converged),
        stop,
        iterations,
        grad_norm,
        damped,
    })
}
