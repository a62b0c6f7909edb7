//! Numerical machinery shared by the fitters: damped Newton ascent for smooth
//! concave objectives, elastic-net penalized (proximal) Newton, bracketed
//! monotone root finding and a central-difference gradient check.

mod newton;
mod penalty;
mod root;

use nalgebra::{DMatrix, DVector};

pub use newton::{newton_maximize, proximal_newton_maximize};
pub use penalty::{PenaltySpec, Penalizer};
pub use root::{monotone_root, DEFAULT_ROOT_TOL};

pub const DEFAULT_GRAD_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Value, gradient and Hessian at one point.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// A twice-differentiable objective to be maximized.
pub trait SmoothObjective {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    fn derivatives(&self, x: &DVector<f64>) -> Derivatives;

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.derivatives(x).gradient
    }
}

/// Abort the solve once any coordinate in `from..` exceeds `limit` in magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateBound {
    pub from: usize,
    pub limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the max-norm of the (sub)gradient falls to this value.
    pub tol: f64,
    pub max_iter: usize,
    pub bound: Option<CoordinateBound>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_GRAD_TOL,
            max_iter: DEFAULT_MAX_ITER,
            bound: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// The line search could not improve the objective.
    Stalled,
    BoundExceeded { index: usize, value: f64 },
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    /// Objective value at `solution` (penalty included for penalized solves).
    pub value: f64,
    pub converged: bool,
    pub stop: StopReason,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Set when at least one step needed a shifted Hessian.
    pub damped: bool,
    /// Inverse of the negative Hessian at the solution, when it is positive definite.
    pub covariance: Option<DMatrix<f64>>,
}

/// Largest relative discrepancy between the analytic gradient and central
/// differences with step `h`. Discrepancies are scaled by `max(1, |g|)`.
pub fn finite_difference_check<O: SmoothObjective + ?Sized>(
    obj: &O,
    point: &DVector<f64>,
    h: f64,
) -> f64 {
    let analytic = obj.gradient(point);
    let mut worst: f64 = 0.0;
    let mut x = point.clone();
    for k in 0..point.len() {
        let x0 = point[k];
        x[k] = x0 + h;
        let up = obj.value(&x);
        x[k] = x0 - h;
        let down = obj.value(&x);
        x[k] = x0;
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[k].abs().max(numeric.abs()).max(1.0);
        worst = worst.max((analytic[k] - numeric).abs() / scale);
    }
    worst
}

#[inline]
pub(crate) fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
pub(crate) mod test_objectives {
    use super::*;

    /// `-(x - c)ᵀ A (x - c) / 2` with `A` positive definite.
    pub struct Quadratic {
        pub a: DMatrix<f64>,
        pub c: DVector<f64>,
    }

    impl SmoothObjective for Quadratic {
        fn dim(&self) -> usize {
            self.c.len()
        }
        fn value(&self, x: &DVector<f64>) -> f64 {
            let r = x - &self.c;
            -0.5 * r.dot(&(&self.a * &r))
        }
        fn derivatives(&self, x: &DVector<f64>) -> Derivatives {
            let r = x - &self.c;
            Derivatives {
                value: self.value(x),
                gradient: -(&self.a * r),
                hessian: -self.a.clone(),
            }
        }
    }

    /// Logistic log-likelihood `Σ y η − log(1 + e^η)`, `η = X b`.
    pub struct Logistic {
        pub x: Vec<Vec<f64>>,
        pub y: Vec<f64>,
    }

    impl SmoothObjective for Logistic {
        fn dim(&self) -> usize {
            self.x[0].len()
        }
        fn value(&self, b: &DVector<f64>) -> f64 {
            self.x
                .iter()
                .zip(&self.y)
                .map(|(row, y)| {
                    let eta: f64 = row.iter().zip(b.iter()).map(|(a, b)| a * b).sum();
                    y * eta - crate::model::log1pexp(eta)
                })
                .sum()
        }
        fn derivatives(&self, b: &DVector<f64>) -> Derivatives {
            let p = self.dim();
            let mut g = DVector::zeros(p);
            let mut h = DMatrix::zeros(p, p);
            for (row, y) in self.x.iter().zip(&self.y) {
                let eta: f64 = row.iter().zip(b.iter()).map(|(a, b)| a * b).sum();
                let mu = crate::model::expit(eta);
                let w = mu * (1.0 - mu);
                for k in 0..p {
                    g[k] += (y - mu) * row[k];
                    for l in 0..p {
                        h[(k, l)] -= w * row[k] * row[l];
                    }
                }
            }
            Derivatives {
                value: self.value(b),
                gradient: g,
                hessian: h,
            }
        }
    }
}
