//! Collapsed-likelihood estimator on person-period data.
//!
//! For each event type `j` separately, competing events and "no event" are
//! merged into one outcome and a logistic regression with `d` time-level
//! intercepts and `p` covariate effects is fitted to the person-period rows:
//!
//! ```text
//! log L_j = Σ_i Σ_{m ≤ X_i} [ δ_jim log λ_j(m|Z_i) + (1 − δ_jim) log(1 − λ_j(m|Z_i)) ]
//! ```
//!
//! Rows are generated on the fly from the subject table; the `n·d × (d+p)`
//! design is never materialized.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{event_table, validate_counts, SurvivalDataset};
use crate::error::{Error, Result};
use crate::fitted::{FitDiagnostics, FitOptions, FittedModel, Method};
use crate::model::{dot, logit, ModelParams};
use crate::optim::{
    newton_maximize, proximal_newton_maximize, CoordinateBound, Derivatives, PenaltySpec,
    SmoothObjective, SolveReport, SolverOptions, StopReason,
};

/// Unpenalized coefficients beyond this magnitude are treated as separation.
pub const SEPARATION_LIMIT: f64 = 30.0;

/// `(expit(η), expit(η)·expit(−η), log(1 + e^η))` from a single exponential.
#[inline]
fn logistic_parts(eta: f64) -> (f64, f64, f64) {
    let e = (-eta.abs()).exp();
    let inv = 1.0 / (1.0 + e);
    let mu = if eta >= 0.0 { inv } else { e * inv };
    (mu, e * inv * inv, eta.max(0.0) + e.ln_1p())
}

/// `log L_j` as a function of `(α_j1..α_jd, β_j1..β_jp)`.
pub struct CollapsedLikelihood<'a> {
    data: &'a SurvivalDataset,
    event: usize,
}

impl<'a> CollapsedLikelihood<'a> {
    pub fn new(data: &'a SurvivalDataset, event: usize) -> Result<Self> {
        if event == 0 || event > data.n_events() {
            return Err(Error::arg(format!("event type {event} out of range")));
        }
        Ok(Self { data, event })
    }
}

impl SmoothObjective for CollapsedLikelihood<'_> {
    fn dim(&self) -> usize {
        self.data.n_times() + self.data.n_covariates()
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let d = self.data.n_times();
        let (alpha, beta) = theta.as_slice().split_at(d);
        let mut value = 0.0;
        for o in self.data.observations() {
            let zb = dot(&o.covariates, beta);
            for m in 1..=self.data.last_at_risk(o) {
                let eta = alpha[m - 1] + zb;
                let (_, _, log_norm) = logistic_parts(eta);
                let hit = m == o.time && o.event == self.event;
                value += if hit { eta } else { 0.0 } - log_norm;
            }
        }
        value
    }

    fn derivatives(&self, theta: &DVector<f64>) -> Derivatives {
        let d = self.data.n_times();
        let p = self.data.n_covariates();
        let (alpha, beta) = theta.as_slice().split_at(d);

        let mut value = 0.0;
        let mut g_alpha = vec![0.0; d];
        let mut g_beta = vec![0.0; p];
        let mut h_alpha = vec![0.0; d];
        // cross terms α_t × β, row-major d×p
        let mut h_cross = vec![0.0; d * p];
        // upper triangle of β × β, row-major p×p
        let mut h_beta = vec![0.0; p * p];

        for o in self.data.observations() {
            let z = &o.covariates;
            let zb = dot(z, beta);
            for m in 1..=self.data.last_at_risk(o) {
                let eta = alpha[m - 1] + zb;
                let (mu, w, log_norm) = logistic_parts(eta);
                let y = if m == o.time && o.event == self.event { 1.0 } else { 0.0 };
                value += y * eta - log_norm;
                let r = y - mu;
                g_alpha[m - 1] += r;
                h_alpha[m - 1] += w;
                let cross = &mut h_cross[(m - 1) * p..m * p];
                for k in 0..p {
                    let wz = w * z[k];
                    g_beta[k] += r * z[k];
                    cross[k] += wz;
                    let row = &mut h_beta[k * p..(k + 1) * p];
                    for l in k..p {
                        row[l] += wz * z[l];
                    }
                }
            }
        }

        let n = d + p;
        let mut gradient = DVector::zeros(n);
        let mut hessian = DMatrix::zeros(n, n);
        for t in 0..d {
            gradient[t] = g_alpha[t];
            hessian[(t, t)] = -h_alpha[t];
            for k in 0..p {
                hessian[(t, d + k)] = -h_cross[t * p + k];
                hessian[(d + k, t)] = -h_cross[t * p + k];
            }
        }
        for k in 0..p {
            gradient[d + k] = g_beta[k];
            for l in k..p {
                hessian[(d + k, d + l)] = -h_beta[k * p + l];
                hessian[(d + l, d + k)] = -h_beta[k * p + l];
            }
        }
        Derivatives {
            value,
            gradient,
            hessian,
        }
    }
}

/// Estimates for one event type.
#[derive(Debug, Clone)]
pub struct CauseFit {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub alpha_se: Vec<f64>,
    pub beta_se: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

/// Checks shared by both fitters: every cell populated, no cell where the
/// whole risk set fails, no covariate constant across subjects.
pub(crate) fn check_estimable(ds: &SurvivalDataset, min_events: usize) -> Result<()> {
    validate_counts(ds, min_events)?.into_result()?;
    let table = event_table(ds);
    for j in 1..=ds.n_events() {
        for t in 1..=ds.n_times() {
            let (events, at_risk) = (table.events_at(j, t), table.at_risk_at(t));
            if events >= at_risk {
                return Err(Error::BoundaryCell {
                    event: j,
                    time: t,
                    events,
                    at_risk,
                });
            }
        }
    }
    for (k, name) in ds.covariate_names().iter().enumerate() {
        let first = ds.observations()[0].covariates[k];
        if ds.observations().iter().all(|o| o.covariates[k] == first) {
            return Err(Error::ConstantCovariate(name.clone()));
        }
    }
    Ok(())
}

/// Turn a finished solve into an error when it did not produce a usable optimum.
pub(crate) fn accept_report(report: &SolveReport, event: usize, offset: usize) -> Result<()> {
    match report.stop {
        StopReason::Converged => {}
        StopReason::BoundExceeded { index, value } => {
            return Err(Error::Separation {
                event,
                index: index - offset,
                value,
            })
        }
        StopReason::MaxIterations | StopReason::Stalled => {
            return Err(Error::Convergence {
                event,
                iterations: report.iterations,
                grad_norm: report.grad_norm,
            })
        }
    }
    if report.covariance.is_none() {
        return Err(Error::Singular(format!(
            "event type {event}: observed information is not positive definite"
        )));
    }
    Ok(())
}

pub(crate) fn diagnostics(event: usize, report: &SolveReport) -> FitDiagnostics {
    FitDiagnostics {
        event,
        log_likelihood: report.value,
        iterations: report.iterations,
        converged: report.converged,
        grad_norm: report.grad_norm,
        damped: report.damped,
    }
}

/// Maximize `log L_j` (minus the penalty on `β`, if any) for one event type.
pub fn fit_cause(
    ds: &SurvivalDataset,
    event: usize,
    penalty: Option<&PenaltySpec>,
    options: &FitOptions,
) -> Result<CauseFit> {
    let d = ds.n_times();
    let p = ds.n_covariates();
    let objective = CollapsedLikelihood::new(ds, event)?;
    let table = event_table(ds);

    let mut init = DVector::zeros(d + p);
    for t in 1..=d {
        let n = table.events_at(event, t) as f64;
        init[t - 1] = logit(n.max(0.5) / table.at_risk_at(t) as f64);
    }
    let solver = SolverOptions {
        tol: options.tol,
        max_iter: options.max_iter,
        bound: Some(CoordinateBound {
            from: d,
            limit: SEPARATION_LIMIT,
        }),
    };
    let report = match penalty {
        Some(spec) => proximal_newton_maximize(&objective, spec, d..d + p, &init, &solver)?,
        None => newton_maximize(&objective, &init, &solver)?,
    };
    accept_report(&report, event, d)?;

    let cov = report.covariance.as_ref().expect("checked by accept_report");
    let se: Vec<f64> = (0..d + p).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
    let x = report.solution.as_slice();
    Ok(CauseFit {
        alpha: x[..d].to_vec(),
        beta: x[d..].to_vec(),
        alpha_se: se[..d].to_vec(),
        beta_se: se[d..].to_vec(),
        diagnostics: diagnostics(event, &report),
    })
}

pub(crate) fn for_each_event<T: Send>(
    n_events: usize,
    parallel: bool,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if parallel && n_events > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (1..=n_events)
                .map(|j| {
                    let f = &f;
                    scope.spawn(move || f(j))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("fit thread panicked"))
                .collect()
        })
    } else {
        (1..=n_events).map(f).collect()
    }
}

/// Fit every event type by maximizing its collapsed log-likelihood.
pub fn fit(
    ds: &SurvivalDataset,
    penalty: Option<&PenaltySpec>,
    options: &FitOptions,
) -> Result<FittedModel> {
    if ds.is_empty() {
        return Err(Error::arg("dataset is empty"));
    }
    check_estimable(ds, options.min_events)?;
    if let Some(spec) = penalty {
        spec.weights(ds.n_covariates())?;
    }
    let fits = for_each_event(ds.n_events(), options.parallel, |j| {
        fit_cause(ds, j, penalty, options)
    })?;

    let params = ModelParams::new(
        fits.iter().map(|f| f.alpha.clone()).collect(),
        fits.iter().map(|f| f.beta.clone()).collect(),
    )?;
    Ok(FittedModel {
        method: Method::Expansion,
        grid: ds.grid().clone(),
        covariate_names: ds.covariate_names().to_vec(),
        params,
        beta_se: fits.iter().map(|f| f.beta_se.clone()).collect(),
        alpha_se: Some(fits.iter().map(|f| f.alpha_se.clone()).collect()),
        diagnostics: fits.into_iter().map(|f| f.diagnostics).collect(),
    })
}
