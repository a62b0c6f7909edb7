//! Two-step estimator: covariate effects first, time effects second.
//!
//! Step 1 maximizes a conditional likelihood in which the subjects at risk at
//! each time form their own stratum, so the time intercepts cancel:
//!
//! ```text
//! ℓ_j(β) = Σ_t [ Σ_{i ∈ D_tj} Z_iᵀβ − n_tj log Σ_{i ∈ R_t} exp(Z_iᵀβ) ]
//! ```
//!
//! (shown with Breslow ties; Efron's correction is the default, since tied
//! failures are the norm on a coarse grid). Step 2 solves, for
//! every cell separately, the one-dimensional equation
//!
//! ```text
//! (1/y_t) Σ_{i ∈ R_t} expit(α + Z_iᵀβ̂) = n_tj / y_t
//! ```
//!
//! Neither step ever builds person-period rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{event_table, SurvivalDataset};
use crate::error::{Error, Result};
use crate::expansion::{accept_report, check_estimable, diagnostics, for_each_event, SEPARATION_LIMIT};
use crate::fitted::{FitDiagnostics, FitOptions, FittedModel, Method};
use crate::model::{dot, expit, logit, ModelParams};
use crate::optim::{
    newton_maximize, proximal_newton_maximize, CoordinateBound, Derivatives, PenaltySpec,
    SmoothObjective, SolverOptions,
};

/// Residual tolerance of the per-cell intercept equations.
pub const ALPHA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMethod {
    Breslow,
    #[default]
    Efron,
}

impl std::str::FromStr for TieMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "breslow" => Ok(TieMethod::Breslow),
            "efron" => Ok(TieMethod::Efron),
            other => Err(Error::arg(format!("unknown tie method '{other}'"))),
        }
    }
}

/// A time point with at least one type-`j` event.
struct Stratum {
    time: usize,
    /// Indices (into the dataset) of the subjects failing from cause `j` at `time`.
    members: Vec<usize>,
    /// `Σ_{i ∈ D_tj} Z_i`
    z_sum: Vec<f64>,
}

/// Stratified partial log-likelihood of one event type.
pub struct PartialLikelihood<'a> {
    data: &'a SurvivalDataset,
    ties: TieMethod,
    strata: Vec<Stratum>,
}

/// Risk-set sums `Σ w`, `Σ w Z`, `Σ w Z Zᵀ` (upper triangle, row-major).
struct Moments {
    s0: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Moments {
    fn zeros(p: usize, second: bool) -> Self {
        Self {
            s0: 0.0,
            s1: vec![0.0; p],
            s2: if second { vec![0.0; p * p] } else { Vec::new() },
        }
    }

    fn add(&mut self, w: f64, z: &[f64]) {
        self.s0 += w;
        let p = self.s1.len();
        for k in 0..p {
            let wz = w * z[k];
            self.s1[k] += wz;
            if !self.s2.is_empty() {
                let row = &mut self.s2[k * p..(k + 1) * p];
                for l in k..p {
                    row[l] += wz * z[l];
                }
            }
        }
    }

    fn add_moments(&mut self, other: &Moments) {
        self.s0 += other.s0;
        for (a, b) in self.s1.iter_mut().zip(&other.s1) {
            *a += b;
        }
        for (a, b) in self.s2.iter_mut().zip(&other.s2) {
            *a += b;
        }
    }
}

impl<'a> PartialLikelihood<'a> {
    pub fn new(data: &'a SurvivalDataset, event: usize, ties: TieMethod) -> Result<Self> {
        if event == 0 || event > data.n_events() {
            return Err(Error::arg(format!("event type {event} out of range")));
        }
        let p = data.n_covariates();
        let mut by_time: Vec<Vec<usize>> = vec![Vec::new(); data.n_times()];
        for (i, o) in data.observations().iter().enumerate() {
            if o.event == event {
                by_time[o.time - 1].push(i);
            }
        }
        let strata = by_time
            .into_iter()
            .enumerate()
            .filter(|(_, m)| !m.is_empty())
            .map(|(t, members)| {
                let mut z_sum = vec![0.0; p];
                for &i in &members {
                    for (s, z) in z_sum.iter_mut().zip(&data.observations()[i].covariates) {
                        *s += z;
                    }
                }
                Stratum {
                    time: t + 1,
                    members,
                    z_sum,
                }
            })
            .collect();
        Ok(Self { data, ties, strata })
    }

    /// Linear predictors and the shift used to keep `exp` in range.
    fn linear_predictors(&self, beta: &[f64]) -> (Vec<f64>, f64) {
        let eta: Vec<f64> = self
            .data
            .observations()
            .iter()
            .map(|o| dot(&o.covariates, beta))
            .collect();
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (eta, if shift.is_finite() { shift } else { 0.0 })
    }

    /// Evaluate `ℓ` and, when `second` is set, its gradient and Hessian.
    fn evaluate(&self, beta: &[f64], second: bool) -> (f64, Vec<f64>, Vec<f64>) {
        let d = self.data.n_times();
        let p = self.data.n_covariates();
        let (eta, shift) = self.linear_predictors(beta);

        // Moments of the subjects whose last at-risk time is exactly t; risk
        // sets are their suffix sums.
        let mut buckets: Vec<Moments> = (0..d).map(|_| Moments::zeros(p, second)).collect();
        for (o, &e) in self.data.observations().iter().zip(&eta) {
            let t = self.data.last_at_risk(o);
            let w = (e - shift).exp();
            if second {
                buckets[t - 1].add(w, &o.covariates);
            } else {
                buckets[t - 1].s0 += w;
            }
        }

        let mut value = 0.0;
        let mut grad = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        let mut risk = Moments::zeros(p, second);
        let mut strata = self.strata.iter().rev().peekable();
        for t in (1..=d).rev() {
            risk.add_moments(&buckets[t - 1]);
            let Some(stratum) = strata.next_if(|s| s.time == t) else {
                continue;
            };
            let n = stratum.members.len();
            value += dot(&stratum.z_sum, beta);
            if second {
                for (g, z) in grad.iter_mut().zip(&stratum.z_sum) {
                    *g += z;
                }
            }
            match self.ties {
                TieMethod::Breslow => {
                    accumulate_log_term(&risk, n as f64, shift, second, &mut value, &mut grad, &mut hess);
                }
                TieMethod::Efron => {
                    let mut tied = Moments::zeros(p, second);
                    for &i in &stratum.members {
                        let w = (eta[i] - shift).exp();
                        tied.add(w, &self.data.observations()[i].covariates);
                    }
                    for l in 0..n {
                        let f = l as f64 / n as f64;
                        let mut adj = Moments {
                            s0: risk.s0 - f * tied.s0,
                            s1: risk.s1.iter().zip(&tied.s1).map(|(a, b)| a - f * b).collect(),
                            s2: risk.s2.iter().zip(&tied.s2).map(|(a, b)| a - f * b).collect(),
                        };
                        // guard against cancellation when the whole risk set is tied
                        adj.s0 = adj.s0.max(f64::MIN_POSITIVE);
                        accumulate_log_term(&adj, 1.0, shift, second, &mut value, &mut grad, &mut hess);
                    }
                }
            }
        }
        (value, grad, hess)
    }
}

/// Subtract `weight · log Σ_R exp(η)` and its derivatives.
fn accumulate_log_term(
    m: &Moments,
    weight: f64,
    shift: f64,
    second: bool,
    value: &mut f64,
    grad: &mut [f64],
    hess: &mut [f64],
) {
    *value -= weight * (m.s0.ln() + shift);
    if !second {
        return;
    }
    let p = grad.len();
    for k in 0..p {
        let mk = m.s1[k] / m.s0;
        grad[k] -= weight * mk;
        for l in k..p {
            let ml = m.s1[l] / m.s0;
            hess[k * p + l] -= weight * (m.s2[k * p + l] / m.s0 - mk * ml);
        }
    }
}

impl SmoothObjective for PartialLikelihood<'_> {
    fn dim(&self) -> usize {
        self.data.n_covariates()
    }

    fn value(&self, beta: &DVector<f64>) -> f64 {
        self.evaluate(beta.as_slice(), false).0
    }

    fn derivatives(&self, beta: &DVector<f64>) -> Derivatives {
        let p = self.dim();
        let (value, grad, hess) = self.evaluate(beta.as_slice(), true);
        let hessian = DMatrix::from_fn(p, p, |r, c| hess[r.min(c) * p + r.max(c)]);
        Derivatives {
            value,
            gradient: DVector::from_vec(grad),
            hessian,
        }
    }
}

/// Step-1 estimate for one event type.
#[derive(Debug, Clone)]
pub struct BetaFit {
    pub beta: Vec<f64>,
    /// Inverse observed information of the partial likelihood.
    pub covariance: DMatrix<f64>,
    pub diagnostics: FitDiagnostics,
}

impl BetaFit {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.beta.len())
            .map(|k| self.covariance[(k, k)].max(0.0).sqrt())
            .collect()
    }
}

/// Step 1: maximize the stratified partial likelihood of event type `event`.
pub fn fit_beta(
    ds: &SurvivalDataset,
    event: usize,
    penalty: Option<&PenaltySpec>,
    options: &FitOptions,
) -> Result<BetaFit> {
    let objective = PartialLikelihood::new(ds, event, options.ties)?;
    if objective.strata.is_empty() {
        return Err(Error::Estimability {
            cells: (1..=ds.n_times())
                .map(|t| crate::error::Cell {
                    event,
                    time: t,
                    count: 0,
                })
                .collect(),
        });
    }
    let p = ds.n_covariates();
    if p == 0 {
        let value = objective.value(&DVector::zeros(0));
        return Ok(BetaFit {
            beta: Vec::new(),
            covariance: DMatrix::zeros(0, 0),
            diagnostics: FitDiagnostics {
                event,
                log_likelihood: value,
                iterations: 0,
                converged: true,
                grad_norm: 0.0,
                damped: false,
            },
        });
    }
    let solver = SolverOptions {
        tol: options.tol,
        max_iter: options.max_iter,
        bound: Some(CoordinateBound {
            from: 0,
            limit: SEPARATION_LIMIT,
        }),
    };
    let init = DVector::zeros(p);
    let report = match penalty {
        Some(spec) => proximal_newton_maximize(&objective, spec, 0..p, &init, &solver)?,
        None => newton_maximize(&objective, &init, &solver)?,
    };
    accept_report(&report, event, 0)?;
    Ok(BetaFit {
        beta: report.solution.as_slice().to_vec(),
        covariance: report.covariance.clone().expect("checked by accept_report"),
        diagnostics: diagnostics(event, &report),
    })
}

/// Standard errors of a step-1 fit.
pub fn get_beta_se(fit: &BetaFit) -> Vec<f64> {
    fit.standard_errors()
}

/// Step 2: solve the intercept equation of every `(event, t)` cell for a given `β̂_j`.
pub fn fit_alpha(ds: &SurvivalDataset, event: usize, beta: &[f64]) -> Result<Vec<f64>> {
    if event == 0 || event > ds.n_events() {
        return Err(Error::arg(format!("event type {event} out of range")));
    }
    if beta.len() != ds.n_covariates() {
        return Err(Error::arg(format!(
            "beta has {} entries, dataset has {} covariates",
            beta.len(),
            ds.n_covariates()
        )));
    }
    let table = event_table(ds);

    // Linear predictors ordered by last at-risk time, latest first, so that
    // every risk set is a prefix.
    let mut order: Vec<(usize, f64)> = ds
        .observations()
        .iter()
        .map(|o| (ds.last_at_risk(o), dot(&o.covariates, beta)))
        .collect();
    order.sort_by_key(|&(last, _)| std::cmp::Reverse(last));
    let eta: Vec<f64> = order.iter().map(|&(_, e)| e).collect();
    let wide = eta.iter().any(|e| e.abs() > 600.0);
    let weights: Vec<f64> = eta.iter().map(|e| e.exp()).collect();

    (1..=ds.n_times())
        .map(|t| {
            let events = table.events_at(event, t);
            let at_risk = table.at_risk_at(t);
            if at_risk == 0 {
                return Err(Error::EmptyRiskSet { event, time: t });
            }
            if events == 0 || events == at_risk {
                return Err(Error::BoundaryCell {
                    event,
                    time: t,
                    events,
                    at_risk,
                });
            }
            let q = events as f64 / at_risk as f64;
            let risk_eta = &eta[..at_risk];
            let risk_w = &weights[..at_risk];
            let y = at_risk as f64;
            let residual = |a: f64| -> f64 {
                let s: f64 = if wide {
                    risk_eta.iter().map(|e| expit(a + e)).sum()
                } else {
                    let c = (-a).exp();
                    risk_w.iter().map(|w| w / (w + c)).sum()
                };
                s / y - q
            };
            let centre = logit(q) - risk_eta.iter().sum::<f64>() / y;
            crate::optim::monotone_root(residual, centre - 1.0, centre + 1.0, ALPHA_TOL)
        })
        .collect()
}

/// Fit every event type with the two-step estimator.
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
        let step1 = fit_beta(ds, j, penalty, options)?;
        let alpha = fit_alpha(ds, j, &step1.beta)?;
        Ok((alpha, step1))
    })?;

    let params = ModelParams::new(
        fits.iter().map(|(a, _)| a.clone()).collect(),
        fits.iter().map(|(_, b)| b.beta.clone()).collect(),
    )?;
    Ok(FittedModel {
        method: Method::TwoStage,
        grid: ds.grid().clone(),
        covariate_names: ds.covariate_names().to_vec(),
        params,
        beta_se: fits.iter().map(|(_, b)| b.standard_errors()).collect(),
        alpha_se: None,
        diagnostics: fits.into_iter().map(|(_, b)| b.diagnostics).collect(),
    })
}
