//! Fitted models: coefficient tables, persistence and prediction.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};


use crate::error::{Error, Result};
use crate::model::{self, ModelParams, PredictedCurves, TimeGrid};
use crate::optim::{DEFAULT_GRAD_TOL, DEFAULT_MAX_ITER};
use crate::two_stage::TieMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Expansion,
    TwoStage,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Expansion => "expansion",
            Method::TwoStage => "two-stage",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expansion" => Ok(Method::Expansion),
            "two-stage" | "two_stage" | "twostage" => Ok(Method::TwoStage),
            other => Err(Error::arg(format!("unknown method '{other}'"))),
        }
    }
}

/// Solver settings shared by both fitters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Minimum events per `(j, t)` cell checked before fitting.
    pub min_events: usize,
    /// Fit event types on separate threads.
    pub parallel: bool,
    /// Tie handling of the stratified partial likelihood (two-stage only).
    pub ties: TieMethod,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_GRAD_TOL,
            max_iter: DEFAULT_MAX_ITER,
            min_events: 1,
            parallel: false,
            ties: TieMethod::default(),
        }
    }
}

/// Per-event-type solver outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub event: usize,
    /// Collapsed log-likelihood (expansion) or partial log-likelihood (two-stage)
    /// at the estimate, penalty included when one was applied.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub damped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub method: Method,
    pub grid: TimeGrid,
    pub covariate_names: Vec<String>,
    pub params: ModelParams,
    /// M×p standard errors of `β`.
    pub beta_se: Vec<Vec<f64>>,
    /// M×d standard errors of `α`; only the expansion fitter provides them.
    pub alpha_se: Option<Vec<Vec<f64>>>,
    pub diagnostics: Vec<FitDiagnostics>,
}

/// One row of the coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub event: usize,
    pub parameter: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p: Option<f64>,
}

/// Two-sided normal p-value for a Wald statistic.
pub fn wald_p_value(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2)
}

fn coefficient_row(event: usize, parameter: String, estimate: f64, se: Option<f64>) -> CoefficientRow {
    let z = se.filter(|s| *s > 0.0).map(|s| estimate / s);
    CoefficientRow {
        event,
        parameter,
        estimate,
        se,
        z,
        p: z.map(wald_p_value),
    }
}

impl FittedModel {
    pub fn n_events(&self) -> usize {
        self.params.n_events()
    }

    pub fn n_times(&self) -> usize {
        self.params.n_times()
    }

    pub fn n_covariates(&self) -> usize {
        self.params.n_covariates()
    }

    /// Standard errors of `β`, one row per event type.
    pub fn beta_se(&self) -> &[Vec<f64>] {
        &self.beta_se
    }

    /// Coefficient table: for each event type, the `α_jt` rows then the `β_jk` rows.
    pub fn summary(&self) -> Vec<CoefficientRow> {
        let mut rows = Vec::with_capacity(self.n_events() * (self.n_times() + self.n_covariates()));
        for j in 1..=self.n_events() {
            for (t, &a) in self.params.alpha(j).iter().enumerate() {
                let se = self.alpha_se.as_ref().map(|s| s[j - 1][t]);
                rows.push(coefficient_row(
                    j,
                    format!("alpha_{}", self.grid.label(t + 1)),
                    a,
                    se,
                ));
            }
            for (k, &b) in self.params.beta(j).iter().enumerate() {
                rows.push(coefficient_row(
                    j,
                    format!("beta_{}", self.covariate_names[k]),
                    b,
                    Some(self.beta_se[j - 1][k]),
                ));
            }
        }
        rows
    }

    pub fn predict_curves<Z: AsRef<[f64]>>(&self, newdata: &[Z]) -> Result<Vec<PredictedCurves>> {
        model::predict_curves(&self.params, newdata)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelDocument>(text)?.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Serialized form of a [`FittedModel`].
#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    method: Method,
    grid_labels: Vec<String>,
    n_event_types: usize,
    n_covariates: usize,
    covariate_names: Vec<String>,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    beta_se: Vec<Vec<f64>>,
    alpha_se: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    diagnostics: Vec<FitDiagnostics>,
}

impl From<&FittedModel> for ModelDocument {
    fn from(m: &FittedModel) -> Self {
        Self {
            method: m.method,
            grid_labels: m.grid.labels().to_vec(),
            n_event_types: m.n_events(),
            n_covariates: m.n_covariates(),
            covariate_names: m.covariate_names.clone(),
            alpha: m.params.alpha_matrix().to_vec(),
            beta: m.params.beta_matrix().to_vec(),
            beta_se: m.beta_se.clone(),
            alpha_se: m.alpha_se.clone(),
            diagnostics: m.diagnostics.clone(),
        }
    }
}

impl TryFrom<ModelDocument> for FittedModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        let params = ModelParams::new(doc.alpha, doc.beta)?;
        let grid = TimeGrid::with_labels(doc.grid_labels)?;
        let (m, d, p) = (params.n_events(), params.n_times(), params.n_covariates());
        let shape_ok = |rows: &[Vec<f64>], width: usize| {
            rows.len() == m && rows.iter().all(|r| r.len() == width)
        };
        if doc.n_event_types != m
            || doc.n_covariates != p
            || grid.len() != d
            || doc.covariate_names.len() != p
            || !shape_ok(&doc.beta_se, p)
            || doc.alpha_se.as_ref().is_some_and(|s| !shape_ok(s, d))
        {
            return Err(Error::arg("model document has inconsistent dimensions"));
        }
        Ok(FittedModel {
            method: doc.method,
            grid,
            covariate_names: doc.covariate_names,
            params,
            beta_se: doc.beta_se,
            alpha_se: doc.alpha_se,
            diagnostics: doc.diagnostics,
        })
    }
}

/// Shortest round-trip text, switching to exponent notation for very small
/// or large magnitudes.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

/// Coefficient table as CSV with columns `event,parameter,estimate,se,z,p`.
pub fn write_summary_csv<W: std::io::Write>(rows: &[CoefficientRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["event", "parameter", "estimate", "se", "z", "p"])?;
    for r in rows {
        w.write_record([
            r.event.to_string(),
            r.parameter.clone(),
            format_float(r.estimate),
            fmt_opt(r.se),
            fmt_opt(r.z),
            fmt_opt(r.p),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> FittedModel {
        FittedModel {
            method: Method::TwoStage,
            grid: TimeGrid::with_labels(vec!["1".into(), "2+".into()]).unwrap(),
            covariate_names: vec!["Z1".into()],
            params: ModelParams::new(
                vec![vec![-1.0, -1.25], vec![-2.0, -2.5]],
                vec![vec![0.5], vec![-0.75]],
            )
            .unwrap(),
            beta_se: vec![vec![0.25], vec![0.5]],
            alpha_se: None,
            diagnostics: vec![],
        }
    }

    #[test]
    fn summary_shape_and_wald() {
        let rows = toy().summary();
        assert_eq!(rows.len(), 2 * (2 + 1));
        assert_eq!(rows[1].parameter, "alpha_2+");
        assert_eq!(rows[2].parameter, "beta_Z1");
        assert!(rows[0].se.is_none() && rows[0].z.is_none());
        let b = &rows[2];
        assert_eq!(b.z.unwrap(), b.estimate / b.se.unwrap());
        // z = 2 and z = -1.5; reference values from a 30-digit erfc
        assert!((b.p.unwrap() - 0.045_500_263_896_358_41).abs() < 1e-15);
        assert!((rows[5].p.unwrap() - 0.133_614_402_537_716_1).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut m = toy();
        m.params = ModelParams::new(
            vec![vec![0.1 + 0.2, -1.0 / 3.0], vec![1e-300, -2.5]],
            vec![vec![std::f64::consts::PI], vec![-0.75]],
        )
        .unwrap();
        let back = FittedModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn inconsistent_document_rejected() {
        let text = toy().to_json().unwrap().replace("\"n_covariates\": 1", "\"n_covariates\": 2");
        assert!(FittedModel::from_json(&text).is_err());
    }

    #[test]
    fn csv_summary_has_empty_se_for_two_stage_alpha() {
        let mut buf = Vec::new();
        write_summary_csv(&toy().summary(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "event,parameter,estimate,se,z,p");
        assert_eq!(lines.next().unwrap(), "1,alpha_1,-1.0,,,");
    }
}
