//! Discrete-time cause-specific hazard model with a logit link.
//!
//! For event type `j` at time `t`, `logit λ_j(t|z) = α_jt + z·β_j`. Everything
//! else (overall survival, event probabilities, cumulative incidence) is derived
//! from the hazards. Event types and time points are addressed with 1-based
//! indices, matching the event codes used in data files (0 = censored).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerically stable logistic function.
#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn log1pexp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

const HAZARD_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

/// Ordered discrete time points with display labels.
///
/// Internal indices always run `1..=d`; labels only matter for output
/// (regrouping produces labels such as `"21+"` or `"6-7"`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    labels: Vec<String>,
}

impl TimeGrid {
    /// Grid `1..=d` labelled with the integers themselves.
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::arg("time grid needs at least one point"));
        }
        Ok(Self {
            labels: (1..=d).map(|t| t.to_string()).collect(),
        })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::arg("time grid needs at least one point"));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::arg(format!("duplicate time label '{l}'")));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Label of the 1-based time index `t`.
    pub fn label(&self, t: usize) -> &str {
        &self.labels[t - 1]
    }
}

/// Intercepts `α` (M×d) and coefficients `β` (M×p).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
}

impl ModelParams {
    pub fn new(alpha: Vec<Vec<f64>>, beta: Vec<Vec<f64>>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::arg("at least one event type is required"));
        }
        if alpha.len() != beta.len() {
            return Err(Error::arg(format!(
                "alpha has {} event types but beta has {}",
                alpha.len(),
                beta.len()
            )));
        }
        let d = alpha[0].len();
        let p = beta[0].len();
        if d == 0 {
            return Err(Error::arg("alpha rows must have at least one time point"));
        }
        if alpha.iter().any(|r| r.len() != d) || beta.iter().any(|r| r.len() != p) {
            return Err(Error::arg("ragged alpha or beta matrix"));
        }
        if alpha.iter().chain(beta.iter()).flatten().any(|v| !v.is_finite()) {
            return Err(Error::arg("model parameters must be finite"));
        }
        Ok(Self { alpha, beta })
    }

    /// Number of event types `M`.
    pub fn n_events(&self) -> usize {
        self.alpha.len()
    }

    /// Number of time points `d`.
    pub fn n_times(&self) -> usize {
        self.alpha[0].len()
    }

    /// Number of covariates `p`.
    pub fn n_covariates(&self) -> usize {
        self.beta[0].len()
    }

    /// Intercepts of event type `j` (1-based), indexed by `t - 1`.
    pub fn alpha(&self, j: usize) -> &[f64] {
        &self.alpha[j - 1]
    }

    pub fn beta(&self, j: usize) -> &[f64] {
        &self.beta[j - 1]
    }

    pub fn alpha_matrix(&self) -> &[Vec<f64>] {
        &self.alpha
    }

    pub fn beta_matrix(&self) -> &[Vec<f64>] {
        &self.beta
    }

    fn check_event(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.n_events() {
            return Err(Error::arg(format!(
                "event type {j} out of range 1..={}",
                self.n_events()
            )));
        }
        Ok(())
    }

    fn check_covariates(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.n_covariates() {
            return Err(Error::arg(format!(
                "covariate vector has length {}, model expects {}",
                z.len(),
                self.n_covariates()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("covariates must be finite"));
        }
        Ok(())
    }

    /// Linear predictor `α_jt + z·β_j`.
    fn linear_predictor(&self, j: usize, t: usize, z: &[f64]) -> f64 {
        self.alpha[j - 1][t - 1] + dot(z, &self.beta[j - 1])
    }

    /// Per-time hazards for all event types: `out[j-1][t-1] = λ_j(t|z)`.
    fn hazard_table(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_covariates(z)?;
        Ok((1..=self.n_events())
            .map(|j| {
                let zb = dot(z, self.beta(j));
                self.alpha(j)
                    .iter()
                    .map(|a| clamp_hazard(expit(a + zb)))
                    .collect()
            })
            .collect())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn clamp_hazard(h: f64) -> f64 {
    h.clamp(f64::MIN_POSITIVE, HAZARD_CEIL)
}

/// Cause-specific hazard `λ_j(t|z)`, strictly inside `(0, 1)`.
pub fn hazard(params: &ModelParams, j: usize, t: usize, z: &[f64]) -> Result<f64> {
    params.check_event(j)?;
    if t == 0 || t > params.n_times() {
        return Err(Error::arg(format!(
            "time index {t} out of range 1..={}",
            params.n_times()
        )));
    }
    params.check_covariates(z)?;
    Ok(clamp_hazard(expit(params.linear_predictor(j, t, z))))
}

fn survival_from_hazards(hazards: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = hazards[0].len();
    let mut s = Vec::with_capacity(d + 1);
    s.push(1.0);
    for t in 0..d {
        let total: f64 = hazards.iter().map(|row| row[t]).sum();
        if total >= 1.0 {
            return Err(Error::Admissibility { time: t + 1, total });
        }
        let prev = s[t];
        s.push(prev * (1.0 - total));
    }
    Ok(s)
}

/// Overall survival `S(t|z)` for `t = 0..=d`, with `S(0) = 1`.
pub fn overall_survival(params: &ModelParams, z: &[f64]) -> Result<Vec<f64>> {
    survival_from_hazards(&params.hazard_table(z)?)
}

/// `Pr(T = t, J = j | z)` for `t = 1..=d`.
pub fn event_probability(params: &ModelParams, j: usize, z: &[f64]) -> Result<Vec<f64>> {
    params.check_event(j)?;
    let hz = params.hazard_table(z)?;
    let s = survival_from_hazards(&hz)?;
    Ok(hz[j - 1].iter().zip(&s).map(|(h, s)| h * s).collect())
}

/// Cumulative incidence `F_j(t|z)` for `t = 1..=d`.
pub fn cif(params: &ModelParams, j: usize, z: &[f64]) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    Ok(event_probability(params, j, z)?
        .into_iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect())
}

/// `Pr(J = j | z)`, i.e. `F_j(d|z)`.
pub fn marginal_event_probability(params: &ModelParams, j: usize, z: &[f64]) -> Result<f64> {
    Ok(event_probability(params, j, z)?.into_iter().sum())
}

/// All predicted curves for one covariate vector. Matrices are indexed
/// `[j - 1][t - 1]`; `survival` is indexed by `t = 0..=d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictedCurves {
    pub hazard: Vec<Vec<f64>>,
    pub event_probability: Vec<Vec<f64>>,
    pub cif: Vec<Vec<f64>>,
    pub survival: Vec<f64>,
}

impl PredictedCurves {
    fn compute(params: &ModelParams, z: &[f64]) -> Result<Self> {
        let hazard = params.hazard_table(z)?;
        let survival = survival_from_hazards(&hazard)?;
        let event_probability: Vec<Vec<f64>> = hazard
            .iter()
            .map(|row| row.iter().zip(&survival).map(|(h, s)| h * s).collect())
            .collect();
        let cif = event_probability
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            hazard,
            event_probability,
            cif,
            survival,
        })
    }
}

/// Curves for each row of `newdata`, in input order.
pub fn predict_curves<Z: AsRef<[f64]>>(
    params: &ModelParams,
    newdata: &[Z],
) -> Result<Vec<PredictedCurves>> {
    newdata
        .iter()
        .map(|z| PredictedCurves::compute(params, z.as_ref()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(q: f64, d: usize) -> ModelParams {
        ModelParams::new(vec![vec![logit(q); d]], vec![vec![]]).unwrap()
    }

    #[test]
    fn expit_is_half_at_zero() {
        let p = ModelParams::new(vec![vec![0.0]], vec![vec![1.5]]).unwrap();
        assert_eq!(hazard(&p, 1, 1, &[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn hazard_saturates_without_overflow() {
        let p = ModelParams::new(vec![vec![700.0]], vec![vec![]]).unwrap();
        let h = hazard(&p, 1, 1, &[]).unwrap();
        assert!(h.is_finite() && h < 1.0 && h > 1.0 - 1e-12);
        let p = ModelParams::new(vec![vec![-750.0]], vec![vec![]]).unwrap();
        let h = hazard(&p, 1, 1, &[]).unwrap();
        assert!(h > 0.0 && h < 1e-300);
    }

    #[test]
    fn hazard_at_first_standard_intercept() {
        // expit(-1), 40-digit reference value
        let p = ModelParams::new(vec![vec![-1.0 - 0.3 * 1f64.ln()]], vec![vec![0.0]]).unwrap();
        let h = hazard(&p, 1, 1, &[0.0]).unwrap();
        assert!((h - 0.268_941_421_369_995_120_748_840_758_178_2).abs() < 1e-16);
    }

    #[test]
    fn hazard_index_errors() {
        let p = constant(0.2, 2);
        assert!(matches!(hazard(&p, 0, 1, &[]), Err(Error::Argument(_))));
        assert!(matches!(hazard(&p, 2, 1, &[]), Err(Error::Argument(_))));
        assert!(matches!(hazard(&p, 1, 3, &[]), Err(Error::Argument(_))));
        assert!(matches!(hazard(&p, 1, 1, &[1.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn constant_hazard_survival_and_event_probabilities() {
        let q = 0.3;
        let p = constant(q, 2);
        let s = overall_survival(&p, &[]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert!((s[1] - (1.0 - q)).abs() < 1e-15);
        assert!((s[2] - (1.0 - q).powi(2)).abs() < 1e-15);
        let e = event_probability(&p, 1, &[]).unwrap();
        assert!((e[0] - q).abs() < 1e-15);
        assert!((e[1] - q * (1.0 - q)).abs() < 1e-15);
    }

    #[test]
    fn no_event_limit() {
        let p = ModelParams::new(vec![vec![-50.0; 4]; 2], vec![vec![0.0; 2]; 2]).unwrap();
        for s in overall_survival(&p, &[0.3, 0.1]).unwrap() {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_point_cif_is_hazard() {
        let p = ModelParams::new(vec![vec![0.4]], vec![vec![0.7]]).unwrap();
        let f = cif(&p, 1, &[0.5]).unwrap();
        assert_eq!(f[0], hazard(&p, 1, 1, &[0.5]).unwrap());
        assert_eq!(
            marginal_event_probability(&p, 1, &[0.5]).unwrap(),
            *f.last().unwrap()
        );
    }

    #[test]
    fn symmetric_causes_have_equal_marginals() {
        let p = ModelParams::new(
            vec![vec![-1.0, -1.2, -0.8]; 2],
            vec![vec![0.3, -0.2]; 2],
        )
        .unwrap();
        let z = [0.4, 1.1];
        let m1 = marginal_event_probability(&p, 1, &z).unwrap();
        let m2 = marginal_event_probability(&p, 2, &z).unwrap();
        assert_eq!(m1, m2);
        let sd = *overall_survival(&p, &z).unwrap().last().unwrap();
        assert!((m1 + m2 + sd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inadmissible_model_names_the_time() {
        let p = ModelParams::new(vec![vec![-3.0, 1.0], vec![-3.0, 1.0]], vec![vec![], vec![]])
            .unwrap();
        match overall_survival(&p, &[]) {
            Err(Error::Admissibility { time, total }) => {
                assert_eq!(time, 2);
                assert!(total >= 1.0);
            }
            other => panic!("expected admissibility error, got {other:?}"),
        }
        assert!(cif(&p, 1, &[]).is_err());
    }

    #[test]
    fn predict_single_point_model() {
        let p = ModelParams::new(vec![vec![-0.5]], vec![vec![0.2]]).unwrap();
        let c = &predict_curves(&p, &[vec![1.0]]).unwrap()[0];
        let lam = expit(-0.3);
        assert!((c.hazard[0][0] - lam).abs() < 1e-15);
        assert!((c.event_probability[0][0] - lam).abs() < 1e-15);
        assert!((c.cif[0][0] - lam).abs() < 1e-15);
        assert!((c.survival[1] - (1.0 - lam)).abs() < 1e-15);
    }

    #[test]
    fn predict_is_deterministic_and_ordered() {
        let p = ModelParams::new(
            vec![vec![-1.0, -1.5], vec![-2.0, -2.1]],
            vec![vec![0.5], vec![-0.4]],
        )
        .unwrap();
        let out = predict_curves(&p, &[vec![0.1], vec![0.9], vec![0.1]]).unwrap();
        assert_eq!(out[0], out[2]);
        assert_ne!(out[0], out[1]);
        assert!(predict_curves(&p, &[vec![0.1, 0.2]]).is_err());
    }

    #[test]
    fn grid_labels() {
        let g = TimeGrid::new(3).unwrap();
        assert_eq!(g.labels(), ["1", "2", "3"]);
        assert!(TimeGrid::new(0).is_err());
        assert!(TimeGrid::with_labels(vec!["1".into(), "1".into()]).is_err());
        assert_eq!(
            TimeGrid::with_labels(vec!["1".into(), "2+".into()]).unwrap().label(2),
            "2+"
        );
    }

    #[test]
    fn log1pexp_matches_naive_in_safe_range() {
        for x in [-30.0, -2.0, 0.0, 1.5, 30.0] {
            assert!((log1pexp(x) - (1.0f64 + f64::exp(x)).ln()).abs() < 1e-12);
        }
        assert!((log1pexp(800.0) - 800.0).abs() < 1e-12);
    }
}
