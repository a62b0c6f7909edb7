//! Synthetic competing-risks data drawn from the logit-hazard model.
//!
//! Every subject `i` uses its own ChaCha8 stream (`seed_from_u64(seed)`,
//! then `set_stream(i)`), so datasets are identical however the work is split
//! across threads. Within a stream the draw order is: covariates, one uniform
//! per time point until an event, the censoring coin, the censoring time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Observation, SurvivalDataset};
use crate::error::{Error, Result};
use crate::model::{dot, expit, ModelParams, TimeGrid};

/// True coefficients of a simulation: `alpha[j][t]` and `beta[j][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

impl CoefficientSpec {
    pub fn new(alpha: Vec<Vec<f64>>, beta: Vec<Vec<f64>>) -> Result<Self> {
        ModelParams::new(alpha.clone(), beta.clone())?;
        Ok(Self { alpha, beta })
    }

    /// Two event types and five covariates on a grid of `d` days, with
    /// `α_1t = −1 − 0.3 log t`, `α_2t = −1.75 − 0.15 log t`.
    pub fn standard(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::arg("d must be at least 1"));
        }
        let alpha = vec![
            (1..=d).map(|t| -1.0 - 0.3 * (t as f64).ln()).collect(),
            (1..=d).map(|t| -1.75 - 0.15 * (t as f64).ln()).collect(),
        ];
        let neg_log = |v: [f64; 5]| v.iter().map(|x| -x.ln()).collect::<Vec<_>>();
        let beta = vec![neg_log([0.8, 3.0, 3.0, 2.5, 2.0]), neg_log([1.0, 3.0, 4.0, 3.0, 2.0])];
        Self::new(alpha, beta)
    }

    pub fn n_events(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_times(&self) -> usize {
        self.alpha[0].len()
    }

    pub fn n_covariates(&self) -> usize {
        self.beta[0].len()
    }

    pub fn params(&self) -> ModelParams {
        ModelParams::new(self.alpha.clone(), self.beta.clone()).expect("validated on construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensoringKind {
    UniformDiscrete,
    None,
}

/// With probability `censoring_prob` a subject gets `C ~ Uniform{1, …, d+1}`;
/// otherwise `C = d + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoringSpec {
    pub kind: CensoringKind,
    pub censoring_prob: f64,
}

impl CensoringSpec {
    pub fn uniform(censoring_prob: f64) -> Result<Self> {
        let spec = Self {
            kind: CensoringKind::UniformDiscrete,
            censoring_prob,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn none() -> Self {
        Self {
            kind: CensoringKind::None,
            censoring_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.censoring_prob) {
            return Err(Error::arg(format!(
                "censoring_prob {} outside [0, 1]",
                self.censoring_prob
            )));
        }
        Ok(())
    }

    fn draw(&self, d: usize, rng: &mut ChaCha8Rng) -> usize {
        match self.kind {
            CensoringKind::None => d + 1,
            CensoringKind::UniformDiscrete => {
                if rng.random::<f64>() < self.censoring_prob {
                    rng.random_range(1..=d + 1)
                } else {
                    d + 1
                }
            }
        }
    }
}

/// Law of the covariate vector; covariates are drawn independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CovariateRule {
    /// Each covariate `Uniform[low, high)`.
    Uniform { low: f64, high: f64 },
    /// Each covariate `Bernoulli(prob)`, coded 0/1.
    Bernoulli { prob: f64 },
    /// Every subject gets the same vector.
    Fixed { values: Vec<f64> },
}

impl Default for CovariateRule {
    fn default() -> Self {
        CovariateRule::Uniform { low: 0.0, high: 1.0 }
    }
}

impl CovariateRule {
    fn validate(&self, p: usize) -> Result<()> {
        let ok = match self {
            CovariateRule::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            CovariateRule::Bernoulli { prob } => (0.0..=1.0).contains(prob),
            CovariateRule::Fixed { values } => {
                values.len() == p && values.iter().all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!("invalid covariate rule {self:?} for p = {p}")))
        }
    }

    fn draw(&self, p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            CovariateRule::Uniform { low, high } => {
                (0..p).map(|_| low + (high - low) * rng.random::<f64>()).collect()
            }
            CovariateRule::Bernoulli { prob } => (0..p)
                .map(|_| if rng.random::<f64>() < *prob { 1.0 } else { 0.0 })
                .collect(),
            CovariateRule::Fixed { values } => values.clone(),
        }
    }
}

/// Redraw subjects whose observed event falls on selected times, each time
/// with probability `prob`, until they land elsewhere or survive the coin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thinning {
    pub event: usize,
    pub times: Vec<usize>,
    pub prob: f64,
}

impl Thinning {
    /// Type-1 events on days 7, 14 and 21 are kept with probability 0.1.
    pub fn weekends() -> Self {
        Self {
            event: 1,
            times: vec![7, 14, 21],
            prob: 0.9,
        }
    }
}

/// Hazards of every event type at every time for covariates `z`, checking
/// that they leave room for survival.
fn hazards(spec: &CoefficientSpec, z: &[f64]) -> Result<Vec<Vec<f64>>> {
    let lp: Vec<f64> = spec.beta.iter().map(|b| dot(z, b)).collect();
    let d = spec.n_times();
    let mut out = vec![vec![0.0; spec.n_events()]; d];
    for (t, row) in out.iter_mut().enumerate() {
        for (j, h) in row.iter_mut().enumerate() {
            *h = expit(spec.alpha[j][t] + lp[j]);
        }
        let total: f64 = row.iter().sum();
        if total >= 1.0 {
            return Err(Error::Admissibility { time: t + 1, total });
        }
    }
    Ok(out)
}

fn subject_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn draw_subject(
    spec: &CoefficientSpec,
    censoring: &CensoringSpec,
    rule: &CovariateRule,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, usize, Vec<f64>)> {
    let d = spec.n_times();
    let z = rule.draw(spec.n_covariates(), rng);
    let lambda = hazards(spec, &z)?;
    // (T, J), T = d + 1 standing in for "no event on the grid"
    let mut outcome = (d + 1, 0);
    'walk: for (t, row) in lambda.iter().enumerate() {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, h) in row.iter().enumerate() {
            acc += h;
            if u < acc {
                outcome = (t + 1, j + 1);
                break 'walk;
            }
        }
    }
    let c = censoring.draw(d, rng);
    let (t, j) = outcome;
    if j == 0 || c < t {
        Ok((c.min(t), 0, z))
    } else {
        Ok((t, j, z))
    }
}

fn validate_inputs(n: usize, spec: &CoefficientSpec, censoring: &CensoringSpec, rule: &CovariateRule) -> Result<()> {
    if n == 0 {
        return Err(Error::arg("n must be at least 1"));
    }
    censoring.validate()?;
    rule.validate(spec.n_covariates())
}

/// Simulate `n` subjects.
pub fn generate(
    n: usize,
    spec: &CoefficientSpec,
    censoring: &CensoringSpec,
    rule: &CovariateRule,
    seed: u64,
) -> Result<SurvivalDataset> {
    generate_thinned(n, spec, censoring, rule, None, seed)
}

/// Simulate `n` subjects, optionally redrawing those hit by `thinning`.
pub fn generate_thinned(
    n: usize,
    spec: &CoefficientSpec,
    censoring: &CensoringSpec,
    rule: &CovariateRule,
    thinning: Option<&Thinning>,
    seed: u64,
) -> Result<SurvivalDataset> {
    validate_inputs(n, spec, censoring, rule)?;
    if let Some(th) = thinning {
        if !(0.0..1.0).contains(&th.prob) {
            return Err(Error::arg("thinning probability must lie in [0, 1)"));
        }
    }
    let observations = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = subject_rng(seed, i);
            loop {
                let (x, j, z) = draw_subject(spec, censoring, rule, &mut rng)?;
                let hit = thinning.is_some_and(|th| j == th.event && th.times.contains(&x));
                if !hit || rng.random::<f64>() >= thinning.map_or(0.0, |th| th.prob) {
                    return Ok(Observation::new(i.to_string(), x, j, z));
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let names = (1..=spec.n_covariates()).map(|k| format!("Z{k}")).collect();
    SurvivalDataset::new(
        observations,
        names,
        TimeGrid::new(spec.n_times())?,
        spec.n_events(),
    )
}

/// Population cell probabilities, averaged over the covariate law.
#[derive(Debug, Clone, PartialEq)]
pub struct CellProbabilities {
    /// `E_Z[Pr(T = t, J = j | Z)]`, indexed `[j-1][t-1]`.
    pub event: Vec<Vec<f64>>,
    /// `E_Z[S(t − 1 | Z)]`, indexed `[t-1]`.
    pub at_risk: Vec<f64>,
    /// `E_Z[S(d | Z)]`.
    pub survival: f64,
}

impl CellProbabilities {
    /// Event probability among those at risk, `E[Pr(T=t,J=j)] / E[S(t−1)]`.
    /// Censoring independent of `Z` leaves this ratio unchanged.
    pub fn conditional(&self, j: usize, t: usize) -> f64 {
        self.event[j - 1][t - 1] / self.at_risk[t - 1]
    }
}

/// Monte-Carlo estimate of [`CellProbabilities`] from `mc_draws` covariate draws.
pub fn expected_cell_probabilities(
    spec: &CoefficientSpec,
    rule: &CovariateRule,
    mc_draws: usize,
    seed: u64,
) -> Result<CellProbabilities> {
    if mc_draws == 0 {
        return Err(Error::arg("mc_draws must be at least 1"));
    }
    rule.validate(spec.n_covariates())?;
    let (m, d) = (spec.n_events(), spec.n_times());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut event = vec![vec![0.0; d]; m];
    let mut at_risk = vec![0.0; d];
    let mut survival = 0.0;
    for _ in 0..mc_draws {
        let z = rule.draw(spec.n_covariates(), &mut rng);
        let lambda = hazards(spec, &z)?;
        let mut s = 1.0;
        for (t, row) in lambda.iter().enumerate() {
            at_risk[t] += s;
            for (j, h) in row.iter().enumerate() {
                event[j][t] += h * s;
            }
            s *= 1.0 - row.iter().sum::<f64>();
        }
        survival += s;
    }
    let k = mc_draws as f64;
    event.iter_mut().flatten().for_each(|v| *v /= k);
    at_risk.iter_mut().for_each(|v| *v /= k);
    Ok(CellProbabilities {
        event,
        at_risk,
        survival: survival / k,
    })
}

/// Serialized simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDocument {
    pub n_event_types: usize,
    pub n_times: usize,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub censoring: CensoringSpec,
    #[serde(default)]
    pub covariates: CovariateRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinning: Option<Thinning>,
    #[serde(default)]
    pub seed: u64,
}

impl SimulationDocument {
    pub fn new(
        spec: &CoefficientSpec,
        censoring: CensoringSpec,
        covariates: CovariateRule,
        seed: u64,
    ) -> Self {
        Self {
            n_event_types: spec.n_events(),
            n_times: spec.n_times(),
            alpha: spec.alpha.clone(),
            beta: spec.beta.clone(),
            censoring,
            covariates,
            thinning: None,
            seed,
        }
    }

    /// Coefficients of the document after checking the declared dimensions.
    pub fn coefficients(&self) -> Result<CoefficientSpec> {
        let spec = CoefficientSpec::new(self.alpha.clone(), self.beta.clone())?;
        if spec.n_events() != self.n_event_types || spec.n_times() != self.n_times {
            return Err(Error::arg("simulation document has inconsistent dimensions"));
        }
        self.censoring.validate()?;
        self.covariates.validate(spec.n_covariates())?;
        Ok(spec)
    }

    pub fn generate(&self, n: usize) -> Result<SurvivalDataset> {
        let spec = self.coefficients()?;
        generate_thinned(
            n,
            &spec,
            &self.censoring,
            &self.covariates,
            self.thinning.as_ref(),
            self.seed,
        )
    }
}
