//! Regression for discrete-time survival data with competing risks.
//!
//! Each event type `j` has a logit-linear cause-specific hazard
//! `λ_j(t|Z) = expit(α_jt + Zᵀβ_j)` over the time grid `t = 1..=d`.
//! Two estimators are provided:
//!
//! - [`expansion`]: per-cause logistic regression on person-period data,
//!   maximizing the collapsed log-likelihood over `(α_j, β_j)` jointly.
//! - [`two_stage`]: `β_j` from a partial likelihood stratified on time, then
//!   each `α_jt` from a one-dimensional moment equation on the original data.
//!
//! Both produce a [`FittedModel`] that predicts hazards, event probabilities,
//! cumulative incidence and overall survival.

pub mod dataset;
pub mod error;
pub mod expansion;
pub mod fitted;
pub mod model;
pub mod optim;
pub mod simulation;
pub mod two_stage;

pub use dataset::{
    clip_tail, event_table, expand, load_csv, merge_times, validate_counts, write_csv, CsvSchema,
    EventTable, LoadOptions, Observation, SurvivalDataset, ValidationReport,
};
pub use error::{Cell, Error, Result};
pub use fitted::{CoefficientRow, FitDiagnostics, FitOptions, FittedModel, Method};
pub use model::{ModelParams, PredictedCurves, TimeGrid};
pub use optim::{PenaltySpec, Penalizer};
