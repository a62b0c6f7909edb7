use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// An `(event type, time index)` cell of the event table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Cell {
    pub event: usize,
    pub time: usize,
    pub count: usize,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(j={}, t={}: {} events)", self.event, self.time, self.count)
    }
}

fn list_cells(cells: &[Cell]) -> String {
    cells
        .iter()
        .map(Cell::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("model is inadmissible at t={time}: sum of cause-specific hazards is {total}")]
    Admissibility { time: usize, total: f64 },

    #[error("row {row}: {message}")]
    Load { row: usize, message: String },

    #[error(
        "too few observed events in {} cell(s): {}; regroup time points (clip the tail or merge neighbours) before fitting",
        cells.len(),
        list_cells(cells)
    )]
    Estimability { cells: Vec<Cell> },

    #[error(
        "cell (j={event}, t={time}) has {events} events out of {at_risk} at risk; the intercept is unbounded, regroup time points"
    )]
    BoundaryCell {
        event: usize,
        time: usize,
        events: usize,
        at_risk: usize,
    },

    #[error("time t={time} has an empty risk set for event type {event}")]
    EmptyRiskSet { event: usize, time: usize },

    #[error("covariate '{0}' carries no information (constant where it matters)")]
    ConstantCovariate(String),

    #[error("complete separation suspected for event type {event}: |coefficient {index}| reached {value:.3}")]
    Separation {
        event: usize,
        index: usize,
        value: f64,
    },

    #[error("optimizer did not converge for event type {event} after {iterations} iterations (gradient norm {grad_norm:e})")]
    Convergence {
        event: usize,
        iterations: usize,
        grad_norm: f64,
    },

    #[error("information matrix is singular: {0}")]
    Singular(String),

    #[error("could not bracket a root within [-50, 50]: f(lo)={f_lo}, f(hi)={f_hi}")]
    Root { f_lo: f64, f_hi: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Argument(_) => "argument",
            Error::Admissibility { .. } => "admissibility",
            Error::Load { .. } => "load",
            Error::Estimability { .. } => "estimability",
            Error::BoundaryCell { .. } => "boundary_cell",
            Error::EmptyRiskSet { .. } => "empty_risk_set",
            Error::ConstantCovariate(_) => "constant_covariate",
            Error::Separation { .. } => "separation",
            Error::Convergence { .. } => "convergence",
            Error::Singular(_) => "singular",
            Error::Root { .. } => "root",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
