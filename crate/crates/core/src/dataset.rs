//! Discrete-time competing-risks data: ingestion, person-period expansion,
//! event tables and regrouping of sparse time points.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::Serialize;

use crate::error::{Cell, Error, Result};
use crate::model::TimeGrid;

/// One subject: observed time `x = min(T, C)`, event code `j` (0 = censored)
/// and baseline covariates.
///
/// `time == d + 1` marks a subject censored beyond the last grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub id: String,
    pub time: usize,
    pub event: usize,
    pub covariates: Vec<f64>,
}

impl Observation {
    pub fn new(id: impl Into<String>, time: usize, event: usize, covariates: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            time,
            event,
            covariates,
        }
    }

    pub fn is_censored(&self) -> bool {
        self.event == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    observations: Vec<Observation>,
    covariate_names: Vec<String>,
    grid: TimeGrid,
    n_events: usize,
}

impl SurvivalDataset {
    pub fn new(
        observations: Vec<Observation>,
        covariate_names: Vec<String>,
        grid: TimeGrid,
        n_events: usize,
    ) -> Result<Self> {
        if n_events == 0 {
            return Err(Error::arg("at least one event type is required"));
        }
        let d = grid.len();
        let p = covariate_names.len();
        let mut ids = HashSet::with_capacity(observations.len());
        for (k, o) in observations.iter().enumerate() {
            let row = k + 1;
            let fail = |message: String| Err(Error::Load { row, message });
            if !ids.insert(o.id.as_str()) {
                return fail(format!("duplicate subject id '{}'", o.id));
            }
            if o.covariates.len() != p {
                return fail(format!(
                    "expected {p} covariates, found {}",
                    o.covariates.len()
                ));
            }
            if o.covariates.iter().any(|v| !v.is_finite()) {
                return fail("covariates must be finite".into());
            }
            if o.event > n_events {
                return fail(format!("event code {} exceeds M={n_events}", o.event));
            }
            if o.time == 0 || o.time > d + 1 {
                return fail(format!("time {} outside 1..={}", o.time, d + 1));
            }
            if o.time == d + 1 && o.event != 0 {
                return fail(format!("event observed at time {} beyond the grid", o.time));
            }
        }
        Ok(Self {
            observations,
            covariate_names,
            grid,
            n_events,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Number of subjects `n`.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Number of event types `M`.
    pub fn n_events(&self) -> usize {
        self.n_events
    }

    /// Number of time points `d`.
    pub fn n_times(&self) -> usize {
        self.grid.len()
    }

    /// Number of covariates `p`.
    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    /// Last time index at which a subject is at risk: `min(x, d)`.
    #[inline]
    pub fn last_at_risk(&self, o: &Observation) -> usize {
        o.time.min(self.n_times())
    }

    /// Same data with covariate `k` multiplied by `factor`.
    pub fn scale_covariate(&self, k: usize, factor: f64) -> Result<Self> {
        if k >= self.n_covariates() {
            return Err(Error::arg(format!("no covariate with index {k}")));
        }
        let mut out = self.clone();
        for o in &mut out.observations {
            o.covariates[k] *= factor;
        }
        Ok(out)
    }
}

/// One person-period row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpandedRecord<'a> {
    pub id: &'a str,
    pub time: usize,
    pub covariates: &'a [f64],
    /// Event type observed in this period, 0 if none.
    pub outcome: usize,
}

/// Person-period rows in `(subject, t)` order, without materializing them.
pub fn expanded_rows(ds: &SurvivalDataset) -> impl Iterator<Item = ExpandedRecord<'_>> + '_ {
    ds.observations.iter().flat_map(move |o| {
        let last = ds.last_at_risk(o);
        (1..=last).map(move |t| ExpandedRecord {
            id: &o.id,
            time: t,
            covariates: &o.covariates,
            outcome: if t == o.time { o.event } else { 0 },
        })
    })
}

pub fn expand(ds: &SurvivalDataset) -> Vec<ExpandedRecord<'_>> {
    expanded_rows(ds).collect()
}

/// Risk-set and event counts per time point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventTable {
    /// `y_t`, indexed by `t - 1`.
    pub at_risk: Vec<usize>,
    /// `n_tj`, indexed `[j - 1][t - 1]`.
    pub events: Vec<Vec<usize>>,
    /// Censored at `t`; the last entry also holds subjects censored beyond the grid.
    pub censored: Vec<usize>,
}

impl EventTable {
    pub fn n_times(&self) -> usize {
        self.at_risk.len()
    }

    /// `n_tj` for 1-based `j` and `t`.
    pub fn events_at(&self, j: usize, t: usize) -> usize {
        self.events[j - 1][t - 1]
    }

    pub fn at_risk_at(&self, t: usize) -> usize {
        self.at_risk[t - 1]
    }
}

pub fn event_table(ds: &SurvivalDataset) -> EventTable {
    let d = ds.n_times();
    let mut events = vec![vec![0usize; d]; ds.n_events()];
    let mut censored = vec![0usize; d];
    let mut leaving = vec![0usize; d];
    for o in &ds.observations {
        let last = ds.last_at_risk(o);
        leaving[last - 1] += 1;
        if o.event == 0 {
            censored[last - 1] += 1;
        } else {
            events[o.event - 1][o.time - 1] += 1;
        }
    }
    let mut at_risk = vec![0usize; d];
    let mut remaining = ds.len();
    for t in 0..d {
        at_risk[t] = remaining;
        remaining -= leaving[t];
    }
    EventTable {
        at_risk,
        events,
        censored,
    }
}

/// Collapse every time point after `upper` into `upper` (labelled `"<upper>+"`).
pub fn clip_tail(ds: &SurvivalDataset, upper: usize) -> Result<SurvivalDataset> {
    let d = ds.n_times();
    if upper == 0 || upper > d {
        return Err(Error::arg(format!("clip upper {upper} outside 1..={d}")));
    }
    let mut labels: Vec<String> = ds.grid.labels()[..upper].to_vec();
    let last = &mut labels[upper - 1];
    if !last.ends_with('+') {
        last.push('+');
    }
    let observations = ds
        .observations
        .iter()
        .map(|o| {
            let time = if o.time == d + 1 {
                upper + 1
            } else {
                o.time.min(upper)
            };
            Observation { time, ..o.clone() }
        })
        .collect();
    SurvivalDataset::new(
        observations,
        ds.covariate_names.clone(),
        TimeGrid::with_labels(labels)?,
        ds.n_events,
    )
}

/// Merge source time points into earlier targets, e.g. `[(7, 6), (14, 13)]`,
/// then renumber the surviving time points contiguously.
pub fn merge_times(ds: &SurvivalDataset, mapping: &[(usize, usize)]) -> Result<SurvivalDataset> {
    let d = ds.n_times();
    let mut target_of: BTreeMap<usize, usize> = BTreeMap::new();
    for &(src, dst) in mapping {
        if src == 0 || src > d || dst == 0 || dst > d {
            return Err(Error::arg(format!(
                "merge {src}->{dst} refers to a time outside 1..={d}"
            )));
        }
        if dst > src {
            return Err(Error::arg(format!(
                "merge {src}->{dst} maps to a later time"
            )));
        }
        if target_of.insert(src, dst).is_some_and(|prev| prev != dst) {
            return Err(Error::arg(format!("time {src} mapped twice")));
        }
    }
    target_of.retain(|s, t| s != t);
    for (&src, &dst) in &target_of {
        if target_of.contains_key(&dst) {
            return Err(Error::arg(format!(
                "merge {src}->{dst} targets a time that is itself merged away"
            )));
        }
    }
    if target_of.is_empty() {
        return Ok(ds.clone());
    }

    // surviving original times, in order, with the originals merged into each
    let mut groups: Vec<(usize, Vec<usize>)> = (1..=d)
        .filter(|t| !target_of.contains_key(t))
        .map(|t| (t, vec![t]))
        .collect();
    for (&src, &dst) in &target_of {
        let g = groups.iter_mut().find(|(t, _)| *t == dst).expect("target survives");
        g.1.push(src);
    }
    let mut new_index = vec![0usize; d + 2];
    let mut labels = Vec::with_capacity(groups.len());
    for (k, (_, members)) in groups.iter_mut().enumerate() {
        members.sort_unstable();
        for &m in members.iter() {
            new_index[m] = k + 1;
        }
        let first = members[0];
        let last = *members.last().unwrap();
        let contiguous = last - first + 1 == members.len();
        let label = if members.len() == 1 {
            ds.grid.label(first).to_string()
        } else if contiguous {
            format!("{}-{}", ds.grid.label(first), ds.grid.label(last))
        } else {
            members
                .iter()
                .map(|&m| ds.grid.label(m))
                .collect::<Vec<_>>()
                .join(",")
        };
        labels.push(label);
    }
    let new_d = groups.len();
    new_index[d + 1] = new_d + 1;

    let observations = ds
        .observations
        .iter()
        .map(|o| Observation {
            time: new_index[o.time],
            ..o.clone()
        })
        .collect();
    SurvivalDataset::new(
        observations,
        ds.covariate_names.clone(),
        TimeGrid::with_labels(labels)?,
        ds.n_events,
    )
}

/// Cells whose event count falls below a threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub min_events: usize,
    pub flagged: Vec<Cell>,
    pub ok: bool,
}

impl ValidationReport {
    pub fn into_result(self) -> Result<()> {
        if self.ok {
            Ok(())
        } else {
            Err(Error::Estimability {
                cells: self.flagged,
            })
        }
    }
}

pub fn validate_counts(ds: &SurvivalDataset, min_events: usize) -> Result<ValidationReport> {
    if min_events == 0 {
        return Err(Error::arg("min_events must be at least 1"));
    }
    let table = event_table(ds);
    let mut flagged = Vec::new();
    for (j, row) in table.events.iter().enumerate() {
        for (t, &count) in row.iter().enumerate() {
            if count < min_events {
                flagged.push(Cell {
                    event: j + 1,
                    time: t + 1,
                    count,
                });
            }
        }
    }
    Ok(ValidationReport {
        min_events,
        ok: flagged.is_empty(),
        flagged,
    })
}

/// Column mapping for CSV files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub id: String,
    pub time: String,
    pub event: String,
    /// `None` takes every remaining column as a covariate.
    pub covariates: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id: "pid".into(),
            time: "X".into(),
            event: "J".into(),
            covariates: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Number of event types; inferred as the largest event code when absent.
    pub n_events: Option<usize>,
    /// Grid size `d`; inferred as the latest event time when absent. Censored
    /// subjects observed after `d` are kept as censored beyond the grid.
    pub n_times: Option<usize>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Load {
            row: 0,
            message: format!("missing column '{name}'"),
        })
}

fn parse_index(raw: &str, what: &str, row: usize) -> Result<i64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Ok(v);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 => Ok(v as i64),
        Ok(_) => Err(Error::Load {
            row,
            message: format!("{what} '{raw}' is not an integer"),
        }),
        Err(_) => Err(Error::Load {
            row,
            message: format!("cannot parse {what} '{raw}'"),
        }),
    }
}

pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
    options: LoadOptions,
) -> Result<SurvivalDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    read_csv(&mut reader, schema, options)
}

pub fn read_csv<R: std::io::Read>(
    reader: &mut csv::Reader<R>,
    schema: &CsvSchema,
    options: LoadOptions,
) -> Result<SurvivalDataset> {
    let headers = reader.headers()?.clone();
    let id_col = column(&headers, &schema.id)?;
    let time_col = column(&headers, &schema.time)?;
    let event_col = column(&headers, &schema.event)?;
    let covariate_names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(k, _)| ![id_col, time_col, event_col].contains(k))
            .map(|(_, h)| h.trim().to_string())
            .collect(),
    };
    let cov_cols = covariate_names
        .iter()
        .map(|n| column(&headers, n))
        .collect::<Result<Vec<_>>>()?;

    let mut raw = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record?;
        let get = |c: usize| -> Result<&str> {
            record.get(c).ok_or_else(|| Error::Load {
                row,
                message: "short record".into(),
            })
        };
        let id = get(id_col)?.trim().to_string();
        let time = parse_index(get(time_col)?, "time", row)?;
        if time < 1 {
            return Err(Error::Load {
                row,
                message: format!("time must be >= 1, found {time}"),
            });
        }
        let event = parse_index(get(event_col)?, "event", row)?;
        if event < 0 {
            return Err(Error::Load {
                row,
                message: format!("event code must be >= 0, found {event}"),
            });
        }
        let covariates = cov_cols
            .iter()
            .zip(&covariate_names)
            .map(|(&c, name)| {
                let s = get(c)?.trim();
                match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::Load {
                        row,
                        message: format!("covariate '{name}' has non-numeric value '{s}'"),
                    }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        raw.push((row, id, time as usize, event as usize, covariates));
    }

    let max_code = raw.iter().map(|r| r.3).max().unwrap_or(0);
    let n_events = options.n_events.unwrap_or(max_code.max(1));
    let d = match options.n_times {
        Some(d) => d,
        None => raw
            .iter()
            .filter(|r| r.3 != 0)
            .map(|r| r.2)
            .max()
            .or_else(|| raw.iter().map(|r| r.2).max())
            .unwrap_or(1),
    };
    let mut observations = Vec::with_capacity(raw.len());
    for (row, id, time, event, covariates) in raw {
        let time = if time > d {
            if event != 0 {
                return Err(Error::Load {
                    row,
                    message: format!("event at time {time} lies beyond the grid 1..={d}"),
                });
            }
            d + 1
        } else {
            time
        };
        observations.push(Observation {
            id,
            time,
            event,
            covariates,
        });
    }
    SurvivalDataset::new(observations, covariate_names, TimeGrid::new(d)?, n_events)
}

pub fn write_csv(ds: &SurvivalDataset, path: impl AsRef<Path>, schema: &CsvSchema) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    write_records(ds, &mut writer, schema)?;
    writer.flush()?;
    Ok(())
}

pub fn write_records<W: std::io::Write>(
    ds: &SurvivalDataset,
    writer: &mut csv::Writer<W>,
    schema: &CsvSchema,
) -> Result<()> {
    let mut header = vec![schema.id.clone(), schema.time.clone(), schema.event.clone()];
    header.extend(ds.covariate_names.iter().cloned());
    writer.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for o in &ds.observations {
        record.clear();
        record.push(o.id.clone());
        record.push(o.time.to_string());
        record.push(o.event.to_string());
        record.extend(o.covariates.iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    Ok(())
}
