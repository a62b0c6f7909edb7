use std::fs::File;
use std::time::Instant;

use dtsurv::dataset::write_records;
use dtsurv::fitted::{format_float, write_summary_csv};
use dtsurv::simulation::{CensoringSpec, CoefficientSpec, CovariateRule, SimulationDocument, Thinning};
use dtsurv::two_stage::TieMethod;
use dtsurv::{
    clip_tail, event_table, load_csv, merge_times, CsvSchema, FitOptions, FittedModel, LoadOptions,
    PenaltySpec, Penalizer, SurvivalDataset,
};
use serde_json::json;

use crate::output::{sibling, Staged};
use crate::{
    BenchmarkArgs, CliError, DataArgs, FitArgs, InspectArgs, MethodArg, PredictArgs, Preset,
    SimulateArgs, TiesArg,
};

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn split_list(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty())
}

pub fn parse_schema(raw: Option<&str>, covariates: Option<&str>) -> Result<CsvSchema, CliError> {
    let mut schema = CsvSchema::default();
    if let Some(raw) = raw {
        for part in split_list(raw) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| config(format!("schema entry '{part}' is not key=column")))?;
            let value = value.trim().to_string();
            match key.trim() {
                "id" => schema.id = value,
                "time" => schema.time = value,
                "event" => schema.event = value,
                other => return Err(config(format!("unknown schema key '{other}' (use id, time, event)"))),
            }
        }
    }
    schema.covariates = covariates.map(|c| split_list(c).map(String::from).collect());
    Ok(schema)
}

pub fn parse_merge(raw: &str) -> Result<Vec<(usize, usize)>, CliError> {
    split_list(raw)
        .map(|pair| {
            let (src, dst) = pair
                .split_once(':')
                .ok_or_else(|| config(format!("merge entry '{pair}' is not SRC:DST")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| config(format!("merge entry '{pair}' is not SRC:DST")))
            };
            Ok((parse(src)?, parse(dst)?))
        })
        .collect()
}

pub fn parse_penalizer(raw: &str) -> Result<Penalizer, CliError> {
    let values = split_list(raw)
        .map(|v| v.parse::<f64>().map_err(|_| config(format!("penalizer value '{v}' is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    match values.as_slice() {
        [] => Err(config("empty penalizer")),
        [w] if !raw.contains(',') => Ok(Penalizer::Scalar(*w)),
        _ => Ok(Penalizer::PerCovariate(values)),
    }
}

fn parse_usize_list(raw: &str, what: &str) -> Result<Vec<usize>, CliError> {
    let values = split_list(raw)
        .map(|v| v.parse::<usize>().map_err(|_| config(format!("{what} entry '{v}' is not a positive integer"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() || values.contains(&0) {
        return Err(config(format!("{what} must list positive integers")));
    }
    Ok(values)
}

fn load(data: &DataArgs) -> Result<SurvivalDataset, CliError> {
    if !data.input.is_file() {
        return Err(CliError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("input file {} not found", data.input.display()),
        )));
    }
    let schema = parse_schema(data.schema.as_deref(), data.covariates.as_deref())?;
    let options = LoadOptions {
        n_events: data.n_events,
        n_times: data.n_times,
    };
    Ok(load_csv(&data.input, &schema, options)?)
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut doc = match &args.spec {
        Some(path) => serde_json::from_reader(File::open(path)?).map_err(dtsurv::Error::from)?,
        None => {
            let mut doc = SimulationDocument::new(
                &CoefficientSpec::standard(args.d)?,
                CensoringSpec::uniform(args.censoring_prob)?,
                CovariateRule::default(),
                0,
            );
            if let Preset::Weekend = args.preset {
                doc.thinning = Some(Thinning::weekends());
            }
            doc
        }
    };
    if let Some(seed) = args.seed {
        doc.seed = seed;
    }
    let ds = doc.generate(args.n)?;

    let mut staged = Staged::new();
    staged.file(&args.output, |w| {
        let mut writer = csv::Writer::from_writer(w);
        write_records(&ds, &mut writer, &CsvSchema::default())?;
        writer.flush()?;
        Ok(())
    })?;
    staged.json(&sibling(&args.output, ".spec.json"), &doc)?;
    for path in staged.commit()? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn inspect(args: &InspectArgs) -> Result<(), CliError> {
    let ds = load(&args.data)?;
    let table = event_table(&ds);
    let mut staged = Staged::new();
    staged.file(&args.output, |w| {
        let mut writer = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "label".to_string(), "at_risk".to_string()];
        header.extend((1..=ds.n_events()).map(|j| format!("events_{j}")));
        header.push("censored".into());
        writer.write_record(&header)?;
        for t in 1..=ds.n_times() {
            let mut row = vec![t.to_string(), ds.grid().label(t).to_string(), table.at_risk_at(t).to_string()];
            row.extend((1..=ds.n_events()).map(|j| table.events_at(j, t).to_string()));
            row.push(table.censored[t - 1].to_string());
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    })?;
    staged.commit()?;
    println!("{} subjects, {} time points, {} event types", ds.len(), ds.n_times(), ds.n_events());
    Ok(())
}

fn fit_options(args: &FitArgs) -> FitOptions {
    FitOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        min_events: args.min_events,
        parallel: args.parallel,
        ties: match args.ties {
            TiesArg::Breslow => TieMethod::Breslow,
            TiesArg::Efron => TieMethod::Efron,
        },
    }
}

fn method_fit(
    method: MethodArg,
    ds: &SurvivalDataset,
    penalty: Option<&PenaltySpec>,
    options: &FitOptions,
) -> dtsurv::Result<FittedModel> {
    match method {
        MethodArg::Expansion => dtsurv::expansion::fit(ds, penalty, options),
        MethodArg::TwoStage => dtsurv::two_stage::fit(ds, penalty, options),
    }
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    if args.min_events == 0 {
        return Err(config("--min-events must be at least 1"));
    }
    let penalty = args
        .penalizer
        .as_deref()
        .map(|raw| -> Result<PenaltySpec, CliError> { Ok(PenaltySpec::new(parse_penalizer(raw)?, args.l1_ratio)?) })
        .transpose()?;
    let merge = args.merge.as_deref().map(parse_merge).transpose()?;

    let mut ds = load(&args.data)?;
    if let Some(upper) = args.clip_upper {
        ds = clip_tail(&ds, upper)?;
    }
    if let Some(mapping) = &merge {
        ds = merge_times(&ds, mapping)?;
    }
    let options = fit_options(args);
    let started = Instant::now();
    let model = method_fit(args.method, &ds, penalty.as_ref(), &options)?;
    let seconds = started.elapsed().as_secs_f64();

    let rows = model.summary();
    let report = json!({
        "method": model.method,
        "n": ds.len(),
        "n_event_types": ds.n_events(),
        "n_times": ds.n_times(),
        "grid_labels": ds.grid().labels(),
        "covariates": ds.covariate_names(),
        "ties": if matches!(args.method, MethodArg::TwoStage) { Some(options.ties) } else { None },
        "penalty": penalty,
        "clip_upper": args.clip_upper,
        "merge": merge,
        "wall_clock_seconds": seconds,
        "iterations": model.diagnostics.iter().map(|d| d.iterations).collect::<Vec<_>>(),
        "log_likelihood": model.diagnostics.iter().map(|d| d.log_likelihood).collect::<Vec<_>>(),
        "diagnostics": model.diagnostics,
    });

    let mut staged = Staged::new();
    staged.file(&args.output, |w| Ok(write_summary_csv(&rows, w)?))?;
    staged.json(&sibling(&args.output, ".json"), &rows)?;
    staged.text(&sibling(&args.output, ".model.json"), &model.to_json()?)?;
    staged.json(&sibling(&args.output, ".report.json"), &report)?;
    staged.commit()?;
    println!(
        "fitted {} parameters with the {} method in {:.3}s",
        rows.len(),
        model.method,
        seconds
    );
    Ok(())
}

/// `(ids, covariate rows)` read from a CSV with the given id column and the
/// model's covariate columns.
fn read_covariates(args: &PredictArgs, names: &[String]) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut reader = csv::Reader::from_path(&args.input).map_err(dtsurv::Error::from)?;
    let headers = reader.headers().map_err(dtsurv::Error::from)?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
            CliError::Core(dtsurv::Error::Load {
                row: 0,
                message: format!("missing column '{name}'"),
            })
        })
    };
    let id_col = find(&args.id_column)?;
    let cols = names.iter().map(|n| find(n)).collect::<Result<Vec<_>, _>>()?;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(dtsurv::Error::from)?;
        let row = i + 1;
        ids.push(record.get(id_col).unwrap_or_default().trim().to_string());
        let z = cols
            .iter()
            .map(|&c| {
                let raw = record.get(c).unwrap_or_default().trim();
                raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    CliError::Core(dtsurv::Error::Load {
                        row,
                        message: format!("covariate value '{raw}' is not a finite number"),
                    })
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(z);
    }
    Ok((ids, rows))
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let model = FittedModel::load(&args.model)?;
    let (ids, rows) = read_covariates(args, &model.covariate_names)?;
    let curves = model.predict_curves(&rows)?;
    let m = model.n_events();

    let mut staged = Staged::new();
    staged.file(&args.output, |w| {
        let mut writer = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string(), "t".to_string(), "label".to_string()];
        for prefix in ["hazard", "prob", "cif"] {
            header.extend((1..=m).map(|j| format!("{prefix}_{j}")));
        }
        header.push("survival".into());
        writer.write_record(&header)?;
        for (id, c) in ids.iter().zip(&curves) {
            for t in 1..=model.n_times() {
                let mut row = vec![id.clone(), t.to_string(), model.grid.label(t).to_string()];
                for table in [&c.hazard, &c.event_probability, &c.cif] {
                    row.extend(table.iter().map(|v| format_float(v[t - 1])));
                }
                row.push(format_float(c.survival[t]));
                writer.write_record(&row)?;
            }
        }
        writer.flush()?;
        Ok(())
    })?;
    staged.commit()?;
    println!("predicted {} subjects over {} time points", ids.len(), model.n_times());
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

struct Timing {
    method: &'static str,
    d: usize,
    repetition: usize,
    seconds: Option<f64>,
    status: String,
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<(), CliError> {
    let grid = parse_usize_list(&args.d_grid, "--d-grid")?;
    if args.reps == 0 || args.n == 0 {
        return Err(config("--reps and --n must be positive"));
    }
    let censoring = CensoringSpec::uniform(0.8)?;
    let options = FitOptions::default();
    let mut timings = Vec::new();
    for &d in &grid {
        let spec = CoefficientSpec::standard(d)?;
        for rep in 0..args.reps {
            let seed = args.seed.wrapping_add(((d as u64) << 32) | rep as u64);
            let ds = dtsurv::simulation::generate(args.n, &spec, &censoring, &CovariateRule::default(), seed)?;
            for (name, method) in [("expansion", MethodArg::Expansion), ("two-stage", MethodArg::TwoStage)] {
                let started = Instant::now();
                let result = method_fit(method, &ds, None, &options);
                let seconds = started.elapsed().as_secs_f64();
                let (seconds, status) = match result {
                    Ok(_) => (Some(seconds), "ok".to_string()),
                    Err(e) => (None, e.kind().to_string()),
                };
                timings.push(Timing {
                    method: name,
                    d,
                    repetition: rep + 1,
                    seconds,
                    status,
                });
            }
        }
    }

    let mut summary = Vec::new();
    for &d in &grid {
        let times = |method: &str| -> Vec<Option<f64>> {
            timings
                .iter()
                .filter(|t| t.d == d && t.method == method)
                .map(|t| t.seconds)
                .collect()
        };
        let (exp, two) = (times("expansion"), times("two-stage"));
        let mut ratios: Vec<f64> = exp
            .iter()
            .zip(&two)
            .filter_map(|(a, b)| Some(a.as_ref()? / b.as_ref()?))
            .collect();
        let mut exp: Vec<f64> = exp.into_iter().flatten().collect();
        let mut two: Vec<f64> = two.into_iter().flatten().collect();
        summary.push((d, median(&mut exp), median(&mut two), median(&mut ratios)));
    }

    let mut staged = Staged::new();
    staged.file(&args.output, |w| {
        writeln!(w, "method,d,repetition,seconds,status")?;
        for t in &timings {
            let secs = t.seconds.map(format_float).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", t.method, t.d, t.repetition, secs, t.status)?;
        }
        Ok(())
    })?;
    staged.file(&sibling(&args.output, ".summary.csv"), |w| {
        writeln!(w, "d,median_expansion_seconds,median_two_stage_seconds,median_ratio")?;
        for (d, e, t, r) in &summary {
            writeln!(w, "{d},{e},{t},{r}")?;
        }
        Ok(())
    })?;
    staged.commit()?;
    for (d, _, _, r) in &summary {
        println!("d={d}: median expansion/two-stage time ratio {r:.2}");
    }
    Ok(())
}
