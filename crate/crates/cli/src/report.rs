//! Post-hoc tables from stored artifacts. Nothing here runs a simulation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dips_core::stats::{stage_intervals, IntervalRow};
use dips_core::uncertainty::tls_verdict;

use crate::commands::{core_error, Context};
use crate::config::OutputFormat;
use crate::output::{num, opt_num, read_csv, CsvOut, Provenance};
use crate::{plot, CliError};

fn field<T: std::str::FromStr>(row: &csv::StringRecord, header: &csv::StringRecord, name: &str, path: &Path) -> Result<T, CliError> {
    let idx = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::runtime(format!("{}: missing column `{name}`", path.display())))?;
    row.get(idx)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::runtime(format!("{}: bad `{name}` value in {:?}", path.display(), row)))
}

/// Per-run stage probabilities and the stage thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTable {
    pub provenance: Provenance,
    pub thresholds: Vec<f64>,
    pub per_run: Vec<Vec<f64>>,
}

pub fn read_runs(path: &Path) -> Result<RunTable, CliError> {
    let (provenance, rows, header) = read_csv(path)?;
    let mut runs: BTreeMap<usize, BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
    for row in &rows {
        let r: usize = field(row, &header, "run", path)?;
        let l: usize = field(row, &header, "stage", path)?;
        let m: f64 = field(row, &header, "threshold", path)?;
        let p: f64 = field(row, &header, "probability", path)?;
        runs.entry(r).or_default().insert(l, (m, p));
    }
    let Some(first) = runs.values().next() else {
        return Err(CliError::runtime(format!("{}: no runs", path.display())));
    };
    let thresholds: Vec<f64> = first.values().map(|v| v.0).collect();
    let mut per_run = Vec::with_capacity(runs.len());
    for (r, stages) in &runs {
        let t: Vec<f64> = stages.values().map(|v| v.0).collect();
        if t != thresholds {
            return Err(CliError::runtime(format!("{}: run {r} has different thresholds", path.display())));
        }
        per_run.push(stages.values().map(|v| v.1).collect());
    }
    Ok(RunTable { provenance, thresholds, per_run })
}

/// Step-function traces by run: (evaluation, estimate) at each change.
pub fn read_traces(path: &Path) -> Result<Vec<Vec<(u64, f64)>>, CliError> {
    let (_, rows, header) = read_csv(path)?;
    let mut by_run: BTreeMap<usize, Vec<(u64, f64)>> = BTreeMap::new();
    for row in &rows {
        let r: usize = field(row, &header, "run", path)?;
        by_run.entry(r).or_default().push((field(row, &header, "evaluation", path)?, field(row, &header, "probability", path)?));
    }
    Ok(by_run.into_values().collect())
}

/// One point of the across-run convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    pub evaluation: u64,
    pub runs: usize,
    pub mean: f64,
    pub geometric_mean: Option<f64>,
    pub min: f64,
    pub max: f64,
}

/// Evaluates every trace on a log-spaced grid (`per_decade` points per
/// decade, plus the last evaluation). A run enters once it has a value.
pub fn convergence(traces: &[Vec<(u64, f64)>], per_decade: usize) -> Vec<ConvergencePoint> {
    let end = traces.iter().filter_map(|t| t.last().map(|p| p.0)).max().unwrap_or(0);
    if end == 0 {
        return Vec::new();
    }
    let mut grid: Vec<u64> = Vec::new();
    let steps = ((end as f64).log10() * per_decade as f64).ceil() as usize;
    for i in 0..=steps {
        let g = 10f64.powf(i as f64 / per_decade as f64).round() as u64;
        if g <= end && grid.last() != Some(&g) {
            grid.push(g);
        }
    }
    if grid.last() != Some(&end) {
        grid.push(end);
    }
    grid.into_iter()
        .filter_map(|g| {
            let vals: Vec<f64> = traces
                .iter()
                .filter_map(|t| {
                    let i = t.partition_point(|p| p.0 <= g);
                    (i > 0).then(|| t[i - 1].1)
                })
                .collect();
            if vals.is_empty() {
                return None;
            }
            let pos: Vec<f64> = vals.iter().copied().filter(|v| *v > 0.0).collect();
            Some(ConvergencePoint {
                evaluation: g,
                runs: vals.len(),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                geometric_mean: (!pos.is_empty()).then(|| (pos.iter().map(|v| v.ln()).sum::<f64>() / pos.len() as f64).exp()),
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub algorithm: String,
    pub run: usize,
    pub dims: String,
    pub nofc: u64,
    pub wall_s: f64,
    pub workers: usize,
}

impl TimingRecord {
    /// Single-core-equivalent time.
    pub fn core_s(&self) -> f64 {
        self.wall_s * self.workers as f64
    }
}

/// Comparison table: one row per record, fastest first.
pub fn timing_report(records: &[TimingRecord]) -> Vec<TimingRecord> {
    let mut rows = records.to_vec();
    rows.sort_by(|a, b| {
        a.core_s().total_cmp(&b.core_s()).then_with(|| a.algorithm.cmp(&b.algorithm)).then(a.run.cmp(&b.run))
    });
    rows
}

pub fn read_timing(path: &Path) -> Result<Vec<TimingRecord>, CliError> {
    let (_, rows, header) = read_csv(path)?;
    rows.iter()
        .map(|row| {
            Ok(TimingRecord {
                algorithm: field(row, &header, "algorithm", path)?,
                run: field(row, &header, "run", path)?,
                dims: field(row, &header, "dims", path)?,
                nofc: field(row, &header, "nofc", path)?,
                wall_s: field(row, &header, "wall_s", path)?,
                workers: field(row, &header, "workers", path)?,
            })
        })
        .collect()
}

/// Files written by one `report` call.
#[derive(Debug, Default)]
pub struct ReportFiles {
    pub files: Vec<PathBuf>,
    pub intervals: Vec<IntervalRow>,
}

pub fn report(ctx: &Context, name: &str) -> Result<ReportFiles, CliError> {
    let runs_path = ctx.path(&format!("{name}_runs.csv"));
    if !runs_path.exists() {
        return Err(CliError::runtime(format!("{}: not found; run the estimate command first", runs_path.display())));
    }
    let table = read_runs(&runs_path)?;
    let prov = &table.provenance;
    let alg = &ctx.cfg.algorithm;
    let rows = stage_intervals(&table.per_run, &table.thresholds, alg.level).map_err(|e| core_error("report", e))?;
    let mut out = ReportFiles::default();

    let path = ctx.path(&format!("{name}_intervals.csv"));
    let mut iv = CsvOut::create(
        &path,
        "intervals-v1",
        prov,
        &[
            "stage", "threshold", "runs", "zeros", "mean", "lognormal_mean", "lower", "upper", "theta", "level",
            "lower_unreliable", "tls", "verdict",
        ],
    )?;
    for r in &rows {
        let verdict = match (alg.tls, r.lower, r.upper) {
            (Some(tls), Some(lo), Some(hi)) => tls_verdict(lo, hi, tls).map_err(|e| core_error("report", e))?.as_str(),
            _ => "",
        };
        iv.row([
            r.stage.to_string(),
            num(r.threshold),
            r.runs.to_string(),
            r.zeros.to_string(),
            num(r.mean),
            opt_num(r.lognormal_mean),
            opt_num(r.lower),
            opt_num(r.upper),
            opt_num(r.theta),
            num(alg.level),
            r.lower_unreliable.to_string(),
            opt_num(alg.tls),
            verdict.to_string(),
        ])?;
    }
    out.files.push(iv.finish()?);

    let trace_path = ctx.path(&format!("{name}_trace.csv"));
    let traces = if trace_path.exists() { read_traces(&trace_path)? } else { Vec::new() };
    let conv = convergence(&traces, 20);
    if !conv.is_empty() {
        let mut c = CsvOut::create(
            &ctx.path(&format!("{name}_convergence.csv")),
            "convergence-v1",
            prov,
            &["evaluation", "runs", "mean", "geometric_mean", "min", "max"],
        )?;
        for p in &conv {
            c.row([
                p.evaluation.to_string(),
                p.runs.to_string(),
                num(p.mean),
                opt_num(p.geometric_mean),
                num(p.min),
                num(p.max),
            ])?;
        }
        out.files.push(c.finish()?);
    }

    let mut timing = Vec::new();
    let mut timing_files: Vec<PathBuf> = std::fs::read_dir(&ctx.out_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|f| f.to_str()).is_some_and(|f| f.ends_with("_timing.csv")))
        .collect();
    timing_files.sort();
    for f in &timing_files {
        timing.extend(read_timing(f)?);
    }
    let mut t = CsvOut::create(
        &ctx.path("timing_report.csv"),
        "timing-report-v1",
        prov,
        &["algorithm", "run", "dims", "nofc", "wall_s", "workers", "core_s"],
    )?;
    for r in timing_report(&timing) {
        t.row([
            r.algorithm.clone(),
            r.run.to_string(),
            r.dims.clone(),
            r.nofc.to_string(),
            format!("{:.6}", r.wall_s),
            r.workers.to_string(),
            format!("{:.6}", r.core_s()),
        ])?;
    }
    out.files.push(t.finish()?);

    if ctx.format == OutputFormat::CsvSvg {
        if !conv.is_empty() {
            let p = ctx.path(&format!("{name}_convergence.svg"));
            plot::convergence_svg(&p, name, &traces, &conv)?;
            out.files.push(p);
        }
        let p = ctx.path(&format!("{name}_stages.svg"));
        plot::stages_svg(&p, name, &rows, &table.per_run)?;
        out.files.push(p);
    }

    println!("report {name}: {} run(s), level {}", table.per_run.len(), alg.level);
    for r in &rows {
        println!(
            "  m = {:>8}: mean {:e}, lognormal mean {}, interval [{}, {}]",
            r.threshold,
            r.mean,
            opt_num(r.lognormal_mean),
            opt_num(r.lower),
            opt_num(r.upper)
        );
    }
    out.intervals = rows;
    Ok(out)
}
