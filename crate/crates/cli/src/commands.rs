//! Subcommands. Each estimate command runs `algorithm.runs` independent
//! jobs on the worker pool and writes its artifacts under the output
//! directory; `reweight` and `report` only read earlier artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dips_core::direct::Partition;
use dips_core::estimator::{estimator_registry, run_key, Problem, RunOutput};
use dips_core::param_space::Moment;
use dips_core::partition_io::{parse_partition, write_partition};
use dips_core::scenario::{simulate, DisturbanceVector};
use dips_core::uncertainty::{reweight_with_limit, reweighted_priors, sensitivity};
use dips_core::Error;
use rayon::prelude::*;

use crate::config::{parse_config, ExperimentConfig, OutputFormat};
use crate::output::{num, CsvOut, Provenance};
use crate::{plot, report, CliError};

#[derive(Debug, Parser)]
#[command(name = "dips", version, about = "Rare-event probability estimation experiments")]
pub struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; overrides the config (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Artifact formats: csv or csv+svg.
    #[arg(long, global = true, value_parser = ["csv", "csv+svg"])]
    pub format: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one aircraft trajectory and write its trace.
    Simulate(SimulateArgs),
    /// Crisp partition estimate of P(d <= m).
    EstimateBasic,
    /// Partition search with an IPS estimate in every box.
    EstimateDips,
    /// Partition search with crude instances in every box.
    EstimateOuterMu,
    /// Interacting particle system on the full prior.
    EstimateIps(IpsArgs),
    /// Asymptotic-sampling extrapolation of the reliability index.
    EstimateExtrapolation,
    /// Reuse stored partitions under perturbed input moments.
    Reweight(AlgorithmArg),
    /// Interval tables, convergence traces, timing and plots from stored runs.
    Report(AlgorithmArg),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Altitude offset in feet (negative flies low) [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub eps_h_ft: Option<f64>,
    /// Pilot reaction time in seconds [default: never]
    #[arg(long)]
    pub t_r_s: Option<f64>,
    /// Steady wind along x in knots [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub w_x_kt: Option<f64>,
    /// Steady wind along y in knots [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub w_y_kt: Option<f64>,
    /// Run index selecting the turbulence stream.
    #[arg(long, default_value_t = 0)]
    pub run: u64,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct IpsArgs {
    /// Thresholds from `algorithm.schedule_ft`.
    #[arg(long)]
    pub fixed: bool,
    /// Thresholds chosen on the fly from `[algorithm.adaptive]`.
    #[arg(long)]
    pub adaptive: bool,
}

#[derive(Debug, Args)]
pub struct AlgorithmArg {
    /// Estimator whose artifacts to read; defaults to `algorithm.variant`.
    #[arg(long)]
    pub algorithm: Option<String>,
}

/// Resolved configuration for one invocation.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub prov: Provenance,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    pub workers: usize,
}

impl Context {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Sorts core errors into bad input (exit 1) and runtime failures (exit 2).
pub fn core_error(context: &str, e: Error) -> CliError {
    let msg = if context.is_empty() { e.to_string() } else { format!("{context}: {e}") };
    match e {
        Error::InvalidDistribution(_)
        | Error::InvalidParameter { .. }
        | Error::InvalidConfig(_)
        | Error::Usage(_)
        | Error::UnknownStrategy { .. }
        | Error::DimensionMismatch { .. } => CliError::Validation(vec![msg]),
        _ => CliError::Runtime(msg),
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let Some(path) = &cli.config else {
        return Err(CliError::Validation(vec!["--config: required".into()]));
    };
    let mut cfg = parse_config(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(d) = &cli.out_dir {
        cfg.output.dir = d.clone();
    }
    if let Some(f) = &cli.format {
        cfg.output.format = OutputFormat::parse(f).expect("clap checked the value");
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().map_err(CliError::runtime)?;
    std::fs::create_dir_all(&cfg.output.dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", cfg.output.dir.display())))?;
    let ctx = Context {
        prov: Provenance { config_sha256: cfg.hash.clone(), seed: cfg.seed },
        out_dir: cfg.output.dir.clone(),
        format: cfg.output.format,
        workers: pool.current_num_threads(),
        cfg,
    };
    pool.install(|| match &cli.command {
        Command::Simulate(a) => simulate_cmd(&ctx, a),
        Command::EstimateBasic => estimate(&ctx, "basic").map(drop),
        Command::EstimateDips => estimate(&ctx, "dips").map(drop),
        Command::EstimateOuterMu => estimate(&ctx, "outer-mu").map(drop),
        Command::EstimateIps(a) => estimate(&ctx, if a.adaptive { "ips-adaptive" } else { "ips-fixed" }).map(drop),
        Command::EstimateExtrapolation => estimate(&ctx, "extrapolation").map(drop),
        Command::Reweight(a) => reweight_cmd(&ctx, a.algorithm.as_deref().unwrap_or(&ctx.cfg.algorithm.variant)),
        Command::Report(a) => {
            report::report(&ctx, a.algorithm.as_deref().unwrap_or(&ctx.cfg.algorithm.variant)).map(drop)
        }
    })
}

/// Per-run bookkeeping (NOFC, wall time) for the timing tables.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub algorithm: String,
    pub seed: u64,
    pub nofc: u64,
    pub evaluations: u64,
    pub wall_s: f64,
    pub probabilities: Vec<f64>,
    pub flags: Vec<&'static str>,
}

impl RunRecord {
    pub fn new(run: usize, algorithm: &str, seed: u64, out: &RunOutput, wall_s: f64) -> Self {
        RunRecord {
            run,
            algorithm: algorithm.to_string(),
            seed,
            nofc: out.calls,
            evaluations: out.evaluations,
            wall_s,
            probabilities: out.probabilities.clone(),
            flags: out.flags.clone(),
        }
    }
}

/// `2D(x1+x2)`: dimension and parameter names.
pub fn dims_descriptor(cfg: &ExperimentConfig) -> String {
    let names: Vec<&str> = cfg.space.params().iter().map(|p| p.name.as_str()).collect();
    format!("{}D({})", names.len(), names.join("+"))
}

/// Runs one estimator `algorithm.runs` times and writes its artifacts.
pub fn estimate(ctx: &Context, name: &str) -> Result<Vec<RunRecord>, CliError> {
    let estimator = estimator_registry().get(name).map_err(|e| core_error("", e))?;
    let cfg = &ctx.cfg;
    let problem = Problem::new(cfg.model.clone(), cfg.space.clone()).map_err(|e| core_error("", e))?;
    let settings = &cfg.algorithm.settings;
    let outputs: Vec<(RunOutput, f64)> = (0..cfg.algorithm.runs)
        .into_par_iter()
        .map(|r| {
            let start = Instant::now();
            let out = estimator.run(&problem, settings, run_key(cfg.seed, r as u64));
            out.map(|o| (o, start.elapsed().as_secs_f64())).map_err(|e| core_error(&format!("{name} run {r}"), e))
        })
        .collect::<Result<_, _>>()?;

    let prefix = |s: &str| ctx.path(&format!("{name}_{s}"));
    let mut runs = CsvOut::create(&prefix("runs.csv"), "runs-v1", &ctx.prov, &["run", "stage", "threshold", "probability"])?;
    let mut records = CsvOut::create(
        &prefix("records.csv"),
        "records-v1",
        &ctx.prov,
        &["run", "algorithm", "run_key", "nofc", "evaluations", "final_probability", "flags"],
    )?;
    let mut diag = CsvOut::create(&prefix("diagnostics.csv"), "diagnostics-v1", &ctx.prov, &["run", "name", "value"])?;
    let mut timing = CsvOut::create(
        &prefix("timing.csv"),
        "timing-v1",
        &ctx.prov,
        &["run", "algorithm", "dims", "nofc", "wall_s", "workers"],
    )?;
    let mut trace = estimator
        .partitions()
        .then(|| CsvOut::create(&prefix("trace.csv"), "trace-v1", &ctx.prov, &["run", "evaluation", "probability"]))
        .transpose()?;
    remove_stale_partitions(&ctx.out_dir, name)?;

    let dims = dims_descriptor(cfg);
    let mut out_records = Vec::with_capacity(outputs.len());
    for (r, (out, wall)) in outputs.into_iter().enumerate() {
        let key = run_key(cfg.seed, r as u64);
        for (l, (m, p)) in out.thresholds.iter().zip(&out.probabilities).enumerate() {
            runs.row([r.to_string(), (l + 1).to_string(), num(*m), num(*p)])?;
        }
        records.row([
            r.to_string(),
            name.to_string(),
            key.0.to_string(),
            out.calls.to_string(),
            out.evaluations.to_string(),
            num(out.final_probability()),
            out.flags.join(";"),
        ])?;
        for (k, v) in &out.diagnostics {
            diag.row([r.to_string(), k.to_string(), num(*v)])?;
        }
        timing.row([
            r.to_string(),
            name.to_string(),
            dims.clone(),
            out.calls.to_string(),
            format!("{wall:.6}"),
            ctx.workers.to_string(),
        ])?;
        if let Some(p) = &out.partition {
            if let Some(t) = trace.as_mut() {
                write_trace(t, r, &p.trace)?;
            }
            let mut p = p.clone();
            p.meta.config_hash = ctx.prov.config_sha256.clone();
            p.meta.seed = cfg.seed;
            let path = prefix(&format!("partition_r{r}.txt"));
            std::fs::write(&path, write_partition(&p)).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        }
        out_records.push(RunRecord::new(r, name, key.0, &out, wall));
    }
    runs.finish()?;
    records.finish()?;
    diag.finish()?;
    timing.finish()?;
    if let Some(t) = trace {
        t.finish()?;
    }
    print_summary(name, &out_records);
    Ok(out_records)
}

/// Trace rows where the estimate changed, plus the last evaluation.
fn write_trace(out: &mut CsvOut, run: usize, trace: &[f64]) -> Result<(), CliError> {
    let mut last = None;
    for (i, &p) in trace.iter().enumerate() {
        let is_end = i + 1 == trace.len();
        if last.map_or(true, |q: f64| q.to_bits() != p.to_bits()) || is_end {
            out.row([run.to_string(), (i + 1).to_string(), num(p)])?;
            last = Some(p);
        }
    }
    Ok(())
}

fn remove_stale_partitions(dir: &Path, name: &str) -> Result<(), CliError> {
    for path in partition_files(dir, name)? {
        std::fs::remove_file(&path.1)?;
    }
    Ok(())
}

/// `{name}_partition_r{r}.txt` files in run order.
pub fn partition_files(dir: &Path, name: &str) -> Result<Vec<(usize, PathBuf)>, CliError> {
    let prefix = format!("{name}_partition_r");
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let file = path.file_name().and_then(|f| f.to_str()).unwrap_or("");
        if let Some(r) = file.strip_prefix(&prefix).and_then(|s| s.strip_suffix(".txt")).and_then(|s| s.parse().ok()) {
            files.push((r, path));
        }
    }
    files.sort();
    Ok(files)
}

fn print_summary(name: &str, records: &[RunRecord]) {
    let runs = records.len();
    let finals: Vec<f64> = records.iter().map(|r| r.probabilities.last().copied().unwrap_or(0.0)).collect();
    let mean = finals.iter().sum::<f64>() / runs.max(1) as f64;
    let logs: Vec<f64> = finals.iter().filter(|p| **p > 0.0).map(|p| p.ln()).collect();
    let geo = if logs.is_empty() { 0.0 } else { (logs.iter().sum::<f64>() / logs.len() as f64).exp() };
    let nofc: u64 = records.iter().map(|r| r.nofc).sum();
    println!("{name}: {runs} run(s), mean P = {mean:e}, geometric mean P = {geo:e}, NOFC = {nofc}");
    for r in records {
        if !r.flags.is_empty() {
            println!("  run {}: {}", r.run, r.flags.join(", "));
        }
    }
}

fn simulate_cmd(ctx: &Context, a: &SimulateArgs) -> Result<(), CliError> {
    let Some(model) = &ctx.cfg.scenario else {
        return Err(CliError::Validation(vec![format!(
            "model.kind: simulate needs the aircraft model, got `{}`",
            ctx.cfg.model_kind
        )]));
    };
    let mut d = DisturbanceVector::nominal();
    d.turbulence = model.config.turbulence.is_some();
    if let Some(v) = a.eps_h_ft {
        d.eps_h_ft = v;
    }
    if let Some(v) = a.t_r_s {
        if v < 0.0 {
            return Err(CliError::Validation(vec!["--t-r-s: must be nonnegative".into()]));
        }
        d.t_r_s = v;
    }
    if let Some(v) = a.w_x_kt {
        d.w_x_kt = v;
    }
    if let Some(v) = a.w_y_kt {
        d.w_y_kt = v;
    }
    let thresholds = ctx.cfg.algorithm.settings.schedule.thresholds().to_vec();
    let traj = simulate(&model.config, &d, &thresholds, run_key(ctx.cfg.seed, a.run)).map_err(|e| core_error("simulate", e))?;
    let mut out = CsvOut::create(
        &ctx.path("trajectory.csv"),
        "trajectory-v1",
        &ctx.prov,
        &[
            "t_s", "x_nm", "y_nm", "h_ft", "v_kt", "psi_rad", "gamma_rad", "mode", "leg", "gust_u_ftps", "gust_v_ftps",
            "gust_w_ftps", "terrain_distance_ft",
        ],
    )?;
    for s in &traj.samples {
        let st = &s.state;
        out.row([
            num(st.t_s),
            num(st.x_nm),
            num(st.y_nm),
            num(st.h_ft),
            num(st.v_kt),
            num(st.psi),
            num(st.gamma),
            format!("{:?}", st.mode),
            st.leg.to_string(),
            num(s.gust.u),
            num(s.gust.v),
            num(s.gust.w),
            num(s.terrain_ft),
        ])?;
    }
    out.finish()?;
    let mut summary =
        CsvOut::create(&ctx.path("trajectory_summary.csv"), "trajectory-summary-v1", &ctx.prov, &["quantity", "value"])?;
    summary.row(["termination", traj.termination.as_str()])?;
    summary.row(["miss_distance_ft".to_string(), num(traj.miss_distance_ft)])?;
    for (m, t) in thresholds.iter().zip(&traj.first_passage_s) {
        summary.row([format!("first_passage_s@{m}"), t.map(num).unwrap_or_default()])?;
    }
    summary.finish()?;
    if ctx.format == OutputFormat::CsvSvg {
        plot::trajectory_svg(&ctx.path("trajectory.svg"), &traj)?;
    }
    println!(
        "simulate: {} after {:.1} s, miss distance {:.1} ft",
        traj.termination.as_str(),
        traj.samples.last().map_or(0.0, |s| s.state.t_s),
        traj.miss_distance_ft
    );
    Ok(())
}

fn load_partitions(ctx: &Context, name: &str) -> Result<Vec<(usize, Partition)>, CliError> {
    let files = partition_files(&ctx.out_dir, name)?;
    if files.is_empty() {
        return Err(CliError::runtime(format!(
            "no `{name}_partition_r*.txt` files in {}; run the estimate command first",
            ctx.out_dir.display()
        )));
    }
    let names: Vec<String> = ctx.cfg.space.params().iter().map(|p| p.name.clone()).collect();
    files
        .into_iter()
        .map(|(r, path)| {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
            let p = parse_partition(&text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
            if p.meta.params != names {
                return Err(CliError::runtime(format!(
                    "{}: partition parameters {:?} differ from the config's {:?}",
                    path.display(),
                    p.meta.params,
                    names
                )));
            }
            // stored priors must come from the configured marginals
            let priors = reweighted_priors(&p, &ctx.cfg.space, &ctx.cfg.space).map_err(|e| core_error("", e))?;
            let stored: Vec<f64> = p.leaves.values().map(|b| b.prior).collect();
            let off = priors.iter().zip(&stored).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1e-300));
            if off {
                return Err(CliError::runtime(format!(
                    "{}: box priors do not match the configured parameter distributions",
                    path.display()
                )));
            }
            Ok((r, p))
        })
        .collect()
}

fn moment_str(m: Moment) -> &'static str {
    match m {
        Moment::Mean => "mean",
        Moment::StdDev => "std_dev",
    }
}

fn reweight_cmd(ctx: &Context, name: &str) -> Result<(), CliError> {
    let parts = load_partitions(ctx, name)?;
    let unc = &ctx.cfg.uncertainty;
    let space = &*ctx.cfg.space;
    let mut rw = CsvOut::create(
        &ctx.path(&format!("{name}_reweight.csv")),
        "reweight-v1",
        &ctx.prov,
        &["run", "stage", "threshold", "stored", "reweighted", "domain_prior", "escaped_mass"],
    )?;
    let mut sens = CsvOut::create(
        &ctx.path(&format!("{name}_sensitivity.csv")),
        "sensitivity-v1",
        &ctx.prov,
        &["run", "param", "moment", "value", "step", "stage", "threshold", "dlnp_dmoment"],
    )?;
    let (mut base_sum, mut new_sum) = (0.0, 0.0);
    for (r, p) in &parts {
        let ctx_err = |e| core_error(&format!("run {r}"), e);
        let stored = dips_core::direct::stage_probabilities(p).map_err(ctx_err)?;
        let out = reweight_with_limit(p, space, &unc.perturbations, unc.escape_limit).map_err(ctx_err)?;
        if let Some(w) = &out.warning {
            eprintln!("warning: run {r}: {w}");
        }
        for (l, ((m, a), b)) in p.meta.thresholds.iter().zip(&stored).zip(&out.probabilities).enumerate() {
            rw.row([
                r.to_string(),
                (l + 1).to_string(),
                num(*m),
                num(*a),
                num(*b),
                num(out.domain_prior),
                num(out.escaped_mass),
            ])?;
        }
        base_sum += stored.last().copied().unwrap_or(0.0);
        new_sum += out.probabilities.last().copied().unwrap_or(0.0);
        for s in sensitivity(p, space, &unc.moments, unc.step).map_err(ctx_err)? {
            for (l, (m, rate)) in p.meta.thresholds.iter().zip(&s.rates).enumerate() {
                sens.row([
                    r.to_string(),
                    s.param.clone(),
                    moment_str(s.moment).to_string(),
                    num(s.value),
                    num(s.step),
                    (l + 1).to_string(),
                    num(*m),
                    rate.map(num).unwrap_or_default(),
                ])?;
            }
        }
    }
    rw.finish()?;
    sens.finish()?;
    let n = parts.len() as f64;
    println!(
        "reweight {name}: {} partition(s), mean P stored {:e}, reweighted {:e}",
        parts.len(),
        base_sum / n,
        new_sum / n
    );
    Ok(())
}

/// Builds a context without parsing the command line.
pub fn context(cfg: ExperimentConfig, workers: usize) -> Context {
    Context {
        prov: Provenance { config_sha256: cfg.hash.clone(), seed: cfg.seed },
        out_dir: cfg.output.dir.clone(),
        format: cfg.output.format,
        workers,
        cfg,
    }
}
