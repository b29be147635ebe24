//! Every estimator behind one trait, registered by name.

use std::sync::Arc;

use crate::dips::{run_dips, run_outer_mu, DipsConfig, OuterMuConfig};
use crate::direct::{run_search, EstimateMode, Partition, StopConfig};
use crate::error::{Error, Result};
use crate::evaluator::CrispEvaluator;
use crate::ips::{run_adaptive_ips, run_fixed_ips, AdaptiveConfig, FiltrationSchedule, Launch};
use crate::model::Model;
use crate::objective::Inner;
use crate::param_space::ParameterSpace;
use crate::registry::Registry;
use crate::rng::{Domain, StreamKey};
use crate::stats::{run_extrapolation, ExtrapolationConfig};

pub const FLAG_NO_TARGET: &str = "no-target-found";
pub const FLAG_BUDGET: &str = "budget-exhausted";
pub const FLAG_EXTINCT: &str = "extinct";

#[derive(Clone)]
pub struct Problem {
    pub model: Arc<dyn Model>,
    pub space: Arc<ParameterSpace>,
}

impl Problem {
    pub fn new(model: Arc<dyn Model>, space: Arc<ParameterSpace>) -> Result<Self> {
        if model.dim() != space.dim() && model.dim() != 0 {
            return Err(Error::DimensionMismatch { expected: model.dim(), got: space.dim() });
        }
        Ok(Problem { model, space })
    }
}

/// Knobs shared by the estimators; each reads the ones it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    /// Target threshold m for the crisp and crude estimators.
    pub threshold: f64,
    pub lambda: f64,
    /// Evaluated-box budget q; `None` picks the estimator's own default.
    pub boxes: Option<usize>,
    /// Stability window; `Some(0)` disables it, `None` picks the default.
    pub q_stable: Option<usize>,
    pub eps_m: f64,
    pub eps_hull: f64,
    pub beta_skip: f64,
    /// Particles per box or per IPS run (s).
    pub particles: usize,
    /// Crude instances per centroid.
    pub instances: usize,
    pub schedule: FiltrationSchedule,
    pub adaptive: AdaptiveConfig,
    pub extrapolation: ExtrapolationConfig,
}

impl Default for Settings {
    fn default() -> Self {
        let stop = StopConfig::default();
        Settings {
            threshold: 0.0,
            lambda: 10_000.0,
            boxes: None,
            q_stable: None,
            eps_m: stop.eps_m,
            eps_hull: stop.eps_hull,
            beta_skip: stop.beta_skip,
            particles: 1000,
            instances: 100,
            schedule: FiltrationSchedule::aircraft_default(),
            adaptive: AdaptiveConfig::default(),
            extrapolation: ExtrapolationConfig::default(),
        }
    }
}

impl Settings {
    fn stop(&self, boxes: usize, q_stable: Option<usize>) -> StopConfig {
        let q_stable = match self.q_stable {
            None => q_stable,
            Some(0) => None,
            Some(q) => Some(q),
        };
        StopConfig {
            q_stable,
            eps_m: self.eps_m,
            max_evals: self.boxes.unwrap_or(boxes),
            eps_hull: self.eps_hull,
            beta_skip: self.beta_skip,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub thresholds: Vec<f64>,
    /// P(m_l) per threshold.
    pub probabilities: Vec<f64>,
    /// Limit-state work: simulated trajectory segments (NOFC).
    pub calls: u64,
    /// Evaluated boxes or sampled points.
    pub evaluations: u64,
    pub partition: Option<Partition>,
    pub flags: Vec<&'static str>,
    pub diagnostics: Vec<(&'static str, f64)>,
}

impl RunOutput {
    pub fn final_probability(&self) -> f64 {
        self.probabilities.last().copied().unwrap_or(0.0)
    }
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> &str;
    /// True when the estimator stores a partition that can be reweighted.
    fn partitions(&self) -> bool {
        false
    }
    fn run(&self, problem: &Problem, settings: &Settings, key: StreamKey) -> Result<RunOutput>;
}

/// Key of the `run`-th independent run under a root seed.
pub fn run_key(seed: u64, run: u64) -> StreamKey {
    StreamKey::root(seed).child(Domain::Run, run)
}

fn partition_output(thresholds: Vec<f64>, probabilities: Vec<f64>, partition: Partition, no_hits: bool) -> RunOutput {
    let mut flags = Vec::new();
    if no_hits {
        flags.push(FLAG_NO_TARGET);
    }
    RunOutput {
        thresholds,
        probabilities,
        calls: partition.calls,
        evaluations: partition.eval_count() as u64,
        flags,
        diagnostics: vec![("leaves", partition.leaves.len() as f64)],
        partition: Some(partition),
    }
}

/// Crisp estimator: inner objective, one instance per centroid.
pub struct Basic;

impl Estimator for Basic {
    fn name(&self) -> &str {
        "basic"
    }

    fn partitions(&self) -> bool {
        true
    }

    fn run(&self, problem: &Problem, settings: &Settings, key: StreamKey) -> Result<RunOutput> {
        let m = settings.threshold;
        let evaluator = CrispEvaluator::new(problem.model.clone(), vec![m])?;
        let stop = settings.stop(StopConfig::default().max_evals, StopConfig::default().q_stable);
        let mut partition = run_search(&*problem.space, &evaluator, &Inner { m }, &stop, EstimateMode::Crisp { m }, key.0)?;
        partition.meta.params = problem.space.params().iter().map(|p| p.name.clone()).collect();
        partition.meta.thresholds = vec![m];
        let p = partition.probability();
        let none = partition.no_target_found();
        Ok(partition_output(vec![m], vec![p], partition, none))
    }
}

pub struct Dips;

impl Estimator for Dips {
    fn name(&self) -> &str {
        "dips"
    }

    fn partitions(&self) -> bool {
        true
    }

    fn run(&self, problem: &Problem, settings: &Settings, key: StreamKey) -> Result<RunOutput> {
        let defaults = DipsConfig::default();
        let stop = settings.stop(defaults.boxes, None);
        let cfg = DipsConfig {
            particles: settings.particles,
            boxes: stop.max_evals,
            schedule: settings.schedule.clone(),
            lambda: settings.lambda,
            stop,
        };
        let run = run_dips(&problem.space, problem.model.clone(), &cfg, key.0)?;
        Ok(partition_output(run.thresholds, run.probabilities, run.partition, run.no_hits))
    }
}

pub struct OuterMu;

impl Estimator for OuterMu {
    fn name(&self) -> &str {
        "outer-mu"
    }

    fn partitions(&self) -> bool {
        true
    }

    fn run(&self, problem: &Problem, settings: &Settings, key: StreamKey) -> Result<RunOutput> {
        let defaults = OuterMuConfig::default();
        let stop = settings.stop(defaults.boxes, None);
        let cfg = OuterMuConfig {
            instances: settings.instances,
            boxes: stop.max_evals,
            threshold: settings.threshold,
            lambda: settings.lambda,
            stop,
        };
        let run = run_outer_mu(&problem.space, problem.model.clone(), &cfg, key.0)?;
        Ok(partition_output(run.thresholds, run.probabilities, run.partition, run.no_hits))
    }
}

fn prior_launch(problem: &Problem) -> Launch {
    if problem.model.dim() == 0 {
        Launch::Fixed(Vec::new())
    } else {
        Launch::Prior(problem.space.clone())
    }
}

/// Splitting over parameters and noise together, particles launched from the
/// prior.
pub struct IpsFixed;

impl Estimator for IpsFixed {
    fn name(&self) -> &str {
        "ips-fixed"
    }

    fn run(&self, problem: &Problem, settings: &Settings, key: StreamKey) -> Result<RunOutput> {
        let schedule = &settings.schedule;
        let run = run_fixed_ips(&*problem.model, &prior_launch(problem), schedule, settings.particles, key)?;
        let mut flags = Vec::new();
        if run.extinct_at.is_some() {
            flags.push(FLAG_EXTINCT);
        }
        if run.budget_exhausted {
            flags.push(FLAG_BUDGET);
        }
        Ok(RunOutput {
            thresholds: schedule.thresholds().to_vec(),
            probabilities: run.cumulative(schedule.len()),
            calls: run.trials,
            evaluations: settings.particles as u64,
            partition: None,
            flags,
            diagnostics: vec![("launch_mean_distance", run.launch_mean_distance)],
        })
    }
}

pub struct IpsAdaptive;

impl Estimator for IpsAdaptive {
    fn name(&self) -> &str {
        "ips-adaptive"
    }

    fn run(&self, problem: &Problem, settings: &Settings, key: StreamKey) -> Result<RunOutput> {
        let run = run_adaptive_ips(&*problem.model, &prior_launch(problem), &settings.adaptive, key)?;
        let mut flags = Vec::new();
        if run.budget_exhausted {
            flags.push(FLAG_BUDGET);
        }
        Ok(RunOutput {
            thresholds: run.thresholds(),
            probabilities: run.stages.iter().map(|s| s.cumulative).collect(),
            calls: run.trials,
            evaluations: settings.adaptive.survivors as u64,
            partition: None,
            flags,
            diagnostics: vec![("restarts", run.restarts as f64), ("backtracks", run.backtracks as f64)],
        })
    }
}

pub struct Extrapolate;

impl Estimator for Extrapolate {
    fn name(&self) -> &str {
        "extrapolation"
    }

    fn run(&self, problem: &Problem, settings: &Settings, key: StreamKey) -> Result<RunOutput> {
        let cfg = &settings.extrapolation;
        let ex = run_extrapolation(&*problem.model, &problem.space, cfg, key)?;
        let n = (cfg.samples * cfg.k_grid.len()) as u64;
        let mut diagnostics = vec![("beta_1", ex.beta_1), ("a", ex.a), ("b", ex.b), ("rms_residual", ex.rms_residual)];
        diagnostics.extend(ex.points.iter().map(|p| ("rho_hat", p.rho_hat)));
        Ok(RunOutput {
            thresholds: vec![cfg.threshold],
            probabilities: vec![ex.probability],
            calls: n,
            evaluations: n,
            partition: None,
            flags: Vec::new(),
            diagnostics,
        })
    }
}

pub type EstimatorRegistry = Registry<dyn Estimator>;

pub fn estimator_registry() -> EstimatorRegistry {
    let entries: [Arc<dyn Estimator>; 6] =
        [Arc::new(Basic), Arc::new(Dips), Arc::new(OuterMu), Arc::new(IpsFixed), Arc::new(IpsAdaptive), Arc::new(Extrapolate)];
    entries.into_iter().fold(Registry::new("estimator"), |r, e| r.register(e.name().to_string(), e))
}
