//! The combined estimator: the partition engine driven by the outer
//! objective, with a fixed-schedule IPS run at every box centroid. Box priors
//! weight the in-box stage ratios into per-threshold probabilities.

use std::sync::Arc;

use crate::direct::{run_search, stage_probabilities, EstimateMode, Partition, StopConfig};
use crate::error::{Error, Result};
use crate::evaluator::{CentroidEvaluator, CrudeEvaluator};
use crate::ips::{FiltrationSchedule, IpsEvaluator};
use crate::model::Model;
use crate::objective::Outer;
use crate::param_space::ParameterSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct DipsConfig {
    /// Particles per box (s).
    pub particles: usize,
    /// Evaluated boxes (q).
    pub boxes: usize,
    pub schedule: FiltrationSchedule,
    pub lambda: f64,
    /// Search controls other than the budget, which comes from `boxes`.
    pub stop: StopConfig,
}

impl Default for DipsConfig {
    fn default() -> Self {
        DipsConfig {
            particles: 1000,
            boxes: 16_700,
            schedule: FiltrationSchedule::aircraft_default(),
            lambda: 10_000.0,
            stop: StopConfig { q_stable: None, ..StopConfig::default() },
        }
    }
}

impl DipsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::usage(format!("particles per box must be at least 2, got {}", self.particles)));
        }
        if self.boxes == 0 {
            return Err(Error::usage("box budget must be at least 1"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::usage("lambda must be positive"));
        }
        self.stop.validate()
    }

    fn stop(&self) -> StopConfig {
        StopConfig { max_evals: self.boxes, ..self.stop.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct DipsRun {
    /// P(m_l) for every threshold of the schedule.
    pub probabilities: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub partition: Partition,
    /// No box ever recorded a hit at the final threshold.
    pub no_hits: bool,
}

fn finish(space: &ParameterSpace, thresholds: Vec<f64>, mut partition: Partition) -> Result<DipsRun> {
    partition.meta.params = space.params().iter().map(|p| p.name.clone()).collect();
    partition.meta.thresholds = thresholds.clone();
    let probabilities = stage_probabilities(&partition)?;
    let no_hits = partition.leaves.values().all(|b| b.ratios.last().is_none_or(|r| *r == 0.0));
    Ok(DipsRun { probabilities, thresholds, partition, no_hits })
}

fn search(space: &ParameterSpace, evaluator: &dyn CentroidEvaluator, lambda: f64, stop: &StopConfig, seed: u64) -> Result<Partition> {
    let last = evaluator.stages() - 1;
    run_search(space, evaluator, &Outer { lambda }, stop, EstimateMode::Weighted { stage: last }, seed)
}

pub fn run_dips(space: &ParameterSpace, model: Arc<dyn Model>, cfg: &DipsConfig, seed: u64) -> Result<DipsRun> {
    cfg.validate()?;
    let evaluator = IpsEvaluator::new(model, cfg.schedule.clone(), cfg.particles)?;
    let partition = search(space, &evaluator, cfg.lambda, &cfg.stop(), seed)?;
    finish(space, cfg.schedule.thresholds().to_vec(), partition)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterMuConfig {
    /// Instances per centroid (s).
    pub instances: usize,
    pub boxes: usize,
    /// Hit means d ≤ threshold; 0 in the reference setting.
    pub threshold: f64,
    pub lambda: f64,
    pub stop: StopConfig,
}

impl Default for OuterMuConfig {
    fn default() -> Self {
        OuterMuConfig {
            instances: 100,
            boxes: 250_000,
            threshold: 0.0,
            lambda: 10_000.0,
            stop: StopConfig { q_stable: None, ..StopConfig::default() },
        }
    }
}

/// Crude Monte Carlo variant: `s` instances per centroid, one hit ratio, no
/// filtration stages.
pub fn run_outer_mu(space: &ParameterSpace, model: Arc<dyn Model>, cfg: &OuterMuConfig, seed: u64) -> Result<DipsRun> {
    if cfg.boxes == 0 {
        return Err(Error::usage("box budget must be at least 1"));
    }
    if !(cfg.lambda > cfg.threshold) {
        return Err(Error::usage("lambda must exceed the threshold"));
    }
    let evaluator = CrudeEvaluator::new(model, vec![cfg.threshold], cfg.instances)?;
    let stop = StopConfig { max_evals: cfg.boxes, ..cfg.stop.clone() };
    let partition = search(space, &evaluator, cfg.lambda, &stop, seed)?;
    finish(space, vec![cfg.threshold], partition)
}

/// Probabilities recomputed from a stored partition alone.
pub fn recompute(partition: &Partition) -> Result<Vec<f64>> {
    stage_probabilities(partition)
}
