//! Interacting particle system splitting over nested distance thresholds.
//!
//! A stage keeps the particles whose running minimum distance reaches the
//! stage threshold before their run terminates. Survivors are stopped at
//! their first-passage state and multinomially resampled back to the stage
//! size; each offspring continues on its own noise branch.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluator::{check_schedule, CentroidEvaluator};
use crate::model::{Model, Particle, Passage};
use crate::objective::PointEval;
use crate::param_space::ParameterSpace;
use crate::rng::{Domain, StreamKey};

/// Nested thresholds m_1 > … > m_N ≥ 0 (feet for the aircraft model).
#[derive(Debug, Clone, PartialEq)]
pub struct FiltrationSchedule {
    thresholds: Vec<f64>,
}

impl FiltrationSchedule {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        check_schedule(&thresholds)?;
        Ok(FiltrationSchedule { thresholds })
    }

    /// The 14 aircraft stages, 1000 ft down to contact.
    pub fn aircraft_default() -> Self {
        let t = [1000.0, 900.0, 800.0, 700.0, 600.0, 450.0, 300.0, 225.0, 150.0, 100.0, 75.0, 50.0, 25.0, 0.0];
        FiltrationSchedule { thresholds: t.to_vec() }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageResult {
    pub threshold: f64,
    pub trials: u64,
    pub survivors: u64,
    pub rate: f64,
    pub cumulative: f64,
}

/// Where stage-1 particles get their parameter vector.
#[derive(Clone)]
pub enum Launch {
    Fixed(Vec<f64>),
    /// Independent draws from the truncated marginals.
    Prior(Arc<ParameterSpace>),
}

impl Launch {
    fn point(&self, key: StreamKey) -> Result<Vec<f64>> {
        match self {
            Launch::Fixed(x) => Ok(x.clone()),
            Launch::Prior(space) => {
                let mut rng = key.rng();
                let u: Vec<f64> = (0..space.dim()).map(|_| rng.random::<f64>()).collect();
                space.to_physical(&u)
            }
        }
    }

    fn spawn(&self, model: &dyn Model, key: StreamKey, index: u64) -> Result<Box<dyn Particle>> {
        let x = self.point(key.child(Domain::Launch, index))?;
        model.spawn(&x, key.child(Domain::Particle, index))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpsRun {
    pub stages: Vec<StageResult>,
    /// Stage index (0-based) at which no particle survived.
    pub extinct_at: Option<usize>,
    /// Product of the stage rates over the full schedule.
    pub probability: f64,
    /// Mean running-minimum distance of the stage-1 particles after stage 1.
    pub launch_mean_distance: f64,
    /// Particle runs started or continued.
    pub trials: u64,
    pub budget_exhausted: bool,
}

impl IpsRun {
    /// Cumulative probabilities per scheduled threshold; stages never reached
    /// after an extinction read as zero.
    pub fn cumulative(&self, stages: usize) -> Vec<f64> {
        (0..stages).map(|l| self.stages.get(l).map_or(0.0, |s| s.cumulative)).collect()
    }
}

/// Multinomial parent indices: `s` uniform draws from `0..n`.
pub fn resample_indices(n: usize, s: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..s).map(|_| rng.random_range(0..n)).collect()
}

/// Draws `s` offspring uniformly from the survivors. Offspring `j` continues
/// on the noise branch `key.child(Offspring, j)`.
pub fn resample(survivors: &[Box<dyn Particle>], s: usize, key: StreamKey) -> Result<Vec<Box<dyn Particle>>> {
    if survivors.is_empty() {
        return Err(Error::usage("cannot resample an empty survivor set"));
    }
    let mut rng = key.child(Domain::Resample, 0).rng();
    let picks = resample_indices(survivors.len(), s, &mut rng);
    Ok(picks
        .into_iter()
        .enumerate()
        .map(|(j, i)| {
            let mut p = survivors[i].clone_box();
            p.reseed(key.child(Domain::Offspring, j as u64));
            p
        })
        .collect())
}

fn push_stage(stages: &mut Vec<StageResult>, threshold: f64, trials: u64, survivors: u64) {
    let rate = if trials == 0 { 0.0 } else { survivors as f64 / trials as f64 };
    let prev = stages.last().map_or(1.0, |s| s.cumulative);
    stages.push(StageResult { threshold, trials, survivors, rate, cumulative: prev * rate });
}

fn product(stages: &[StageResult]) -> f64 {
    stages.iter().map(|s| s.rate).product()
}

/// Fixed-schedule splitting with `s` particles per stage.
pub fn run_fixed_ips(
    model: &dyn Model,
    launch: &Launch,
    schedule: &FiltrationSchedule,
    s: usize,
    key: StreamKey,
) -> Result<IpsRun> {
    if s < 2 {
        return Err(Error::usage(format!("particles per stage must be at least 2, got {s}")));
    }
    let stage_key = |l: usize| key.child(Domain::Stage, l as u64);
    let mut particles: Vec<Box<dyn Particle>> =
        (0..s).into_par_iter().map(|j| launch.spawn(model, stage_key(0), j as u64)).collect::<Result<_>>()?;

    let mut stages = Vec::with_capacity(schedule.len());
    let mut launch_mean_distance = 0.0;
    let mut trials = 0;
    for (l, &m) in schedule.thresholds().iter().enumerate() {
        let passage: Vec<Passage> = particles.par_iter_mut().map(|p| p.run_until(m)).collect::<Result<_>>()?;
        if l == 0 {
            launch_mean_distance = particles.iter().map(|p| p.min_distance()).sum::<f64>() / s as f64;
        }
        trials += s as u64;
        let survivors: Vec<Box<dyn Particle>> = particles
            .into_iter()
            .zip(&passage)
            .filter(|(_, p)| **p == Passage::Reached)
            .map(|(b, _)| b)
            .collect();
        push_stage(&mut stages, m, s as u64, survivors.len() as u64);
        if survivors.is_empty() {
            return Ok(IpsRun {
                stages,
                extinct_at: Some(l),
                probability: 0.0,
                launch_mean_distance,
                trials,
                budget_exhausted: false,
            });
        }
        if l + 1 == schedule.len() {
            break;
        }
        particles = resample(&survivors, s, stage_key(l + 1))?;
    }
    Ok(IpsRun { probability: product(&stages), stages, extinct_at: None, launch_mean_distance, trials, budget_exhausted: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    pub initial_threshold: f64,
    /// Target event threshold; the run ends after a stage at this level.
    pub target: f64,
    /// Survivors collected per stage (n_s).
    pub survivors: usize,
    /// Consecutive failures that cancel a stage (M_f).
    pub max_failures: u64,
    /// Smallest threshold gap worth splitting (δ_m).
    pub min_gap: f64,
    /// Stage-1 restart factor.
    pub enlarge: f64,
    pub trial_cap: u64,
    /// Candidates evaluated concurrently before the sequential scan.
    pub batch: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            initial_threshold: 1000.0,
            target: 0.0,
            survivors: 100,
            max_failures: 1000,
            min_gap: 1.0,
            enlarge: 1.5,
            trial_cap: 10_000_000,
            batch: 256,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.survivors == 0 || self.max_failures == 0 || self.trial_cap == 0 || self.batch == 0 {
            return Err(Error::usage("survivors, max failures, trial cap and batch must be positive"));
        }
        if !(self.min_gap > 0.0) {
            return Err(Error::usage("minimum threshold gap must be positive"));
        }
        if !(self.enlarge > 1.0) {
            return Err(Error::usage("enlargement factor must exceed 1"));
        }
        if !(self.target >= 0.0 && self.initial_threshold >= self.target) {
            return Err(Error::usage("need initial threshold >= target >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRun {
    pub stages: Vec<StageResult>,
    pub probability: f64,
    pub restarts: u32,
    pub backtracks: u32,
    pub trials: u64,
    pub budget_exhausted: bool,
}

impl AdaptiveRun {
    pub fn thresholds(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.threshold).collect()
    }
}

/// Closer intermediate threshold between the last passed level and the one
/// that failed.
pub fn backtrack_threshold(previous: f64, failed: f64) -> f64 {
    if failed > 0.0 {
        (previous * failed).sqrt()
    } else {
        0.5 * (previous + failed)
    }
}

enum StageOutcome {
    Done { trials: u64, survivors: Vec<Box<dyn Particle>> },
    Cancelled { trials: u64 },
    Exhausted { trials: u64, survivors: u64 },
}

/// Samples candidates until `n_s` reach `m`. Candidates are evaluated in
/// fixed-size batches and scanned in index order, so the outcome does not
/// depend on the worker count.
fn adaptive_stage(
    candidate: &(dyn Fn(u64) -> Result<Box<dyn Particle>> + Sync),
    m: f64,
    cfg: &AdaptiveConfig,
    may_cancel: bool,
    spent: u64,
) -> Result<StageOutcome> {
    let mut survivors = Vec::with_capacity(cfg.survivors);
    let mut trials = 0u64;
    let mut failures = 0u64;
    let mut next = 0u64;
    loop {
        let batch: Vec<(Box<dyn Particle>, Passage)> = (next..next + cfg.batch as u64)
            .into_par_iter()
            .map(|j| {
                let mut p = candidate(j)?;
                let r = p.run_until(m)?;
                Ok((p, r))
            })
            .collect::<Result<_>>()?;
        next += cfg.batch as u64;
        for (p, r) in batch {
            trials += 1;
            if r == Passage::Reached {
                survivors.push(p);
                failures = 0;
                if survivors.len() == cfg.survivors {
                    return Ok(StageOutcome::Done { trials, survivors });
                }
            } else {
                failures += 1;
                if may_cancel && failures >= cfg.max_failures {
                    return Ok(StageOutcome::Cancelled { trials });
                }
            }
            if spent + trials >= cfg.trial_cap {
                return Ok(StageOutcome::Exhausted { trials, survivors: survivors.len() as u64 });
            }
        }
    }
}

/// Splitting with thresholds chosen on the fly. Each stage first aims at the
/// target; after `max_failures` consecutive misses the stage is cancelled and
/// retried at a closer intermediate level from the same parents (stage 1
/// instead restarts with the threshold enlarged). Once the gap to the last
/// passed level falls below `min_gap` the stage samples until it completes.
pub fn run_adaptive_ips(model: &dyn Model, launch: &Launch, cfg: &AdaptiveConfig, key: StreamKey) -> Result<AdaptiveRun> {
    cfg.validate()?;
    let mut stages: Vec<StageResult> = Vec::new();
    let mut parents: Vec<Box<dyn Particle>> = Vec::new();
    let mut m = cfg.initial_threshold;
    let mut restarts = 0;
    let mut backtracks = 0;
    let mut trials = 0u64;
    let mut attempt = 0u64;
    loop {
        let attempt_key = key.child(Domain::Attempt, attempt);
        attempt += 1;
        let first = stages.is_empty();
        let previous = stages.last().map(|s| s.threshold);
        let may_cancel = match previous {
            None => true,
            Some(prev) => prev - backtrack_threshold(prev, m) >= cfg.min_gap,
        };
        let outcome = if first {
            let spawn = |j: u64| launch.spawn(model, attempt_key, j);
            adaptive_stage(&spawn, m, cfg, may_cancel, trials)?
        } else {
            let pool = &parents;
            let offspring = |j: u64| {
                let mut rng = attempt_key.child(Domain::Resample, j).rng();
                let mut p = pool[rng.random_range(0..pool.len())].clone_box();
                p.reseed(attempt_key.child(Domain::Offspring, j));
                Ok(p)
            };
            adaptive_stage(&offspring, m, cfg, may_cancel, trials)?
        };
        match outcome {
            StageOutcome::Done { trials: t, survivors } => {
                trials += t;
                push_stage(&mut stages, m, t, survivors.len() as u64);
                if m <= cfg.target {
                    break;
                }
                parents = survivors;
                m = cfg.target;
            }
            StageOutcome::Cancelled { trials: t } => {
                trials += t;
                match previous {
                    None => {
                        restarts += 1;
                        m = (m * cfg.enlarge).max(cfg.min_gap);
                    }
                    Some(prev) => {
                        backtracks += 1;
                        m = backtrack_threshold(prev, m);
                    }
                }
            }
            StageOutcome::Exhausted { trials: t, survivors } => {
                trials += t;
                push_stage(&mut stages, m, t, survivors);
                return Ok(AdaptiveRun { probability: 0.0, stages, restarts, backtracks, trials, budget_exhausted: true });
            }
        }
    }
    Ok(AdaptiveRun { probability: product(&stages), stages, restarts, backtracks, trials, budget_exhausted: false })
}

/// Runs a fixed-schedule IPS at each centroid; the ratios are the cumulative
/// stage products and the distance is the stage-1 mean running minimum.
pub struct IpsEvaluator {
    pub model: Arc<dyn Model>,
    pub schedule: FiltrationSchedule,
    pub particles: usize,
}

impl IpsEvaluator {
    pub fn new(model: Arc<dyn Model>, schedule: FiltrationSchedule, particles: usize) -> Result<Self> {
        if particles < 2 {
            return Err(Error::usage(format!("particles per box must be at least 2, got {particles}")));
        }
        Ok(IpsEvaluator { model, schedule, particles })
    }
}

impl CentroidEvaluator for IpsEvaluator {
    fn name(&self) -> &str {
        "ips"
    }

    fn stages(&self) -> usize {
        self.schedule.len()
    }

    fn evaluate(&self, x: &[f64], key: StreamKey) -> Result<PointEval> {
        let run = run_fixed_ips(self.model.as_ref(), &Launch::Fixed(x.to_vec()), &self.schedule, self.particles, key)?;
        Ok(PointEval { distance: run.launch_mean_distance, ratios: run.cumulative(self.schedule.len()), calls: run.trials })
    }
}
