//! Objective functions scored at box centroids: the inner objective that
//! rewards density inside the target region, the mean-distance aggregate,
//! hit ratios, and the recursive outer objective that pushes refinement to
//! the rim of the target region.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::registry::Registry;
use crate::rng::{Domain, StreamKey};

pub const DEFAULT_LAMBDA: f64 = 10_000.0;

/// d if the point misses the target region, otherwise −g(x).
pub fn inner_objective(d: f64, density: f64, m: f64) -> f64 {
    if d > m {
        d
    } else {
        -density
    }
}

/// Miss distances of `s` independent instances at `x`. Instance j uses the
/// stream `key.child(Instance, j)`.
pub fn sample_distances(model: &dyn Model, x: &[f64], s: usize, key: StreamKey) -> Result<Vec<f64>> {
    if s == 0 {
        return Err(Error::usage("instance count must be at least 1"));
    }
    (0..s)
        .into_par_iter()
        .map(|j| {
            model
                .limit_state(x, key.child(Domain::Instance, j as u64))
                .map_err(|e| Error::InstanceEvaluation { instance: j, source: Box::new(e) })
        })
        .collect()
}

pub fn mean_distance(model: &dyn Model, x: &[f64], s: usize, key: StreamKey) -> Result<f64> {
    let d = sample_distances(model, x, s, key)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

pub fn hit_ratio(model: &dyn Model, x: &[f64], m: f64, s: usize, key: StreamKey) -> Result<f64> {
    let d = sample_distances(model, x, s, key)?;
    Ok(fraction_within(&d, m))
}

pub fn fraction_within(distances: &[f64], m: f64) -> f64 {
    distances.iter().filter(|&&d| d <= m).count() as f64 / distances.len() as f64
}

/// Everything measured at one centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEval {
    /// Miss distance d (single run) or the mean d̄ over instances.
    pub distance: f64,
    /// Cumulative hit ratio per filtration stage; the last entry is the
    /// target event.
    pub ratios: Vec<f64>,
    /// Trajectory segments simulated to produce this evaluation.
    pub calls: u64,
}

impl PointEval {
    pub fn final_ratio(&self) -> f64 {
        self.ratios.last().copied().unwrap_or(0.0)
    }
}

/// Per-centroid accumulator of the outer objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LineageState {
    pub base_mean: f64,
    pub base_ratio: f64,
    current: Option<f64>,
}

impl LineageState {
    pub fn new(base_mean: f64, base_ratio: f64) -> Self {
        LineageState { base_mean, base_ratio, current: None }
    }

    pub fn current(&self) -> Option<f64> {
        self.current
    }

    /// Value at the iteration that created the centroid.
    pub fn start(&mut self, lambda: f64) -> f64 {
        let v = if self.base_ratio == 0.0 { self.base_mean } else { self.base_mean + lambda * self.base_ratio };
        self.current = Some(v);
        v
    }

    /// Value at a later iteration, given the hit ratios of the current
    /// neighbors.
    pub fn advance(&mut self, lambda: f64, neighbor_ratios: &[f64]) -> Result<f64> {
        let prev = self.current.ok_or_else(|| Error::usage("outer objective advanced before its first value"))?;
        if self.base_ratio == 0.0 {
            return Ok(self.base_mean);
        }
        let v = prev + lambda * neighbor_ratios.iter().sum::<f64>();
        self.current = Some(v);
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    /// Target threshold distance.
    pub m: f64,
    pub lambda: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig { m: 0.0, lambda: DEFAULT_LAMBDA }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m >= 0.0) {
            return Err(Error::InvalidParameter { name: "m".into(), reason: format!("must be >= 0, got {}", self.m) });
        }
        if !(self.lambda > self.m) {
            return Err(Error::InvalidParameter {
                name: "lambda".into(),
                reason: format!("must exceed m = {}, got {}", self.m, self.lambda),
            });
        }
        Ok(())
    }
}

/// Scores a centroid for the partition engine (lower is more promising).
pub trait BoxObjective: Send + Sync {
    fn name(&self) -> &str;

    /// Score for a newly evaluated centroid.
    fn fresh(&self, eval: &PointEval, density: f64, lineage: &mut LineageState) -> f64;

    /// Score for a centroid carried over into the center child of a division.
    fn recentered(
        &self,
        eval: &PointEval,
        density: f64,
        lineage: &mut LineageState,
        neighbor_ratios: &[f64],
    ) -> Result<f64> {
        let _ = neighbor_ratios;
        Ok(self.fresh(eval, density, lineage))
    }

    /// Whether `recentered` reads neighbor ratios.
    fn uses_neighbors(&self) -> bool {
        false
    }
}

/// Plain minimization of the evaluated value.
pub struct RawValue;

impl BoxObjective for RawValue {
    fn name(&self) -> &str {
        "raw"
    }

    fn fresh(&self, eval: &PointEval, _density: f64, _lineage: &mut LineageState) -> f64 {
        eval.distance
    }
}

pub struct Inner {
    pub m: f64,
}

impl BoxObjective for Inner {
    fn name(&self) -> &str {
        "inner"
    }

    fn fresh(&self, eval: &PointEval, density: f64, _lineage: &mut LineageState) -> f64 {
        inner_objective(eval.distance, density, self.m)
    }
}

pub struct MeanDistance;

impl BoxObjective for MeanDistance {
    fn name(&self) -> &str {
        "mean-distance"
    }

    fn fresh(&self, eval: &PointEval, _density: f64, _lineage: &mut LineageState) -> f64 {
        eval.distance
    }
}

pub struct Outer {
    pub lambda: f64,
}

impl BoxObjective for Outer {
    fn name(&self) -> &str {
        "outer"
    }

    fn fresh(&self, _eval: &PointEval, _density: f64, lineage: &mut LineageState) -> f64 {
        lineage.start(self.lambda)
    }

    fn recentered(
        &self,
        _eval: &PointEval,
        _density: f64,
        lineage: &mut LineageState,
        neighbor_ratios: &[f64],
    ) -> Result<f64> {
        lineage.advance(self.lambda, neighbor_ratios)
    }

    fn uses_neighbors(&self) -> bool {
        true
    }
}

pub type ObjectiveFactory = dyn Fn(&ObjectiveConfig) -> Arc<dyn BoxObjective> + Send + Sync;

pub fn objective_registry() -> Registry<ObjectiveFactory> {
    Registry::new("objective")
        .register("raw", Arc::new(|_: &ObjectiveConfig| Arc::new(RawValue) as Arc<dyn BoxObjective>) as Arc<ObjectiveFactory>)
        .register("inner", Arc::new(|c: &ObjectiveConfig| Arc::new(Inner { m: c.m }) as Arc<dyn BoxObjective>))
        .register("mean-distance", Arc::new(|_: &ObjectiveConfig| Arc::new(MeanDistance) as Arc<dyn BoxObjective>))
        .register("outer", Arc::new(|c: &ObjectiveConfig| Arc::new(Outer { lambda: c.lambda }) as Arc<dyn BoxObjective>))
}
