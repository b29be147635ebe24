//! Centroid evaluators: how the partition engine turns a parameter point
//! into a distance and per-stage hit ratios.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::objective::{fraction_within, sample_distances, PointEval};
use crate::rng::StreamKey;

pub trait CentroidEvaluator: Send + Sync {
    fn name(&self) -> &str;

    /// Number of ratio entries every evaluation returns.
    fn stages(&self) -> usize;

    fn evaluate(&self, x: &[f64], key: StreamKey) -> Result<PointEval>;
}

pub(crate) fn check_schedule(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::usage("threshold schedule is empty"));
    }
    if thresholds.iter().any(|m| !(*m >= 0.0)) {
        return Err(Error::usage("thresholds must be nonnegative"));
    }
    if thresholds.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::usage("thresholds must be strictly decreasing"));
    }
    Ok(())
}

/// One run per centroid; ratios are indicators 1{d ≤ m_l}.
pub struct CrispEvaluator {
    pub model: Arc<dyn Model>,
    pub thresholds: Vec<f64>,
}

impl CrispEvaluator {
    pub fn new(model: Arc<dyn Model>, thresholds: Vec<f64>) -> Result<Self> {
        check_schedule(&thresholds)?;
        Ok(CrispEvaluator { model, thresholds })
    }
}

impl CentroidEvaluator for CrispEvaluator {
    fn name(&self) -> &str {
        "crisp"
    }

    fn stages(&self) -> usize {
        self.thresholds.len()
    }

    fn evaluate(&self, x: &[f64], key: StreamKey) -> Result<PointEval> {
        let d = self.model.limit_state(x, key)?;
        let ratios = self.thresholds.iter().map(|&m| if d <= m { 1.0 } else { 0.0 }).collect();
        Ok(PointEval { distance: d, ratios, calls: 1 })
    }
}

/// `s` independent instances per centroid; distance is the mean d̄ and the
/// ratios are hit fractions.
pub struct CrudeEvaluator {
    pub model: Arc<dyn Model>,
    pub thresholds: Vec<f64>,
    pub instances: usize,
}

impl CrudeEvaluator {
    pub fn new(model: Arc<dyn Model>, thresholds: Vec<f64>, instances: usize) -> Result<Self> {
        check_schedule(&thresholds)?;
        if instances == 0 {
            return Err(Error::usage("instances per centroid must be at least 1"));
        }
        Ok(CrudeEvaluator { model, thresholds, instances })
    }
}

impl CentroidEvaluator for CrudeEvaluator {
    fn name(&self) -> &str {
        "crude"
    }

    fn stages(&self) -> usize {
        self.thresholds.len()
    }

    fn evaluate(&self, x: &[f64], key: StreamKey) -> Result<PointEval> {
        let d = sample_distances(self.model.as_ref(), x, self.instances, key)?;
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let ratios = self.thresholds.iter().map(|&m| fraction_within(&d, m)).collect();
        Ok(PointEval { distance: mean, ratios, calls: d.len() as u64 })
    }
}

/// Wraps a plain function of the physical point; used when the engine runs
/// as an optimizer.
pub struct FnEvaluator<F> {
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnEvaluator<F> {
    pub fn new(f: F) -> Self {
        FnEvaluator { f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> CentroidEvaluator for FnEvaluator<F> {
    fn name(&self) -> &str {
        "function"
    }

    fn stages(&self) -> usize {
        0
    }

    fn evaluate(&self, x: &[f64], _key: StreamKey) -> Result<PointEval> {
        Ok(PointEval { distance: (self.f)(x), ratios: Vec::new(), calls: 1 })
    }
}
