//! Limit-state models: a parameter vector x plus a noise stream produce a
//! particle whose running minimum distance to the target region can be
//! advanced threshold by threshold.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::rng::StreamKey;

/// Result of advancing a particle toward a distance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Passage {
    /// The running minimum distance dropped to the threshold or below; the
    /// particle stopped at that first-passage state.
    Reached,
    /// The trajectory terminated without reaching the threshold.
    Terminated,
}

/// One stochastic system instance. Cloning a particle snapshots its full
/// state including the noise cursor.
pub trait Particle: Send + Sync {
    /// Running minimum distance d so far.
    fn min_distance(&self) -> f64;

    /// Advance until `min_distance() <= threshold` or the run terminates.
    fn run_until(&mut self, threshold: f64) -> Result<Passage>;

    fn is_finished(&self) -> bool;

    /// Replace the noise stream from the current step on.
    fn reseed(&mut self, key: StreamKey);

    fn clone_box(&self) -> Box<dyn Particle>;

    /// Run to termination and return the miss distance.
    fn run_to_end(&mut self) -> Result<f64> {
        self.run_until(f64::NEG_INFINITY)?;
        Ok(self.min_distance())
    }
}

impl Clone for Box<dyn Particle> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    /// Number of search parameters the model consumes.
    fn dim(&self) -> usize;

    /// True when the outcome does not depend on the noise stream.
    fn is_deterministic(&self) -> bool;

    fn spawn(&self, x: &[f64], key: StreamKey) -> Result<Box<dyn Particle>>;

    /// d(ξ) for one complete instance.
    fn limit_state(&self, x: &[f64], key: StreamKey) -> Result<f64> {
        self.spawn(x, key)?.run_to_end()
    }
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.len() });
    }
    Ok(())
}

/// Wraps a model and counts every `run_until` call on its particles (the
/// NOFC unit: one simulated trajectory segment).
pub struct Counted<M> {
    inner: M,
    calls: Arc<AtomicU64>,
}

impl<M: Model> Counted<M> {
    pub fn new(inner: M) -> Self {
        Counted { inner, calls: Arc::new(AtomicU64::new(0)) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

struct CountedParticle {
    inner: Box<dyn Particle>,
    calls: Arc<AtomicU64>,
}

impl Particle for CountedParticle {
    fn min_distance(&self) -> f64 {
        self.inner.min_distance()
    }

    fn run_until(&mut self, threshold: f64) -> Result<Passage> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.run_until(threshold)
    }

    fn is_finished(&self) -> bool {
        self.inner.is_finished()
    }

    fn reseed(&mut self, key: StreamKey) {
        self.inner.reseed(key)
    }

    fn clone_box(&self) -> Box<dyn Particle> {
        Box::new(CountedParticle { inner: self.inner.clone_box(), calls: self.calls.clone() })
    }
}

impl<M: Model> Model for Counted<M> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }

    fn spawn(&self, x: &[f64], key: StreamKey) -> Result<Box<dyn Particle>> {
        let inner = self.inner.spawn(x, key)?;
        Ok(Box::new(CountedParticle { inner, calls: self.calls.clone() }))
    }
}

/// Named model instances, selected at runtime.
pub type ModelRegistry = Registry<dyn Model>;

impl<M: Model + ?Sized> Model for Arc<M> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }

    fn spawn(&self, x: &[f64], key: StreamKey) -> Result<Box<dyn Particle>> {
        (**self).spawn(x, key)
    }
}
