//! Synthetic models with known rare-event probabilities, used to check the
//! estimators against closed-form or brute-force answers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::model::{check_dim, Model, Particle, Passage};
use crate::rng::StreamKey;
use crate::param_space::{Distribution, ParameterSpace, StochasticParameter};
use crate::special::{norm_isf, norm_sf};

/// Particle whose whole outcome is fixed at spawn time.
#[derive(Debug, Clone)]
pub struct StaticParticle {
    distance: f64,
    finished: bool,
}

impl StaticParticle {
    pub fn new(distance: f64) -> Self {
        StaticParticle { distance, finished: false }
    }
}

impl Particle for StaticParticle {
    fn min_distance(&self) -> f64 {
        if self.finished {
            self.distance
        } else {
            f64::INFINITY
        }
    }

    fn run_until(&mut self, threshold: f64) -> Result<Passage> {
        self.finished = true;
        Ok(if self.distance <= threshold { Passage::Reached } else { Passage::Terminated })
    }

    fn is_finished(&self) -> bool {
        self.finished
    }

    fn reseed(&mut self, _key: StreamKey) {}

    fn clone_box(&self) -> Box<dyn Particle> {
        Box::new(self.clone())
    }
}

/// Deterministic 2-D corner region: d(x) = scale · Σ max(0, corner − x_i).
/// With standard normal inputs the target {d = 0} has probability Q(corner)².
#[derive(Debug, Clone)]
pub struct GaussianCorner {
    pub corner: f64,
    pub scale: f64,
    pub dims: usize,
}

impl Default for GaussianCorner {
    fn default() -> Self {
        GaussianCorner { corner: 4.5, scale: 100.0, dims: 2 }
    }
}

impl GaussianCorner {
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.scale * x.iter().map(|&v| (self.corner - v).max(0.0)).sum::<f64>()
    }
}

impl Model for GaussianCorner {
    fn name(&self) -> &str {
        "gaussian-corner"
    }

    fn dim(&self) -> usize {
        self.dims
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn spawn(&self, x: &[f64], _key: StreamKey) -> Result<Box<dyn Particle>> {
        check_dim(self.dims, x)?;
        Ok(Box::new(StaticParticle::new(self.distance(x))))
    }
}

/// Linear limit state d(x) = max(0, c − a·x). For standard normal inputs the
/// reliability index is c / ‖a‖.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl LinearGaussian {
    pub fn reliability_index(&self) -> f64 {
        self.offset / self.coeffs.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

impl Model for LinearGaussian {
    fn name(&self) -> &str {
        "linear-gaussian"
    }

    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn spawn(&self, x: &[f64], _key: StreamKey) -> Result<Box<dyn Particle>> {
        check_dim(self.coeffs.len(), x)?;
        let s: f64 = self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        Ok(Box::new(StaticParticle::new((self.offset - s).max(0.0))))
    }
}

/// One parameter plus one internal Gaussian draw: hit when
/// x + noise_sd·ε ≥ level. With a standard normal x the hit probability is
/// Q(level / √(1 + noise_sd²)).
#[derive(Debug, Clone)]
pub struct NoisyThreshold {
    pub level: f64,
    pub noise_sd: f64,
    pub scale: f64,
}

impl NoisyThreshold {
    pub fn exact_probability(&self) -> f64 {
        norm_sf(self.level / (1.0 + self.noise_sd * self.noise_sd).sqrt())
    }
}

impl Model for NoisyThreshold {
    fn name(&self) -> &str {
        "noisy-threshold"
    }

    fn dim(&self) -> usize {
        1
    }

    fn is_deterministic(&self) -> bool {
        self.noise_sd == 0.0
    }

    fn spawn(&self, x: &[f64], key: StreamKey) -> Result<Box<dyn Particle>> {
        check_dim(1, x)?;
        let eps: f64 = key.rng().sample(StandardNormal);
        let y = x[0] + self.noise_sd * eps;
        Ok(Box::new(StaticParticle::new(self.scale * (self.level - y).max(0.0))))
    }
}

/// Parameter-free Gaussian tail toy for splitting: d = level − Z with
/// Z = Q⁻¹(exp(−2μM)), where M is the all-time maximum of a Brownian motion
/// with drift −μ. M is exponential with rate 2μ, so P(Z ≥ z) = Q(z) for
/// every z, and M is memoryless: a particle stopped at first passage of
/// one level has the same chance of climbing further whatever the time it
/// got there. Maxima between grid points are sampled exactly from the
/// Brownian bridge. A path is dropped once it falls `cutoff` below its
/// running maximum, which loses mass exp(−2μ·cutoff).
#[derive(Debug, Clone)]
pub struct DriftMaxToy {
    pub level: f64,
    pub drift: f64,
    pub dt: f64,
    pub cutoff: f64,
}

impl Default for DriftMaxToy {
    fn default() -> Self {
        DriftMaxToy { level: 6.0, drift: 1.0, dt: 0.1, cutoff: 12.0 }
    }
}

impl DriftMaxToy {
    pub fn exact_probability(&self, threshold: f64) -> f64 {
        norm_sf(self.level - threshold)
    }

    fn z_of_max(&self, m: f64) -> f64 {
        norm_isf((-2.0 * self.drift * m).exp())
    }

    /// Running-maximum level equivalent to distance ≤ threshold.
    fn max_level(&self, threshold: f64) -> f64 {
        -norm_sf(self.level - threshold).ln() / (2.0 * self.drift)
    }
}

#[derive(Clone)]
struct DriftMaxParticle {
    toy: DriftMaxToy,
    value: f64,
    running_max: f64,
    finished: bool,
    rng: ChaCha8Rng,
}

impl DriftMaxParticle {
    fn advance(&mut self) {
        let dt = self.toy.dt;
        let g: f64 = self.rng.sample(StandardNormal);
        let u: f64 = 1.0 - self.rng.random::<f64>(); // (0, 1]
        let next = self.value - self.toy.drift * dt + dt.sqrt() * g;
        let d = next - self.value;
        let bridge_max = 0.5 * (self.value + next + (d * d - 2.0 * dt * u.ln()).sqrt());
        self.running_max = self.running_max.max(bridge_max);
        self.value = next;
        if self.value < self.running_max - self.toy.cutoff {
            self.finished = true;
        }
    }
}

impl Particle for DriftMaxParticle {
    fn min_distance(&self) -> f64 {
        (self.toy.level - self.toy.z_of_max(self.running_max)).max(0.0)
    }

    fn run_until(&mut self, threshold: f64) -> Result<Passage> {
        let target = if threshold < 0.0 { f64::INFINITY } else { self.toy.max_level(threshold) };
        if self.running_max >= target {
            return Ok(Passage::Reached);
        }
        while !self.finished {
            self.advance();
            if self.running_max >= target {
                return Ok(Passage::Reached);
            }
        }
        Ok(Passage::Terminated)
    }

    fn is_finished(&self) -> bool {
        self.finished
    }

    fn reseed(&mut self, key: StreamKey) {
        self.rng = key.rng();
    }

    fn clone_box(&self) -> Box<dyn Particle> {
        Box::new(self.clone())
    }
}

impl Model for DriftMaxToy {
    fn name(&self) -> &str {
        "drift-max"
    }

    fn dim(&self) -> usize {
        0
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn spawn(&self, x: &[f64], key: StreamKey) -> Result<Box<dyn Particle>> {
        check_dim(0, x)?;
        Ok(Box::new(DriftMaxParticle { toy: self.clone(), value: 0.0, running_max: 0.0, finished: false, rng: key.rng() }))
    }
}

/// Scalar SDE dX = μ dt + σ dW on [0, horizon], X(0) = offset, integrated by
/// Euler–Maruyama. Parameters x = (offset, μ). Distance is the gap between the
/// barrier and the running maximum of X on the grid, X(0) included. With the
/// priors of [`SdeBarrier::prior_space`] the hit probability is about 1e-5.
#[derive(Debug, Clone)]
pub struct SdeBarrier {
    pub barrier: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub steps: u32,
}

impl SdeBarrier {
    /// offset ~ N(0, 1), drift ~ N(1, 1), default tail bounds.
    pub fn prior_space() -> ParameterSpace {
        let p = |name: &str, mean: f64| {
            StochasticParameter::with_default_bounds(name, Distribution::Normal { mean, std_dev: 1.0 })
                .expect("valid prior")
        };
        ParameterSpace::new(vec![p("offset", 0.0), p("drift", 1.0)]).expect("valid space")
    }
}

impl Default for SdeBarrier {
    fn default() -> Self {
        SdeBarrier { barrier: 8.4, sigma: 1.0, horizon: 1.0, steps: 50 }
    }
}

#[derive(Clone)]
struct SdeParticle {
    model: SdeBarrier,
    drift: f64,
    step: u32,
    value: f64,
    running_max: f64,
    rng: ChaCha8Rng,
}

impl SdeParticle {
    fn distance(&self) -> f64 {
        (self.model.barrier - self.running_max).max(0.0)
    }
}

impl Particle for SdeParticle {
    fn min_distance(&self) -> f64 {
        self.distance()
    }

    fn run_until(&mut self, threshold: f64) -> Result<Passage> {
        if self.distance() <= threshold {
            return Ok(Passage::Reached);
        }
        let dt = self.model.horizon / self.model.steps as f64;
        let sd = self.model.sigma * dt.sqrt();
        while !self.is_finished() {
            let g: f64 = self.rng.sample(StandardNormal);
            self.value += self.drift * dt + sd * g;
            self.step += 1;
            if self.value > self.running_max {
                self.running_max = self.value;
            }
            if self.distance() <= threshold {
                return Ok(Passage::Reached);
            }
        }
        Ok(Passage::Terminated)
    }

    fn is_finished(&self) -> bool {
        self.step >= self.model.steps || self.running_max >= self.model.barrier
    }

    fn reseed(&mut self, key: StreamKey) {
        self.rng = key.rng();
    }

    fn clone_box(&self) -> Box<dyn Particle> {
        Box::new(self.clone())
    }
}

impl Model for SdeBarrier {
    fn name(&self) -> &str {
        "sde-barrier"
    }

    fn dim(&self) -> usize {
        2
    }

    fn is_deterministic(&self) -> bool {
        self.sigma == 0.0
    }

    fn spawn(&self, x: &[f64], key: StreamKey) -> Result<Box<dyn Particle>> {
        check_dim(2, x)?;
        Ok(Box::new(SdeParticle {
            model: self.clone(),
            drift: x[1],
            step: 0,
            value: x[0],
            running_max: x[0],
            rng: key.rng(),
        }))
    }
}
