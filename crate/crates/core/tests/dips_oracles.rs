use std::sync::Arc;

use dips_core::dips::{run_outer_mu, OuterMuConfig};
use dips_core::estimator::{run_key, Estimator, IpsFixed, Problem, Settings};
use dips_core::ips::FiltrationSchedule;
use dips_core::param_space::{Distribution, ParameterSpace, StochasticParameter};
use dips_core::stats::{compare_runs, RunSample};
use dips_core::toys::{DriftMaxToy, NoisyThreshold, SdeBarrier};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Crude Monte Carlo of the SDE barrier toy under its priors: 4e8 paths,
/// 4097 reached the barrier.
const SDE_ORACLE_SAMPLES: u64 = 400_000_000;
const SDE_ORACLE_HITS: u64 = 4097;

#[test]
fn outer_mu_tracks_a_normal_tail() {
    let model = NoisyThreshold { level: 5.26, noise_sd: 1.0, scale: 100.0 };
    let exact = model.exact_probability();
    assert!((0.9e-4..1.1e-4).contains(&exact));
    let space = ParameterSpace::new(vec![StochasticParameter::with_default_bounds(
        "x",
        Distribution::normal(0.0, 1.0).unwrap(),
    )
    .unwrap()])
    .unwrap();
    let cfg = OuterMuConfig { instances: 100, boxes: 1001, lambda: 1000.0, ..OuterMuConfig::default() };
    let model = Arc::new(model);
    let mean = (0..32u64)
        .map(|r| run_outer_mu(&space, model.clone(), &cfg, run_key(21, r).0).unwrap().probabilities[0])
        .sum::<f64>()
        / 32.0;
    assert!(mean / exact < 2.0 && exact / mean < 2.0, "mean {mean:e} vs {exact:e}");
}

#[test]
fn inserting_a_threshold_keeps_the_estimate() {
    let space = ParameterSpace::new(vec![StochasticParameter::with_default_bounds(
        "unused",
        Distribution::normal(0.0, 1.0).unwrap(),
    )
    .unwrap()])
    .unwrap();
    let problem = Problem::new(Arc::new(DriftMaxToy::default()), Arc::new(space)).unwrap();
    let sample = |thresholds: Vec<f64>, seed: u64| {
        let settings = Settings { particles: 4000, schedule: FiltrationSchedule::new(thresholds).unwrap(), ..Settings::default() };
        let v: Vec<f64> = (0..64u64).map(|r| IpsFixed.run(&problem, &settings, run_key(seed, r)).unwrap().final_probability()).collect();
        RunSample::new(v).unwrap()
    };
    let a = sample(vec![4.0, 3.0, 2.0, 1.0, 0.0], 31);
    let b = sample(vec![4.0, 3.0, 2.0, 1.0, 0.5, 0.0], 32);
    let test = compare_runs(&a, &b, 0.05).unwrap();
    assert!(!test.reject, "t = {}, p = {}", test.t, test.p_value);
}

/// Independent re-derivation of the frozen oracle (about a minute per 1e8
/// paths on one core).
#[test]
#[ignore]
fn recompute_sde_oracle() {
    let toy = SdeBarrier::default();
    let n = 100_000_000u64;
    let chunks = 1000u64;
    let dt = toy.horizon / toy.steps as f64;
    let sd = toy.sigma * dt.sqrt();
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5DE0 + c);
            let mut hits = 0u64;
            for _ in 0..n / chunks {
                let a: f64 = rng.sample(StandardNormal);
                let g: f64 = rng.sample(StandardNormal);
                let mu = 1.0 + g;
                let (mut x, mut top) = (a, a);
                for _ in 0..toy.steps {
                    let w: f64 = rng.sample(StandardNormal);
                    x += mu * dt + sd * w;
                    top = top.max(x);
                }
                hits += u64::from(top >= toy.barrier);
            }
            hits
        })
        .sum();
    // two binomial proportions, 99% two-sided
    let (p1, p0) = (hits as f64 / n as f64, SDE_ORACLE_HITS as f64 / SDE_ORACLE_SAMPLES as f64);
    let se = (p1 / n as f64 + p0 / SDE_ORACLE_SAMPLES as f64).sqrt();
    assert!((p1 - p0).abs() < 2.576 * se, "recomputed {p1:e} vs frozen {p0:e}");
}
