use std::sync::{Arc, OnceLock};

use dips_core::direct::{run_search, stage_probabilities, EstimateMode, Partition, StopConfig};
use dips_core::error::Result;
use dips_core::evaluator::CrispEvaluator;
use dips_core::model::{Model, Particle};
use dips_core::objective::Inner;
use dips_core::param_space::{Distribution, Moment, ParameterSpace, StochasticParameter};
use dips_core::rng::StreamKey;
use dips_core::special::{norm_pdf, norm_sf};
use dips_core::toys::{GaussianCorner, StaticParticle};
use dips_core::uncertainty::{perturbed_space, reweight, reweighted_priors, sensitivity, Change, MomentPerturbation};

fn corner_space(mean1: f64, sd1: f64) -> ParameterSpace {
    let p = |n: &str, mean: f64, sd: f64| {
        StochasticParameter::with_default_bounds(n, Distribution::normal(mean, sd).unwrap()).unwrap()
    };
    ParameterSpace::new(vec![p("x1", mean1, sd1), p("x2", 0.0, 1.0)]).unwrap()
}

fn crisp_partition(model: Arc<dyn Model>, space: &ParameterSpace, evals: usize) -> Partition {
    let ev = CrispEvaluator::new(model, vec![0.0]).unwrap();
    let stop = StopConfig { q_stable: None, max_evals: evals, ..StopConfig::default() };
    run_search(space, &ev, &Inner { m: 0.0 }, &stop, EstimateMode::Crisp { m: 0.0 }, 3).unwrap()
}

fn corner_partition(space: &ParameterSpace) -> Partition {
    crisp_partition(Arc::new(GaussianCorner::default()), space, 100_001)
}

/// Partition of the standard corner problem, built once.
fn base() -> &'static (ParameterSpace, Partition) {
    static BASE: OnceLock<(ParameterSpace, Partition)> = OnceLock::new();
    BASE.get_or_init(|| {
        let space = corner_space(0.0, 1.0);
        let part = corner_partition(&space);
        (space, part)
    })
}

#[test]
fn identity_reweight_is_bitwise() {
    let (space, part) = base();
    let stored = stage_probabilities(part).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let none = reweight(part, space, &[]).unwrap();
    assert_eq!(bits(&none.probabilities), bits(&stored));
    let zero = MomentPerturbation::new("x1", Moment::Mean, Change::By(0.0));
    assert_eq!(bits(&reweight(part, space, &[zero]).unwrap().probabilities), bits(&stored));
    assert!(none.warning.is_none());
}

#[test]
fn reweighted_priors_sum_to_the_perturbed_domain() {
    let (space, part) = base();
    for change in [
        MomentPerturbation::new("x1", Moment::Mean, Change::By(0.5)),
        MomentPerturbation::new("x2", Moment::StdDev, Change::Relative(0.3)),
    ] {
        let perturbed = perturbed_space(space, std::slice::from_ref(&change)).unwrap();
        let sum: f64 = reweighted_priors(part, space, &perturbed).unwrap().iter().sum();
        let domain = perturbed.full_domain_prior();
        assert!((sum - domain).abs() <= 1e-9 * domain, "{sum} vs {domain}");
    }
}

#[test]
fn mean_shift_matches_a_full_rerun() {
    let (space, part) = base();
    let shift = MomentPerturbation::new("x1", Moment::Mean, Change::By(0.1));
    let reused = reweight(part, space, &[shift]).unwrap().probabilities[0];
    let fresh = corner_partition(&corner_space(0.1, 1.0)).probability();
    assert!((reused / fresh - 1.0).abs() < 0.15, "reused {reused:e}, rerun {fresh:e}");
    assert!(reused > part.probability());
}

#[test]
fn doubled_deviation_matches_a_full_rerun() {
    let (space, part) = base();
    let wider = MomentPerturbation::new("x1", Moment::StdDev, Change::Relative(1.0));
    let out = reweight(part, space, &[wider]).unwrap();
    let fresh = corner_partition(&corner_space(0.0, 2.0)).probability();
    assert!((out.probabilities[0] / fresh - 1.0).abs() < 0.15, "reused {:e}, rerun {fresh:e}", out.probabilities[0]);
    let exact = norm_sf(2.25) * norm_sf(4.5);
    assert!((out.probabilities[0] / exact - 1.0).abs() < 0.15);
}

#[test]
fn escaped_mass_is_reported() {
    let (space, part) = base();
    let out = reweight(part, space, &[MomentPerturbation::new("x1", Moment::StdDev, Change::To(4.0))]).unwrap();
    assert!(out.escaped_mass > 0.04);
    assert!(out.warning.is_some());
}

#[test]
fn mean_sensitivity_matches_the_mills_ratio() {
    let (space, part) = base();
    let rates = sensitivity(part, space, &[("x1".into(), Moment::Mean)], 0.01).unwrap();
    let exact = norm_pdf(4.5) / norm_sf(4.5);
    let got = rates[0].final_rate().unwrap();
    assert!((got / exact - 1.0).abs() < 0.10, "rate {got} vs {exact}");
}

/// Depends on the first coordinate only; hit when x0 ≥ level.
struct FirstCoordinate {
    level: f64,
}

impl Model for FirstCoordinate {
    fn name(&self) -> &str {
        "first-coordinate"
    }

    fn dim(&self) -> usize {
        2
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn spawn(&self, x: &[f64], _key: StreamKey) -> Result<Box<dyn Particle>> {
        Ok(Box::new(StaticParticle::new(100.0 * (self.level - x[0]).max(0.0))))
    }
}

#[test]
fn ignored_parameter_has_zero_rate() {
    let space = corner_space(0.0, 1.0);
    // a first-level trisection boundary, so no box straddles the region
    let level = space.to_physical(&[2.0 / 3.0, 0.5]).unwrap()[0];
    let part = crisp_partition(Arc::new(FirstCoordinate { level }), &space, 4001);
    let moments = [("x2".to_string(), Moment::Mean), ("x2".to_string(), Moment::StdDev), ("x1".to_string(), Moment::Mean)];
    let rates = sensitivity(&part, &space, &moments, 0.01).unwrap();
    assert_eq!(rates[0].param, "x1");
    for r in &rates[1..] {
        assert!(r.final_rate().unwrap().abs() < 1e-12, "{:?}", r);
    }
}

#[test]
fn sensitivity_is_antisymmetric_in_the_step() {
    let (space, part) = base();
    let r = &sensitivity(part, space, &[("x1".into(), Moment::Mean)], 0.02).unwrap()[0];
    let (plus, minus) = (r.plus[0], r.minus[0]);
    let base = part.probability();
    let forward = (plus.ln() - base.ln()) / r.step;
    let backward = (base.ln() - minus.ln()) / r.step;
    let central = r.final_rate().unwrap();
    assert!((forward - central).abs() < 0.05 * central && (backward - central).abs() < 0.05 * central);
}
