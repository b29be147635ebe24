use std::sync::Arc;

use dips_core::dips::{run_dips, DipsConfig};
use dips_core::direct::{estimate_probability, run_search, DivisionCause, EstimateMode, Partition, StopConfig};
use dips_core::evaluator::{CrispEvaluator, FnEvaluator};
use dips_core::ips::FiltrationSchedule;
use dips_core::objective::{Inner, RawValue};
use dips_core::param_space::{Distribution, ParameterSpace, StochasticParameter, UniformMeasure};
use dips_core::partition_io::write_partition;
use dips_core::toys::{GaussianCorner, SdeBarrier};
use proptest::prelude::*;

fn corner_space() -> ParameterSpace {
    let p = |n: &str| StochasticParameter::with_default_bounds(n, Distribution::normal(0.0, 1.0).unwrap()).unwrap();
    ParameterSpace::new(vec![p("x1"), p("x2")]).unwrap()
}

fn camel(u: &[f64]) -> f64 {
    let (x, y) = (-3.0 + 6.0 * u[0], -2.0 + 4.0 * u[1]);
    (4.0 - 2.1 * x * x + x.powi(4) / 3.0) * x * x + x * y + (-4.0 + 4.0 * y * y) * y * y
}

fn small_dips(space: &ParameterSpace, boxes: usize, beta_skip: f64, seed: u64) -> (Vec<f64>, Partition) {
    let cfg = DipsConfig {
        particles: 20,
        boxes,
        schedule: FiltrationSchedule::new(vec![4.0, 2.0, 1.0, 0.0]).unwrap(),
        lambda: 10.0,
        stop: StopConfig { q_stable: None, beta_skip, ..StopConfig::default() },
    };
    let run = run_dips(space, Arc::new(SdeBarrier::default()), &cfg, seed).unwrap();
    (run.probabilities, run.partition)
}

fn check_integrity(p: &Partition, domain_prior: f64, beta_skip: f64) {
    assert!((p.total_volume() - 1.0).abs() <= 1e-9, "volume {}", p.total_volume());
    assert!((p.total_prior() - domain_prior).abs() <= 1e-9 * domain_prior, "prior {} vs {domain_prior}", p.total_prior());
    for d in &p.divisions {
        if d.cause == DivisionCause::Selected {
            assert!(d.prior >= beta_skip * d.max_prior, "divided prior {} below {} x {}", d.prior, beta_skip, d.max_prior);
        }
    }
    assert_eq!(p.trace.len(), p.eval_count());
}

const SKIPS: [f64; 4] = [0.0, 1e-6, 1e-3, 0.05];

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn crisp_partition_integrity(seed in any::<u64>(), budget in 21usize..600, skip in 0usize..4) {
        let space = corner_space();
        let ev = CrispEvaluator::new(Arc::new(GaussianCorner::default()), vec![0.0]).unwrap();
        let stop = StopConfig { q_stable: None, max_evals: budget, beta_skip: SKIPS[skip], ..StopConfig::default() };
        let p = run_search(&space, &ev, &Inner { m: 0.0 }, &stop, EstimateMode::Crisp { m: 0.0 }, seed).unwrap();
        check_integrity(&p, space.full_domain_prior(), SKIPS[skip]);
        let last = *p.trace.last().unwrap();
        prop_assert_eq!(last, estimate_probability(&p, EstimateMode::Crisp { m: 0.0 }).unwrap());
    }

    #[test]
    fn optimizer_partition_integrity(budget in 21usize..800, skip in 0usize..4) {
        let ev = FnEvaluator::new(camel);
        let stop = StopConfig { q_stable: None, max_evals: budget, beta_skip: SKIPS[skip], ..StopConfig::default() };
        let p = run_search(&UniformMeasure { dim: 2 }, &ev, &RawValue, &stop, EstimateMode::Crisp { m: f64::NEG_INFINITY }, 0).unwrap();
        check_integrity(&p, 1.0, SKIPS[skip]);
    }

    #[test]
    fn crisp_estimate_is_monotone_in_threshold(seed in any::<u64>(), budget in 101usize..400) {
        let space = corner_space();
        let ms = [300.0, 100.0, 30.0, 0.0];
        let ev = CrispEvaluator::new(Arc::new(GaussianCorner::default()), ms.to_vec()).unwrap();
        let stop = StopConfig { q_stable: None, max_evals: budget, ..StopConfig::default() };
        let p = run_search(&space, &ev, &Inner { m: 0.0 }, &stop, EstimateMode::Crisp { m: 0.0 }, seed).unwrap();
        let est: Vec<f64> = ms.iter().map(|&m| estimate_probability(&p, EstimateMode::Crisp { m }).unwrap()).collect();
        prop_assert!(est.windows(2).all(|w| w[1] <= w[0]), "{:?}", est);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn dips_stages_nonincreasing_and_integral(seed in any::<u64>(), boxes in 11usize..160, skip in 0usize..4) {
        let space = SdeBarrier::prior_space();
        let (probs, p) = small_dips(&space, boxes, SKIPS[skip], seed);
        prop_assert!(probs.windows(2).all(|w| w[1] <= w[0]), "{:?}", probs);
        prop_assert!(probs.iter().all(|v| (0.0..=1.0).contains(v)));
        check_integrity(&p, space.full_domain_prior(), SKIPS[skip]);
        for b in p.leaves.values() {
            prop_assert!(b.ratios.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}

#[test]
fn rerun_reproduces_the_trace() {
    let space = corner_space();
    let ev = CrispEvaluator::new(Arc::new(GaussianCorner::default()), vec![0.0]).unwrap();
    let stop = StopConfig { q_stable: None, max_evals: 2001, ..StopConfig::default() };
    let run = || run_search(&space, &ev, &Inner { m: 0.0 }, &stop, EstimateMode::Crisp { m: 0.0 }, 5).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.trace, b.trace);
    assert_eq!(write_partition(&a), write_partition(&b));
}

#[test]
fn dips_is_bit_identical_across_worker_counts() {
    let space = SdeBarrier::prior_space();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| small_dips(&space, 121, 1e-6, 17))
    };
    let (pa, a) = run(1);
    let (pb, b) = run(4);
    assert_eq!(pa.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), pb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(write_partition(&a), write_partition(&b));
}
