//! Stochastic input parameters, their marginals, and the maps between the
//! normalized search cube and physical units.

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_isf, norm_pdf, norm_ppf, norm_sf};

/// Default probability mass cut from each tail when search bounds are not
/// given explicitly.
pub const DEFAULT_TAIL_MASS: f64 = 1e-15;

/// Marginal distribution of one stochastic parameter, in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Normal { mean: f64, std_dev: f64 },
    Exponential { mean: f64 },
}

/// Which moment of a distribution a perturbation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Moment {
    Mean,
    StdDev,
}

impl Distribution {
    pub fn normal(mean: f64, std_dev: f64) -> Result<Self> {
        let d = Distribution::Normal { mean, std_dev };
        d.validate()?;
        Ok(d)
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        let d = Distribution::Exponential { mean };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Distribution::Normal { mean, std_dev } => {
                if !mean.is_finite() {
                    return Err(Error::InvalidDistribution(format!("normal mean must be finite, got {mean}")));
                }
                if !(std_dev > 0.0 && std_dev.is_finite()) {
                    return Err(Error::InvalidDistribution(format!(
                        "normal standard deviation must be positive, got {std_dev}"
                    )));
                }
            }
            Distribution::Exponential { mean } => {
                if !(mean > 0.0 && mean.is_finite()) {
                    return Err(Error::InvalidDistribution(format!("exponential mean must be positive, got {mean}")));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Distribution::Normal { .. } => "normal",
            Distribution::Exponential { .. } => "exponential",
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Normal { mean, .. } | Distribution::Exponential { mean } => mean,
        }
    }

    pub fn std_dev(&self) -> f64 {
        match *self {
            Distribution::Normal { std_dev, .. } => std_dev,
            Distribution::Exponential { mean } => mean,
        }
    }

    /// Closed support interval.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Distribution::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Distribution::Exponential { .. } => (0.0, f64::INFINITY),
        }
    }

    pub fn pdf(&self, v: f64) -> f64 {
        match *self {
            Distribution::Normal { mean, std_dev } => norm_pdf((v - mean) / std_dev) / std_dev,
            Distribution::Exponential { mean } => {
                if v < 0.0 {
                    0.0
                } else {
                    (-v / mean).exp() / mean
                }
            }
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match *self {
            Distribution::Normal { mean, std_dev } => norm_cdf((v - mean) / std_dev),
            Distribution::Exponential { mean } => {
                if v <= 0.0 {
                    0.0
                } else {
                    -(-v / mean).exp_m1()
                }
            }
        }
    }

    /// Survival function 1 − cdf, evaluated without cancellation.
    pub fn sf(&self, v: f64) -> f64 {
        match *self {
            Distribution::Normal { mean, std_dev } => norm_sf((v - mean) / std_dev),
            Distribution::Exponential { mean } => {
                if v <= 0.0 {
                    1.0
                } else {
                    (-v / mean).exp()
                }
            }
        }
    }

    /// Inverse cdf.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            Distribution::Normal { mean, std_dev } => mean + std_dev * norm_ppf(p),
            Distribution::Exponential { mean } => -mean * (-p).ln_1p(),
        }
    }

    /// Inverse survival function: the v with sf(v) = q.
    pub fn upper_quantile(&self, q: f64) -> f64 {
        match *self {
            Distribution::Normal { mean, std_dev } => mean + std_dev * norm_isf(q),
            Distribution::Exponential { mean } => -mean * q.ln(),
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Probability of [lo, hi], computed on the tail side that avoids
    /// cancellation.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        match *self {
            Distribution::Normal { mean, .. } => {
                if lo >= mean {
                    self.sf(lo) - self.sf(hi)
                } else {
                    self.cdf(hi) - self.cdf(lo)
                }
            }
            Distribution::Exponential { mean } => {
                let lo = lo.max(0.0);
                if hi <= lo {
                    return 0.0;
                }
                self.sf(lo) * -(-(hi - lo) / mean).exp_m1()
            }
        }
    }

    /// Iso-probabilistic image of a standard normal value z: the point with
    /// the same cdf under this distribution.
    pub fn from_standard_normal(&self, z: f64) -> f64 {
        match *self {
            Distribution::Normal { mean, std_dev } => mean + std_dev * z,
            Distribution::Exponential { .. } => {
                if z <= 0.0 {
                    self.quantile(norm_cdf(z))
                } else {
                    self.upper_quantile(norm_sf(z))
                }
            }
        }
    }

    /// Copy with one moment replaced.
    pub fn with_moment(&self, moment: Moment, value: f64) -> Result<Self> {
        let d = match (*self, moment) {
            (Distribution::Normal { std_dev, .. }, Moment::Mean) => Distribution::Normal { mean: value, std_dev },
            (Distribution::Normal { mean, .. }, Moment::StdDev) => Distribution::Normal { mean, std_dev: value },
            (Distribution::Exponential { .. }, _) => Distribution::Exponential { mean: value },
        };
        d.validate()?;
        Ok(d)
    }

    /// Value of the requested moment.
    pub fn moment(&self, moment: Moment) -> f64 {
        match moment {
            Moment::Mean => self.mean(),
            Moment::StdDev => self.std_dev(),
        }
    }
}

/// One named input with its truncated search interval.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticParameter {
    pub name: String,
    pub dist: Distribution,
    pub search_lo: f64,
    pub search_hi: f64,
}

impl StochasticParameter {
    /// Bounds at the `tail_mass` and `1 − tail_mass` quantiles.
    pub fn with_tail_bounds(name: impl Into<String>, dist: Distribution, tail_mass: f64) -> Result<Self> {
        let name = name.into();
        if !(tail_mass > 0.0 && tail_mass < 0.5) {
            return Err(Error::InvalidParameter { name, reason: format!("tail mass {tail_mass} outside (0, 0.5)") });
        }
        dist.validate()?;
        let p = StochasticParameter {
            search_lo: dist.quantile(tail_mass),
            search_hi: dist.upper_quantile(tail_mass),
            name,
            dist,
        };
        Ok(p)
    }

    pub fn with_default_bounds(name: impl Into<String>, dist: Distribution) -> Result<Self> {
        Self::with_tail_bounds(name, dist, DEFAULT_TAIL_MASS)
    }

    /// Explicit bounds. Rejected if they cut more than `max_tail_mass` from
    /// either tail.
    pub fn with_bounds(
        name: impl Into<String>,
        dist: Distribution,
        search_lo: f64,
        search_hi: f64,
        max_tail_mass: f64,
    ) -> Result<Self> {
        let p = StochasticParameter { name: name.into(), dist, search_lo, search_hi };
        p.validate(max_tail_mass)?;
        Ok(p)
    }

    pub fn validate(&self, max_tail_mass: f64) -> Result<()> {
        let bad = |reason: String| Error::InvalidParameter { name: self.name.clone(), reason };
        self.dist.validate().map_err(|e| bad(e.to_string()))?;
        if !(self.search_lo < self.search_hi) || !self.search_lo.is_finite() || !self.search_hi.is_finite() {
            return Err(bad(format!("search bounds [{}, {}] are not an interval", self.search_lo, self.search_hi)));
        }
        let (s_lo, s_hi) = self.dist.support();
        if self.search_lo < s_lo || self.search_hi > s_hi {
            return Err(bad(format!("search bounds [{}, {}] leave the support", self.search_lo, self.search_hi)));
        }
        // relative slack so quantile-derived bounds pass their own check
        let tol = max_tail_mass * (1.0 + 1e-9);
        let (below, above) = self.tail_masses();
        if below > tol || above > tol {
            return Err(bad(format!(
                "search bounds cut tail mass ({below:e}, {above:e}) above the allowed {max_tail_mass:e}"
            )));
        }
        Ok(())
    }

    /// Mass below `search_lo` and above `search_hi`.
    pub fn tail_masses(&self) -> (f64, f64) {
        (self.dist.cdf(self.search_lo), self.dist.sf(self.search_hi))
    }

    fn to_physical(&self, u: f64) -> f64 {
        // exact at both corners
        self.search_lo * (1.0 - u) + self.search_hi * u
    }

    fn to_unit(&self, x: f64) -> f64 {
        (x - self.search_lo) / (self.search_hi - self.search_lo)
    }
}

/// Ordered set of independent stochastic parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    params: Vec<StochasticParameter>,
}

impl ParameterSpace {
    pub fn new(params: Vec<StochasticParameter>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::usage("parameter space needs at least one parameter"));
        }
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::InvalidParameter { name: p.name.clone(), reason: "duplicate name".into() });
            }
            p.dist.validate()?;
            if !(p.search_lo < p.search_hi) {
                return Err(Error::InvalidParameter { name: p.name.clone(), reason: "empty search interval".into() });
            }
        }
        Ok(ParameterSpace { params })
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[StochasticParameter] {
        &self.params
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Copy with parameter `index` replaced by `dist`, search bounds kept.
    pub fn with_distribution(&self, index: usize, dist: Distribution) -> Result<Self> {
        dist.validate()?;
        let mut params = self.params.clone();
        params[index].dist = dist;
        Ok(ParameterSpace { params })
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got });
        }
        Ok(())
    }

    /// Joint density g(x): product of marginals, 0 outside the support.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.params.iter().zip(x).map(|(p, &v)| p.dist.pdf(v)).product())
    }

    /// Prior probability of the physical box [lo, hi].
    pub fn box_prior(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        self.check_dim(lo.len())?;
        self.check_dim(hi.len())?;
        for (dim, (&l, &h)) in lo.iter().zip(hi).enumerate() {
            if l > h {
                return Err(Error::InvertedInterval { dim, lo: l, hi: h });
            }
        }
        Ok(self.params.iter().zip(lo.iter().zip(hi)).map(|(p, (&l, &h))| p.dist.interval_mass(l, h)).product())
    }

    /// Prior of the whole truncated search domain.
    pub fn full_domain_prior(&self) -> f64 {
        self.params.iter().map(|p| p.dist.interval_mass(p.search_lo, p.search_hi)).product()
    }

    pub fn to_physical(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(u.len())?;
        u.iter()
            .zip(&self.params)
            .enumerate()
            .map(|(dim, (&v, p))| {
                if !(0.0..=1.0).contains(&v) {
                    Err(Error::OutsideUnitCube { dim, value: v })
                } else {
                    Ok(p.to_physical(v))
                }
            })
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        Ok(x.iter().zip(&self.params).map(|(&v, p)| p.to_unit(v)).collect())
    }

    /// Extremized sample: each standard normal draw is scaled by 1/k and
    /// mapped iso-probabilistically onto the marginal. k = 1 reproduces the
    /// marginals exactly.
    pub fn iso_normal_sample(&self, k: f64, gaussians: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(gaussians.len())?;
        if !(k > 0.0) {
            return Err(Error::usage(format!("extremization coefficient must be positive, got {k}")));
        }
        Ok(self.params.iter().zip(gaussians).map(|(p, &g)| p.dist.from_standard_normal(g / k)).collect())
    }

    /// Probability of a box given in normalized coordinates.
    pub fn unit_box_prior(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        let plo = self.to_physical(lo)?;
        let phi = self.to_physical(hi)?;
        self.box_prior(&plo, &phi)
    }
}

/// Probability measure over the normalized search cube, used by the
/// partition engine to weight boxes.
pub trait BoxMeasure: Sync {
    fn dim(&self) -> usize;
    fn unit_box_prior(&self, lo: &[f64], hi: &[f64]) -> f64;
    fn unit_density(&self, u: &[f64]) -> f64;
    /// Physical coordinates of a normalized point (identity for plain cubes).
    fn physical(&self, u: &[f64]) -> Vec<f64>;
}

impl BoxMeasure for ParameterSpace {
    fn dim(&self) -> usize {
        self.params.len()
    }

    fn unit_box_prior(&self, lo: &[f64], hi: &[f64]) -> f64 {
        ParameterSpace::unit_box_prior(self, lo, hi).expect("partition boxes stay inside the unit cube")
    }

    fn unit_density(&self, u: &[f64]) -> f64 {
        let x = self.physical(u);
        self.density(&x).expect("dimension checked by caller")
    }

    fn physical(&self, u: &[f64]) -> Vec<f64> {
        self.to_physical(u).expect("partition points stay inside the unit cube")
    }
}

/// Lebesgue measure on the unit cube; used when DIRECT runs as a plain
/// optimizer.
#[derive(Debug, Clone, Copy)]
pub struct UniformMeasure {
    pub dim: usize,
}

impl BoxMeasure for UniformMeasure {
    fn dim(&self) -> usize {
        self.dim
    }

    fn unit_box_prior(&self, lo: &[f64], hi: &[f64]) -> f64 {
        lo.iter().zip(hi).map(|(l, h)| h - l).product()
    }

    fn unit_density(&self, _u: &[f64]) -> f64 {
        1.0
    }

    fn physical(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn std_normal_2d() -> ParameterSpace {
        ParameterSpace::new(vec![
            StochasticParameter::with_default_bounds("a", Distribution::normal(0.0, 1.0).unwrap()).unwrap(),
            StochasticParameter::with_default_bounds("b", Distribution::normal(0.0, 1.0).unwrap()).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn density_examples() {
        let n = Distribution::normal(0.0, 100.0).unwrap();
        assert_relative_eq!(n.pdf(0.0), 3.989_422_804_014_327e-3, max_relative = 1e-14);
        let e = Distribution::exponential(30.0).unwrap();
        assert_relative_eq!(e.pdf(0.0), 1.0 / 30.0, max_relative = 1e-15);
        assert_relative_eq!(std_normal_2d().density(&[0.0, 0.0]).unwrap(), 0.159_154_943_091_895_35, max_relative = 1e-14);
        assert_eq!(e.pdf(-1.0), 0.0);
    }

    #[test]
    fn density_rejects_wrong_dimension() {
        assert!(matches!(
            std_normal_2d().density(&[0.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(Distribution::normal(0.0, 100.0).unwrap().cdf(0.0), 0.5);
        assert_relative_eq!(
            Distribution::exponential(30.0).unwrap().cdf(30.0),
            0.632_120_558_828_557_7,
            max_relative = 1e-15
        );
        // mpmath reference
        assert_relative_eq!(Distribution::normal(0.0, 1.0).unwrap().cdf(1.0), 0.841_344_746_068_542_9, max_relative = 1e-15);
    }

    #[test]
    fn box_prior_examples() {
        let s = std_normal_2d();
        let full = s.full_domain_prior();
        assert!(full >= 1.0 - 4.0 * 1e-15 - 1e-16 && full <= 1.0);
        let lo = [s.params()[0].search_lo, s.params()[1].search_lo];
        let hi = [s.params()[0].search_hi, s.params()[1].search_hi];
        assert_eq!(s.box_prior(&lo, &hi).unwrap(), full);
        assert_eq!(s.box_prior(&[0.3, 0.1], &[0.3, 2.0]).unwrap(), 0.0);
        let one = ParameterSpace::new(vec![s.params()[0].clone()]).unwrap();
        assert_relative_eq!(one.box_prior(&[0.0], &[1.0]).unwrap(), 0.341_344_746_068_542_9, max_relative = 1e-14);
        assert!(matches!(s.box_prior(&[1.0, 0.0], &[0.0, 1.0]), Err(Error::InvertedInterval { dim: 0, .. })));
    }

    #[test]
    fn to_physical_corners_and_midpoint() {
        let s = std_normal_2d();
        let p = s.params();
        assert_eq!(s.to_physical(&[0.0, 0.0]).unwrap(), vec![p[0].search_lo, p[1].search_lo]);
        assert_eq!(s.to_physical(&[1.0, 1.0]).unwrap(), vec![p[0].search_hi, p[1].search_hi]);
        let mid = s.to_physical(&[0.5, 0.5]).unwrap();
        assert!((mid[0] - 0.5 * (p[0].search_lo + p[0].search_hi)).abs() < 1e-14);
        assert!(matches!(s.to_physical(&[1.5, 0.0]), Err(Error::OutsideUnitCube { dim: 0, .. })));
    }

    #[test]
    fn iso_normal_examples() {
        let space = ParameterSpace::new(vec![
            StochasticParameter::with_default_bounds("n", Distribution::normal(3.0, 2.0).unwrap()).unwrap(),
            StochasticParameter::with_default_bounds("e", Distribution::exponential(30.0).unwrap()).unwrap(),
        ])
        .unwrap();
        for k in [0.3, 1.0, 2.0] {
            let x = space.iso_normal_sample(k, &[0.0, 0.0]).unwrap();
            assert_relative_eq!(x[0], 3.0, max_relative = 1e-15);
            assert_relative_eq!(x[1], 30.0 * std::f64::consts::LN_2, max_relative = 1e-14);
        }
        let x = space.iso_normal_sample(1.0, &[0.7, 0.0]).unwrap();
        assert_relative_eq!(x[0], 3.0 + 2.0 * 0.7, max_relative = 1e-15);
        let unit = ParameterSpace::new(vec![StochasticParameter::with_default_bounds(
            "z",
            Distribution::normal(0.0, 1.0).unwrap(),
        )
        .unwrap()])
        .unwrap();
        assert_eq!(unit.iso_normal_sample(0.5, &[1.0]).unwrap(), vec![2.0]);
        assert!(unit.iso_normal_sample(0.0, &[1.0]).is_err());
    }

    #[test]
    fn default_bounds_cut_the_requested_tail_mass() {
        let p = StochasticParameter::with_default_bounds("e", Distribution::exponential(30.0).unwrap()).unwrap();
        let (below, above) = p.tail_masses();
        assert_relative_eq!(below, 1e-15, max_relative = 1e-6);
        assert_relative_eq!(above, 1e-15, max_relative = 1e-6);
        assert!(p.validate(DEFAULT_TAIL_MASS).is_ok());
        let narrow = StochasticParameter::with_bounds("n", Distribution::normal(0.0, 1.0).unwrap(), -3.0, 3.0, 1e-15);
        assert!(narrow.is_err());
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(Distribution::normal(0.0, 0.0).is_err());
        assert!(Distribution::normal(0.0, -1.0).is_err());
        assert!(Distribution::exponential(0.0).is_err());
    }

    #[test]
    fn density_is_derivative_of_cdf() {
        let dists = [
            Distribution::normal(0.0, 100.0).unwrap(),
            Distribution::normal(2.0, 0.5).unwrap(),
            Distribution::exponential(30.0).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in dists {
            for _ in 0..100 {
                let v = d.quantile(rng.random_range(0.001..0.999));
                let h = 1e-4 * d.std_dev();
                let fd = (d.cdf(v + h) - d.cdf(v - h)) / (2.0 * h);
                assert!((fd - d.pdf(v)).abs() * d.std_dev() < 1e-6, "{d:?} at {v}");
            }
        }
    }

    #[test]
    fn density_integrates_to_one() {
        // composite Simpson over ±12 sd (normal) and [0, 40 mean] (exponential)
        let simpson = |d: &Distribution, a: f64, b: f64| {
            let n = 200_000;
            let h = (b - a) / n as f64;
            let mut s = d.pdf(a) + d.pdf(b);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * d.pdf(a + i as f64 * h);
            }
            s * h / 3.0
        };
        let n = Distribution::normal(1.0, 3.0).unwrap();
        assert!((simpson(&n, 1.0 - 36.0, 1.0 + 36.0) - 1.0).abs() < 1e-6);
        let e = Distribution::exponential(30.0).unwrap();
        assert!((simpson(&e, 0.0, 1200.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn iso_normal_with_unit_k_reproduces_marginal() {
        // Kolmogorov-Smirnov at the 1% level: D < 1.628 / sqrt(n)
        let e = Distribution::exponential(30.0).unwrap();
        let space = ParameterSpace::new(vec![StochasticParameter::with_default_bounds("e", e).unwrap()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| space.iso_normal_sample(1.0, &[rng.sample::<f64, _>(StandardNormal)]).unwrap()[0])
            .collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = e.cdf(x);
                (c - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - c).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    }

    proptest! {
        #[test]
        fn unit_round_trip(u0 in 0.0f64..=1.0, u1 in 0.0f64..=1.0) {
            let s = std_normal_2d();
            let x = s.to_physical(&[u0, u1]).unwrap();
            let back = s.to_unit(&x).unwrap();
            prop_assert!((back[0] - u0).abs() <= 1e-12 * u0.abs().max(1e-3));
            prop_assert!((back[1] - u1).abs() <= 1e-12 * u1.abs().max(1e-3));
        }

        #[test]
        fn disjoint_boxes_sum_to_full_prior(cuts in proptest::collection::vec(0.0f64..1.0, 1..6)) {
            let s = std_normal_2d();
            let mut edges = cuts.clone();
            edges.push(0.0);
            edges.push(1.0);
            edges.sort_by(f64::total_cmp);
            let mut total = 0.0;
            for w in edges.windows(2) {
                for v in edges.windows(2) {
                    total += s.unit_box_prior(&[w[0], v[0]], &[w[1], v[1]]).unwrap();
                }
            }
            prop_assert!((total - s.full_domain_prior()).abs() < 1e-12);
        }
    }
}
