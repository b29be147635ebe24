//! Partition reuse under perturbed input moments: leaf priors are recomputed
//! over the same physical boxes and re-summed against the stored ratios. No
//! model evaluations happen here.

use crate::direct::{stage_probabilities, Partition};
use crate::error::{Error, Result};
use crate::param_space::{Distribution, Moment, ParameterSpace};

/// Relative loss of in-bounds prior mass above which a reweight warns.
pub const DEFAULT_ESCAPE_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Change {
    /// New value of the moment.
    To(f64),
    /// Relative change: value · (1 + delta).
    Relative(f64),
    /// Additive change in the moment's own units.
    By(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentPerturbation {
    pub param: String,
    pub moment: Moment,
    pub change: Change,
}

impl MomentPerturbation {
    pub fn new(param: impl Into<String>, moment: Moment, change: Change) -> Self {
        MomentPerturbation { param: param.into(), moment, change }
    }

    fn target(&self, dist: &Distribution) -> f64 {
        let v = dist.moment(self.moment);
        match self.change {
            Change::To(x) => x,
            Change::Relative(d) => v * (1.0 + d),
            Change::By(d) => v + d,
        }
    }
}

/// The space with every perturbation applied, bounds unchanged.
pub fn perturbed_space(space: &ParameterSpace, perturbations: &[MomentPerturbation]) -> Result<ParameterSpace> {
    let mut out = space.clone();
    for p in perturbations {
        let i = out.index_of(&p.param).ok_or_else(|| Error::usage(format!("unknown parameter '{}'", p.param)))?;
        let dist = out.params()[i].dist;
        let new = dist.with_moment(p.moment, p.target(&dist)).map_err(|e| Error::InvalidParameter {
            name: p.param.clone(),
            reason: format!("perturbed {:?}: {e}", p.moment),
        })?;
        out = out.with_distribution(i, new)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reweighted {
    pub probabilities: Vec<f64>,
    /// Prior of the search domain under the perturbed marginals.
    pub domain_prior: f64,
    /// Mass outside the search bounds under the perturbed marginals.
    pub escaped_mass: f64,
    pub warning: Option<String>,
}

/// Leaf priors under `perturbed`, with box bounds mapped to physical units
/// through `original`.
pub fn reweighted_priors(partition: &Partition, original: &ParameterSpace, perturbed: &ParameterSpace) -> Result<Vec<f64>> {
    if partition.dim != original.dim() || perturbed.dim() != original.dim() {
        return Err(Error::DimensionMismatch { expected: original.dim(), got: partition.dim });
    }
    partition
        .leaves
        .values()
        .map(|b| {
            let (lo, hi) = b.bounds();
            perturbed.box_prior(&original.to_physical(&lo)?, &original.to_physical(&hi)?)
        })
        .collect()
}

pub fn reweight(partition: &Partition, space: &ParameterSpace, perturbations: &[MomentPerturbation]) -> Result<Reweighted> {
    reweight_with_limit(partition, space, perturbations, DEFAULT_ESCAPE_LIMIT)
}

pub fn reweight_with_limit(
    partition: &Partition,
    space: &ParameterSpace,
    perturbations: &[MomentPerturbation],
    escape_limit: f64,
) -> Result<Reweighted> {
    let perturbed = perturbed_space(space, perturbations)?;
    let priors = reweighted_priors(partition, space, &perturbed)?;
    let mut copy = partition.clone();
    for (b, p) in copy.leaves.values_mut().zip(priors) {
        b.prior = p;
    }
    let probabilities = stage_probabilities(&copy)?;
    let domain_prior = perturbed.full_domain_prior();
    let escaped_mass = 1.0 - domain_prior;
    let base = space.full_domain_prior();
    let lost = (base - domain_prior) / base;
    let warning = (lost > escape_limit).then(|| {
        format!(
            "perturbed marginals put {escaped_mass:.3e} of the prior outside the search bounds \
             ({:.2}% of the original in-bounds mass); the stored partition cannot see it",
            100.0 * lost
        )
    });
    Ok(Reweighted { probabilities, domain_prior, escaped_mass, warning })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRate {
    pub param: String,
    pub moment: Moment,
    pub value: f64,
    pub step: f64,
    /// d(ln P)/d(moment) per stage; `None` where either side is zero.
    pub rates: Vec<Option<f64>>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl SensitivityRate {
    pub fn final_rate(&self) -> Option<f64> {
        self.rates.last().copied().flatten()
    }
}

/// Step scale of a moment: the standard deviation for normals, the mean for
/// exponentials.
fn moment_scale(dist: &Distribution) -> f64 {
    dist.std_dev()
}

/// Central finite differences of ln P at `rel_step` times the moment scale,
/// sorted by the final-stage magnitude (largest first, undefined last).
pub fn sensitivity(
    partition: &Partition,
    space: &ParameterSpace,
    moments: &[(String, Moment)],
    rel_step: f64,
) -> Result<Vec<SensitivityRate>> {
    if !(rel_step > 0.0) {
        return Err(Error::usage(format!("sensitivity step must be positive, got {rel_step}")));
    }
    let mut out = moments
        .iter()
        .map(|(name, moment)| {
            let i = space.index_of(name).ok_or_else(|| Error::usage(format!("unknown parameter '{name}'")))?;
            let dist = space.params()[i].dist;
            let step = rel_step * moment_scale(&dist);
            let side = |d: f64| -> Result<Vec<f64>> {
                let p = MomentPerturbation::new(name.clone(), *moment, Change::By(d));
                Ok(reweight_with_limit(partition, space, &[p], f64::INFINITY)?.probabilities)
            };
            let plus = side(step)?;
            let minus = side(-step)?;
            let rates = plus
                .iter()
                .zip(&minus)
                .map(|(&a, &b)| (a > 0.0 && b > 0.0).then(|| (a.ln() - b.ln()) / (2.0 * step)))
                .collect();
            Ok(SensitivityRate { param: name.clone(), moment: *moment, value: dist.moment(*moment), step, rates, plus, minus })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| match (a.final_rate(), b.final_rate()) {
        (Some(x), Some(y)) => y.abs().total_cmp(&x.abs()),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

/// Compares a confidence interval with a target level of safety.
pub fn tls_verdict(lower: f64, upper: f64, tls: f64) -> Result<Verdict> {
    if !(lower <= upper) {
        return Err(Error::usage(format!("interval lower {lower} exceeds upper {upper}")));
    }
    Ok(if upper < tls {
        Verdict::Pass
    } else if lower > tls {
        Verdict::Fail
    } else {
        Verdict::Indeterminate
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert_eq!(tls_verdict(1e-20, 1e-18, 1e-9).unwrap(), Verdict::Pass);
        assert_eq!(tls_verdict(1e-8, 1e-6, 1e-9).unwrap(), Verdict::Fail);
        assert_eq!(tls_verdict(1e-10, 1e-8, 1e-9).unwrap(), Verdict::Indeterminate);
        assert!(tls_verdict(2.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn perturbation_targets() {
        let d = Distribution::normal(2.0, 4.0).unwrap();
        assert_eq!(MomentPerturbation::new("a", Moment::Mean, Change::Relative(0.1)).target(&d), 2.2);
        assert_eq!(MomentPerturbation::new("a", Moment::StdDev, Change::By(-1.0)).target(&d), 3.0);
        assert_eq!(MomentPerturbation::new("a", Moment::StdDev, Change::To(7.0)).target(&d), 7.0);
    }
}
