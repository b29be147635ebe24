//! Log-normal confidence intervals, dispersion, the Welch comparison on
//! logs, and the asymptotic-sampling extrapolation baseline.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::param_space::ParameterSpace;
use crate::rng::{Domain, StreamKey};
use crate::special::{norm_isf, norm_sf};
use rand_distr::{Distribution as _, StandardNormal};

/// Positive probability estimates from independent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSample {
    values: Vec<f64>,
}

impl RunSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::usage(format!("need at least 2 runs, got {}", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::usage(format!("run values must be positive and finite, got {v}")));
        }
        Ok(RunSample { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Mean and sample standard deviation of the natural logs.
    pub fn log_moments(&self) -> (f64, f64) {
        let n = self.values.len() as f64;
        let logs: Vec<f64> = self.values.iter().map(|v| v.ln()).collect();
        // offset from the first log so equal values give exactly zero spread
        let mean = logs[0] + logs.iter().map(|l| l - logs[0]).sum::<f64>() / n;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn geometric_mean(&self) -> f64 {
        self.log_moments().0.exp()
    }

    /// Log-normal mean estimate exp(p̄ + σ²/2).
    pub fn lognormal_mean(&self) -> f64 {
        let (m, s) = self.log_moments();
        (m + 0.5 * s * s).exp()
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::usage(format!("confidence level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Two-sided Student quantile t_{(1+level)/2, df}. One and two degrees of
/// freedom use closed forms in the tail mass, which stay accurate where the
/// generic inverse loses digits.
pub fn student_quantile(level: f64, df: f64) -> Result<f64> {
    check_level(level)?;
    let q = 0.5 * (1.0 - level);
    if df == 1.0 {
        return Ok(1.0 / (std::f64::consts::PI * q).tan());
    }
    if df == 2.0 {
        return Ok((1.0 - 2.0 * q) / (2.0 * q * (1.0 - q)).sqrt());
    }
    let t = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::usage(e.to_string()))?;
    Ok(t.inverse_cdf(1.0 - q))
}

/// θ = t·√(σ²/N + σ⁴/(2(N−1))).
pub fn dispersion(sample: &RunSample, level: f64) -> Result<f64> {
    let n = sample.len() as f64;
    let (_, s) = sample.log_moments();
    let t = student_quantile(level, n - 1.0)?;
    Ok(t * (s * s / n + s.powi(4) / (2.0 * (n - 1.0))).sqrt())
}

/// Modified-Cox interval exp(p̄ + σ²/2 ∓ θ) for the mean of a log-normal
/// sample.
pub fn log_ci(sample: &RunSample, level: f64) -> Result<(f64, f64)> {
    let (m, s) = sample.log_moments();
    let theta = dispersion(sample, level)?;
    let centre = m + 0.5 * s * s;
    Ok(((centre - theta).exp(), (centre + theta).exp()))
}

/// Running minimum in stage order, capped at 1: a nested event cannot be
/// more likely than the event containing it.
pub fn clamp_quantiles(upper: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    if upper.len() != thresholds.len() {
        return Err(Error::DimensionMismatch { expected: thresholds.len(), got: upper.len() });
    }
    if thresholds.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::usage("thresholds must be strictly decreasing"));
    }
    let mut cap: f64 = 1.0;
    Ok(upper
        .iter()
        .map(|&q| {
            cap = cap.min(q);
            cap
        })
        .collect())
}

/// One row of the per-stage interval table.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRow {
    pub stage: usize,
    pub threshold: f64,
    pub runs: usize,
    /// Runs that returned exactly zero; excluded from the log statistics.
    pub zeros: usize,
    pub mean: f64,
    pub lognormal_mean: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub theta: Option<f64>,
    /// σ of the logs above [`SKEW_LIMIT`]: the lower limit is not
    /// trustworthy.
    pub lower_unreliable: bool,
}

/// Log standard deviation beyond which the lower limit is flagged.
pub const SKEW_LIMIT: f64 = 2.0;

/// Interval table from per-run, per-stage probabilities; upper limits are
/// clamped across stages.
pub fn stage_intervals(per_run: &[Vec<f64>], thresholds: &[f64], level: f64) -> Result<Vec<IntervalRow>> {
    check_level(level)?;
    let mut rows = Vec::with_capacity(thresholds.len());
    for (l, &m) in thresholds.iter().enumerate() {
        let col: Vec<f64> = per_run
            .iter()
            .map(|r| r.get(l).copied().ok_or(Error::DimensionMismatch { expected: thresholds.len(), got: r.len() }))
            .collect::<Result<_>>()?;
        let positive: Vec<f64> = col.iter().copied().filter(|v| *v > 0.0).collect();
        let mut row = IntervalRow {
            stage: l + 1,
            threshold: m,
            runs: col.len(),
            zeros: col.len() - positive.len(),
            mean: col.iter().sum::<f64>() / col.len().max(1) as f64,
            lognormal_mean: None,
            lower: None,
            upper: None,
            theta: None,
            lower_unreliable: false,
        };
        if let Ok(s) = RunSample::new(positive) {
            let (lo, hi) = log_ci(&s, level)?;
            row.lognormal_mean = Some(s.lognormal_mean());
            row.lower = Some(lo);
            row.upper = Some(hi);
            row.theta = Some(dispersion(&s, level)?);
            row.lower_unreliable = s.log_moments().1 > SKEW_LIMIT;
        }
        rows.push(row);
    }
    let mut cap: f64 = 1.0;
    for r in &mut rows {
        if let Some(u) = r.upper {
            cap = cap.min(u);
            r.upper = Some(cap);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub reject: bool,
}

/// Unequal-variance two-sample t test on the natural logs; `alpha` is the
/// two-sided significance level.
pub fn compare_runs(a: &RunSample, b: &RunSample, alpha: f64) -> Result<WelchTest> {
    check_level(alpha)?;
    let (ma, sa) = a.log_moments();
    let (mb, sb) = b.log_moments();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sa * sa / na, sb * sb / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        let t = if ma == mb { 0.0 } else { (mb - ma).signum() * f64::INFINITY };
        let p_value = if ma == mb { 1.0 } else { 0.0 };
        return Ok(WelchTest { t, df: na + nb - 2.0, p_value, reject: p_value < alpha });
    }
    let t = (mb - ma) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::usage(e.to_string()))?;
    let p_value = 2.0 * dist.sf(t.abs());
    Ok(WelchTest { t, df, p_value, reject: p_value < alpha })
}

/// β = Φ⁻¹(1 − ρ̂); `None` for ρ̂ ∈ {0, 1}, which carry no tail information.
pub fn reliability_index(rho_hat: f64) -> Option<f64> {
    if rho_hat > 0.0 && rho_hat < 1.0 {
        Some(norm_isf(rho_hat))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitForm {
    /// β(k) = A·k + B/k.
    Asymptotic,
    /// β(k) = A·k.
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolationConfig {
    pub k_grid: Vec<f64>,
    pub samples: usize,
    pub fit: FitForm,
    /// Hit means d ≤ threshold.
    pub threshold: f64,
}

impl Default for ExtrapolationConfig {
    fn default() -> Self {
        ExtrapolationConfig {
            k_grid: vec![1.0, 0.75, 0.5, 0.33, 0.25],
            samples: 100_000,
            fit: FitForm::Asymptotic,
            threshold: 0.0,
        }
    }
}

impl ExtrapolationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_grid.iter().any(|k| !(*k > 0.0)) {
            return Err(Error::usage("extremization coefficients must be positive"));
        }
        if self.samples == 0 {
            return Err(Error::usage("samples per coefficient must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolationPoint {
    pub k: f64,
    pub hits: u64,
    pub rho_hat: f64,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolation {
    pub points: Vec<ExtrapolationPoint>,
    pub a: f64,
    pub b: f64,
    pub beta_1: f64,
    pub probability: f64,
    /// Root-mean-square residual of the fit over the usable points.
    pub rms_residual: f64,
}

/// Least-squares fit of β(k) over the usable points.
pub fn fit_beta(points: &[(f64, f64)], form: FitForm) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InsufficientFit { usable: points.len() });
    }
    match form {
        FitForm::Linear => {
            let a = points.iter().map(|(k, b)| k * b).sum::<f64>() / points.iter().map(|(k, _)| k * k).sum::<f64>();
            Ok((a, 0.0))
        }
        FitForm::Asymptotic => {
            // normal equations for the basis (k, 1/k)
            let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for &(k, b) in points {
                let (f1, f2) = (k, 1.0 / k);
                s11 += f1 * f1;
                s12 += f1 * f2;
                s22 += f2 * f2;
                r1 += f1 * b;
                r2 += f2 * b;
            }
            let det = s11 * s22 - s12 * s12;
            if det.abs() <= 1e-12 * s11 * s22 {
                return Err(Error::InsufficientFit { usable: 1 });
            }
            Ok(((s22 * r1 - s12 * r2) / det, (s11 * r2 - s12 * r1) / det))
        }
    }
}

/// Crude Monte Carlo at extremized inputs for each k, then β(1) from the
/// fitted curve and p = 1 − Φ(β(1)).
pub fn run_extrapolation(
    model: &dyn Model,
    space: &ParameterSpace,
    cfg: &ExtrapolationConfig,
    key: StreamKey,
) -> Result<Extrapolation> {
    cfg.validate()?;
    let dim = space.dim();
    let mut points = Vec::with_capacity(cfg.k_grid.len());
    for (i, &k) in cfg.k_grid.iter().enumerate() {
        let kkey = key.child(Domain::Extrapolation, i as u64);
        let hits: u64 = (0..cfg.samples as u64)
            .into_par_iter()
            .map(|j| -> Result<u64> {
                let ikey = kkey.child(Domain::Instance, j);
                let mut rng = ikey.child(Domain::Launch, 0).rng();
                let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let x = space.iso_normal_sample(k, &g)?;
                let d = model.limit_state(&x, ikey.child(Domain::Particle, 0))?;
                Ok(u64::from(d <= cfg.threshold))
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        let rho_hat = hits as f64 / cfg.samples as f64;
        points.push(ExtrapolationPoint { k, hits, rho_hat, beta: reliability_index(rho_hat) });
    }
    let usable: Vec<(f64, f64)> = points.iter().filter_map(|p| p.beta.map(|b| (p.k, b))).collect();
    let (a, b) = fit_beta(&usable, cfg.fit)?;
    let rms_residual =
        (usable.iter().map(|(k, beta)| (beta - (a * k + b / k)).powi(2)).sum::<f64>() / usable.len() as f64).sqrt();
    let beta_1 = a + b;
    Ok(Extrapolation { points, a, b, beta_1, probability: norm_sf(beta_1), rms_residual })
}
