//! Dryden gust model realized as white-noise-driven linear filters.
//!
//! Longitudinal channel: `σ_u √(2L_u/πV) / (1 + (L_u/V)s)`, discretized as an
//! exact Ornstein–Uhlenbeck step. Lateral and vertical channels use the
//! MIL-HDBK-1797 form `σ √(2L/πV) (1 + 2√3(L/V)s) / (1 + 2(L/V)s)²`, realized
//! in controllable canonical form and discretized by zero-order hold of one
//! unit gaussian per step. The output gain of every channel is set from the
//! discrete stationary covariance so the gust variance is exactly σ².

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrydenParams {
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub sigma_w: f64,
    pub l_u: f64,
    pub l_v: f64,
    pub l_w: f64,
}

impl Default for DrydenParams {
    /// Light turbulence above 2000 ft.
    fn default() -> Self {
        DrydenParams { sigma_u: 7.0, sigma_v: 7.0, sigma_w: 7.0, l_u: 1750.0, l_v: 1750.0, l_w: 1750.0 }
    }
}

impl DrydenParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma_u", self.sigma_u),
            ("sigma_v", self.sigma_v),
            ("sigma_w", self.sigma_w),
            ("l_u", self.l_u),
            ("l_v", self.l_v),
            ("l_w", self.l_w),
        ];
        for (name, v) in fields {
            let ok = if name.starts_with("sigma") { v >= 0.0 } else { v > 0.0 };
            if !ok || !v.is_finite() {
                return Err(Error::InvalidParameter { name: name.into(), reason: format!("invalid value {v}") });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrder {
    /// Discrete pole.
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrder {
    pub phi: [[f64; 2]; 2],
    pub gamma: [f64; 2],
    /// Output row; includes the variance-normalizing gain.
    pub c: [f64; 2],
    /// Stationary state covariance under unit input.
    pub cov: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrydenCoefficients {
    pub u: FirstOrder,
    pub v: SecondOrder,
    pub w: SecondOrder,
}

fn first_order(sigma: f64, l: f64, v: f64, dt: f64) -> FirstOrder {
    let a = (-v * dt / l).exp();
    FirstOrder { a, b: sigma * (1.0 - a * a).sqrt() }
}

fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn transpose(a: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// Solves P = Φ P Φᵀ + Q by doubling.
fn discrete_lyapunov(phi: [[f64; 2]; 2], q: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut p = q;
    let mut a = phi;
    for _ in 0..64 {
        let add = mat_mul(mat_mul(a, p), transpose(a));
        let mut done = true;
        for i in 0..2 {
            for j in 0..2 {
                if add[i][j].abs() > 1e-17 * p[i][j].abs() {
                    done = false;
                }
                p[i][j] += add[i][j];
            }
        }
        a = mat_mul(a, a);
        if done {
            break;
        }
    }
    p
}

fn second_order(sigma: f64, l: f64, v: f64, dt: f64) -> SecondOrder {
    let tau = l / v;
    let p = 1.0 / (2.0 * tau);
    let alpha = 2.0 * 3f64.sqrt() * tau;
    let e = (-p * dt).exp();
    let phi = [[e * (1.0 + p * dt), e * dt], [-p * p * dt * e, e * (1.0 - p * dt)]];
    let gamma = [(1.0 - e * (1.0 + p * dt)) / (p * p), dt * e];
    let q = [[gamma[0] * gamma[0], gamma[0] * gamma[1]], [gamma[1] * gamma[0], gamma[1] * gamma[1]]];
    let cov = discrete_lyapunov(phi, q);
    let row = [1.0, alpha];
    let var = row[0] * row[0] * cov[0][0] + 2.0 * row[0] * row[1] * cov[0][1] + row[1] * row[1] * cov[1][1];
    let gain = if sigma == 0.0 { 0.0 } else { sigma / var.sqrt() };
    SecondOrder { phi, gamma, c: [gain * row[0], gain * row[1]], cov }
}

/// Discrete filter coefficients at airspeed `v` (ft/s) and step `dt` (s).
pub fn coefficients(params: &DrydenParams, v: f64, dt: f64) -> Result<DrydenCoefficients> {
    if !(v > 0.0) {
        return Err(Error::usage(format!("airspeed must be positive, got {v}")));
    }
    if !(dt > 0.0) {
        return Err(Error::usage(format!("time step must be positive, got {dt}")));
    }
    Ok(DrydenCoefficients {
        u: first_order(params.sigma_u, params.l_u, v, dt),
        v: second_order(params.sigma_v, params.l_v, v, dt),
        w: second_order(params.sigma_w, params.l_w, v, dt),
    })
}

/// Body-axis gust velocity (ft/s); `w` is positive down.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Gust {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GustFilterState {
    pub u: f64,
    pub v: [f64; 2],
    pub w: [f64; 2],
}

fn step2(x: [f64; 2], c: &SecondOrder, g: f64) -> [f64; 2] {
    [
        c.phi[0][0] * x[0] + c.phi[0][1] * x[1] + c.gamma[0] * g,
        c.phi[1][0] * x[0] + c.phi[1][1] * x[1] + c.gamma[1] * g,
    ]
}

fn sample2(c: &SecondOrder, g: [f64; 2]) -> [f64; 2] {
    let l00 = c.cov[0][0].sqrt();
    let l10 = if l00 > 0.0 { c.cov[1][0] / l00 } else { 0.0 };
    let l11 = (c.cov[1][1] - l10 * l10).max(0.0).sqrt();
    [l00 * g[0], l10 * g[0] + l11 * g[1]]
}

impl GustFilterState {
    /// Draw from the stationary distribution of the filters.
    pub fn stationary(coeffs: &DrydenCoefficients, g: [f64; 5]) -> Self {
        let u_sd = if coeffs.u.a < 1.0 { coeffs.u.b / (1.0 - coeffs.u.a * coeffs.u.a).sqrt() } else { 0.0 };
        GustFilterState {
            u: u_sd * g[0],
            v: sample2(&coeffs.v, [g[1], g[2]]),
            w: sample2(&coeffs.w, [g[3], g[4]]),
        }
    }

    pub fn output(&self, coeffs: &DrydenCoefficients) -> Gust {
        Gust {
            u: self.u,
            v: coeffs.v.c[0] * self.v[0] + coeffs.v.c[1] * self.v[1],
            w: coeffs.w.c[0] * self.w[0] + coeffs.w.c[1] * self.w[1],
        }
    }
}

/// One step of all three channels driven by three unit gaussians.
pub fn advance(state: &mut GustFilterState, g: [f64; 3], coeffs: &DrydenCoefficients) -> Gust {
    state.u = coeffs.u.a * state.u + coeffs.u.b * g[0];
    state.v = step2(state.v, &coeffs.v, g[1]);
    state.w = step2(state.w, &coeffs.w, g[2]);
    state.output(coeffs)
}
