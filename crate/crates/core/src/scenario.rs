//! Built-in aircraft/terrain case study: a point-mass aircraft follows a
//! waypoint route between two conical peaks with an altimetry offset, a
//! pilot who reacts after `t_r` seconds with a maximum-performance climb,
//! constant wind and optional Dryden turbulence. The limit state is the
//! smallest aircraft-to-terrain distance ever reached.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{check_dim, Model, Particle, Passage};
use crate::rng::StreamKey;
use crate::turbulence::{advance, coefficients, DrydenParams, Gust, GustFilterState};

pub const FT_PER_NM: f64 = 6076.12;
/// Feet per second in one knot.
pub const FTPS_PER_KT: f64 = FT_PER_NM / 3600.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cone {
    pub x_nm: f64,
    pub y_nm: f64,
    pub radius_nm: f64,
    pub height_ft: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerrainModel {
    pub base_ft: f64,
    pub cones: Vec<Cone>,
}

impl Default for TerrainModel {
    fn default() -> Self {
        let cone = |y_nm| Cone { x_nm: 10.0, y_nm, radius_nm: 3.0, height_ft: 3600.0 };
        TerrainModel { base_ft: 0.0, cones: vec![cone(6.5), cone(1.5)] }
    }
}

impl TerrainModel {
    pub fn highest_peak_ft(&self) -> f64 {
        self.cones.iter().map(|c| self.base_ft + c.height_ft).fold(self.base_ft, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.cones.iter().enumerate() {
            if !(c.radius_nm > 0.0) || !(c.height_ft > 0.0) {
                return Err(Error::InvalidParameter {
                    name: format!("terrain.cones[{i}]"),
                    reason: "radius and height must be positive".into(),
                });
            }
        }
        Ok(())
    }
}

/// Distance from (r, z) to the segment joining (r1, z1) and (r2, z2).
fn segment_distance(r: f64, z: f64, (r1, z1): (f64, f64), (r2, z2): (f64, f64)) -> f64 {
    let (dr, dz) = (r2 - r1, z2 - z1);
    let t = (((r - r1) * dr + (z - z1) * dz) / (dr * dr + dz * dz)).clamp(0.0, 1.0);
    ((r - r1 - t * dr).powi(2) + (z - z1 - t * dz).powi(2)).sqrt()
}

/// Euclidean distance in feet from a point (x, y in NM; h in ft) to the
/// terrain; zero on or inside it.
pub fn terrain_distance(x_nm: f64, y_nm: f64, h_ft: f64, terrain: &TerrainModel) -> f64 {
    let z = h_ft - terrain.base_ft;
    if z <= 0.0 {
        return 0.0;
    }
    let mut best = z;
    for c in &terrain.cones {
        let r = (x_nm - c.x_nm).hypot(y_nm - c.y_nm) * FT_PER_NM;
        let rr = c.radius_nm * FT_PER_NM;
        if r <= rr && z <= c.height_ft * (1.0 - r / rr) {
            return 0.0;
        }
        best = best.min(segment_distance(r, z, (rr, 0.0), (0.0, c.height_ft)));
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub x_nm: f64,
    pub y_nm: f64,
    pub h_ft: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteSpec {
    pub waypoints: Vec<Waypoint>,
    pub x_range_nm: (f64, f64),
    pub y_range_nm: (f64, f64),
    pub max_time_s: f64,
}

impl Default for RouteSpec {
    fn default() -> Self {
        let wp = |x_nm, y_nm, h_ft| Waypoint { x_nm, y_nm, h_ft };
        RouteSpec {
            waypoints: vec![wp(18.0, 12.0, 5000.0), wp(3.0, 12.0, 4500.0), wp(3.0, 4.0, 2500.0), wp(17.0, 4.0, 1500.0)],
            x_range_nm: (0.0, 20.0),
            y_range_nm: (-2.0, 14.0),
            max_time_s: 1000.0,
        }
    }
}

impl RouteSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidParameter { name: "route".into(), reason });
        if self.waypoints.len() < 2 {
            return bad("needs at least 2 waypoints".into());
        }
        let (x0, x1) = self.x_range_nm;
        let (y0, y1) = self.y_range_nm;
        if !(x0 < x1) || !(y0 < y1) {
            return bad("bounding box is empty".into());
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if !(x0..=x1).contains(&w.x_nm) || !(y0..=y1).contains(&w.y_nm) {
                return bad(format!("waypoint {i} lies outside the bounding box"));
            }
        }
        for (i, pair) in self.waypoints.windows(2).enumerate() {
            if (pair[1].x_nm - pair[0].x_nm).hypot(pair[1].y_nm - pair[0].y_nm) == 0.0 {
                return bad(format!("leg {i} has zero length"));
            }
        }
        if !(self.max_time_s > 0.0) {
            return bad("max time must be positive".into());
        }
        Ok(())
    }
}

/// Point-mass performance and guidance constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AircraftConstants {
    pub tau_v_s: f64,
    pub tau_psi_s: f64,
    pub tau_gamma_s: f64,
    pub v_min_kt: f64,
    pub v_max_kt: f64,
    pub v_cmd_kt: f64,
    pub gamma_min_deg: f64,
    /// Flight-path angle at full thrust; also the steepest climb.
    pub gamma_max_deg: f64,
    pub turn_rate_max_deg_s: f64,
    pub lookahead_nm: f64,
    /// Altitude error to climb-rate gain (1/s).
    pub k_h: f64,
    /// Avoidance climb ends this far above the highest peak.
    pub climb_margin_ft: f64,
}

impl Default for AircraftConstants {
    fn default() -> Self {
        AircraftConstants {
            tau_v_s: 10.0,
            tau_psi_s: 5.0,
            tau_gamma_s: 4.0,
            v_min_kt: 180.0,
            v_max_kt: 320.0,
            v_cmd_kt: 250.0,
            gamma_min_deg: -8.0,
            gamma_max_deg: 6.0,
            turn_rate_max_deg_s: 3.0,
            lookahead_nm: 1.5,
            k_h: 0.1,
            climb_margin_ft: 500.0,
        }
    }
}

impl AircraftConstants {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| Err(Error::InvalidParameter { name: name.into(), reason: reason.into() });
        for (name, v) in [
            ("tau_v_s", self.tau_v_s),
            ("tau_psi_s", self.tau_psi_s),
            ("tau_gamma_s", self.tau_gamma_s),
            ("turn_rate_max_deg_s", self.turn_rate_max_deg_s),
            ("lookahead_nm", self.lookahead_nm),
            ("k_h", self.k_h),
        ] {
            if !(v > 0.0) {
                return bad(name, "must be positive");
            }
        }
        if !(0.0 < self.v_min_kt && self.v_min_kt <= self.v_cmd_kt && self.v_cmd_kt <= self.v_max_kt) {
            return bad("v_cmd_kt", "needs 0 < v_min <= v_cmd <= v_max");
        }
        if !(self.gamma_min_deg < 0.0 && 0.0 < self.gamma_max_deg && self.gamma_max_deg < 90.0) {
            return bad("gamma_max_deg", "needs gamma_min < 0 < gamma_max < 90");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub terrain: TerrainModel,
    pub route: RouteSpec,
    pub aircraft: AircraftConstants,
    pub dt_s: f64,
    pub turbulence: Option<DrydenParams>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            terrain: TerrainModel::default(),
            route: RouteSpec::default(),
            aircraft: AircraftConstants::default(),
            dt_s: 0.1,
            turbulence: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.terrain.validate()?;
        self.route.validate()?;
        self.aircraft.validate()?;
        if let Some(t) = &self.turbulence {
            t.validate()?;
        }
        if !(self.dt_s > 0.0) {
            return Err(Error::InvalidParameter { name: "dt_s".into(), reason: "must be positive".into() });
        }
        let w = &self.route.waypoints[0];
        if terrain_distance(w.x_nm, w.y_nm, w.h_ft, &self.terrain) == 0.0 {
            return Err(Error::InvalidParameter { name: "route".into(), reason: "entry point lies inside terrain".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceVector {
    pub eps_h_ft: f64,
    pub t_r_s: f64,
    pub w_x_kt: f64,
    pub w_y_kt: f64,
    pub turbulence: bool,
}

impl DisturbanceVector {
    pub fn nominal() -> Self {
        DisturbanceVector { eps_h_ft: 0.0, t_r_s: f64::INFINITY, w_x_kt: 0.0, w_y_kt: 0.0, turbulence: false }
    }

    /// Altimeter reading error ε_a = −ε_h.
    pub fn eps_a_ft(&self) -> f64 {
        -self.eps_h_ft
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuidanceMode {
    EnRoute,
    Avoidance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    TerrainHit,
    BoxExit,
    TimeOut,
    RouteComplete,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::TerrainHit => "terrain-hit",
            Termination::BoxExit => "box-exit",
            Termination::TimeOut => "time-out",
            Termination::RouteComplete => "route-complete",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AircraftState {
    pub x_nm: f64,
    pub y_nm: f64,
    pub h_ft: f64,
    pub v_kt: f64,
    /// Heading, counterclockwise from +x.
    pub psi: f64,
    pub gamma: f64,
    pub mode: GuidanceMode,
    pub leg: usize,
    pub t_s: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = (a + std::f64::consts::PI).rem_euclid(two_pi);
    r - std::f64::consts::PI
}

struct LegGeometry {
    ux: f64,
    uy: f64,
    len_nm: f64,
    /// Along-track progress from the leg start.
    s_nm: f64,
}

fn leg_geometry(route: &RouteSpec, leg: usize, x: f64, y: f64) -> LegGeometry {
    let a = route.waypoints[leg];
    let b = route.waypoints[leg + 1];
    let (dx, dy) = (b.x_nm - a.x_nm, b.y_nm - a.y_nm);
    let len = dx.hypot(dy);
    let (ux, uy) = (dx / len, dy / len);
    LegGeometry { ux, uy, len_nm: len, s_nm: (x - a.x_nm) * ux + (y - a.y_nm) * uy }
}

/// Heading that holds ground course `chi` against the wind.
fn crab_heading(chi: f64, v_air_ftps: f64, wind: (f64, f64)) -> f64 {
    let cross = -wind.0 * chi.sin() + wind.1 * chi.cos();
    chi - (cross / v_air_ftps).clamp(-1.0, 1.0).asin()
}

/// One integration step. Guidance commands are computed from the current
/// state, then the point-mass kinematics and the command lags advance by
/// `dt` with wind and gust added to the air-relative velocity.
pub fn step(
    state: &AircraftState,
    config: &ScenarioConfig,
    dist: &DisturbanceVector,
    gust: Gust,
    dt: f64,
) -> Result<AircraftState> {
    let ac = &config.aircraft;
    let route = &config.route;
    let mut s = *state;

    if s.mode == GuidanceMode::EnRoute && s.t_s >= dist.t_r_s {
        s.mode = GuidanceMode::Avoidance;
    }

    let v_ftps = s.v_kt * FTPS_PER_KT;
    let wind = (dist.w_x_kt * FTPS_PER_KT, dist.w_y_kt * FTPS_PER_KT);
    let geo = leg_geometry(route, s.leg, s.x_nm, s.y_nm);
    let a = route.waypoints[s.leg];
    let b = route.waypoints[s.leg + 1];

    // lateral: aim at a point one lookahead ahead on the leg
    let s_aim = geo.s_nm + ac.lookahead_nm;
    let (tx, ty) = (a.x_nm + s_aim * geo.ux, a.y_nm + s_aim * geo.uy);
    let chi = (ty - s.y_nm).atan2(tx - s.x_nm);
    let psi_cmd = crab_heading(chi, v_ftps * s.gamma.cos(), wind);
    let max_rate = ac.turn_rate_max_deg_s.to_radians();
    let psi_rate = (wrap_angle(psi_cmd - s.psi) / ac.tau_psi_s).clamp(-max_rate, max_rate);

    // vertical
    let gamma_max = ac.gamma_max_deg.to_radians();
    let gamma_min = ac.gamma_min_deg.to_radians();
    let gamma_cmd = match s.mode {
        GuidanceMode::Avoidance => {
            let ceiling = config.terrain.highest_peak_ft() + ac.climb_margin_ft;
            if s.h_ft <= ceiling {
                gamma_max
            } else {
                0.0
            }
        }
        GuidanceMode::EnRoute => {
            let frac = (geo.s_nm / geo.len_nm).clamp(0.0, 1.0);
            let h_cmd = a.h_ft + frac * (b.h_ft - a.h_ft);
            let slope = if geo.s_nm >= 0.0 && geo.s_nm <= geo.len_nm {
                (b.h_ft - a.h_ft) / (geo.len_nm * FT_PER_NM)
            } else {
                0.0
            };
            let ground_speed = v_ftps * s.gamma.cos() * (s.psi.cos() * geo.ux + s.psi.sin() * geo.uy)
                + wind.0 * geo.ux
                + wind.1 * geo.uy;
            let indicated = s.h_ft + dist.eps_a_ft();
            let climb = slope * ground_speed + ac.k_h * (h_cmd - indicated);
            (climb / v_ftps).clamp(-1.0, 1.0).asin()
        }
    }
    .clamp(gamma_min, gamma_max);

    // kinematics with body-axis gusts: u along the velocity, v to the right, w down
    let (cg, sg, cp, sp) = (s.gamma.cos(), s.gamma.sin(), s.psi.cos(), s.psi.sin());
    let fwd = [cg * cp, cg * sp, sg];
    let right = [sp, -cp, 0.0];
    let down = [sg * cp, sg * sp, -cg];
    let mut vel = [0.0; 3];
    for i in 0..3 {
        vel[i] = (v_ftps + gust.u) * fwd[i] + gust.v * right[i] + gust.w * down[i];
    }
    vel[0] += wind.0;
    vel[1] += wind.1;

    s.x_nm += vel[0] * dt / FT_PER_NM;
    s.y_nm += vel[1] * dt / FT_PER_NM;
    s.h_ft += vel[2] * dt;
    s.v_kt = (s.v_kt + dt * (ac.v_cmd_kt - s.v_kt) / ac.tau_v_s).clamp(ac.v_min_kt, ac.v_max_kt);
    s.psi = wrap_angle(s.psi + dt * psi_rate);
    s.gamma = (s.gamma + dt * (gamma_cmd - s.gamma) / ac.tau_gamma_s).clamp(gamma_min, gamma_max);
    s.t_s = state.t_s + dt;

    for v in [s.x_nm, s.y_nm, s.h_ft, s.v_kt, s.psi, s.gamma] {
        if !v.is_finite() {
            return Err(Error::SimulationFault { time_s: s.t_s, reason: "non-finite aircraft state".into() });
        }
    }

    // sequence legs
    while s.leg + 1 < route.waypoints.len() - 1 {
        let g = leg_geometry(route, s.leg, s.x_nm, s.y_nm);
        if g.s_nm >= g.len_nm {
            s.leg += 1;
        } else {
            break;
        }
    }
    Ok(s)
}

/// Entry state: first waypoint, offset by ε_h, on speed, crabbed onto the
/// first leg and on the leg's flight-path angle.
pub fn initial_state(config: &ScenarioConfig, dist: &DisturbanceVector) -> AircraftState {
    let route = &config.route;
    let a = route.waypoints[0];
    let b = route.waypoints[1];
    let v_ftps = config.aircraft.v_cmd_kt * FTPS_PER_KT;
    let chi = (b.y_nm - a.y_nm).atan2(b.x_nm - a.x_nm);
    let wind = (dist.w_x_kt * FTPS_PER_KT, dist.w_y_kt * FTPS_PER_KT);
    let psi = crab_heading(chi, v_ftps, wind);
    let len_ft = (b.x_nm - a.x_nm).hypot(b.y_nm - a.y_nm) * FT_PER_NM;
    let gs = v_ftps * (psi - chi).cos() + wind.0 * chi.cos() + wind.1 * chi.sin();
    let gamma = ((b.h_ft - a.h_ft) / len_ft * gs / v_ftps).clamp(-1.0, 1.0).asin().clamp(
        config.aircraft.gamma_min_deg.to_radians(),
        config.aircraft.gamma_max_deg.to_radians(),
    );
    AircraftState {
        x_nm: a.x_nm,
        y_nm: a.y_nm,
        h_ft: a.h_ft + dist.eps_h_ft,
        v_kt: config.aircraft.v_cmd_kt,
        psi,
        gamma,
        mode: GuidanceMode::EnRoute,
        leg: 0,
        t_s: 0.0,
    }
}

/// One logged simulation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub state: AircraftState,
    pub gust: Gust,
    pub terrain_ft: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub termination: Termination,
    pub miss_distance_ft: f64,
    /// First time the running minimum distance reached each threshold.
    pub first_passage_s: Vec<Option<f64>>,
}

/// A running simulation: aircraft, gust filters and the noise stream.
#[derive(Clone)]
pub struct Flight {
    config: std::sync::Arc<ScenarioConfig>,
    dist: DisturbanceVector,
    state: AircraftState,
    filter: GustFilterState,
    gust: Gust,
    rng: ChaCha8Rng,
    min_d: f64,
    terrain_ft: f64,
    termination: Option<Termination>,
}

impl Flight {
    pub fn new(config: std::sync::Arc<ScenarioConfig>, dist: DisturbanceVector, key: StreamKey) -> Result<Self> {
        let state = initial_state(&config, &dist);
        let mut rng = key.rng();
        let mut filter = GustFilterState::default();
        let mut gust = Gust::default();
        if let (true, Some(p)) = (dist.turbulence, config.turbulence.as_ref()) {
            let c = coefficients(p, state.v_kt * FTPS_PER_KT, config.dt_s)?;
            filter = GustFilterState::stationary(&c, std::array::from_fn(|_| rng.sample(StandardNormal)));
            gust = filter.output(&c);
        }
        let terrain_ft = terrain_distance(state.x_nm, state.y_nm, state.h_ft, &config.terrain);
        let mut f = Flight { config, dist, state, filter, gust, rng, min_d: terrain_ft, terrain_ft, termination: None };
        f.check_termination();
        Ok(f)
    }

    pub fn state(&self) -> &AircraftState {
        &self.state
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    pub fn sample(&self) -> TrajectorySample {
        TrajectorySample { state: self.state, gust: self.gust, terrain_ft: self.terrain_ft }
    }

    fn check_termination(&mut self) {
        let s = &self.state;
        let route = &self.config.route;
        self.termination = if self.terrain_ft <= 0.0 {
            Some(Termination::TerrainHit)
        } else if !(route.x_range_nm.0..=route.x_range_nm.1).contains(&s.x_nm)
            || !(route.y_range_nm.0..=route.y_range_nm.1).contains(&s.y_nm)
        {
            Some(Termination::BoxExit)
        } else if {
            let g = leg_geometry(route, s.leg, s.x_nm, s.y_nm);
            s.leg + 2 == route.waypoints.len() && g.s_nm >= g.len_nm
        } {
            Some(Termination::RouteComplete)
        } else if s.t_s >= route.max_time_s - 1e-9 {
            Some(Termination::TimeOut)
        } else {
            None
        };
    }

    /// Advance one step; returns false once the flight has terminated.
    pub fn advance(&mut self) -> Result<bool> {
        if self.termination.is_some() {
            return Ok(false);
        }
        let dt = self.config.dt_s;
        if let (true, Some(p)) = (self.dist.turbulence, self.config.turbulence.as_ref()) {
            let c = coefficients(p, self.state.v_kt * FTPS_PER_KT, dt)?;
            let g: [f64; 3] = std::array::from_fn(|_| self.rng.sample(StandardNormal));
            self.gust = advance(&mut self.filter, g, &c);
        }
        self.state = step(&self.state, &self.config, &self.dist, self.gust, dt)?;
        self.terrain_ft = terrain_distance(self.state.x_nm, self.state.y_nm, self.state.h_ft, &self.config.terrain);
        self.min_d = self.min_d.min(self.terrain_ft);
        self.check_termination();
        Ok(true)
    }
}

impl Particle for Flight {
    fn min_distance(&self) -> f64 {
        self.min_d
    }

    fn run_until(&mut self, threshold: f64) -> Result<Passage> {
        loop {
            if self.min_d <= threshold {
                return Ok(Passage::Reached);
            }
            if !self.advance()? {
                return Ok(Passage::Terminated);
            }
        }
    }

    fn is_finished(&self) -> bool {
        self.termination.is_some()
    }

    fn reseed(&mut self, key: StreamKey) {
        self.rng = key.rng();
    }

    fn clone_box(&self) -> Box<dyn Particle> {
        Box::new(self.clone())
    }
}

/// Runs a full flight and logs every step.
pub fn simulate(
    config: &ScenarioConfig,
    dist: &DisturbanceVector,
    thresholds: &[f64],
    key: StreamKey,
) -> Result<Trajectory> {
    let mut f = Flight::new(std::sync::Arc::new(config.clone()), *dist, key)?;
    let mut samples = vec![f.sample()];
    let mut passage = vec![None; thresholds.len()];
    let mark = |passage: &mut Vec<Option<f64>>, d: f64, t: f64| {
        for (p, &m) in passage.iter_mut().zip(thresholds) {
            if p.is_none() && d <= m {
                *p = Some(t);
            }
        }
    };
    mark(&mut passage, f.min_d, 0.0);
    while f.advance()? {
        samples.push(f.sample());
        mark(&mut passage, f.min_d, f.state.t_s);
    }
    Ok(Trajectory {
        samples,
        termination: f.termination.expect("loop ends on termination"),
        miss_distance_ft: f.min_d,
        first_passage_s: passage,
    })
}

/// Which disturbance a search coordinate drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioInput {
    AltitudeOffset,
    ReactionTime,
    WindX,
    WindY,
}

impl ScenarioInput {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "eps_h_ft" => Some(ScenarioInput::AltitudeOffset),
            "t_r_s" => Some(ScenarioInput::ReactionTime),
            "w_x_kt" => Some(ScenarioInput::WindX),
            "w_y_kt" => Some(ScenarioInput::WindY),
            _ => None,
        }
    }
}

/// The case study as a limit-state model over a chosen subset of
/// (ε_h, t_r, w_x, w_y); absent inputs keep their nominal values.
#[derive(Debug, Clone)]
pub struct AircraftModel {
    pub config: std::sync::Arc<ScenarioConfig>,
    pub inputs: Vec<ScenarioInput>,
}

impl AircraftModel {
    pub fn new(config: ScenarioConfig, inputs: Vec<ScenarioInput>) -> Result<Self> {
        config.validate()?;
        Ok(AircraftModel { config: std::sync::Arc::new(config), inputs })
    }

    pub fn disturbance(&self, x: &[f64]) -> Result<DisturbanceVector> {
        check_dim(self.inputs.len(), x)?;
        let mut d = DisturbanceVector::nominal();
        d.turbulence = self.config.turbulence.is_some();
        for (input, &v) in self.inputs.iter().zip(x) {
            match input {
                ScenarioInput::AltitudeOffset => d.eps_h_ft = v,
                ScenarioInput::ReactionTime => d.t_r_s = v.max(0.0),
                ScenarioInput::WindX => d.w_x_kt = v,
                ScenarioInput::WindY => d.w_y_kt = v,
            }
        }
        Ok(d)
    }
}

impl Model for AircraftModel {
    fn name(&self) -> &str {
        "aircraft"
    }

    fn dim(&self) -> usize {
        self.inputs.len()
    }

    fn is_deterministic(&self) -> bool {
        self.config.turbulence.is_none()
    }

    fn spawn(&self, x: &[f64], key: StreamKey) -> Result<Box<dyn Particle>> {
        let d = self.disturbance(x)?;
        Ok(Box::new(Flight::new(self.config.clone(), d, key)?))
    }
}
