//! Experiment configuration: TOML read through a schema walk that collects
//! every problem instead of stopping at the first.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dips_core::estimator::Settings;
use dips_core::ips::{AdaptiveConfig, FiltrationSchedule};
use dips_core::model::Model;
use dips_core::param_space::{Distribution, Moment, ParameterSpace, StochasticParameter, DEFAULT_TAIL_MASS};
use dips_core::registry::Registry;
use dips_core::scenario::{
    AircraftConstants, AircraftModel, Cone, RouteSpec, ScenarioConfig, ScenarioInput, TerrainModel, Waypoint,
};
use dips_core::stats::{ExtrapolationConfig, FitForm};
use dips_core::toys::{DriftMaxToy, GaussianCorner, LinearGaussian, NoisyThreshold, SdeBarrier};
use dips_core::turbulence::DrydenParams;
use dips_core::uncertainty::{Change, MomentPerturbation};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::CliError;

/// Explicit bounds may cut at most this much mass from either tail.
pub const DEFAULT_MAX_TAIL_MASS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    CsvSvg,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(OutputFormat::Csv),
            "csv+svg" => Some(OutputFormat::CsvSvg),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

#[derive(Debug, Clone)]
pub struct UncertaintyConfig {
    pub perturbations: Vec<MomentPerturbation>,
    pub moments: Vec<(String, Moment)>,
    pub step: f64,
    pub escape_limit: f64,
}

#[derive(Debug, Clone)]
pub struct AlgorithmConfig {
    pub variant: String,
    pub runs: usize,
    pub level: f64,
    pub tls: Option<f64>,
    pub settings: Settings,
}

#[derive(Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// 0 lets the pool pick.
    pub workers: usize,
    pub model_kind: String,
    pub model: Arc<dyn Model>,
    /// Set for the aircraft model; `simulate` needs it.
    pub scenario: Option<AircraftModel>,
    pub space: Arc<ParameterSpace>,
    pub algorithm: AlgorithmConfig,
    pub uncertainty: UncertaintyConfig,
    pub output: OutputConfig,
    /// SHA-256 of the config text.
    pub hash: String,
}

impl std::fmt::Debug for ExperimentConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExperimentConfig")
            .field("seed", &self.seed)
            .field("model", &self.model_kind)
            .field("space", &self.space)
            .field("algorithm", &self.algorithm)
            .field("output", &self.output)
            .finish()
    }
}

type Errors = RefCell<Vec<String>>;

/// One TOML table being read; every key read is marked so leftovers can be
/// reported as unknown.
struct Section<'a> {
    path: String,
    table: &'a Table,
    used: RefCell<BTreeSet<String>>,
    errors: &'a Errors,
}

impl<'a> Section<'a> {
    fn new(path: impl Into<String>, table: &'a Table, errors: &'a Errors) -> Self {
        Section { path: path.into(), table, used: RefCell::new(BTreeSet::new()), errors }
    }

    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn error(&self, k: &str, msg: impl std::fmt::Display) {
        self.errors.borrow_mut().push(format!("{}: {msg}", self.key(k)));
    }

    fn get(&self, k: &str) -> Option<&'a Value> {
        self.used.borrow_mut().insert(k.to_string());
        self.table.get(k)
    }

    fn has(&self, k: &str) -> bool {
        self.table.contains_key(k)
    }

    fn opt_f64(&self, k: &str) -> Option<f64> {
        match self.get(k)? {
            Value::Float(v) => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            other => {
                self.error(k, format!("expected a number, got {}", other.type_str()));
                None
            }
        }
    }

    fn f64(&self, k: &str, default: f64) -> f64 {
        self.opt_f64(k).unwrap_or(default)
    }

    fn req_f64(&self, k: &str) -> Option<f64> {
        if !self.has(k) {
            self.error(k, "missing required number");
        }
        self.opt_f64(k)
    }

    fn opt_u64(&self, k: &str) -> Option<u64> {
        match self.get(k)? {
            Value::Integer(v) if *v >= 0 => Some(*v as u64),
            other => {
                self.error(k, format!("expected a nonnegative integer, got {other}"));
                None
            }
        }
    }

    fn usize(&self, k: &str, default: usize) -> usize {
        self.opt_u64(k).map_or(default, |v| v as usize)
    }

    fn bool(&self, k: &str, default: bool) -> bool {
        match self.get(k) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(other) => {
                self.error(k, format!("expected true or false, got {other}"));
                default
            }
        }
    }

    fn opt_str(&self, k: &str) -> Option<&'a str> {
        match self.get(k)? {
            Value::String(s) => Some(s.as_str()),
            other => {
                self.error(k, format!("expected a string, got {other}"));
                None
            }
        }
    }

    fn opt_f64_list(&self, k: &str) -> Option<Vec<f64>> {
        let Value::Array(items) = self.get(k)? else {
            self.error(k, "expected an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for v in items {
            match v {
                Value::Float(x) => out.push(*x),
                Value::Integer(x) => out.push(*x as f64),
                other => {
                    self.error(k, format!("expected numbers, found {other}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn opt_pair(&self, k: &str) -> Option<(f64, f64)> {
        let v = self.opt_f64_list(k)?;
        if v.len() != 2 {
            self.error(k, format!("expected [lo, hi], got {} values", v.len()));
            return None;
        }
        Some((v[0], v[1]))
    }

    fn str_list(&self, k: &str) -> Vec<&'a str> {
        let Some(v) = self.get(k) else { return Vec::new() };
        let Value::Array(items) = v else {
            self.error(k, "expected an array of strings");
            return Vec::new();
        };
        items
            .iter()
            .filter_map(|v| match v {
                Value::String(s) => Some(s.as_str()),
                other => {
                    self.error(k, format!("expected strings, found {other}"));
                    None
                }
            })
            .collect()
    }

    fn sub(&self, k: &str) -> Option<Section<'a>> {
        match self.get(k)? {
            Value::Table(t) => Some(Section::new(self.key(k), t, self.errors)),
            other => {
                self.error(k, format!("expected a table, got {}", other.type_str()));
                None
            }
        }
    }

    fn tables(&self, k: &str) -> Vec<Section<'a>> {
        let Some(v) = self.get(k) else { return Vec::new() };
        let Value::Array(items) = v else {
            self.error(k, "expected an array of tables");
            return Vec::new();
        };
        items
            .iter()
            .enumerate()
            .filter_map(|(i, v)| match v {
                Value::Table(t) => Some(Section::new(format!("{}[{i}]", self.key(k)), t, self.errors)),
                other => {
                    self.error(k, format!("entry {i}: expected a table, got {}", other.type_str()));
                    None
                }
            })
            .collect()
    }

    /// Reports every key that was never read.
    fn finish(self) {
        let used = self.used.borrow();
        for k in self.table.keys() {
            if !used.contains(k) {
                self.error(k, "unknown key");
            }
        }
    }
}

fn check(errors: &Errors, key: &str, ok: bool, msg: impl std::fmt::Display) {
    if !ok {
        errors.borrow_mut().push(format!("{key}: {msg}"));
    }
}

fn read_parameter(sec: Section<'_>) -> Option<StochasticParameter> {
    let name = sec.opt_str("name").map(str::to_string);
    if name.is_none() {
        sec.error("name", "missing parameter name");
    }
    let kind = sec.opt_str("distribution").unwrap_or("normal");
    let dist = match kind {
        "normal" => {
            let mean = sec.f64("mean", 0.0);
            let sd = sec.req_f64("std_dev");
            sd.and_then(|sd| match Distribution::normal(mean, sd) {
                Ok(d) => Some(d),
                Err(e) => {
                    sec.error("std_dev", e);
                    None
                }
            })
        }
        "exponential" => sec.req_f64("mean").and_then(|m| match Distribution::exponential(m) {
            Ok(d) => Some(d),
            Err(e) => {
                sec.error("mean", e);
                None
            }
        }),
        other => {
            sec.error("distribution", format!("unknown distribution `{other}` (normal, exponential)"));
            None
        }
    };
    let lower = sec.opt_f64("lower");
    let upper = sec.opt_f64("upper");
    let tail = sec.f64("tail_mass", DEFAULT_TAIL_MASS);
    let max_tail = sec.f64("max_tail_mass", DEFAULT_MAX_TAIL_MASS);
    let (name, dist) = (name?, dist?);
    let built = match (lower, upper) {
        (None, None) => StochasticParameter::with_tail_bounds(name, dist, tail),
        (lo, hi) => {
            let (dlo, dhi) = (dist.quantile(tail), dist.upper_quantile(tail));
            StochasticParameter::with_bounds(name, dist, lo.unwrap_or(dlo), hi.unwrap_or(dhi), max_tail)
        }
    };
    let out = match built {
        Ok(p) => Some(p),
        Err(e) => {
            sec.error("lower", e);
            None
        }
    };
    sec.finish();
    out
}

fn read_schedule(sec: &Section<'_>, key: &str, default: FiltrationSchedule) -> FiltrationSchedule {
    match sec.opt_f64_list(key) {
        None => default,
        Some(v) => FiltrationSchedule::new(v).unwrap_or_else(|e| {
            sec.error(key, e);
            default
        }),
    }
}

fn read_algorithm(sec: Option<Section<'_>>, errors: &Errors) -> AlgorithmConfig {
    let mut s = Settings::default();
    let Some(sec) = sec else {
        errors.borrow_mut().push("algorithm: missing section".into());
        return AlgorithmConfig { variant: "basic".into(), runs: 1, level: 0.99, tls: None, settings: s };
    };
    let variant = sec.opt_str("variant").unwrap_or("basic").to_string();
    let runs = sec.usize("runs", 1);
    let level = sec.f64("level", 0.99);
    let tls = sec.opt_f64("tls");
    s.threshold = sec.f64("m_ft", s.threshold);
    s.lambda = sec.f64("lambda_ft", s.lambda);
    s.boxes = sec.opt_u64("q").map(|v| v as usize);
    s.q_stable = sec.opt_u64("q_stable").map(|v| v as usize);
    s.eps_m = sec.f64("eps_m", s.eps_m);
    s.eps_hull = sec.f64("eps_hull", s.eps_hull);
    s.beta_skip = sec.f64("beta_skip", s.beta_skip);
    s.particles = sec.usize("s", s.particles);
    s.instances = sec.usize("instances", s.instances);
    s.schedule = read_schedule(&sec, "schedule_ft", s.schedule.clone());
    if let Some(a) = sec.sub("adaptive") {
        let d = AdaptiveConfig::default();
        s.adaptive = AdaptiveConfig {
            initial_threshold: a.f64("initial_threshold_ft", d.initial_threshold),
            target: a.f64("target_ft", d.target),
            survivors: a.usize("survivors", d.survivors),
            max_failures: a.opt_u64("max_failures").unwrap_or(d.max_failures),
            min_gap: a.f64("min_gap_ft", d.min_gap),
            enlarge: a.f64("enlarge", d.enlarge),
            trial_cap: a.opt_u64("trial_cap").unwrap_or(d.trial_cap),
            batch: a.usize("batch", d.batch),
        };
        a.finish();
    }
    if let Some(e) = sec.sub("extrapolation") {
        let d = ExtrapolationConfig::default();
        let fit = match e.opt_str("fit").unwrap_or("asymptotic") {
            "asymptotic" => FitForm::Asymptotic,
            "linear" => FitForm::Linear,
            other => {
                e.error("fit", format!("unknown fit `{other}` (asymptotic, linear)"));
                FitForm::Asymptotic
            }
        };
        s.extrapolation = ExtrapolationConfig {
            k_grid: e.opt_f64_list("k_grid").unwrap_or(d.k_grid),
            samples: e.usize("samples", d.samples),
            fit,
            threshold: e.f64("threshold_ft", d.threshold),
        };
        e.finish();
    }
    let p = |k: &str| sec.key(k);
    let known = dips_core::estimator::estimator_registry();
    if !known.contains(&variant) {
        sec.error("variant", format!("unknown estimator `{variant}` (available: {})", known.names().join(", ")));
    }
    check(errors, &p("runs"), runs >= 1, "must be at least 1");
    check(errors, &p("level"), level > 0.0 && level < 1.0, "must lie in (0, 1)");
    check(errors, &p("m_ft"), s.threshold >= 0.0, "must be nonnegative");
    check(errors, &p("lambda_ft"), s.lambda > s.threshold, "must exceed m_ft");
    check(errors, &p("q"), s.boxes != Some(0), "must be at least 1");
    check(errors, &p("eps_m"), s.eps_m > 0.0, "must be positive");
    check(errors, &p("eps_hull"), s.eps_hull >= 0.0, "must be nonnegative");
    check(errors, &p("beta_skip"), (0.0..1.0).contains(&s.beta_skip), "must lie in [0, 1)");
    check(errors, &p("s"), s.particles >= 2, "must be at least 2");
    check(errors, &p("instances"), s.instances >= 1, "must be at least 1");
    if let Err(e) = s.adaptive.validate() {
        errors.borrow_mut().push(format!("{}: {e}", p("adaptive")));
    }
    if let Err(e) = s.extrapolation.validate() {
        errors.borrow_mut().push(format!("{}: {e}", p("extrapolation")));
    }
    if let Some(t) = tls {
        check(errors, &p("tls"), t > 0.0 && t < 1.0, "must lie in (0, 1)");
    }
    sec.finish();
    AlgorithmConfig { variant, runs, level, tls, settings: s }
}

fn read_scenario(sec: Option<Section<'_>>) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    let Some(sec) = sec else { return c };
    c.dt_s = sec.f64("dt_s", c.dt_s);
    c.route.max_time_s = sec.f64("max_time_s", c.route.max_time_s);
    if let Some(r) = sec.opt_pair("x_range_nm") {
        c.route.x_range_nm = r;
    }
    if let Some(r) = sec.opt_pair("y_range_nm") {
        c.route.y_range_nm = r;
    }
    let waypoints: Vec<Waypoint> = sec
        .tables("route")
        .into_iter()
        .filter_map(|w| {
            let p = Waypoint { x_nm: w.req_f64("x_nm")?, y_nm: w.req_f64("y_nm")?, h_ft: w.req_f64("h_ft")? };
            w.finish();
            Some(p)
        })
        .collect();
    if sec.has("route") {
        c.route = RouteSpec { waypoints, ..c.route };
    }
    if let Some(t) = sec.sub("terrain") {
        let base = t.f64("base_ft", c.terrain.base_ft);
        let cones: Vec<Cone> = t
            .tables("cones")
            .into_iter()
            .filter_map(|k| {
                let cone = Cone {
                    x_nm: k.req_f64("x_nm")?,
                    y_nm: k.req_f64("y_nm")?,
                    radius_nm: k.req_f64("radius_nm")?,
                    height_ft: k.req_f64("height_ft")?,
                };
                k.finish();
                Some(cone)
            })
            .collect();
        let has_cones = t.has("cones");
        c.terrain = TerrainModel { base_ft: base, cones: if has_cones { cones } else { c.terrain.cones } };
        t.finish();
    }
    if let Some(a) = sec.sub("aircraft") {
        let d = AircraftConstants::default();
        c.aircraft = AircraftConstants {
            tau_v_s: a.f64("tau_v_s", d.tau_v_s),
            tau_psi_s: a.f64("tau_psi_s", d.tau_psi_s),
            tau_gamma_s: a.f64("tau_gamma_s", d.tau_gamma_s),
            v_min_kt: a.f64("v_min_kt", d.v_min_kt),
            v_max_kt: a.f64("v_max_kt", d.v_max_kt),
            v_cmd_kt: a.f64("v_cmd_kt", d.v_cmd_kt),
            gamma_min_deg: a.f64("gamma_min_deg", d.gamma_min_deg),
            gamma_max_deg: a.f64("gamma_max_deg", d.gamma_max_deg),
            turn_rate_max_deg_s: a.f64("turn_rate_max_deg_s", d.turn_rate_max_deg_s),
            lookahead_nm: a.f64("lookahead_nm", d.lookahead_nm),
            k_h: a.f64("k_h_per_s", d.k_h),
            climb_margin_ft: a.f64("climb_margin_ft", d.climb_margin_ft),
        };
        a.finish();
    }
    if sec.bool("turbulence", false) {
        let d = DrydenParams::default();
        c.turbulence = Some(match sec.sub("dryden") {
            None => d,
            Some(t) => {
                let p = DrydenParams {
                    sigma_u: t.f64("sigma_u_ftps", d.sigma_u),
                    sigma_v: t.f64("sigma_v_ftps", d.sigma_v),
                    sigma_w: t.f64("sigma_w_ftps", d.sigma_w),
                    l_u: t.f64("l_u_ft", d.l_u),
                    l_v: t.f64("l_v_ft", d.l_v),
                    l_w: t.f64("l_w_ft", d.l_w),
                };
                t.finish();
                p
            }
        });
    } else if let Some(t) = sec.sub("dryden") {
        t.error("", "given while turbulence = false");
        // mark the keys read so they are not reported twice
        for k in t.table.keys() {
            t.get(k);
        }
        t.finish();
    }
    if let Err(e) = c.validate() {
        sec.error("", e);
    }
    sec.finish();
    c
}

fn model_err(sec: &Section<'_>, e: impl std::fmt::Display) -> Option<Arc<dyn Model>> {
    sec.error("kind", e);
    None
}

/// Builds the named model from its section. `space_dim` is the number of
/// declared parameters.
type ModelBuilder = dyn Fn(&Section<'_>, &[String]) -> Option<Arc<dyn Model>> + Send + Sync;

fn model_builders() -> Registry<ModelBuilder> {
    let gaussian_corner: Arc<ModelBuilder> = Arc::new(|s, params| {
        let d = GaussianCorner::default();
        let m = GaussianCorner { corner: s.f64("corner", d.corner), scale: s.f64("scale", d.scale), dims: params.len() };
        Some(Arc::new(m) as Arc<dyn Model>)
    });
    let sde: Arc<ModelBuilder> = Arc::new(|s, _| {
        let d = SdeBarrier::default();
        let m = SdeBarrier {
            barrier: s.f64("barrier", d.barrier),
            sigma: s.f64("sigma", d.sigma),
            horizon: s.f64("horizon", d.horizon),
            steps: s.usize("steps", d.steps as usize) as u32,
        };
        if !(m.horizon > 0.0 && m.steps > 0 && m.sigma >= 0.0) {
            return model_err(s, "sde-barrier needs horizon > 0, steps > 0, sigma >= 0");
        }
        Some(Arc::new(m) as Arc<dyn Model>)
    });
    let drift: Arc<ModelBuilder> = Arc::new(|s, _| {
        let d = DriftMaxToy::default();
        let m = DriftMaxToy {
            level: s.f64("level", d.level),
            drift: s.f64("drift", d.drift),
            dt: s.f64("dt", d.dt),
            cutoff: s.f64("cutoff", d.cutoff),
        };
        if !(m.drift > 0.0 && m.dt > 0.0 && m.cutoff > 0.0) {
            return model_err(s, "drift-max needs drift, dt and cutoff > 0");
        }
        Some(Arc::new(m) as Arc<dyn Model>)
    });
    let linear: Arc<ModelBuilder> = Arc::new(|s, params| {
        let coeffs = s.opt_f64_list("coeffs").unwrap_or_else(|| vec![1.0; params.len()]);
        if coeffs.len() != params.len() {
            return model_err(s, format!("{} coefficients for {} parameters", coeffs.len(), params.len()));
        }
        Some(Arc::new(LinearGaussian { coeffs, offset: s.f64("offset", 4.0) }) as Arc<dyn Model>)
    });
    let noisy: Arc<ModelBuilder> = Arc::new(|s, _| {
        let m = NoisyThreshold { level: s.f64("level", 5.26), noise_sd: s.f64("noise_sd", 1.0), scale: s.f64("scale", 100.0) };
        Some(Arc::new(m) as Arc<dyn Model>)
    });
    Registry::new("model")
        .register("gaussian-corner", gaussian_corner)
        .register("sde-barrier", sde)
        .register("drift-max", drift)
        .register("linear-gaussian", linear)
        .register("noisy-threshold", noisy)
}

fn read_uncertainty(sec: Option<Section<'_>>, space: Option<&ParameterSpace>) -> UncertaintyConfig {
    let mut u = UncertaintyConfig { perturbations: Vec::new(), moments: Vec::new(), step: 0.01, escape_limit: 1e-3 };
    let Some(sec) = sec else { return u };
    u.step = sec.f64("step", u.step);
    u.escape_limit = sec.f64("escape_limit", u.escape_limit);
    if !(u.step > 0.0) {
        sec.error("step", "must be positive");
    }
    let known = |name: &str, sec: &Section<'_>, key: &str| {
        if let Some(space) = space {
            if space.index_of(name).is_none() {
                sec.error(key, format!("unknown parameter `{name}`"));
            }
        }
    };
    let moment = |s: &str| match s {
        "mean" => Some(Moment::Mean),
        "std_dev" => Some(Moment::StdDev),
        _ => None,
    };
    for m in sec.str_list("moments") {
        match m.split_once(':').and_then(|(p, k)| moment(k).map(|k| (p, k))) {
            Some((p, k)) => {
                known(p, &sec, "moments");
                u.moments.push((p.to_string(), k));
            }
            None => sec.error("moments", format!("`{m}` is not `<parameter>:mean` or `<parameter>:std_dev`")),
        }
    }
    for t in sec.tables("perturbations") {
        let param = t.opt_str("param");
        let m = t.opt_str("moment").and_then(|m| {
            let k = moment(m);
            if k.is_none() {
                t.error("moment", format!("unknown moment `{m}` (mean, std_dev)"));
            }
            k
        });
        let changes: Vec<Change> = [
            t.opt_f64("to").map(Change::To),
            t.opt_f64("relative").map(Change::Relative),
            t.opt_f64("by").map(Change::By),
        ]
        .into_iter()
        .flatten()
        .collect();
        if changes.len() != 1 {
            t.error("to", "give exactly one of `to`, `relative`, `by`");
        }
        match param {
            Some(p) => known(p, &t, "param"),
            None => t.error("param", "missing parameter name"),
        }
        if let (Some(p), Some(m), [c]) = (param, m, changes.as_slice()) {
            u.perturbations.push(MomentPerturbation::new(p, m, *c));
        }
        t.finish();
    }
    if let Some(space) = space {
        if let Err(e) = dips_core::uncertainty::perturbed_space(space, &u.perturbations) {
            sec.error("perturbations", e);
        }
    }
    sec.finish();
    u
}

/// Parses and validates a config text. `origin` only labels messages.
pub fn parse_config_str(text: &str, origin: &Path) -> Result<ExperimentConfig, CliError> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Validation(vec![format!("{}: {}", origin.display(), e.to_string().trim_end())]))?;
    let errors: Errors = RefCell::new(Vec::new());
    let top = Section::new("", &root, &errors);
    let seed = top.opt_u64("seed").unwrap_or(0);
    let workers = top.usize("workers", 0);

    let params: Vec<StochasticParameter> = top.tables("parameters").into_iter().filter_map(read_parameter).collect();
    let declared = top.table.get("parameters").and_then(Value::as_array).map_or(0, |a| a.len());
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();

    let model_sec = top.sub("model");
    let kind = model_sec.as_ref().and_then(|m| m.opt_str("kind")).unwrap_or("").to_string();
    if model_sec.is_none() {
        errors.borrow_mut().push("model: missing section".into());
    } else if kind.is_empty() {
        errors.borrow_mut().push("model.kind: missing".into());
    }
    let scenario_sec = top.sub("scenario");
    let mut scenario = None;
    let model: Option<Arc<dyn Model>> = match (kind.as_str(), model_sec.as_ref()) {
        ("", _) | (_, None) => None,
        ("aircraft", Some(_)) => {
            let cfg = read_scenario(scenario_sec);
            let mut inputs = Vec::new();
            for n in &names {
                match ScenarioInput::from_name(n) {
                    Some(i) => inputs.push(i),
                    None => errors
                        .borrow_mut()
                        .push(format!("parameters: `{n}` is not an aircraft input (eps_h_ft, t_r_s, w_x_kt, w_y_kt)")),
                }
            }
            match AircraftModel::new(cfg, inputs) {
                Ok(m) => {
                    scenario = Some(m.clone());
                    Some(Arc::new(m) as Arc<dyn Model>)
                }
                Err(e) => {
                    errors.borrow_mut().push(format!("scenario: {e}"));
                    None
                }
            }
        }
        (k, Some(sec)) => {
            if let Some(s) = scenario_sec {
                s.error("", "only used by the aircraft model");
                for k in s.table.keys() {
                    s.get(k);
                }
                s.finish();
            }
            match model_builders().get(k) {
                Ok(build) => build(sec, &names),
                Err(_) => {
                    let mut avail = model_builders().names();
                    avail.push("aircraft".into());
                    sec.error("kind", format!("unknown model `{k}` (available: {})", avail.join(", ")));
                    None
                }
            }
        }
    };
    if let Some(m) = model_sec {
        m.finish();
    }

    let mut params = params;
    if declared == 0 {
        if kind == "drift-max" {
            let unused = StochasticParameter::with_default_bounds("unused", Distribution::Normal { mean: 0.0, std_dev: 1.0 });
            params.push(unused.expect("valid placeholder"));
        } else {
            errors.borrow_mut().push("parameters: at least one [[parameters]] entry is required".into());
        }
    }
    let space = if params.len() == declared.max(1) && !params.is_empty() {
        match ParameterSpace::new(params) {
            Ok(s) => Some(s),
            Err(e) => {
                errors.borrow_mut().push(format!("parameters: {e}"));
                None
            }
        }
    } else {
        None
    };
    if let (Some(m), Some(s)) = (&model, &space) {
        if m.dim() != 0 && m.dim() != s.dim() {
            errors.borrow_mut().push(format!("parameters: model `{kind}` takes {} parameters, got {}", m.dim(), s.dim()));
        }
    }

    let algorithm = read_algorithm(top.sub("algorithm"), &errors);
    let uncertainty = read_uncertainty(top.sub("uncertainty"), space.as_ref());
    let output = match top.sub("output") {
        None => OutputConfig { dir: PathBuf::from("out"), format: OutputFormat::Csv },
        Some(o) => {
            let dir = PathBuf::from(o.opt_str("dir").unwrap_or("out"));
            let format = match o.opt_str("format") {
                None => OutputFormat::Csv,
                Some(f) => OutputFormat::parse(f).unwrap_or_else(|| {
                    o.error("format", format!("unknown format `{f}` (csv, csv+svg)"));
                    OutputFormat::Csv
                }),
            };
            o.finish();
            OutputConfig { dir, format }
        }
    };
    top.finish();

    let errors = errors.into_inner();
    if !errors.is_empty() {
        return Err(CliError::Validation(errors));
    }
    let hash = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    Ok(ExperimentConfig {
        seed,
        workers,
        model_kind: kind,
        model: model.expect("no errors implies a model"),
        scenario,
        space: Arc::new(space.expect("no errors implies a space")),
        algorithm,
        uncertainty,
        output,
        hash,
    })
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(vec![format!("{}: cannot read config: {e}", path.display())]))?;
    parse_config_str(&text, path)
}
