//! DIRECT search-and-partition over the unit cube.
//!
//! Boxes are stored as integer (level, cell) pairs per dimension, so a box
//! spans `[cell / 3^level, (cell + 1) / 3^level]` exactly and the leaves tile
//! the cube without rounding gaps. Leaves are grouped into size classes keyed
//! by the sum of their levels; within a box the levels differ by at most one,
//! so the sum determines the center-to-vertex size.

use std::collections::{BTreeMap, BTreeSet};

use ordered_float::OrderedFloat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluator::CentroidEvaluator;
use crate::objective::{BoxObjective, LineageState, PointEval};
use crate::param_space::BoxMeasure;
use crate::rng::{Domain, StreamKey};

/// Deepest trisection level; keeps every centroid numerator below 2^53.
pub const MAX_LEVEL: u8 = 32;

fn pow3(level: u8) -> u64 {
    3u64.pow(level as u32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperbox {
    /// Creation index; lower ids were created earlier.
    pub id: usize,
    pub levels: Vec<u8>,
    pub cells: Vec<u64>,
    /// Evaluation that produced the centroid value. Center children keep
    /// their parent's id, which also names the objective lineage.
    pub eval_id: usize,
    pub f: f64,
    pub distance: f64,
    pub ratios: Vec<f64>,
    pub prior: f64,
}

impl Hyperbox {
    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn lo(&self, d: usize) -> f64 {
        self.cells[d] as f64 / pow3(self.levels[d]) as f64
    }

    pub fn hi(&self, d: usize) -> f64 {
        (self.cells[d] + 1) as f64 / pow3(self.levels[d]) as f64
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        ((0..self.dim()).map(|d| self.lo(d)).collect(), (0..self.dim()).map(|d| self.hi(d)).collect())
    }

    pub fn centroid(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|d| (2 * self.cells[d] + 1) as f64 / (2 * pow3(self.levels[d])) as f64)
            .collect()
    }

    pub fn side(&self, d: usize) -> f64 {
        1.0 / pow3(self.levels[d]) as f64
    }

    /// Center-to-vertex Euclidean distance.
    pub fn size(&self) -> f64 {
        0.5 * (0..self.dim()).map(|d| self.side(d).powi(2)).sum::<f64>().sqrt()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.side(d)).product()
    }

    pub fn level_sum(&self) -> u32 {
        self.levels.iter().map(|&l| l as u32).sum()
    }

    fn min_level(&self) -> u8 {
        *self.levels.iter().min().expect("boxes have at least one dimension")
    }

    /// Closed boxes touch in every dimension and overlap with positive
    /// length in all but at most one.
    pub fn is_neighbor(&self, other: &Hyperbox) -> bool {
        let mut thin = 0;
        for d in 0..self.dim() {
            let top = self.levels[d].max(other.levels[d]);
            let sa = pow3(top - self.levels[d]);
            let sb = pow3(top - other.levels[d]);
            let (alo, ahi) = (self.cells[d] * sa, (self.cells[d] + 1) * sa);
            let (blo, bhi) = (other.cells[d] * sb, (other.cells[d] + 1) * sb);
            let lo = alo.max(blo);
            let hi = ahi.min(bhi);
            if hi < lo {
                return false;
            }
            if hi == lo {
                thin += 1;
            }
        }
        thin <= 1
    }
}

/// How a probability is read off the partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimateMode {
    /// Sum of priors of leaves whose centroid distance is at most `m`.
    Crisp { m: f64 },
    /// Sum of prior times the stored ratio of one stage.
    Weighted { stage: usize },
}

impl EstimateMode {
    fn contribution(&self, leaf: &Hyperbox) -> Result<f64> {
        match *self {
            EstimateMode::Crisp { m } => Ok(if leaf.distance <= m { leaf.prior } else { 0.0 }),
            EstimateMode::Weighted { stage } => leaf
                .ratios
                .get(stage)
                .map(|r| leaf.prior * r)
                .ok_or_else(|| Error::usage(format!("leaf {} has no ratio for stage {stage}", leaf.id))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopConfig {
    /// Consecutive evaluations over which the estimate must stay put; `None`
    /// disables the stability rule.
    pub q_stable: Option<usize>,
    pub eps_m: f64,
    pub max_evals: usize,
    pub eps_hull: f64,
    pub beta_skip: f64,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig { q_stable: Some(1000), eps_m: 1e-9, max_evals: 100_001, eps_hull: 1e-4, beta_skip: 1e-6 }
    }
}

impl StopConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: String| Err(Error::InvalidParameter { name: name.into(), reason });
        if self.q_stable == Some(0) {
            return bad("q_stable", "must be at least 1".into());
        }
        if !(self.eps_m > 0.0) {
            return bad("eps_m", format!("must be positive, got {}", self.eps_m));
        }
        if self.max_evals == 0 {
            return bad("max_evals", "must be at least 1".into());
        }
        if !(self.eps_hull >= 0.0) {
            return bad("eps_hull", format!("must be nonnegative, got {}", self.eps_hull));
        }
        if !(0.0..1.0).contains(&self.beta_skip) {
            return bad("beta_skip", format!("must lie in [0, 1), got {}", self.beta_skip));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivisionCause {
    /// Potentially optimal and above the skip threshold.
    Selected,
    /// Every candidate was skipped; the largest box with the best value was
    /// divided instead.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivisionRecord {
    pub box_id: usize,
    pub cause: DivisionCause,
    pub prior: f64,
    /// Largest leaf prior at selection time.
    pub max_prior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Stable,
    Budget,
    /// No leaf can be divided further.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub unit: Vec<f64>,
    pub eval: PointEval,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartitionMeta {
    pub config_hash: String,
    pub seed: u64,
    pub params: Vec<String>,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub dim: usize,
    pub leaves: BTreeMap<usize, Hyperbox>,
    pub evals: Vec<EvalRecord>,
    pub trace: Vec<f64>,
    pub divisions: Vec<DivisionRecord>,
    /// Trajectory segments consumed by all evaluations.
    pub calls: u64,
    pub stop_reason: Option<StopReason>,
    pub meta: PartitionMeta,
}

impl Partition {
    pub fn eval_count(&self) -> usize {
        self.evals.len()
    }

    pub fn probability(&self) -> f64 {
        self.trace.last().copied().unwrap_or(0.0)
    }

    /// Budget ran out without any leaf registering the target event.
    pub fn no_target_found(&self) -> bool {
        self.probability() == 0.0
    }

    pub fn total_volume(&self) -> f64 {
        self.leaves.values().map(Hyperbox::volume).sum()
    }

    pub fn total_prior(&self) -> f64 {
        self.leaves.values().map(|b| b.prior).sum()
    }

    pub fn stages(&self) -> usize {
        self.leaves.values().next().map_or(0, |b| b.ratios.len())
    }

    pub fn best(&self) -> Option<&Hyperbox> {
        self.leaves.values().min_by(|a, b| a.f.total_cmp(&b.f).then(a.id.cmp(&b.id)))
    }

    pub fn max_prior(&self) -> f64 {
        self.leaves.values().map(|b| b.prior).fold(0.0, f64::max)
    }
}

pub fn estimate_probability(partition: &Partition, mode: EstimateMode) -> Result<f64> {
    partition.leaves.values().map(|b| mode.contribution(b)).sum()
}

/// Per-stage weighted probabilities P(m_l) for every stored stage.
pub fn stage_probabilities(partition: &Partition) -> Result<Vec<f64>> {
    (0..partition.stages()).map(|stage| estimate_probability(partition, EstimateMode::Weighted { stage })).collect()
}

/// One size class: its size and the smallest objective value in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeClass {
    pub size: f64,
    pub f_min: f64,
}

/// Which size classes hold a potentially optimal box, given the incumbent
/// best value `f_best`. A class minimum is potentially optimal when some
/// slope K > 0 puts it on the lower-right hull of (size, f) and also
/// promises a relative improvement of `eps` over the incumbent.
pub fn potentially_optimal_classes(classes: &[SizeClass], f_best: f64, eps: f64) -> Vec<bool> {
    classes
        .iter()
        .map(|cj| {
            let mut k_low = f64::NEG_INFINITY;
            let mut k_high = f64::INFINITY;
            for ci in classes {
                if ci.size < cj.size {
                    k_low = k_low.max((cj.f_min - ci.f_min) / (cj.size - ci.size));
                } else if ci.size > cj.size {
                    k_high = k_high.min((ci.f_min - cj.f_min) / (ci.size - cj.size));
                }
            }
            if !(k_low <= k_high) || !(k_high > 0.0) {
                return false;
            }
            k_high.is_infinite() || cj.f_min - cj.size * k_high <= f_best - eps * f_best.abs()
        })
        .collect()
}

fn class_members(leaves: &BTreeMap<usize, Hyperbox>) -> BTreeMap<u32, Vec<&Hyperbox>> {
    let mut classes: BTreeMap<u32, Vec<&Hyperbox>> = BTreeMap::new();
    for b in leaves.values().filter(|b| b.min_level() < MAX_LEVEL) {
        classes.entry(b.level_sum()).or_default().push(b);
    }
    classes
}

/// Potentially optimal leaves, larger boxes first and then by creation id.
pub fn select_potentially_optimal(partition: &Partition, eps_hull: f64) -> Vec<usize> {
    let classes = class_members(&partition.leaves);
    let mut summary = Vec::new();
    let mut minima = Vec::new();
    for members in classes.values() {
        let f_min = members.iter().map(|b| b.f).fold(f64::INFINITY, f64::min);
        summary.push(SizeClass { size: members[0].size(), f_min });
        minima.push(members.iter().filter(|b| b.f == f_min).map(|b| b.id).collect::<Vec<_>>());
    }
    let f_best = summary.iter().map(|c| c.f_min).fold(f64::INFINITY, f64::min);
    potentially_optimal_classes(&summary, f_best, eps_hull)
        .into_iter()
        .zip(minima)
        .filter(|(po, _)| *po)
        .flat_map(|(_, ids)| ids)
        .collect()
}

/// Candidates whose prior reaches `beta_skip` times the largest leaf prior,
/// or the fallback box when none does.
pub fn apply_skip_rule(candidates: &[usize], partition: &Partition, beta_skip: f64) -> Vec<(usize, DivisionCause)> {
    let threshold = beta_skip * partition.max_prior();
    let kept: Vec<_> = candidates
        .iter()
        .filter(|id| partition.leaves[id].prior >= threshold)
        .map(|&id| (id, DivisionCause::Selected))
        .collect();
    if !kept.is_empty() {
        return kept;
    }
    fallback_box(partition).map(|id| vec![(id, DivisionCause::Fallback)]).unwrap_or_default()
}

/// First candidate surviving the skip rule.
pub fn skip_rule_choice(candidates: &[usize], partition: &Partition, beta_skip: f64) -> Option<usize> {
    apply_skip_rule(candidates, partition, beta_skip).first().map(|&(id, _)| id)
}

fn fallback_box(partition: &Partition) -> Option<usize> {
    let classes = class_members(&partition.leaves);
    let (_, members) = classes.iter().next()?;
    members.iter().min_by(|a, b| a.f.total_cmp(&b.f).then(a.id.cmp(&b.id))).map(|b| b.id)
}

type Ranked = (OrderedFloat<f64>, usize);

struct Search<'a> {
    measure: &'a dyn BoxMeasure,
    evaluator: &'a dyn CentroidEvaluator,
    objective: &'a dyn BoxObjective,
    stop: &'a StopConfig,
    mode: EstimateMode,
    root: StreamKey,
    part: Partition,
    classes: BTreeMap<u32, BTreeSet<Ranked>>,
    priors: BTreeSet<Ranked>,
    lineages: Vec<LineageState>,
    next_id: usize,
    p: f64,
    anchor: f64,
    run_len: usize,
}

impl<'a> Search<'a> {
    fn insert(&mut self, leaf: Hyperbox) -> Result<()> {
        self.p += self.mode.contribution(&leaf)?;
        if leaf.min_level() < MAX_LEVEL {
            self.classes.entry(leaf.level_sum()).or_default().insert((OrderedFloat(leaf.f), leaf.id));
        }
        self.priors.insert((OrderedFloat(leaf.prior), leaf.id));
        self.part.leaves.insert(leaf.id, leaf);
        Ok(())
    }

    fn remove(&mut self, id: usize) -> Result<Hyperbox> {
        let leaf = self.part.leaves.remove(&id).ok_or_else(|| Error::usage(format!("box {id} is not a leaf")))?;
        if let Some(set) = self.classes.get_mut(&leaf.level_sum()) {
            set.remove(&(OrderedFloat(leaf.f), id));
            if set.is_empty() {
                self.classes.remove(&leaf.level_sum());
            }
        }
        self.priors.remove(&(OrderedFloat(leaf.prior), id));
        self.p -= self.mode.contribution(&leaf)?;
        Ok(leaf)
    }

    fn max_prior(&self) -> f64 {
        self.priors.iter().next_back().map_or(0.0, |(p, _)| p.0)
    }

    fn evaluate_batch(&mut self, points: Vec<Vec<f64>>) -> Result<Vec<(usize, f64)>> {
        let base = self.part.evals.len();
        let results: Vec<Result<PointEval>> = points
            .par_iter()
            .enumerate()
            .map(|(j, u)| {
                let x = self.measure.physical(u);
                self.evaluator.evaluate(&x, self.root.child(Domain::Box, (base + j) as u64))
            })
            .collect();
        let mut out = Vec::with_capacity(points.len());
        for (j, (u, r)) in points.into_iter().zip(results).enumerate() {
            let eval = r.map_err(|e| Error::BoxEvaluation { box_id: base + j, source: Box::new(e) })?;
            if eval.ratios.len() != self.evaluator.stages() {
                return Err(Error::usage("evaluator returned the wrong number of stage ratios"));
            }
            let mut lineage = LineageState::new(eval.distance, eval.final_ratio());
            let f = self.objective.fresh(&eval, self.measure.unit_density(&u), &mut lineage);
            self.part.calls += eval.calls;
            self.lineages.push(lineage);
            self.part.evals.push(EvalRecord { unit: u, eval });
            out.push((base + j, f));
        }
        Ok(out)
    }

    fn leaf(&mut self, levels: Vec<u8>, cells: Vec<u64>, eval_id: usize, f: f64) -> Hyperbox {
        let id = self.next_id;
        self.next_id += 1;
        let rec = &self.part.evals[eval_id].eval;
        let mut b = Hyperbox {
            id,
            levels,
            cells,
            eval_id,
            f,
            distance: rec.distance,
            ratios: rec.ratios.clone(),
            prior: 0.0,
        };
        let (lo, hi) = b.bounds();
        b.prior = self.measure.unit_box_prior(&lo, &hi);
        b
    }

    /// Records the post-division estimate once per new evaluation and reports
    /// whether the stability rule fired.
    fn record(&mut self, new_evals: usize) -> bool {
        let mut stable = false;
        for _ in 0..new_evals {
            self.part.trace.push(self.p);
            if (self.p - self.anchor).abs() < self.stop.eps_m * self.anchor {
                self.run_len += 1;
            } else {
                self.anchor = self.p;
                self.run_len = 0;
            }
            if let Some(q) = self.stop.q_stable {
                stable |= self.anchor > 0.0 && self.run_len >= q;
            }
        }
        stable
    }

    fn divide(&mut self, id: usize) -> Result<Vec<usize>> {
        let remaining = self.stop.max_evals.saturating_sub(self.part.evals.len());
        let parent = self.remove(id)?;
        let lmin = parent.min_level();
        let mut dims: Vec<usize> = (0..parent.dim()).filter(|&d| parent.levels[d] == lmin).collect();
        dims.truncate(remaining / 2);
        if dims.is_empty() || lmin >= MAX_LEVEL {
            let kept = parent.id;
            self.insert(parent)?;
            return Ok(vec![kept]);
        }

        let center = parent.centroid();
        let child_scale = (2 * pow3(lmin + 1)) as f64;
        let mut points = Vec::with_capacity(2 * dims.len());
        for &d in &dims {
            for off in [0u64, 2] {
                let mut u = center.clone();
                u[d] = (2 * (3 * parent.cells[d] + off) + 1) as f64 / child_scale;
                points.push(u);
            }
        }
        let scored = self.evaluate_batch(points)?;

        let mut order: Vec<(f64, usize, usize)> = dims
            .iter()
            .enumerate()
            .map(|(j, &d)| (scored[2 * j].1.min(scored[2 * j + 1].1), d, j))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut levels = parent.levels.clone();
        let mut cells = parent.cells.clone();
        let mut children = Vec::with_capacity(2 * dims.len() + 1);
        for &(_, d, j) in &order {
            levels[d] += 1;
            for (k, off) in [0u64, 2].into_iter().enumerate() {
                let mut c = cells.clone();
                c[d] = 3 * parent.cells[d] + off;
                let (eval_id, f) = scored[2 * j + k];
                children.push(self.leaf(levels.clone(), c, eval_id, f));
            }
            cells[d] = 3 * parent.cells[d] + 1;
        }
        let mut middle = self.leaf(levels, cells, parent.eval_id, parent.f);
        if self.objective.uses_neighbors() {
            let ratios: Vec<f64> = self
                .part
                .leaves
                .values()
                .chain(children.iter())
                .filter(|b| b.is_neighbor(&middle))
                .map(|b| b.ratios.last().copied().unwrap_or(0.0))
                .collect();
            let rec = &self.part.evals[middle.eval_id];
            let density = self.measure.unit_density(&rec.unit);
            middle.f = self.objective.recentered(&rec.eval, density, &mut self.lineages[middle.eval_id], &ratios)?;
        }
        children.push(middle);
        let ids = children.iter().map(|b| b.id).collect();
        for c in children {
            self.insert(c)?;
        }
        Ok(ids)
    }

    fn candidates(&self) -> Vec<usize> {
        let mut summary = Vec::with_capacity(self.classes.len());
        let mut minima = Vec::with_capacity(self.classes.len());
        for set in self.classes.values() {
            let (f_min, _) = *set.iter().next().expect("classes are never empty");
            let any = self.part.leaves[&set.iter().next().unwrap().1].size();
            summary.push(SizeClass { size: any, f_min: f_min.0 });
            minima.push(set.range((f_min, 0)..=(f_min, usize::MAX)).map(|&(_, id)| id).collect::<Vec<_>>());
        }
        let f_best = summary.iter().map(|c| c.f_min).fold(f64::INFINITY, f64::min);
        potentially_optimal_classes(&summary, f_best, self.stop.eps_hull)
            .into_iter()
            .zip(minima)
            .filter(|(po, _)| *po)
            .flat_map(|(_, ids)| ids)
            .collect()
    }

    fn skip(&self, candidates: &[usize]) -> Vec<(usize, DivisionCause)> {
        let threshold = self.stop.beta_skip * self.max_prior();
        let kept: Vec<_> = candidates
            .iter()
            .filter(|id| self.part.leaves[id].prior >= threshold)
            .map(|&id| (id, DivisionCause::Selected))
            .collect();
        if !kept.is_empty() {
            return kept;
        }
        self.classes
            .values()
            .next()
            .and_then(|set| set.iter().next())
            .map(|&(_, id)| vec![(id, DivisionCause::Fallback)])
            .unwrap_or_default()
    }
}

/// Runs the search until the estimate stabilizes, the evaluation budget is
/// spent, or no box can be divided.
///
/// Every division evaluates `2k` new centroids, so the final count is odd and
/// reaches `max_evals` exactly when the budget is odd.
pub fn run_search(
    measure: &dyn BoxMeasure,
    evaluator: &dyn CentroidEvaluator,
    objective: &dyn BoxObjective,
    stop: &StopConfig,
    mode: EstimateMode,
    seed: u64,
) -> Result<Partition> {
    stop.validate()?;
    if let EstimateMode::Weighted { stage } = mode {
        if stage >= evaluator.stages() {
            return Err(Error::usage(format!("stage {stage} requested but the evaluator reports {}", evaluator.stages())));
        }
    }
    let n = measure.dim();
    let mut s = Search {
        measure,
        evaluator,
        objective,
        stop,
        mode,
        root: StreamKey::root(seed),
        part: Partition {
            dim: n,
            leaves: BTreeMap::new(),
            evals: Vec::new(),
            trace: Vec::new(),
            divisions: Vec::new(),
            calls: 0,
            stop_reason: None,
            meta: PartitionMeta { seed, ..PartitionMeta::default() },
        },
        classes: BTreeMap::new(),
        priors: BTreeSet::new(),
        lineages: Vec::new(),
        next_id: 0,
        p: 0.0,
        anchor: 0.0,
        run_len: 0,
    };

    let scored = s.evaluate_batch(vec![vec![0.5; n]])?;
    let root = s.leaf(vec![0; n], vec![0; n], scored[0].0, scored[0].1);
    s.insert(root)?;
    let mut stable = s.record(1);

    let reason = 'outer: loop {
        if stable {
            break StopReason::Stable;
        }
        if s.part.evals.len() + 2 > stop.max_evals {
            break StopReason::Budget;
        }
        let candidates = s.candidates();
        let chosen = s.skip(&candidates);
        if chosen.is_empty() {
            break StopReason::Exhausted;
        }
        let max_prior = s.max_prior();
        for (id, cause) in chosen {
            if s.part.evals.len() + 2 > stop.max_evals {
                break 'outer StopReason::Budget;
            }
            let prior = s.part.leaves[&id].prior;
            let before = s.part.evals.len();
            s.divide(id)?;
            s.part.divisions.push(DivisionRecord { box_id: id, cause, prior, max_prior });
            stable = s.record(s.part.evals.len() - before);
            if stable {
                break 'outer StopReason::Stable;
            }
        }
    };
    s.part.stop_reason = Some(reason);
    // Replace the running sum with an in-order recomputation.
    let p = estimate_probability(&s.part, mode)?;
    if let Some(last) = s.part.trace.last_mut() {
        *last = p;
    }
    Ok(s.part)
}
