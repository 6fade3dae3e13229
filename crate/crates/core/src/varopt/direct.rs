//! Dividing-rectangles search over a [`SearchBox`], with optional surrogate
//! ranking of noisy cells and budgeted refinement of competitive cells.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParams;
use crate::error::{Error, Result};
use crate::varopt::ocba::{allocate_refinement, CellStats};
use crate::varopt::surrogate::{Surrogate, SurrogateConfig};
use crate::varopt::{derive_seed, generator_period, project_constraints, Constraints, Evaluation, Evaluator, SearchBox};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    pub max_evaluations: usize,
    /// Total shot budget; `None` leaves only the evaluation cap.
    pub shot_budget: Option<usize>,
    /// Minimal relative improvement a potentially optimal cell must promise.
    pub epsilon: f64,
    /// Cells whose longest side (unit-cube coordinates) is below this are not divided.
    pub min_side: f64,
    /// Cap on cells divided per iteration (`None`: all potentially optimal cells).
    pub max_divisions: Option<usize>,
    /// Surrogate used to rank noisy cells; `None` ranks by sample means.
    pub surrogate: Option<SurrogateConfig>,
    pub refit_every: usize,
    pub refine_confidence: f64,
    pub refine_candidates: usize,
    /// Shots available for refinement in each iteration.
    pub refine_shots: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            max_evaluations: 2000,
            shot_budget: None,
            epsilon: 1e-4,
            min_side: 1e-6,
            max_divisions: None,
            surrogate: Some(SurrogateConfig::default()),
            refit_every: 5,
            refine_confidence: 0.9,
            refine_candidates: 5,
            refine_shots: 500,
            batch: 50,
            seed: 0,
        }
    }
}

/// Hyperrectangle of the unit cube over the free box dimensions. A divided
/// cell keeps its centre sample and shrinks, so every cell is a leaf.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub center: Vec<f64>,
    /// Trisection depth per dimension; the side length is `3^-level`.
    pub levels: Vec<u32>,
    /// Constrained angles evaluated for this cell.
    pub params: Vec<f64>,
    pub samples: Vec<Evaluation>,
}

impl Cell {
    pub fn half_widths(&self) -> Vec<f64> {
        self.levels.iter().map(|&l| 0.5 * 3f64.powi(-(l as i32))).collect()
    }

    /// Centre-to-vertex distance.
    pub fn size(&self) -> f64 {
        self.half_widths().iter().map(|h| h * h).sum::<f64>().sqrt()
    }

    pub fn shots(&self) -> usize {
        self.samples.iter().map(|s| s.shots).sum()
    }

    /// Shot-weighted pooled mean and its variance.
    pub fn stats(&self) -> CellStats {
        let shots = self.shots();
        if shots == 0 {
            let n = self.samples.len() as f64;
            let mean = self.samples.iter().map(|s| s.cost).sum::<f64>() / n;
            let variance = self.samples.iter().map(|s| s.variance).sum::<f64>() / (n * n);
            return CellStats { mean, variance, shots };
        }
        let t = shots as f64;
        let mean = self.samples.iter().map(|s| s.shots as f64 * s.cost).sum::<f64>() / t;
        let variance = self.samples.iter().map(|s| (s.shots as f64).powi(2) * s.variance).sum::<f64>() / (t * t);
        CellStats { mean, variance, shots }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Sample,
    Refine,
}

/// One evaluation, in order of issue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub index: usize,
    pub cell: usize,
    pub kind: RecordKind,
    pub params: Vec<f64>,
    pub cost: f64,
    pub variance: f64,
    pub shots: usize,
    /// Running minimum of the cell estimates seen so far.
    pub incumbent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub best: CircuitParams,
    pub best_cost: f64,
    pub best_variance: f64,
    pub evaluations: usize,
    pub shots: usize,
    /// False when the search stopped because the budget ran out.
    pub complete: bool,
    pub iterations: usize,
    pub cells: Vec<Cell>,
    pub trace: Vec<TraceRecord>,
}

/// Writes the trace as one JSON object per line.
pub fn write_trace<W: Write>(trace: &[TraceRecord], mut out: W) -> std::io::Result<()> {
    for r in trace {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

struct Search<'a, E: Evaluator + ?Sized> {
    evaluator: &'a E,
    bx: &'a SearchBox,
    constraints: &'a Constraints,
    cfg: &'a OptimizeConfig,
    free: Vec<usize>,
    cells: Vec<Cell>,
    trace: Vec<TraceRecord>,
    evaluations: usize,
    shots: usize,
    incumbent: f64,
}

impl<E: Evaluator + ?Sized> Search<'_, E> {
    fn params_at(&self, unit: &[f64]) -> Result<(CircuitParams, Vec<f64>)> {
        let raw = CircuitParams::from_vec(self.bx.n_en, self.bx.n_de, &self.bx.point(unit))?;
        let p = project_constraints(&raw, self.constraints);
        let v = p.to_vec();
        Ok((p, v))
    }

    fn budget_left(&self, evals: usize) -> bool {
        self.evaluations + evals <= self.cfg.max_evaluations
            && self.cfg.shot_budget.is_none_or(|b| self.shots < b)
    }

    fn record(&mut self, cell: usize, kind: RecordKind, e: Evaluation) {
        let mean = self.cells[cell].stats().mean;
        self.incumbent = self.incumbent.min(mean);
        self.trace.push(TraceRecord {
            index: self.trace.len(),
            cell,
            kind,
            params: self.cells[cell].params.clone(),
            cost: e.cost,
            variance: e.variance,
            shots: e.shots,
            incumbent: self.incumbent,
        });
    }

    /// Evaluates a batch of points (possibly concurrently); results are in
    /// input order and seeded by their global evaluation index.
    fn evaluate_many(&mut self, points: &[(CircuitParams, Option<usize>)]) -> Result<Vec<Evaluation>> {
        let base = self.evaluations;
        let seed = self.cfg.seed;
        let ev = self.evaluator;
        let out: Vec<Evaluation> = points
            .par_iter()
            .enumerate()
            .map(|(i, (p, s))| ev.evaluate(p, *s, derive_seed(seed, (base + i) as u64)))
            .collect::<Result<_>>()?;
        self.evaluations += out.len();
        self.shots += out.iter().map(|e| e.shots).sum::<usize>();
        Ok(out)
    }

    fn new_cell(&mut self, center: Vec<f64>, levels: Vec<u32>, params: Vec<f64>, e: Evaluation) -> usize {
        self.cells.push(Cell { center, levels, params, samples: vec![e] });
        let id = self.cells.len() - 1;
        self.record(id, RecordKind::Sample, e);
        id
    }

    fn ranking_values(&self, surrogate: Option<&Surrogate>) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| {
                let s = c.stats();
                match surrogate {
                    Some(gp) if s.variance > 0.0 => gp.predict(&self.free_values(c)).0,
                    _ => s.mean,
                }
            })
            .collect()
    }

    fn free_values(&self, c: &Cell) -> Vec<f64> {
        self.free.iter().map(|&i| c.params[i]).collect()
    }

    fn fit_surrogate(&self, cfg: &SurrogateConfig) -> Option<Surrogate> {
        let kinds = CircuitParams::param_kinds(self.bx.n_en, self.bx.n_de);
        // 2π is a period of every generator; the exact one needs N
        let periods: Vec<f64> = self
            .free
            .iter()
            .map(|&i| self.evaluator.n_particles().map_or(2.0 * std::f64::consts::PI, |n| generator_period(kinds[i], n)))
            .collect();
        let widths: Vec<f64> = self.free.iter().map(|&i| self.bx.upper[i] - self.bx.lower[i]).collect();
        let x: Vec<Vec<f64>> = self.cells.iter().map(|c| self.free_values(c)).collect();
        let stats: Vec<CellStats> = self.cells.iter().map(Cell::stats).collect();
        let y: Vec<f64> = stats.iter().map(|s| s.mean).collect();
        let v: Vec<f64> = stats.iter().map(|s| s.variance).collect();
        Surrogate::fit(&x, &y, &v, &periods, &widths, cfg).ok()
    }

    fn potentially_optimal(&self, values: &[f64]) -> Vec<usize> {
        let active: Vec<usize> = (0..self.cells.len())
            .filter(|&i| {
                let c = &self.cells[i];
                c.levels.iter().min().is_some_and(|&l| 3f64.powi(-(l as i32)) >= self.cfg.min_side)
            })
            .collect();
        if active.is_empty() {
            return vec![];
        }
        // best cell per size class
        let mut groups: Vec<(f64, usize)> = vec![];
        for &i in &active {
            let d = self.cells[i].size();
            match groups.iter_mut().find(|(s, _)| (s - d).abs() <= 1e-12 * d.max(1e-300)) {
                Some(g) => {
                    if values[i] < values[g.1] || (values[i] == values[g.1] && i < g.1) {
                        g.1 = i
                    }
                }
                None => groups.push((d, i)),
            }
        }
        let f_min = active.iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
        let mut out = vec![];
        for &(dj, j) in &groups {
            let fj = values[j];
            let mut k_low: f64 = 0.0;
            let mut k_high = f64::INFINITY;
            for &(di, i) in &groups {
                if di < dj {
                    k_low = k_low.max((fj - values[i]) / (dj - di));
                } else if di > dj {
                    k_high = k_high.min((values[i] - fj) / (di - dj));
                }
            }
            if k_high <= 0.0 || k_low > k_high {
                continue;
            }
            if k_high.is_finite() && fj - k_high * dj > f_min - self.cfg.epsilon * f_min.abs() {
                continue;
            }
            out.push(j);
        }
        out.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        if let Some(cap) = self.cfg.max_divisions {
            out.truncate(cap.max(1));
        }
        out
    }

    /// Trisects a cell along its longest sides, best probed direction first.
    fn divide(&mut self, id: usize) -> Result<bool> {
        let levels = self.cells[id].levels.clone();
        let min_level = *levels.iter().min().expect("free dimensions");
        let dims: Vec<usize> = (0..levels.len()).filter(|&k| levels[k] == min_level).collect();
        if !self.budget_left(2 * dims.len()) {
            return Ok(false);
        }
        let delta = 3f64.powi(-(min_level as i32)) / 3.0;
        let center = self.cells[id].center.clone();
        let mut probes = vec![];
        for &k in &dims {
            for s in [-1.0, 1.0] {
                let mut c = center.clone();
                c[k] += s * delta;
                let (p, v) = self.params_at(&c)?;
                probes.push((c, p, v));
            }
        }
        let requests: Vec<(CircuitParams, Option<usize>)> = probes.iter().map(|(_, p, _)| (p.clone(), None)).collect();
        let evals = self.evaluate_many(&requests)?;
        let mut order: Vec<usize> = (0..dims.len()).collect();
        let w = |j: usize| evals[2 * j].cost.min(evals[2 * j + 1].cost);
        order.sort_by(|&a, &b| w(a).total_cmp(&w(b)).then(a.cmp(&b)));
        let mut lv = levels;
        for &j in &order {
            lv[dims[j]] += 1;
            for s in 0..2 {
                let (c, _, v) = probes[2 * j + s].clone();
                self.new_cell(c, lv.clone(), v, evals[2 * j + s]);
            }
        }
        self.cells[id].levels = lv;
        Ok(true)
    }

    fn refine(&mut self) -> Result<()> {
        let mut ranked: Vec<usize> =
            (0..self.cells.len()).filter(|&i| self.cells[i].shots() > 0).collect();
        ranked.sort_by(|&a, &b| self.cells[a].stats().mean.total_cmp(&self.cells[b].stats().mean).then(a.cmp(&b)));
        ranked.truncate(self.cfg.refine_candidates);
        if ranked.len() < 2 {
            return Ok(());
        }
        let left = self.cfg.shot_budget.map_or(usize::MAX, |b| b.saturating_sub(self.shots));
        let budget = self.cfg.refine_shots.min(left);
        let stats: Vec<CellStats> = ranked.iter().map(|&i| self.cells[i].stats()).collect();
        let alloc = allocate_refinement(&stats, self.cfg.refine_confidence, budget, self.cfg.batch)?;
        let jobs: Vec<(usize, usize)> = ranked.iter().zip(&alloc).filter(|(_, &a)| a > 0).map(|(&i, &a)| (i, a)).collect();
        if jobs.is_empty() || !self.budget_left(jobs.len()) {
            return Ok(());
        }
        let requests: Vec<(CircuitParams, Option<usize>)> = jobs
            .iter()
            .map(|&(i, a)| Ok((CircuitParams::from_vec(self.bx.n_en, self.bx.n_de, &self.cells[i].params)?, Some(a))))
            .collect::<Result<_>>()?;
        let evals = self.evaluate_many(&requests)?;
        for ((i, _), e) in jobs.into_iter().zip(evals) {
            self.cells[i].samples.push(e);
            self.record(i, RecordKind::Refine, e);
        }
        Ok(())
    }
}

/// Minimizes the evaluator's cost over the box. Every evaluated point is
/// projected onto the constraints first; the best cell is chosen by its
/// measured (pooled) estimate.
pub fn optimize<E: Evaluator + ?Sized>(
    evaluator: &E,
    bx: &SearchBox,
    constraints: &Constraints,
    cfg: &OptimizeConfig,
) -> Result<OptimizeResult> {
    bx.validate()?;
    constraints.validate()?;
    if cfg.max_evaluations == 0 || cfg.shot_budget == Some(0) {
        return Err(Error::InvalidArgument("optimization budget must be positive".into()));
    }
    if cfg.batch == 0 || !(cfg.refine_confidence > 0.0 && cfg.refine_confidence < 1.0) {
        return Err(Error::InvalidArgument("batch must be positive and confidence in (0, 1)".into()));
    }
    let free = bx.free_dims();
    let mut search = Search {
        evaluator,
        bx,
        constraints,
        cfg,
        free: free.clone(),
        cells: vec![],
        trace: vec![],
        evaluations: 0,
        shots: 0,
        incumbent: f64::INFINITY,
    };
    let center = vec![0.5; free.len()];
    let (p, v) = search.params_at(&center)?;
    let e = search.evaluate_many(&[(p, None)])?[0];
    search.new_cell(center, vec![0; free.len()], v, e);

    let mut complete = free.is_empty();
    let mut iterations = 0;
    let mut surrogate: Option<Surrogate> = None;
    while !complete && search.budget_left(1) {
        iterations += 1;
        if evaluator.is_noisy() {
            if let Some(scfg) = &cfg.surrogate {
                if iterations % cfg.refit_every.max(1) == 1 && search.cells.len() > 2 * free.len() {
                    surrogate = search.fit_surrogate(scfg);
                }
            }
        }
        let values = search.ranking_values(surrogate.as_ref());
        let chosen = search.potentially_optimal(&values);
        if chosen.is_empty() {
            complete = true;
            break;
        }
        let mut divided_any = false;
        for id in chosen {
            if search.divide(id)? {
                divided_any = true;
            }
        }
        if !divided_any {
            break;
        }
        if evaluator.is_noisy() && search.budget_left(1) {
            search.refine()?;
        }
    }
    let best_id = (0..search.cells.len())
        .min_by(|&a, &b| search.cells[a].stats().mean.total_cmp(&search.cells[b].stats().mean).then(a.cmp(&b)))
        .expect("centre cell evaluated");
    let best_stats = search.cells[best_id].stats();
    let best = CircuitParams::from_vec(bx.n_en, bx.n_de, &search.cells[best_id].params)?;
    Ok(OptimizeResult {
        best,
        best_cost: best_stats.mean,
        best_variance: best_stats.variance,
        evaluations: search.evaluations,
        shots: search.shots,
        complete,
        iterations,
        cells: search.cells,
        trace: search.trace,
    })
}
