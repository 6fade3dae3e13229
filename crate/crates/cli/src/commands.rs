use std::f64::consts::PI;
use std::io::BufWriter;

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;
use varsense::lab::{run_frequency_experiment, sample_outcomes, NoiseModel, VirtualLab};
use varsense::metrology::{
    hl_bmse, ideal_cost, normalized_allan, psl_bmse, ramsey_time_from_width, sql_bmse, CostReport, EstimatorKind,
    QuadratureScheme,
};
use varsense::oqi::{oqi_bound, oqi_curve, OqiOptions};
use varsense::stability::{stability_gains, StabilityOptimum, StabilityOptions};
use varsense::varopt::local::{constrained_optimum, linear_cost, theory_optimum, LocalOptions};
use varsense::varopt::{derive_seed, fine_scan, optimize, write_trace, IdealEvaluator, OptimizeResult, ScanEvaluator, SearchBox};
use varsense::{CircuitParams, Prior};

use crate::config::{BoundsConfig, ClockJob, CurveConfig, EvaluatorKind, FreqJob, OptimizeJob, OqiConfig, SelftestConfig};
use crate::output::{num, OutputDir};

fn label(shape: (usize, usize)) -> String {
    format!("{}-{}", shape.0, shape.1)
}

fn ratio(bmse: f64, width: f64) -> f64 {
    bmse.sqrt() / width
}

/// Best circuit of a shape at each width, each point warm-started from the
/// previous one and from fresh random starts.
fn optimized_along(n: usize, shape: (usize, usize), widths: &[f64], cfg: &CurveConfig) -> Result<Vec<CircuitParams>> {
    let local = LocalOptions::default();
    let mut out: Vec<CircuitParams> = Vec::with_capacity(widths.len());
    for (i, &w) in widths.iter().enumerate() {
        let prior = Prior::new(w)?;
        let prev: Vec<CircuitParams> = out.last().cloned().into_iter().collect();
        let free = theory_optimum(n, shape, prior, &prev, cfg.random_starts, derive_seed(cfg.seed, i as u64), &local)?;
        let best = match &cfg.constraints {
            None => free.params,
            Some(c) => {
                let mut best = constrained_optimum(n, prior, &free.params, c, &local)?;
                if let Some(p) = prev.first() {
                    let warm = constrained_optimum(n, prior, p, c, &local)?;
                    if warm.bmse < best.bmse {
                        best = warm;
                    }
                }
                best.params
            }
        };
        out.push(best);
    }
    Ok(out)
}

#[derive(Serialize)]
struct CurvePoint {
    shape: String,
    prior_width: f64,
    params: CircuitParams,
    report: CostReport,
}

pub fn curve(cfg: &CurveConfig, out: &mut OutputDir) -> Result<()> {
    let widths = cfg.widths.values()?;
    let n = cfg.n_particles;
    let scheme = match cfg.estimator {
        EstimatorKind::Linear => None,
        _ => Some(QuadratureScheme::GaussHermite { nodes: cfg.nodes }),
    };
    let curves: Vec<((usize, usize), Vec<CircuitParams>)> = if cfg.params.is_empty() {
        cfg.shapes
            .par_iter()
            .map(|s| Ok(((s[0], s[1]), optimized_along(n, (s[0], s[1]), &widths, cfg)?)))
            .collect::<Result<_>>()?
    } else {
        cfg.params.iter().map(|p| (p.shape(), vec![p.clone(); widths.len()])).collect()
    };
    let oqi = if cfg.oqi {
        let opts = OqiOptions { max_iter: cfg.oqi_max_iter, seed: cfg.seed, ..Default::default() };
        Some(oqi_curve(n, &widths, &opts)?)
    } else {
        None
    };
    let mut rows = vec![];
    let mut points = vec![];
    for (shape, params) in &curves {
        for (i, (&w, p)) in widths.iter().zip(params).enumerate() {
            let prior = Prior::new(w)?;
            let r = ideal_cost(p, n, prior, cfg.estimator, scheme)?;
            let oqi_ratio = oqi.as_ref().map_or(f64::NAN, |o| ratio(o[i].bmse, w));
            rows.push(vec![
                label(*shape),
                num(w),
                num(r.bmse),
                num(r.ratio),
                num(r.db),
                num(r.slope.unwrap_or(f64::NAN)),
                num(ratio(sql_bmse(n, w), w)),
                num(ratio(hl_bmse(n, w), w)),
                num(ratio(psl_bmse(w), w)),
                num(oqi_ratio),
            ]);
            points.push(CurvePoint { shape: label(*shape), prior_width: w, params: p.clone(), report: r });
        }
    }
    out.csv(
        "curve.csv",
        &["shape", "prior_width", "bmse", "ratio", "db", "slope", "sql_ratio", "hl_ratio", "psl_ratio", "oqi_ratio"],
        &rows,
    )?;
    out.json("curve.json", &points)
}

pub fn bounds(cfg: &BoundsConfig, out: &mut OutputDir) -> Result<()> {
    let n = cfg.n_particles;
    if n == 0 {
        bail!("n_particles must be at least 1");
    }
    let rows: Vec<Vec<String>> = cfg
        .widths
        .values()?
        .into_iter()
        .map(|w| {
            let (s, h, p) = (sql_bmse(n, w), hl_bmse(n, w), psl_bmse(w));
            vec![num(w), num(s), num(h), num(p), num(ratio(s, w)), num(ratio(h, w)), num(ratio(p, w))]
        })
        .collect();
    out.csv("bounds.csv", &["prior_width", "sql_bmse", "hl_bmse", "psl_bmse", "sql_ratio", "hl_ratio", "psl_ratio"], &rows)
}

#[derive(Serialize)]
struct OqiSummary {
    n_particles: usize,
    min_db: f64,
    prior_width: f64,
    max_iterations: usize,
}

pub fn oqi(cfg: &OqiConfig, out: &mut OutputDir) -> Result<()> {
    let widths = cfg.widths.values()?;
    let sols = oqi_curve(cfg.n_particles, &widths, &cfg.options())?;
    let rows: Vec<Vec<String>> = sols
        .iter()
        .map(|s| {
            vec![
                num(s.prior_width),
                num(s.bmse),
                num(s.ratio),
                num(s.db),
                s.iterations.to_string(),
                num(s.residual),
                s.converged.to_string(),
            ]
        })
        .collect();
    out.csv("oqi.csv", &["prior_width", "bmse", "ratio", "db", "iterations", "residual", "converged"], &rows)?;
    let best = sols.iter().min_by(|a, b| a.db.total_cmp(&b.db)).expect("non-empty grid");
    out.json(
        "oqi_summary.json",
        &OqiSummary {
            n_particles: cfg.n_particles,
            min_db: best.db,
            prior_width: best.prior_width,
            max_iterations: sols.iter().map(|s| s.iterations).max().unwrap_or(0),
        },
    )
}

#[derive(Serialize)]
struct OptimizeSummary {
    best: CircuitParams,
    best_cost: f64,
    best_variance: f64,
    ideal_cost: f64,
    theory: CircuitParams,
    theory_cost: f64,
    ratio_to_theory: f64,
    evaluations: usize,
    shots: usize,
    complete: bool,
    iterations: usize,
    fine_scan: Option<CostReport>,
}

pub fn optimize_cmd(cfg: &OptimizeJob, out: &mut OutputDir) -> Result<()> {
    let n = cfg.n_particles;
    let prior = Prior::new(cfg.prior_width)?;
    let shape = (cfg.shape[0], cfg.shape[1]);
    let local = LocalOptions::default();
    let theory = match &cfg.theory {
        Some(p) => p.clone(),
        None => {
            let free = theory_optimum(n, shape, prior, &[], 8, cfg.seed, &local)?;
            constrained_optimum(n, prior, &free.params, &cfg.constraints, &local)?.params
        }
    };
    if theory.shape() != shape {
        bail!("theory circuit has shape {:?}, expected {:?}", theory.shape(), shape);
    }
    let theory_cost = linear_cost(&theory, n, prior);
    let bx = SearchBox::theory_scaled(&theory, cfg.displacement, cfg.seed);
    let opt = varsense::varopt::OptimizeConfig { seed: cfg.seed, ..cfg.optimizer.clone() };
    let (result, fine): (OptimizeResult, _) = match cfg.evaluator {
        EvaluatorKind::Ideal => (optimize(&IdealEvaluator::linear(n, prior), &bx, &cfg.constraints, &opt)?, None),
        EvaluatorKind::Lab => {
            let ev = ScanEvaluator { sensor: VirtualLab::new(n, cfg.noise.clone())?, prior, spec: cfg.scan };
            let r = optimize(&ev, &bx, &cfg.constraints, &opt)?;
            let fine = match &cfg.fine {
                Some(spec) => Some(fine_scan(&ev.sensor, &r.best, prior, spec, None, derive_seed(cfg.seed, u64::MAX))?),
                None => None,
            };
            (r, fine)
        }
    };
    let path = out.path("trace.jsonl");
    write_trace(&result.trace, BufWriter::new(std::fs::File::create(path)?))?;
    let rows: Vec<Vec<String>> = result
        .trace
        .iter()
        .map(|t| {
            let kind = serde_json::to_value(t.kind)?.as_str().unwrap_or_default().to_string();
            Ok(vec![
                t.index.to_string(),
                t.cell.to_string(),
                kind,
                num(t.cost),
                num(t.variance),
                t.shots.to_string(),
                num(t.incumbent),
            ])
        })
        .collect::<Result<_>>()?;
    out.csv("trace.csv", &["index", "cell", "kind", "cost", "variance", "shots", "incumbent"], &rows)?;
    if let Some(f) = &fine {
        let rows: Vec<Vec<String>> = f.curve.iter().map(|(p, m)| vec![num(*p), num(*m)]).collect();
        out.csv("fine_scan.csv", &["phase", "mse"], &rows)?;
    }
    let ideal = linear_cost(&result.best, n, prior);
    out.json(
        "best.json",
        &OptimizeSummary {
            best: result.best.clone(),
            best_cost: result.best_cost,
            best_variance: result.best_variance,
            ideal_cost: ideal,
            theory,
            theory_cost,
            ratio_to_theory: ideal / theory_cost,
            evaluations: result.evaluations,
            shots: result.shots,
            complete: result.complete,
            iterations: result.iterations,
            fine_scan: fine.map(|f| f.fit.report),
        },
    )
}

pub fn clock(cfg: &ClockJob, out: &mut OutputDir) -> Result<()> {
    let opts = StabilityOptions {
        widths: cfg.widths.values()?,
        alpha: cfg.alpha,
        constraints: cfg.constraints,
        random_starts: cfg.random_starts,
        seed: cfg.seed,
        ..Default::default()
    };
    if !(cfg.bandwidth > 0.0) {
        bail!("bandwidth must be positive");
    }
    let g = stability_gains(cfg.n_particles, &cfg.starts, &opts)?;
    let t = |w: f64| ramsey_time_from_width(cfg.bandwidth, w, cfg.alpha);
    let sigma = |bmse: f64, w: f64| -> f64 {
        let r = CostReport::new(bmse, Prior::new(w).expect("positive width"), EstimatorKind::Linear, None);
        normalized_allan(&r, cfg.alpha).unwrap_or(f64::NAN)
    };
    let seqs: [(&str, &StabilityOptimum); 4] = [("0-0", &g.css), ("1-0", &g.squeezing), ("1-2", &g.full), ("oqc", &g.oqc)];
    let mut rows = vec![];
    for (name, s) in &seqs {
        for &(w, b) in &s.curve {
            let ns = sigma(b, w);
            rows.push(vec![name.to_string(), num(w), num(t(w)), num(b), num(ns * w.powf(1.0 / cfg.alpha)), num(ns)]);
        }
    }
    out.csv("clock.csv", &["sequence", "prior_width", "ramsey_time", "bmse", "delta_phi_m", "normalized_sigma"], &rows)?;
    let rows: Vec<Vec<String>> = seqs
        .iter()
        .map(|(name, s)| {
            vec![
                name.to_string(),
                num(s.prior_width),
                num(t(s.prior_width)),
                num(s.bmse),
                num(s.normalized),
                num(10.0 * (g.css.normalized / s.normalized).log10()),
            ]
        })
        .collect();
    out.csv("clock_gains.csv", &["sequence", "prior_width", "ramsey_time", "bmse", "normalized_sigma", "gain_db"], &rows)?;
    out.json("clock.json", &g)
}

pub fn freq_exp(cfg: &FreqJob, out: &mut OutputDir) -> Result<()> {
    let r = run_frequency_experiment(&cfg.experiment, &cfg.noise)?;
    let mut rows = vec![];
    for p in &r.points {
        for (name, s) in [("0-0", &p.css), ("1-2", &p.optimized)] {
            rows.push(vec![
                num(p.ramsey_time),
                num(p.prior_width),
                name.to_string(),
                num(s.slope),
                num(s.std),
                num(s.bootstrap_se),
                num(s.theory_std),
            ]);
        }
    }
    out.csv("freq_exp.csv", &["ramsey_time", "prior_width", "sequence", "slope", "std", "bootstrap_se", "theory_std"], &rows)?;
    out.json("freq_exp.json", &r)
}

/// Returns whether every check passed.
pub fn selftest(cfg: &SelftestConfig, out: &mut OutputDir) -> Result<bool> {
    let mut checks: Vec<(&str, f64, f64, f64)> = vec![];
    checks.push(("sql_bmse n=12 width=0.5", sql_bmse(12, 0.5), 0.0625, 1e-12));
    checks.push(("hl_bmse n=12 width=0.5", hl_bmse(12, 0.5), 1.0 / 148.0, 1e-12));
    let psl = (2.0 * PI).powi(2) * erfc_continued_fraction(PI / (2f64.sqrt() * 1.5));
    checks.push(("psl_bmse width=1.5", psl_bmse(1.5), psl, 1e-10));
    let css = ideal_cost(&CircuitParams::css(), 16, Prior::new(0.79)?, EstimatorKind::Linear, None)?;
    checks.push(("css n=16 width=0.79 linear db", css.db, -4.01, 0.05));
    let o = oqi_bound(6, 0.8, &OqiOptions::default())?;
    let c = linear_cost(&CircuitParams::css(), 6, Prior::new(0.8)?);
    let inside = hl_bmse(6, 0.8) <= o.bmse && o.bmse <= c;
    checks.push(("hl <= oqi <= css n=6 width=0.8", f64::from(u8::from(inside)), 1.0, 0.0));
    let noise = NoiseModel { seed: cfg.seed, ..Default::default() };
    let a = sample_outcomes(&CircuitParams::css(), 8, 0.3, 500, &noise, 1)?;
    let b = sample_outcomes(&CircuitParams::css(), 8, 0.3, 500, &noise, 1)?;
    checks.push(("seeded sampling repeats", f64::from(u8::from(a == b)), 1.0, 0.0));

    let mut ok = true;
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|&(name, value, expected, tol)| {
            let pass = (value - expected).abs() <= tol;
            ok &= pass;
            println!("{} {name}: {value:.6} (expected {expected:.6} ± {tol:e})", if pass { "PASS" } else { "FAIL" });
            vec![name.to_string(), num(value), num(expected), num(tol), pass.to_string()]
        })
        .collect();
    out.csv("selftest.csv", &["check", "value", "expected", "tolerance", "pass"], &rows)?;
    Ok(ok)
}

/// Complementary error function by continued fraction, independent of the
/// library's implementation; accurate to ~1e-14 for x > 2.
fn erfc_continued_fraction(x: f64) -> f64 {
    let mut f = 0.0;
    for k in (1..200).rev() {
        f = (k as f64 / 2.0) / (x + f);
    }
    (-x * x).exp() / (PI.sqrt() * (x + f))
}
