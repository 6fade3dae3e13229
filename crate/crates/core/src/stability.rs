//! Clock stability of optimized sequences: the prior width minimizing the
//! normalized Allan deviation, and gains relative to the classical sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitParams, ParamKind};
use crate::error::{Error, Result};
use crate::metrology::{normalized_allan, CostReport, EstimatorKind, Prior};
use crate::oqi::{oqi_bound_from, OqiOptions};
use crate::varopt::local::{constrained_optimum, linear_cost, theory_optimum, LocalOptions};
use crate::varopt::Constraints;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityOptions {
    /// Ascending prior widths scanned before refinement.
    pub widths: Vec<f64>,
    /// Noise exponent of the normalization `Δφ_M/δφ^{1/α}`.
    pub alpha: f64,
    /// Angle restrictions; `None` optimizes freely.
    pub constraints: Option<Constraints>,
    pub random_starts: usize,
    /// Golden-section steps on the width around the best grid point.
    pub refine_steps: usize,
    pub seed: u64,
    pub local: LocalOptions,
    pub oqi: OqiOptions,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            widths: (0..=28).map(|i| 0.4 + 0.025 * i as f64).collect(),
            alpha: 2.0,
            constraints: Some(Constraints::default()),
            random_starts: 8,
            refine_steps: 30,
            seed: 0,
            local: LocalOptions::default(),
            // narrow priors converge slowly
            oqi: OqiOptions { max_iter: 5000, ..Default::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptimum {
    pub prior_width: f64,
    pub bmse: f64,
    /// `Δφ_M/δφ^{1/α}` at `prior_width`.
    pub normalized: f64,
    /// `None` for the optimal quantum interferometer.
    pub params: Option<CircuitParams>,
    /// `(δφ, bmse)` along the scan grid.
    pub curve: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityGains {
    pub n_particles: usize,
    pub css: StabilityOptimum,
    pub squeezing: StabilityOptimum,
    pub full: StabilityOptimum,
    pub oqc: StabilityOptimum,
    /// `10·log₁₀(σ_css/σ)` of the (1,0) and (1,2) sequences.
    pub squeezing_gain_db: f64,
    pub full_gain_db: f64,
    /// `10·log₁₀(σ_(1,2)/σ_oqc)`.
    pub gap_db: f64,
}

fn normalized(bmse: f64, width: f64, alpha: f64) -> Result<f64> {
    let report = CostReport::new(bmse, Prior::new(width)?, EstimatorKind::Linear, None);
    normalized_allan(&report, alpha)
}

fn optimize_at(n: usize, width: f64, start: &CircuitParams, opts: &StabilityOptions) -> Result<(CircuitParams, f64)> {
    let prior = Prior::new(width)?;
    if start.to_vec().is_empty() {
        return Ok((start.clone(), linear_cost(start, n, prior)));
    }
    let t = match &opts.constraints {
        Some(c) => constrained_optimum(n, prior, start, c, &opts.local)?,
        None => theory_optimum(n, start.shape(), prior, std::slice::from_ref(start), 0, 0, &opts.local)?,
    };
    Ok((t.params, t.bmse))
}

fn random_start(shape: (usize, usize), n: usize, opts: &StabilityOptions, rng: &mut ChaCha8Rng) -> Result<CircuitParams> {
    let kinds = CircuitParams::param_kinds(shape.0, shape.1);
    let (lo, hi) = match &opts.constraints {
        Some(c) => (c.chi_min, c.chi_max),
        None => (0.0, 2.0 / n as f64),
    };
    let x: Vec<f64> = kinds
        .iter()
        .map(|k| match k {
            ParamKind::Twist => rng.random_range(lo..hi),
            ParamKind::Rotation => rng.random_range(-2.0..2.0),
        })
        .collect();
    CircuitParams::from_vec(shape.0, shape.1, &x)
}

fn golden<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, steps: usize) -> Result<f64> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..steps {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

fn check_widths(opts: &StabilityOptions) -> Result<()> {
    if opts.widths.len() < 3 || opts.widths.windows(2).any(|w| !(w[1] > w[0])) || !(opts.widths[0] > 0.0) {
        return Err(Error::InvalidArgument("need at least 3 ascending positive widths".into()));
    }
    Ok(())
}

/// Picks the grid index of the smallest value and refines the width between
/// its neighbours. `eval(width, grid_index)` returns `(bmse, payload)`.
fn refine<T, F>(opts: &StabilityOptions, values: &[f64], mut eval: F) -> Result<(f64, f64, T)>
where
    F: FnMut(f64, usize) -> Result<(f64, T)>,
{
    let w = &opts.widths;
    let best = (0..values.len()).min_by(|&i, &j| values[i].total_cmp(&values[j])).expect("non-empty grid");
    let (a, b) = (w[best.saturating_sub(1)], w[(best + 1).min(w.len() - 1)]);
    let width = golden(|x| normalized(eval(x, best)?.0, x, opts.alpha), a, b, opts.refine_steps)?;
    let (bmse, payload) = eval(width, best)?;
    if normalized(bmse, width, opts.alpha)? <= values[best] {
        Ok((width, bmse, payload))
    } else {
        let (bmse, payload) = eval(w[best], best)?;
        Ok((w[best], bmse, payload))
    }
}

/// Allan-optimal prior width of the best circuit of the given shape.
/// Circuits are optimized at the first grid width from `starts` and random
/// starts, then followed along the grid.
pub fn sequence_optimum(
    n: usize,
    shape: (usize, usize),
    starts: &[CircuitParams],
    opts: &StabilityOptions,
) -> Result<StabilityOptimum> {
    check_widths(opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut candidates: Vec<CircuitParams> = starts.iter().filter(|s| s.shape() == shape).cloned().collect();
    let n_random = if shape == (0, 0) { 0 } else { opts.random_starts };
    for _ in 0..n_random {
        candidates.push(random_start(shape, n, opts, &mut rng)?);
    }
    if candidates.is_empty() {
        candidates.push(CircuitParams::zeros(shape.0, shape.1));
    }
    let mid = opts.widths[opts.widths.len() / 2];
    let mut seed_best: Option<(CircuitParams, f64)> = None;
    for c in &candidates {
        let (p, v) = optimize_at(n, mid, c, opts)?;
        if seed_best.as_ref().is_none_or(|b| v < b.1) {
            seed_best = Some((p, v));
        }
    }
    let seed_params = seed_best.expect("at least one candidate").0;

    // follow the optimum outwards from the middle in both directions
    let k = opts.widths.len();
    let mut params: Vec<Option<CircuitParams>> = vec![None; k];
    let mut values = vec![f64::INFINITY; k];
    let mut bmse_grid = vec![f64::INFINITY; k];
    let mid_i = k / 2;
    for dir in [-1i64, 1] {
        let mut prev = seed_params.clone();
        let mut i = mid_i as i64;
        while (0..k as i64).contains(&i) {
            let w = opts.widths[i as usize];
            let (p, mut v) = optimize_at(n, w, &prev, opts)?;
            let (q, u) = optimize_at(n, w, &seed_params, opts)?;
            let p = if u < v {
                v = u;
                q
            } else {
                p
            };
            values[i as usize] = normalized(v, w, opts.alpha)?;
            bmse_grid[i as usize] = v;
            params[i as usize] = Some(p.clone());
            prev = p;
            i += dir;
        }
    }
    let (width, bmse, p) = refine(opts, &values, |x, i| {
        let (p, v) = optimize_at(n, x, params[i].as_ref().expect("filled"), opts)?;
        Ok((v, p))
    })?;
    Ok(StabilityOptimum {
        prior_width: width,
        bmse,
        normalized: normalized(bmse, width, opts.alpha)?,
        params: Some(p),
        curve: opts.widths.iter().copied().zip(bmse_grid).collect(),
    })
}

/// Allan-optimal prior width of the optimal quantum interferometer.
pub fn oqc_optimum(n: usize, opts: &StabilityOptions) -> Result<StabilityOptimum> {
    check_widths(opts)?;
    let mut states = Vec::with_capacity(opts.widths.len());
    let mut values = Vec::with_capacity(opts.widths.len());
    let mut curve = Vec::with_capacity(opts.widths.len());
    let mut prev = None;
    for &w in &opts.widths {
        let s = oqi_bound_from(n, Prior::new(w)?, prev.as_ref(), &opts.oqi)?;
        let cold = oqi_bound_from(n, Prior::new(w)?, None, &opts.oqi)?;
        let s = if cold.bmse < s.bmse { cold } else { s };
        values.push(normalized(s.bmse, w, opts.alpha)?);
        curve.push((w, s.bmse));
        prev = Some(s.state.clone());
        states.push(s.state);
    }
    let (width, bmse, _) = refine(opts, &values, |x, i| {
        let s = oqi_bound_from(n, Prior::new(x)?, Some(&states[i]), &opts.oqi)?;
        Ok((s.bmse, ()))
    })?;
    Ok(StabilityOptimum { prior_width: width, bmse, normalized: normalized(bmse, width, opts.alpha)?, params: None, curve })
}

/// Gains of the (1,0) and (1,2) sequences over (0,0) and the remaining gap of
/// (1,2) to the optimal quantum clock, each at its own optimal prior width.
pub fn stability_gains(n: usize, starts: &[CircuitParams], opts: &StabilityOptions) -> Result<StabilityGains> {
    let css = sequence_optimum(n, (0, 0), &[], opts)?;
    let squeezing = sequence_optimum(n, (1, 0), starts, opts)?;
    let full = sequence_optimum(n, (1, 2), starts, opts)?;
    let oqc = oqc_optimum(n, opts)?;
    let db = |a: f64, b: f64| 10.0 * (a / b).log10();
    Ok(StabilityGains {
        n_particles: n,
        squeezing_gain_db: db(css.normalized, squeezing.normalized),
        full_gain_db: db(css.normalized, full.normalized),
        gap_db: db(full.normalized, oqc.normalized),
        css,
        squeezing,
        full,
        oqc,
    })
}
