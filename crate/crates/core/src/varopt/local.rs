//! Quasi-Newton minimization of smooth costs, used to locate theory optima
//! with the exact simulator.
//!
//! Box bounds are handled with the substitution `x = lo + (hi - lo)(1 + sin u)/2`;
//! gradients are central finite differences.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitParams, ParamKind, PreparedCircuit};
use crate::error::{Error, Result};
use crate::metrology::{bmse_linear_exact, Prior};
use crate::varopt::{project_constraints, Constraints};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalOptions {
    pub max_iter: usize,
    pub grad_step: f64,
    /// Stop when an iteration lowers the value by less than `ftol·(|f| + 1e-30)`.
    pub ftol: f64,
    pub gtol: f64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self { max_iter: 400, grad_step: 1e-6, ftol: 1e-13, gtol: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

enum Coord {
    Fixed(f64),
    Free,
    Boxed(f64, f64),
}

struct Map {
    coords: Vec<Coord>,
}

impl Map {
    fn to_x(&self, u: &[f64]) -> Vec<f64> {
        let mut it = u.iter();
        self.coords
            .iter()
            .map(|c| match *c {
                Coord::Fixed(v) => v,
                Coord::Free => *it.next().expect("free coordinate"),
                Coord::Boxed(lo, hi) => lo + (hi - lo) * 0.5 * (1.0 + it.next().expect("free coordinate").sin()),
            })
            .collect()
    }

    fn to_u(&self, x: &[f64]) -> Vec<f64> {
        self.coords
            .iter()
            .zip(x)
            .filter_map(|(c, &v)| match *c {
                Coord::Fixed(_) => None,
                Coord::Free => Some(v),
                // a start on the bound would sit at a stationary point of the substitution
                Coord::Boxed(lo, hi) => Some((2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0 + 1e-4, 1.0 - 1e-4).asin()),
            })
            .collect()
    }
}

fn gradient(f: &dyn Fn(&[f64]) -> f64, u: &[f64], h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(u.len());
    let mut w = u.to_vec();
    for i in 0..u.len() {
        let s = h * (1.0 + u[i].abs());
        w[i] = u[i] + s;
        let fp = f(&w);
        w[i] = u[i] - s;
        let fm = f(&w);
        w[i] = u[i];
        g[i] = (fp - fm) / (2.0 * s);
    }
    g
}

/// BFGS on `f` within `bounds` (`lo == hi` fixes a coordinate, infinite
/// bounds leave it free).
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], bounds: &[(f64, f64)], opts: &LocalOptions) -> Result<LocalResult> {
    if x0.len() != bounds.len() {
        return Err(Error::InvalidArgument("one bound pair per coordinate required".into()));
    }
    let coords: Vec<Coord> = bounds
        .iter()
        .map(|&(lo, hi)| {
            if lo == hi {
                Coord::Fixed(lo)
            } else if lo.is_finite() && hi.is_finite() {
                Coord::Boxed(lo, hi)
            } else {
                Coord::Free
            }
        })
        .collect();
    let map = Map { coords };
    let fu = |u: &[f64]| f(&map.to_x(u));
    let mut u = DVector::from_vec(map.to_u(x0));
    let n = u.len();
    let mut fx = fu(u.as_slice());
    if n == 0 {
        return Ok(LocalResult { x: map.to_x(&[]), value: fx, iterations: 0 });
    }
    let mut g = gradient(&fu, u.as_slice(), opts.grad_step);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        if g.norm() < opts.gtol {
            break;
        }
        let mut p = -(&hinv * &g);
        let mut slope = g.dot(&p);
        if slope >= 0.0 {
            hinv = DMatrix::identity(n, n);
            p = -g.clone();
            slope = g.dot(&p);
        }
        // backtracking Armijo search
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &u + &p * t;
            let fc = fu(cand.as_slice());
            if fc <= fx + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((u_new, f_new)) = accepted else { break };
        let g_new = gradient(&fu, u_new.as_slice(), opts.grad_step);
        let s = &u_new - &u;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-18 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let a = &i - &s * y.transpose() * rho;
            let b = &i - &y * s.transpose() * rho;
            hinv = &a * &hinv * &b + &s * s.transpose() * rho;
        }
        let drop = fx - f_new;
        u = u_new;
        g = g_new;
        fx = f_new;
        if drop < opts.ftol * (fx.abs() + 1e-30) {
            break;
        }
    }
    Ok(LocalResult { x: map.to_x(u.as_slice()), value: fx, iterations })
}

/// Exact BMSE of the optimal linear estimator; uninformative circuits cost
/// the prior variance.
pub fn linear_cost(params: &CircuitParams, n: usize, prior: Prior) -> f64 {
    let Ok(circuit) = PreparedCircuit::new(params, n) else {
        return f64::INFINITY;
    };
    let mom = bmse_linear_exact(&circuit, prior);
    mom.optimal_bmse().unwrap_or(prior.variance())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryOptimum {
    pub params: CircuitParams,
    pub bmse: f64,
}

/// Best unconstrained circuit of the given shape, from the supplied starts and
/// `random_starts` random initial angles.
pub fn theory_optimum(
    n: usize,
    shape: (usize, usize),
    prior: Prior,
    starts: &[CircuitParams],
    random_starts: usize,
    seed: u64,
    opts: &LocalOptions,
) -> Result<TheoryOptimum> {
    let (n_en, n_de) = shape;
    let kinds = CircuitParams::param_kinds(n_en, n_de);
    let bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); kinds.len()];
    let mut inits: Vec<Vec<f64>> = starts.iter().map(CircuitParams::to_vec).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_starts {
        inits.push(random_angles(&kinds, n, &mut rng));
    }
    if inits.is_empty() {
        inits.push(vec![0.0; kinds.len()]);
    }
    let mut best: Option<TheoryOptimum> = None;
    for x0 in inits {
        if x0.len() != kinds.len() {
            return Err(Error::InvalidArgument("start has the wrong shape".into()));
        }
        let r = minimize(
            |x| CircuitParams::from_vec(n_en, n_de, x).map_or(f64::INFINITY, |p| linear_cost(&p, n, prior)),
            &x0,
            &bounds,
            opts,
        )?;
        if best.as_ref().is_none_or(|b| r.value < b.bmse) {
            best = Some(TheoryOptimum { params: CircuitParams::from_vec(n_en, n_de, &r.x)?, bmse: r.value });
        }
    }
    Ok(best.expect("at least one start"))
}

fn random_angles(kinds: &[ParamKind], n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // twist scale ~ 1/N keeps the random circuits in the squeezing regime
    let twist = 2.0 / n as f64;
    kinds
        .iter()
        .map(|k| match k {
            ParamKind::Twist => rng.random_range(0.0..twist),
            ParamKind::Rotation => rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        })
        .collect()
}

/// Local optimum within the admissible set, starting from `start`: first with
/// twist magnitudes in `[0, chi_max]`, then with small twists dropped or
/// raised to `chi_min` and the surviving twists kept in `[chi_min, chi_max]`.
/// Without `drop_small` the relaxed pass is skipped, so every nonzero twist of
/// `start` stays in `[chi_min, chi_max]`. Twists that are exactly zero in
/// `start` stay zero.
pub fn constrained_optimum(
    n: usize,
    prior: Prior,
    start: &CircuitParams,
    constraints: &Constraints,
    opts: &LocalOptions,
) -> Result<TheoryOptimum> {
    constraints.validate()?;
    let (n_en, n_de) = start.shape();
    let kinds = CircuitParams::param_kinds(n_en, n_de);
    let cost = |x: &[f64]| CircuitParams::from_vec(n_en, n_de, x).map_or(f64::INFINITY, |p| linear_cost(&p, n, prior));
    let x0: Vec<f64> = start.to_vec().iter().zip(&kinds).map(|(&v, k)| match k {
        ParamKind::Twist => v.abs().min(constraints.chi_max),
        ParamKind::Rotation => v,
    }).collect();
    let relaxed: Vec<(f64, f64)> = x0
        .iter()
        .zip(&kinds)
        .map(|(&v, k)| match k {
            ParamKind::Twist if v == 0.0 => (0.0, 0.0),
            ParamKind::Twist => (0.0, constraints.chi_max),
            ParamKind::Rotation => (f64::NEG_INFINITY, f64::INFINITY),
        })
        .collect();
    let first = if constraints.drop_small { minimize(cost, &x0, &relaxed, opts)?.x } else { x0 };
    let projected = project_constraints(&CircuitParams::from_vec(n_en, n_de, &first)?, constraints).to_vec();
    let tight: Vec<(f64, f64)> = projected
        .iter()
        .zip(&kinds)
        .map(|(&v, k)| match k {
            ParamKind::Twist if v == 0.0 => (0.0, 0.0),
            ParamKind::Twist => (constraints.chi_min, constraints.chi_max),
            ParamKind::Rotation => (f64::NEG_INFINITY, f64::INFINITY),
        })
        .collect();
    let second = minimize(cost, &projected, &tight, opts)?;
    let params = project_constraints(&CircuitParams::from_vec(n_en, n_de, &second.x)?, constraints);
    let bmse = linear_cost(&params, n, prior);
    Ok(TheoryOptimum { params, bmse })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_with_bounds() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + (x[2] - 5.0).powi(2);
        let r = minimize(f, &[0.0, 0.0, 1.0], &[(-1.0, 1.0), (f64::NEG_INFINITY, f64::INFINITY), (1.0, 1.0)], &LocalOptions::default())
            .unwrap();
        assert!((r.x[0] - 0.3).abs() < 1e-6 && (r.x[1] + 1.0).abs() < 1e-6 && r.x[2] == 1.0);
        let r = minimize(f, &[0.0, 0.0, 0.0], &[(-1.0, 0.1), (-0.5, 0.5), (0.0, 10.0)], &LocalOptions::default()).unwrap();
        assert!((r.x[0] - 0.1).abs() < 1e-4 && (r.x[1] + 0.5).abs() < 1e-4 && (r.x[2] - 5.0).abs() < 1e-5, "{:?}", r);
        assert!((r.x[0] - 0.1).abs() < 1e-4 && (r.x[1] + 0.5).abs() < 1e-4 && (r.x[2] - 5.0).abs() < 1e-5);
    }

    #[test]
    fn css_has_nothing_to_optimize() {
        let prior = Prior::new(0.7).unwrap();
        let t = theory_optimum(6, (0, 0), prior, &[], 0, 0, &LocalOptions::default()).unwrap();
        assert_eq!(t.params, CircuitParams::css());
        assert!((t.bmse - linear_cost(&CircuitParams::css(), 6, prior)).abs() < 1e-15);
    }
}
