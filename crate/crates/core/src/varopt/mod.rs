//! Gradient-free optimization of circuit angles against noisy or noiseless
//! cost evaluators.

mod direct;
pub mod local;
mod ocba;
mod scan;
mod surrogate;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitParams, ParamKind, PreparedCircuit};
use crate::error::{Error, Result};
use crate::metrology::{bmse_linear_exact, IdealCost, Prior};

pub use direct::{optimize, write_trace, Cell, OptimizeConfig, OptimizeResult, RecordKind, TraceRecord};
pub use ocba::{allocate_refinement, pics, CellStats};
pub use scan::{coarse_scan, fine_scan, FineScan, ScanEvaluator, ScanSpec, Sensor};
pub use surrogate::{Surrogate, SurrogateConfig};

/// Admissible angles: each twist is 0 or in `[chi_min, chi_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Constraints {
    pub chi_min: f64,
    pub chi_max: f64,
    /// Rotations with smaller magnitude are skipped (set to 0).
    pub rotation_skip: f64,
    /// Map twists below `chi_min/2` to 0 instead of raising them to `chi_min`.
    pub drop_small: bool,
}

impl Default for Constraints {
    fn default() -> Self {
        Self { chi_min: PI / 160.0, chi_max: PI / 8.0, rotation_skip: 0.0, drop_small: true }
    }
}

impl Constraints {
    pub fn validate(&self) -> Result<()> {
        if !(self.chi_min > 0.0 && self.chi_min < self.chi_max) || !(self.rotation_skip >= 0.0) {
            return Err(Error::InvalidArgument("constraints need 0 < chi_min < chi_max and rotation_skip >= 0".into()));
        }
        Ok(())
    }

    /// An exactly zero twist is an absent gate and stays zero.
    pub fn project_twist(&self, chi: f64) -> f64 {
        let (s, a) = (chi.signum(), chi.abs());
        let v = if a == 0.0 || (a < 0.5 * self.chi_min && self.drop_small) {
            0.0
        } else if a < self.chi_min {
            self.chi_min
        } else {
            a.min(self.chi_max)
        };
        s * v
    }

    pub fn project_rotation(&self, beta: f64) -> f64 {
        if beta.abs() < self.rotation_skip {
            0.0
        } else {
            beta
        }
    }

    pub fn admissible(&self, params: &CircuitParams) -> bool {
        let kinds = CircuitParams::param_kinds(params.n_en(), params.n_de());
        params.to_vec().iter().zip(kinds).all(|(&x, k)| match k {
            ParamKind::Twist => x == 0.0 || (x.abs() >= self.chi_min - 1e-15 && x.abs() <= self.chi_max + 1e-15),
            ParamKind::Rotation => x == 0.0 || x.abs() >= self.rotation_skip,
        })
    }
}

/// Maps raw angles onto the admissible set (twist magnitudes only; the sign
/// of a twist is kept).
pub fn project_constraints(params: &CircuitParams, c: &Constraints) -> CircuitParams {
    params.map_angles(|t| c.project_twist(t), |r| c.project_rotation(r))
}

/// Fundamental period of `e^{-iθG}` up to a global phase, from the spectrum of
/// the generator: `2π / gcd(λ_i - λ_j)`.
pub fn generator_period(kind: ParamKind, n: usize) -> f64 {
    match kind {
        ParamKind::Rotation => 2.0 * PI,
        // eigenvalues of J² are m² with 4m² integer; work in quarters
        ParamKind::Twist => {
            let q: Vec<i64> = (0..=n as i64).map(|k| (2 * k - n as i64).pow(2)).collect();
            let g = q.iter().fold(0i64, |g, &v| gcd(g, (v - q[0]).abs()));
            if g == 0 {
                // N = 1: the twist is a global phase, any period works
                2.0 * PI
            } else {
                2.0 * PI * 4.0 / g as f64
            }
        }
    }
}

/// Independent stream seed from a base seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// One cost measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub cost: f64,
    /// Variance of `cost` as an estimator (0 for exact evaluators).
    pub variance: f64,
    pub shots: usize,
}

/// A cost oracle. `shots = None` asks for the evaluator's default effort.
/// The seed fully determines any randomness, so calls may run concurrently.
pub trait Evaluator: Sync {
    fn evaluate(&self, params: &CircuitParams, shots: Option<usize>, seed: u64) -> Result<Evaluation>;

    fn is_noisy(&self) -> bool {
        true
    }

    /// Particle number, when known; fixes the exact twist periods.
    fn n_particles(&self) -> Option<usize> {
        None
    }
}

/// Exact simulator cost with the optimal linear estimator and closed-form
/// prior averaging; noiseless.
#[derive(Clone, Copy, Debug)]
pub struct IdealEvaluator {
    pub cost: IdealCost,
}

impl IdealEvaluator {
    pub fn linear(n: usize, prior: Prior) -> Self {
        Self { cost: IdealCost::linear_exact(n, prior) }
    }
}

impl Evaluator for IdealEvaluator {
    fn evaluate(&self, params: &CircuitParams, _shots: Option<usize>, _seed: u64) -> Result<Evaluation> {
        let cost = match self.cost.scheme {
            None => {
                let mom = bmse_linear_exact(&PreparedCircuit::new(params, self.cost.n_particles)?, self.cost.prior);
                match mom.optimal_slope() {
                    Ok(a) => mom.bmse_at(a),
                    Err(_) => self.cost.prior.variance(),
                }
            }
            Some(_) => self.cost.bmse(params)?,
        };
        Ok(Evaluation { cost, variance: 0.0, shots: 0 })
    }

    fn is_noisy(&self) -> bool {
        false
    }

    fn n_particles(&self) -> Option<usize> {
        Some(self.cost.n_particles)
    }
}

impl<F> Evaluator for F
where
    F: Fn(&CircuitParams, Option<usize>, u64) -> Result<Evaluation> + Sync,
{
    fn evaluate(&self, params: &CircuitParams, shots: Option<usize>, seed: u64) -> Result<Evaluation> {
        self(params, shots, seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxProvenance {
    TheoryScaled,
    User,
}

/// Per-angle search intervals in the flat layout of [`CircuitParams::to_vec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub n_en: usize,
    pub n_de: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub provenance: BoxProvenance,
}

impl SearchBox {
    pub fn new(n_en: usize, n_de: usize, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { n_en, n_de, lower, upper, provenance: BoxProvenance::User };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let d = 3 * (self.n_en + self.n_de);
        if self.lower.len() != d || self.upper.len() != d {
            return Err(Error::InvalidArgument(format!("search box needs {d} bounds per side")));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidArgument("search box needs finite lower <= upper".into()));
        }
        Ok(())
    }

    /// `[50%, 150%]` of each theory angle, shifted by a uniform random
    /// displacement of up to `displacement` times the interval width.
    /// Angles that vanish in theory give collapsed dimensions.
    pub fn theory_scaled(theory: &CircuitParams, displacement: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut lower, mut upper) = (vec![], vec![]);
        for x in theory.to_vec() {
            let (a, b) = (0.5 * x, 1.5 * x);
            let (lo, hi) = (a.min(b), a.max(b));
            let shift = if hi > lo { displacement * (hi - lo) * rng.random_range(-1.0..=1.0) } else { 0.0 };
            lower.push(lo + shift);
            upper.push(hi + shift);
        }
        Self { n_en: theory.n_en(), n_de: theory.n_de(), lower, upper, provenance: BoxProvenance::TheoryScaled }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Indices of dimensions with non-zero width.
    pub fn free_dims(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.upper[i] > self.lower[i]).collect()
    }

    /// Point from unit-cube coordinates of the free dimensions.
    pub fn point(&self, unit: &[f64]) -> Vec<f64> {
        let mut x = self.lower.clone();
        for (u, &i) in unit.iter().zip(&self.free_dims()) {
            x[i] = self.lower[i] + u * (self.upper[i] - self.lower[i]);
        }
        x
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *v >= *l - 1e-12 && *v <= *u + 1e-12)
    }
}
