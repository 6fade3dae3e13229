//! Optimal quantum interferometer: the BMSE minimized jointly over input
//! states in the Dicke manifold, measurements and estimators.
//!
//! Alternating minimization. For a fixed input `ρ` the optimal estimator
//! observable `L` solves `Lρ̄ + ρ̄L = 2ρ̄′` and the cost is `δφ² - Tr(ρ̄L²)`.
//! For a fixed `L` the best input is the top eigenvector of
//! `A = ∫P(φ) U_φ†(2φL - L²)U_φ dφ`. Both prior averages are closed form for
//! a Gaussian prior because `U_φ = e^{-iφJ_z}` only contributes phases.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrology::{to_db, Prior};
use crate::spin::{collective_operator, projections, Axis, DickeVector, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OqiOptions {
    /// Stop when one full step lowers the BMSE by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Random restarts tried when the first run stagnates without converging.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OqiOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 500, restarts: 3, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OqiSolution {
    pub n_particles: usize,
    pub prior_width: f64,
    pub bmse: f64,
    pub ratio: f64,
    pub db: f64,
    pub state: DickeVector,
    /// Eigenvalues of the estimator observable `L`, ascending.
    pub seed_spectrum: Vec<f64>,
    pub iterations: usize,
    /// BMSE decrease of the final step.
    pub residual: f64,
    pub converged: bool,
    /// BMSE after every step, starting with the initial state.
    pub history: Vec<f64>,
}

struct Kernel {
    /// `∫P e^{iφΔ}` with `Δ = m_j - m_k`.
    g: DMatrix<f64>,
    /// `σ²Δ·g`, so `∫P φ e^{∓iφΔ} = ∓i·g1`.
    g1: DMatrix<f64>,
    variance: f64,
}

impl Kernel {
    fn new(n: usize, prior: Prior) -> Self {
        let m = projections(n);
        let d = m.len();
        let s2 = prior.variance();
        let g = DMatrix::from_fn(d, d, |j, k| prior.characteristic(m[j] - m[k]));
        let g1 = DMatrix::from_fn(d, d, |j, k| s2 * (m[j] - m[k]) * g[(j, k)]);
        Self { g, g1, variance: s2 }
    }
}

/// Prior-averaged moments `(ρ̄, ρ̄′)` of the encoded state.
pub fn prior_moments(state: &DickeVector, prior: Prior) -> (DMatrix<C64>, DMatrix<C64>) {
    let kern = Kernel::new(state.n_particles(), prior);
    moments(state.amplitudes(), &kern)
}

fn moments(psi: &[C64], kern: &Kernel) -> (DMatrix<C64>, DMatrix<C64>) {
    let d = psi.len();
    let rho = DMatrix::from_fn(d, d, |j, k| psi[j] * psi[k].conj());
    let bar = DMatrix::from_fn(d, d, |j, k| rho[(j, k)] * kern.g[(j, k)]);
    let prime = DMatrix::from_fn(d, d, |j, k| rho[(j, k)] * C64::new(0.0, -kern.g1[(j, k)]));
    (bar, prime)
}

/// Optimal `L` and the BMSE it achieves for input `psi`.
fn estimator_step(psi: &[C64], kern: &Kernel) -> (DMatrix<C64>, f64) {
    let (bar, prime) = moments(psi, kern);
    let eig = SymmetricEigen::new(bar.clone());
    let v = &eig.eigenvectors;
    let rp = v.adjoint() * &prime * v;
    let lam = &eig.eigenvalues;
    let d = psi.len();
    let lt = DMatrix::from_fn(d, d, |i, j| {
        let den = lam[i] + lam[j];
        if den > 1e-12 {
            rp[(i, j)] * (2.0 / den)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let l = v * lt * v.adjoint();
    let l = (&l + l.adjoint()) * C64::new(0.5, 0.0);
    let c = kern.variance - (&bar * &l * &l).trace().re;
    (l, c)
}

fn state_step(l: &DMatrix<C64>, kern: &Kernel) -> Vec<C64> {
    let l2 = l * l;
    let d = l.nrows();
    let a = DMatrix::from_fn(d, d, |j, k| {
        l[(j, k)] * C64::new(0.0, 2.0 * kern.g1[(j, k)]) - l2[(j, k)] * kern.g[(j, k)]
    });
    let a = (&a + a.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(a);
    let top = eig.eigenvalues.imax();
    eig.eigenvectors.column(top).iter().copied().collect()
}

fn see_saw(n: usize, prior: Prior, start: Vec<C64>, kern: &Kernel, opts: &OqiOptions) -> Result<OqiSolution> {
    let mut psi = start;
    let (mut l, mut c) = estimator_step(&psi, kern);
    let mut history = vec![c];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let next = state_step(&l, kern);
        let (l_next, c_next) = estimator_step(&next, kern);
        residual = c - c_next;
        history.push(c_next);
        if c_next <= c {
            psi = next;
            l = l_next;
            c = c_next;
        }
        if residual < opts.tol {
            converged = true;
            break;
        }
    }
    let spectrum = SymmetricEigen::new(l).eigenvalues;
    let mut seed_spectrum: Vec<f64> = spectrum.iter().copied().collect();
    seed_spectrum.sort_by(f64::total_cmp);
    let ratio = c.max(0.0).sqrt() / prior.width();
    Ok(OqiSolution {
        n_particles: n,
        prior_width: prior.width(),
        bmse: c,
        ratio,
        db: to_db(ratio),
        state: DickeVector::normalized(psi)?,
        seed_spectrum,
        iterations,
        residual,
        converged,
        history,
    })
}

fn coherent_x(n: usize) -> Result<Vec<C64>> {
    let jx = collective_operator(Axis::X, n)?.matrix;
    let eig = SymmetricEigen::new(jx);
    Ok(eig.eigenvectors.column(eig.eigenvalues.imax()).iter().copied().collect())
}

/// See-saw solve starting from `init` (default: coherent state along `+x`).
pub fn oqi_bound_from(n: usize, prior: Prior, init: Option<&DickeVector>, opts: &OqiOptions) -> Result<OqiSolution> {
    if n == 0 {
        return Err(Error::InvalidArgument("particle number must be at least 1".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let kern = Kernel::new(n, prior);
    let start = match init {
        Some(s) if s.n_particles() == n => s.amplitudes().to_vec(),
        Some(_) => return Err(Error::InvalidArgument("initial state has the wrong particle number".into())),
        None => coherent_x(n)?,
    };
    let mut best = see_saw(n, prior, start, &kern, opts)?;
    if !best.converged {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.restarts {
            let amps: Vec<C64> =
                (0..=n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let amps = DickeVector::normalized(amps)?.into_amplitudes();
            let trial = see_saw(n, prior, amps, &kern, opts)?;
            if trial.bmse < best.bmse || (trial.converged && !best.converged && trial.bmse <= best.bmse + opts.tol) {
                best = trial;
            }
        }
    }
    if !best.converged {
        return Err(Error::ConvergenceFailure { iterations: best.iterations, best_bmse: best.bmse });
    }
    Ok(best)
}

pub fn oqi_bound(n: usize, prior_width: f64, opts: &OqiOptions) -> Result<OqiSolution> {
    oqi_bound_from(n, Prior::new(prior_width)?, None, opts)
}

/// Bound along a grid of prior widths. Each point is started both from the
/// neighbouring solution and from the coherent state; the lower cost is kept.
pub fn oqi_curve(n: usize, widths: &[f64], opts: &OqiOptions) -> Result<Vec<OqiSolution>> {
    let mut out: Vec<OqiSolution> = Vec::with_capacity(widths.len());
    for &w in widths {
        let prior = Prior::new(w)?;
        let cold = oqi_bound_from(n, prior, None, opts)?;
        let sol = match out.last() {
            Some(prev) => {
                let warm = oqi_bound_from(n, prior, Some(&prev.state), opts)?;
                if warm.bmse < cold.bmse {
                    warm
                } else {
                    cold
                }
            }
            None => cold,
        };
        out.push(sol);
    }
    Ok(out)
}
