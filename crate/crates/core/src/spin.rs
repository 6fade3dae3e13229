//! Collective-spin algebra on the symmetric (Dicke) subspace of `N` spin-1/2
//! particles.
//!
//! Basis ordering is ascending projection: index `k` holds `m = k - N/2`, so
//! index 0 is the all-down state. Rotations `R_a(β) = exp(-iβ J_a)` and one-axis
//! twistings `T_a(χ) = exp(-iχ J_a²)` about `z` are diagonal phases; the `x` and
//! `y` cases go through a cached eigendecomposition of `J_x` (the `J_y`
//! eigenvectors follow from `J_y = R_z(π/2) J_x R_z(π/2)†`).

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

pub type C64 = Complex64;

const NORM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        };
        f.write_str(s)
    }
}

/// Spin projections `m = -N/2, ..., N/2` in basis order.
pub fn projections(n: usize) -> Vec<f64> {
    let half = n as f64 / 2.0;
    (0..=n).map(|k| k as f64 - half).collect()
}

fn check_particles(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("particle number must be at least 1".into()));
    }
    Ok(())
}

/// A normalized state in the `(N+1)`-dimensional Dicke manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<C64>", into = "Vec<C64>")]
pub struct DickeVector {
    n: usize,
    amps: Vec<C64>,
}

impl TryFrom<Vec<C64>> for DickeVector {
    type Error = Error;

    fn try_from(amps: Vec<C64>) -> Result<Self> {
        Self::from_amplitudes(amps)
    }
}

impl From<DickeVector> for Vec<C64> {
    fn from(v: DickeVector) -> Self {
        v.amps
    }
}

impl DickeVector {
    /// `|↓⟩^⊗N`, amplitude 1 at `m = -N/2`.
    pub fn spin_down(n: usize) -> Result<Self> {
        Self::basis(n, 0)
    }

    /// Basis vector with `k` excitations (`m = k - N/2`).
    pub fn basis(n: usize, k: usize) -> Result<Self> {
        check_particles(n)?;
        if k > n {
            return Err(Error::InvalidArgument(format!("excitation count {k} exceeds N = {n}")));
        }
        let mut amps = vec![C64::new(0.0, 0.0); n + 1];
        amps[k] = C64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    /// Wraps amplitudes that must already be normalized.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        if amps.len() < 2 {
            return Err(Error::InvalidArgument("a Dicke vector needs at least 2 amplitudes".into()));
        }
        let v = Self { n: amps.len() - 1, amps };
        let dev = (v.norm_sqr() - 1.0).abs();
        if !(dev <= NORM_TOL) {
            return Err(Error::InvalidArgument(format!("amplitudes are not normalized (|norm² - 1| = {dev:e})")));
        }
        Ok(v)
    }

    /// Rescales arbitrary non-zero amplitudes to unit norm.
    pub fn normalized(amps: Vec<C64>) -> Result<Self> {
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument("cannot normalize a zero or non-finite vector".into()));
        }
        Self::from_amplitudes(amps.into_iter().map(|a| a / norm).collect())
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }


    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &DickeVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// `⟨O⟩` for a dense operator in the same basis.
    pub fn expectation(&self, op: &DMatrix<C64>) -> C64 {
        let d = self.amps.len();
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..d {
            let mut col = C64::new(0.0, 0.0);
            for i in 0..d {
                col += self.amps[i].conj() * op[(i, j)];
            }
            acc += col * self.amps[j];
        }
        acc
    }
}

/// Dense matrix of `J_x`, `J_y` or `J_z` (ħ = 1).
#[derive(Clone, Debug, PartialEq)]
pub struct CollectiveOperator {
    pub axis: Axis,
    pub n_particles: usize,
    pub matrix: DMatrix<C64>,
}

/// Builds `J_axis` from the ladder operators in the ascending-`m` basis.
pub fn collective_operator(axis: Axis, n: usize) -> Result<CollectiveOperator> {
    check_particles(n)?;
    let d = n + 1;
    let m = projections(n);
    let j = n as f64 / 2.0;
    let mut mat = DMatrix::<C64>::zeros(d, d);
    match axis {
        Axis::Z => {
            for k in 0..d {
                mat[(k, k)] = C64::new(m[k], 0.0);
            }
        }
        Axis::X | Axis::Y => {
            for k in 0..n {
                // ⟨m+1|J+|m⟩
                let c = (j * (j + 1.0) - m[k] * (m[k] + 1.0)).max(0.0).sqrt();
                let (up, down) = match axis {
                    Axis::X => (C64::new(c / 2.0, 0.0), C64::new(c / 2.0, 0.0)),
                    _ => (C64::new(0.0, -c / 2.0), C64::new(0.0, c / 2.0)),
                };
                mat[(k + 1, k)] = up;
                mat[(k, k + 1)] = down;
            }
        }
    }
    Ok(CollectiveOperator { axis, n_particles: n, matrix: mat })
}

/// Eigendecomposition `J_axis = V diag(λ) V†` used for exact exponentials.
#[derive(Clone, Debug)]
pub struct SpectralCache {
    pub axis: Axis,
    pub eigenvalues: Vec<f64>,
    /// Column `j` is the eigenvector for `eigenvalues[j]`.
    pub eigenvectors: DMatrix<C64>,
}

impl SpectralCache {
    pub fn new(axis: Axis, n: usize) -> Result<Self> {
        check_particles(n)?;
        let d = n + 1;
        let m = projections(n);
        if axis == Axis::Z {
            return Ok(Self { axis, eigenvalues: m, eigenvectors: DMatrix::identity(d, d) });
        }
        let jx = collective_operator(Axis::X, n)?.matrix.map(|z| z.re);
        let eig = SymmetricEigen::new(jx);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut vecs = DMatrix::<C64>::zeros(d, d);
        for (col, &src) in order.iter().enumerate() {
            let lambda = eig.eigenvalues[src];
            // the spectrum of J_x is exactly {m}; snap so periodicities stay exact
            if (lambda - m[col]).abs() > 1e-8 * (1.0 + n as f64) {
                return Err(Error::InvalidArgument(format!(
                    "eigensolver drifted: eigenvalue {lambda} vs expected {}",
                    m[col]
                )));
            }
            for row in 0..d {
                let v = eig.eigenvectors[(row, src)];
                vecs[(row, col)] = match axis {
                    Axis::X => C64::new(v, 0.0),
                    // R_z(π/2) = diag(exp(-iπ m / 2)) maps J_x eigenvectors onto J_y ones
                    _ => C64::from_polar(v, -std::f64::consts::FRAC_PI_2 * m[row]),
                };
            }
        }
        Ok(Self { axis, eigenvalues: m, eigenvectors: vecs })
    }

    /// `V diag(λ) V†`.
    pub fn reconstruct(&self) -> DMatrix<C64> {
        let d = self.eigenvalues.len();
        let diag = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                C64::new(self.eigenvalues[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        &self.eigenvectors * diag * self.eigenvectors.adjoint()
    }

    /// In place `ψ ← V diag(exp(-i·phase(λ))) V† ψ`.
    fn apply_spectral(&self, psi: &mut [C64], phase: impl Fn(f64) -> f64) {
        let d = psi.len();
        let v = self.eigenvectors.as_slice();
        let mut coeff = vec![C64::new(0.0, 0.0); d];
        for (j, c) in coeff.iter_mut().enumerate() {
            let col = &v[j * d..(j + 1) * d];
            let mut acc = C64::new(0.0, 0.0);
            for (vij, p) in col.iter().zip(psi.iter()) {
                acc += vij.conj() * p;
            }
            *c = acc * C64::from_polar(1.0, -phase(self.eigenvalues[j]));
        }
        psi.iter_mut().for_each(|p| *p = C64::new(0.0, 0.0));
        for (j, c) in coeff.iter().enumerate() {
            let col = &v[j * d..(j + 1) * d];
            for (p, vij) in psi.iter_mut().zip(col) {
                *p += vij * c;
            }
        }
    }
}

/// All cached spectral data for one particle number. Immutable and shared.
#[derive(Debug)]
pub struct SpinSystem {
    n: usize,
    m: Vec<f64>,
    x: SpectralCache,
    y: SpectralCache,
}

fn registry() -> &'static Mutex<HashMap<usize, Arc<SpinSystem>>> {
    static REGISTRY: OnceLock<Mutex<HashMap<usize, Arc<SpinSystem>>>> = OnceLock::new();
    REGISTRY.get_or_init(|| Mutex::new(HashMap::new()))
}

impl SpinSystem {
    pub fn new(n: usize) -> Result<Self> {
        check_particles(n)?;
        Ok(Self {
            n,
            m: projections(n),
            x: SpectralCache::new(Axis::X, n)?,
            y: SpectralCache::new(Axis::Y, n)?,
        })
    }

    /// Process-wide cached instance for `n` particles.
    pub fn shared(n: usize) -> Result<Arc<Self>> {
        check_particles(n)?;
        if let Some(sys) = registry().lock().expect("spin registry poisoned").get(&n) {
            return Ok(Arc::clone(sys));
        }
        // built outside the lock; a racing builder just produces an equal value
        let built = Arc::new(Self::new(n)?);
        let mut map = registry().lock().expect("spin registry poisoned");
        Ok(Arc::clone(map.entry(n).or_insert(built)))
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn projections(&self) -> &[f64] {
        &self.m
    }

    pub fn spectral(&self, axis: Axis) -> Option<&SpectralCache> {
        match axis {
            Axis::X => Some(&self.x),
            Axis::Y => Some(&self.y),
            Axis::Z => None,
        }
    }

    /// `ψ ← exp(-iβ J_axis) ψ`.
    pub fn rotate(&self, psi: &mut [C64], axis: Axis, beta: f64) {
        debug_assert_eq!(psi.len(), self.dim());
        if beta == 0.0 {
            return;
        }
        match axis {
            Axis::Z => {
                for (p, &m) in psi.iter_mut().zip(&self.m) {
                    *p *= C64::from_polar(1.0, -beta * m);
                }
            }
            Axis::X => self.x.apply_spectral(psi, |l| beta * l),
            Axis::Y => self.y.apply_spectral(psi, |l| beta * l),
        }
    }

    /// `ψ ← exp(-iχ J_axis²) ψ`.
    pub fn twist(&self, psi: &mut [C64], axis: Axis, chi: f64) {
        debug_assert_eq!(psi.len(), self.dim());
        if chi == 0.0 {
            return;
        }
        match axis {
            Axis::Z => {
                for (p, &m) in psi.iter_mut().zip(&self.m) {
                    *p *= C64::from_polar(1.0, -chi * m * m);
                }
            }
            Axis::X => self.x.apply_spectral(psi, |l| chi * l * l),
            Axis::Y => self.y.apply_spectral(psi, |l| chi * l * l),
        }
    }
}

/// `exp(-iβ J_axis)|ψ⟩`.
pub fn apply_rotation(state: &DickeVector, axis: Axis, beta: f64) -> Result<DickeVector> {
    ensure_finite(beta, "rotation angle")?;
    let sys = SpinSystem::shared(state.n)?;
    let mut out = state.clone();
    sys.rotate(&mut out.amps, axis, beta);
    Ok(out)
}

/// `exp(-iχ J_axis²)|ψ⟩`.
pub fn apply_twist(state: &DickeVector, axis: Axis, chi: f64) -> Result<DickeVector> {
    ensure_finite(chi, "twisting angle")?;
    let sys = SpinSystem::shared(state.n)?;
    let mut out = state.clone();
    sys.twist(&mut out.amps, axis, chi);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn jz_is_diagonal_projection() {
        let jz = collective_operator(Axis::Z, 1).unwrap().matrix;
        assert_eq!(jz[(0, 0)].re, -0.5);
        assert_eq!(jz[(1, 1)].re, 0.5);
        let jz2 = collective_operator(Axis::Z, 2).unwrap().matrix;
        assert_eq!((jz2[(0, 0)].re, jz2[(1, 1)].re, jz2[(2, 2)].re), (-1.0, 0.0, 1.0));
    }

    #[test]
    fn jx_spin_half_is_half_pauli_x() {
        let jx = collective_operator(Axis::X, 1).unwrap().matrix;
        assert_abs_diff_eq!(jx[(0, 1)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(jx[(1, 0)].re, 0.5, epsilon = 1e-15);
        assert_eq!(jx[(0, 0)].norm(), 0.0);
    }

    #[test]
    fn zero_particles_rejected() {
        assert!(matches!(collective_operator(Axis::X, 0), Err(Error::InvalidArgument(_))));
        assert!(DickeVector::spin_down(0).is_err());
    }

    #[test]
    fn algebra_relations_hold() {
        for n in [1, 2, 5, 12, 27] {
            let jx = collective_operator(Axis::X, n).unwrap().matrix;
            let jy = collective_operator(Axis::Y, n).unwrap().matrix;
            let jz = collective_operator(Axis::Z, n).unwrap().matrix;
            for op in [&jx, &jy, &jz] {
                assert!(max_abs(&(op - op.adjoint())) < 1e-12);
            }
            let i = C64::new(0.0, 1.0);
            assert!(max_abs(&(&jx * &jy - &jy * &jx - &jz * i)) < 1e-10);
            assert!(max_abs(&(&jy * &jz - &jz * &jy - &jx * i)) < 1e-10);
            assert!(max_abs(&(&jz * &jx - &jx * &jz - &jy * i)) < 1e-10);
            let j = n as f64 / 2.0;
            let casimir = &jx * &jx + &jy * &jy + &jz * &jz
                - DMatrix::<C64>::identity(n + 1, n + 1) * C64::new(j * (j + 1.0), 0.0);
            assert!(max_abs(&casimir) < 1e-10);
        }
    }

    #[test]
    fn spectral_cache_reconstructs_operator() {
        for n in [1, 4, 13, 40] {
            for axis in [Axis::X, Axis::Y, Axis::Z] {
                let cache = SpectralCache::new(axis, n).unwrap();
                let op = collective_operator(axis, n).unwrap().matrix;
                assert!(max_abs(&(cache.reconstruct() - op)) < 1e-10, "{axis} N={n}");
            }
        }
    }

    #[test]
    fn rz_on_basis_vector_is_a_phase() {
        let n = 6;
        let k = 4;
        let m = k as f64 - 3.0;
        let s = DickeVector::basis(n, k).unwrap();
        let out = apply_rotation(&s, Axis::Z, 0.7).unwrap();
        let expected = C64::from_polar(1.0, -0.7 * m);
        assert_abs_diff_eq!((out.amplitudes()[k] - expected).norm(), 0.0, epsilon = 1e-15);
        let tw = apply_twist(&s, Axis::Z, 0.3).unwrap();
        let expected = C64::from_polar(1.0, -0.3 * m * m);
        assert_abs_diff_eq!((tw.amplitudes()[k] - expected).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(out.probabilities(), s.probabilities());
    }

    #[test]
    fn zero_angles_are_identity() {
        let s = DickeVector::normalized(vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.5), C64::new(0.4, 0.0)]).unwrap();
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            assert_eq!(apply_rotation(&s, axis, 0.0).unwrap(), s);
            assert_eq!(apply_twist(&s, axis, 0.0).unwrap(), s);
        }
    }

    #[test]
    fn non_finite_angles_rejected() {
        let s = DickeVector::spin_down(3).unwrap();
        assert!(apply_rotation(&s, Axis::X, f64::NAN).is_err());
        assert!(apply_twist(&s, Axis::Y, f64::INFINITY).is_err());
    }

    #[test]
    fn ry_quarter_turn_on_two_spins() {
        // (|↓⟩ → (|↓⟩+|↑⟩)/√2 per spin): symmetric amplitudes 1/2, 1/√2, 1/2
        let s = DickeVector::spin_down(2).unwrap();
        let out = apply_rotation(&s, Axis::Y, FRAC_PI_2).unwrap();
        let a = out.amplitudes();
        assert_abs_diff_eq!(a[0].norm(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1].norm(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(a[2].norm(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rotations_are_4pi_periodic() {
        let s = apply_rotation(&DickeVector::spin_down(5).unwrap(), Axis::Y, 0.4).unwrap();
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let a = apply_rotation(&s, axis, 1.1).unwrap();
            let b = apply_rotation(&s, axis, 1.1 + 4.0 * PI).unwrap();
            for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }
}
