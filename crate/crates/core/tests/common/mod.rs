//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varsense::{Axis, CircuitParams, DickeVector, LayerAngles};

/// Collective spin operators on `(C²)^⊗N`; bit `q` of the index set means
/// spin `q` is up.
pub struct TensorSpins {
    pub n: usize,
    pub jx: DMatrix<C64>,
    pub jy: DMatrix<C64>,
    pub jz: DMatrix<C64>,
}

impl TensorSpins {
    pub fn new(n: usize) -> Self {
        let d = 1usize << n;
        let mut jp = DMatrix::<C64>::zeros(d, d);
        let mut jz = DMatrix::<C64>::zeros(d, d);
        for s in 0..d {
            jz[(s, s)] = C64::new(s.count_ones() as f64 - n as f64 / 2.0, 0.0);
            for q in 0..n {
                if s & (1 << q) == 0 {
                    jp[(s | (1 << q), s)] += C64::new(1.0, 0.0);
                }
            }
        }
        let jm = jp.adjoint();
        let jx = (&jp + &jm) * C64::new(0.5, 0.0);
        let jy = (&jp - &jm) * C64::new(0.0, -0.5);
        Self { n, jx, jy, jz }
    }

    fn generator(&self, axis: Axis) -> &DMatrix<C64> {
        match axis {
            Axis::X => &self.jx,
            Axis::Y => &self.jy,
            Axis::Z => &self.jz,
        }
    }

    pub fn rotation(&self, axis: Axis, beta: f64) -> DMatrix<C64> {
        (self.generator(axis) * C64::new(0.0, -beta)).exp()
    }

    pub fn twist(&self, axis: Axis, chi: f64) -> DMatrix<C64> {
        let g = self.generator(axis);
        (g * g * C64::new(0.0, -chi)).exp()
    }

    /// Symmetric (Dicke) state with `k` spins up.
    pub fn dicke(&self, k: usize) -> Vec<C64> {
        let d = 1usize << self.n;
        let members: Vec<usize> = (0..d).filter(|s| s.count_ones() as usize == k).collect();
        let a = 1.0 / (members.len() as f64).sqrt();
        let mut v = vec![C64::new(0.0, 0.0); d];
        for s in members {
            v[s] = C64::new(a, 0.0);
        }
        v
    }

    pub fn embed(&self, state: &DickeVector) -> DMatrix<C64> {
        let mut v = DMatrix::<C64>::zeros(1 << self.n, 1);
        for (k, a) in state.amplitudes().iter().enumerate() {
            for (i, b) in self.dicke(k).into_iter().enumerate() {
                v[(i, 0)] += a * b;
            }
        }
        v
    }

    /// Amplitudes on the Dicke basis, ascending `m`.
    pub fn project(&self, v: &DMatrix<C64>) -> Vec<C64> {
        (0..=self.n)
            .map(|k| self.dicke(k).iter().enumerate().map(|(i, b)| b.conj() * v[(i, 0)]).sum())
            .collect()
    }

    /// Outcome law of the canonical sequence, built gate by gate.
    pub fn probabilities(&self, params: &CircuitParams, phi: f64) -> Vec<f64> {
        use std::f64::consts::FRAC_PI_2;
        let mut psi = self.embed(&DickeVector::spin_down(self.n).unwrap());
        let mut apply = |u: DMatrix<C64>| psi = &u * &psi;
        apply(self.rotation(Axis::Y, FRAC_PI_2));
        for l in &params.entangling {
            apply(self.twist(Axis::Z, l.twist_1));
            apply(self.twist(Axis::X, l.twist_2));
            apply(self.rotation(Axis::X, l.rotation));
        }
        apply(self.rotation(Axis::Z, phi));
        for l in &params.decoding {
            apply(self.rotation(Axis::X, l.rotation));
            apply(self.twist(Axis::X, l.twist_2));
            apply(self.twist(Axis::Z, l.twist_1));
        }
        apply(self.rotation(Axis::X, FRAC_PI_2));
        let mut p = vec![0.0; self.n + 1];
        for (s, a) in psi.iter().enumerate() {
            p[s.count_ones() as usize] += a.norm_sqr();
        }
        p
    }
}

pub fn random_params(rng: &mut ChaCha8Rng, n_en: usize, n_de: usize, n: usize) -> CircuitParams {
    let twist = 2.0 / n as f64;
    let mut layer = || LayerAngles::new(rng.random_range(0.0..twist), rng.random_range(0.0..twist), rng.random_range(-3.0..3.0));
    let entangling = (0..n_en).map(|_| layer()).collect();
    let decoding = (0..n_de).map(|_| layer()).collect();
    CircuitParams { entangling, decoding, ..Default::default() }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `2∫_x^∞ N(0, w²)` by composite Simpson on a fine grid.
pub fn normal_two_sided_tail(x: f64, w: f64) -> f64 {
    let upper = x + 40.0 * w;
    let steps = 400_000;
    let h = (upper - x) / steps as f64;
    let f = |t: f64| (-(t * t) / (2.0 * w * w)).exp() / (w * (2.0 * std::f64::consts::PI).sqrt());
    let mut s = f(x) + f(upper);
    for i in 1..steps {
        s += f(x + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    2.0 * s * h / 3.0
}

pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> DickeVector {
    let amps = (0..=n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    DickeVector::normalized(amps).unwrap()
}
