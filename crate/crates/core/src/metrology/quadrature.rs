//! Phase-space integration rules against the Gaussian prior.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrology::Prior;

/// Gauss–Hermite nodes and weights for `∫ e^{-x²} f(x) dx`, ascending nodes.
///
/// Newton iteration on the orthonormal Hermite recurrence, which keeps the
/// weights accurate well beyond the range where Golub–Welsch degrades.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    if n == 0 {
        return (x, w);
    }
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    x.reverse();
    w.reverse();
    (x, w)
}

/// Composite Simpson weights for `points` equally spaced samples with step `h`.
///
/// An even point count closes the last interval with a 3/8 rule.
pub fn simpson_weights(points: usize, h: f64) -> Result<Vec<f64>> {
    if points < 3 {
        return Err(Error::InsufficientData(format!("Simpson integration needs at least 3 points, got {points}")));
    }
    let mut w = vec![0.0; points];
    let simpson_end = if points % 2 == 1 { points } else { points - 3 };
    if simpson_end >= 3 {
        for i in (0..simpson_end - 1).step_by(2) {
            w[i] += h / 3.0;
            w[i + 1] += 4.0 * h / 3.0;
            w[i + 2] += h / 3.0;
        }
    }
    if points % 2 == 0 {
        let s = points - 4;
        for (k, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
            w[s + k] += 3.0 * h / 8.0 * c;
        }
    }
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum QuadratureScheme {
    /// `nodes`-point Gauss–Hermite rule with the Gaussian weight absorbed.
    GaussHermite { nodes: usize },
    /// Gauss–Hermite of order `2·measured`, sampled on the `measured` nodes with
    /// `φ > 0` and mirrored (valid when `MSE(φ) = MSE(-φ)`).
    GaussHermiteHalf { measured: usize },
    /// Composite Simpson on `points` samples over `±half_width·δφ`.
    Simpson { points: usize, half_width: f64 },
}

impl QuadratureScheme {
    pub fn node_count(&self) -> usize {
        match *self {
            QuadratureScheme::GaussHermite { nodes } => nodes,
            QuadratureScheme::GaussHermiteHalf { measured } => measured,
            QuadratureScheme::Simpson { points, .. } => points,
        }
    }
}

/// Phases and prior-weighted weights: `Σ_i w_i f(φ_i) ≈ ∫ P_δφ(φ) f(φ) dφ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseQuadrature {
    pub scheme: QuadratureScheme,
    pub prior: Prior,
    pub phases: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PhaseQuadrature {
    pub fn new(prior: Prior, scheme: QuadratureScheme) -> Result<Self> {
        let s2 = std::f64::consts::SQRT_2 * prior.width();
        let (phases, weights) = match scheme {
            QuadratureScheme::GaussHermite { nodes } => {
                if nodes == 0 {
                    return Err(Error::InvalidArgument("Gauss-Hermite rule needs at least one node".into()));
                }
                let (x, w) = gauss_hermite(nodes);
                (x.iter().map(|x| s2 * x).collect(), w.iter().map(|w| w / PI.sqrt()).collect())
            }
            QuadratureScheme::GaussHermiteHalf { measured } => {
                if measured == 0 {
                    return Err(Error::InvalidArgument("half-axis rule needs at least one node".into()));
                }
                let (x, w) = gauss_hermite(2 * measured);
                let phases: Vec<f64> = x[measured..].iter().map(|x| s2 * x).collect();
                let weights = w[measured..].iter().map(|w| 2.0 * w / PI.sqrt()).collect();
                (phases, weights)
            }
            QuadratureScheme::Simpson { points, half_width } => {
                if !(half_width > 0.0) {
                    return Err(Error::InvalidArgument("Simpson half width must be positive".into()));
                }
                let span = half_width * prior.width();
                let h = 2.0 * span / (points.max(2) - 1) as f64;
                let phases: Vec<f64> = (0..points).map(|i| -span + i as f64 * h).collect();
                let sw = simpson_weights(points, h)?;
                let weights = phases.iter().zip(&sw).map(|(&p, w)| w * prior.density(p)).collect();
                (phases, weights)
            }
        };
        Ok(Self { scheme, prior, phases, weights })
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}
