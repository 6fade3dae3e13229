use nalgebra::{Matrix2, Vector3};
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitParams, PreparedCircuit};
use crate::error::{Error, Result};
use crate::spin::{collective_operator, Axis, DickeVector, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinelandReport {
    /// `ξ_W²`.
    pub xi_sq: f64,
    pub db: f64,
    pub mean_spin: [f64; 3],
    pub min_transverse_variance: f64,
}

impl WinelandReport {
    pub fn xi(&self) -> f64 {
        self.xi_sq.sqrt()
    }
}

/// Wineland parameter of an arbitrary state.
pub fn wineland_state(state: &DickeVector) -> Result<WinelandReport> {
    let n = state.n_particles();
    let ops: Vec<_> =
        [Axis::X, Axis::Y, Axis::Z].iter().map(|&a| collective_operator(a, n).map(|o| o.matrix)).collect::<Result<_>>()?;
    let mean = Vector3::from_iterator(ops.iter().map(|o| state.expectation(o).re));
    let len = mean.norm();
    if len < 1e-9 * n as f64 {
        return Err(Error::UndefinedOrientation);
    }
    let z = mean / len;
    let trial = if z.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = (trial - z * trial.dot(&z)).normalize();
    let v = z.cross(&u);
    let along = |d: &Vector3<f64>| &ops[0] * C64::from(d.x) + &ops[1] * C64::from(d.y) + &ops[2] * C64::from(d.z);
    let (ju, jv) = (along(&u), along(&v));
    let uu = state.expectation(&(&ju * &ju)).re;
    let vv = state.expectation(&(&jv * &jv)).re;
    let uv = 0.5 * state.expectation(&(&ju * &jv + &jv * &ju)).re;
    let (mu, mv) = (state.expectation(&ju).re, state.expectation(&jv).re);
    let cov = Matrix2::new(uu - mu * mu, uv - mu * mv, uv - mu * mv, vv - mv * mv);
    let min_var = cov.symmetric_eigenvalues().min();
    let xi_sq = n as f64 * min_var / (len * len);
    Ok(WinelandReport { xi_sq, db: 10.0 * xi_sq.log10(), mean_spin: [mean.x, mean.y, mean.z], min_transverse_variance: min_var })
}

/// Wineland parameter of the state entering the phase encoding.
pub fn wineland_xi(params: &CircuitParams, n: usize) -> Result<WinelandReport> {
    wineland_state(&PreparedCircuit::new(params, n)?.encoded_state())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coherent_state_is_unsqueezed() {
        for n in [1, 2, 7, 20] {
            let r = wineland_xi(&CircuitParams::css(), n).unwrap();
            assert!((r.xi_sq - 1.0).abs() < 1e-10, "N = {n}: {}", r.xi_sq);
        }
    }

    #[test]
    fn dicke_state_has_no_orientation() {
        let s = DickeVector::basis(4, 2).unwrap();
        assert_eq!(wineland_state(&s), Err(Error::UndefinedOrientation));
    }
}
