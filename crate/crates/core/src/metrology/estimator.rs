use serde::{Deserialize, Serialize};

use crate::circuit::OutcomeTable;
use crate::error::{Error, Result};
use crate::metrology::PhaseQuadrature;

/// Maps a measured projection `m` to a phase estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Estimator {
    /// `slope · m + offset`.
    Linear {
        slope: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `orientation · arcsin(2m/N)`; `orientation = ±1` absorbs the sign of the
    /// Ramsey fringe in the chosen spin frame.
    Arcsine { n_particles: usize, orientation: f64 },
    /// Posterior means, one per outcome `k = m + N/2`.
    Mbmse { estimates: Vec<f64> },
}

impl Estimator {
    pub fn linear(slope: f64) -> Self {
        Estimator::Linear { slope, offset: 0.0 }
    }

    pub fn arcsine(n_particles: usize, orientation: f64) -> Self {
        Estimator::Arcsine { n_particles, orientation: orientation.signum() }
    }

    pub fn slope(&self) -> Option<f64> {
        match self {
            Estimator::Linear { slope, .. } => Some(*slope),
            _ => None,
        }
    }

    /// Estimates for every outcome of an `n`-particle readout.
    pub fn estimates(&self, n: usize) -> Result<Vec<f64>> {
        let half = n as f64 / 2.0;
        (0..=n).map(|k| estimate_phase(self, k as f64 - half)).collect()
    }
}

/// Phase estimate for outcome `m`.
pub fn estimate_phase(est: &Estimator, m: f64) -> Result<f64> {
    match est {
        Estimator::Linear { slope, offset } => Ok(slope * m + offset),
        Estimator::Arcsine { n_particles, orientation } => {
            let x = (2.0 * m / *n_particles as f64).clamp(-1.0, 1.0);
            Ok(orientation * x.asin())
        }
        Estimator::Mbmse { estimates } => {
            let n = estimates.len().saturating_sub(1);
            let k = m + n as f64 / 2.0;
            if k < -1e-9 || k > n as f64 + 1e-9 || (k - k.round()).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("outcome {m} is not valid for N = {n}")));
            }
            Ok(estimates[k.round() as usize])
        }
    }
}

/// Posterior-mean estimator `∫ φ p(φ|m) dφ` from a table sampled on the
/// quadrature phases. The normalization `p(m)` includes the prior factor;
/// outcomes of zero probability fall back to the prior mean.
pub fn mbmse_table(table: &OutcomeTable, quad: &PhaseQuadrature) -> Result<Estimator> {
    super::cost::check_alignment(table, quad)?;
    let d = table.n_particles() + 1;
    let mut num = vec![0.0; d];
    let mut den = vec![0.0; d];
    for (i, row) in table.rows().enumerate() {
        let w = quad.weights[i];
        let phi = quad.phases[i];
        for (k, &p) in row.iter().enumerate() {
            num[k] += w * phi * p;
            den[k] += w * p;
        }
    }
    let estimates = num.iter().zip(&den).map(|(n, d)| if *d > 1e-300 { n / d } else { 0.0 }).collect();
    Ok(Estimator::Mbmse { estimates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrology::{Prior, QuadratureScheme};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn linear_and_arcsine_values() {
        assert_eq!(estimate_phase(&Estimator::linear(0.5), 2.0).unwrap(), 1.0);
        let a = Estimator::arcsine(4, 1.0);
        assert!((estimate_phase(&a, 2.0).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((estimate_phase(&Estimator::arcsine(4, -1.0), 2.0).unwrap() + FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn mbmse_with_flat_likelihood_returns_prior_mean() {
        let prior = Prior::new(0.8).unwrap();
        let q = PhaseQuadrature::new(prior, QuadratureScheme::GaussHermite { nodes: 30 }).unwrap();
        let rows = vec![vec![0.25; 4]; q.len()];
        let t = OutcomeTable::new(3, q.phases.clone(), rows).unwrap();
        let est = mbmse_table(&t, &q).unwrap();
        for v in est.estimates(3).unwrap() {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn mbmse_rejects_foreign_outcomes() {
        let est = Estimator::Mbmse { estimates: vec![0.0; 3] };
        assert!(estimate_phase(&est, 0.5).is_err());
        assert!(estimate_phase(&est, 1.0).is_ok());
    }
}
