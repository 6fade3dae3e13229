use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitParams, OutcomeTable, PreparedCircuit};
use crate::error::{Error, Result};
use crate::metrology::estimator::{mbmse_table, Estimator};
use crate::metrology::{PhaseQuadrature, Prior, QuadratureScheme};
use crate::spin::C64;

/// `10·log₁₀(ratio)`, the convention used for `Δφ/δφ`.
pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Linear,
    Arcsine,
    Mbmse,
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "arcsine" => Ok(Self::Arcsine),
            "mbmse" => Ok(Self::Mbmse),
            other => Err(Error::InvalidArgument(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub bmse: f64,
    pub prior_width: f64,
    /// `Δφ = √C`.
    pub posterior_width: f64,
    /// `Δφ/δφ`.
    pub ratio: f64,
    pub db: f64,
    pub estimator: EstimatorKind,
    pub slope: Option<f64>,
    pub offset: f64,
    /// `None` when the prior average was taken in closed form.
    pub quadrature: Option<QuadratureScheme>,
}

impl CostReport {
    pub fn new(bmse: f64, prior: Prior, estimator: EstimatorKind, slope: Option<f64>) -> Self {
        let posterior_width = bmse.max(0.0).sqrt();
        let ratio = posterior_width / prior.width();
        Self {
            bmse,
            prior_width: prior.width(),
            posterior_width,
            ratio,
            db: to_db(ratio),
            estimator,
            slope,
            offset: 0.0,
            quadrature: None,
        }
    }

    fn with_quadrature(mut self, scheme: QuadratureScheme) -> Self {
        self.quadrature = Some(scheme);
        self
    }
}

pub(crate) fn check_alignment(table: &OutcomeTable, quad: &PhaseQuadrature) -> Result<()> {
    if table.len() != quad.len() || table.phases().iter().zip(&quad.phases).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::InvalidArgument("outcome table is not sampled on the quadrature phases".into()));
    }
    Ok(())
}

/// `MSE(φ) = Σ_m [φ - φ_est(m)]² p(m|φ)` on every tabulated phase.
pub fn mse_curve(table: &OutcomeTable, est: &Estimator) -> Result<Vec<(f64, f64)>> {
    let guesses = est.estimates(table.n_particles())?;
    Ok(table
        .phases()
        .iter()
        .zip(table.rows())
        .map(|(&phi, row)| {
            let mse = row.iter().zip(&guesses).map(|(p, g)| p * (phi - g) * (phi - g)).sum();
            (phi, mse)
        })
        .collect())
}

/// Prior moments that fix the BMSE of every linear estimator
/// `C(a) = E[φ²] - 2a·E[φm] + a²·E[m²]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearMoments {
    pub phase_second: f64,
    pub cross: f64,
    pub outcome_second: f64,
}

impl LinearMoments {
    pub fn from_table(table: &OutcomeTable, quad: &PhaseQuadrature) -> Result<Self> {
        check_alignment(table, quad)?;
        let m = table.outcomes();
        let (mut pp, mut cross, mut mm) = (0.0, 0.0, 0.0);
        for (i, row) in table.rows().enumerate() {
            let w = quad.weights[i];
            let phi = quad.phases[i];
            let (m1, m2) = row.iter().zip(&m).fold((0.0, 0.0), |(a, b), (p, m)| (a + p * m, b + p * m * m));
            pp += w * phi * phi;
            cross += w * phi * m1;
            mm += w * m2;
        }
        Ok(Self { phase_second: pp, cross, outcome_second: mm })
    }

    /// `a* = E[φm]/E[m²]`.
    pub fn optimal_slope(&self) -> Result<f64> {
        let scale = (self.phase_second * self.outcome_second).sqrt();
        if !(self.outcome_second > 0.0) || self.cross.abs() <= 1e-13 * scale {
            return Err(Error::DegenerateDistribution(
                "outcomes carry no linear information about the phase".into(),
            ));
        }
        Ok(self.cross / self.outcome_second)
    }

    pub fn bmse_at(&self, slope: f64) -> f64 {
        self.phase_second - 2.0 * slope * self.cross + slope * slope * self.outcome_second
    }

    /// `min_a C(a) = E[φ²] - E[φm]²/E[m²]`.
    pub fn optimal_bmse(&self) -> Result<f64> {
        let a = self.optimal_slope()?;
        Ok(self.phase_second - a * self.cross)
    }
}

/// Closed-form minimizer of the quadratic BMSE over the linear slope.
pub fn optimal_linear_slope(table: &OutcomeTable, quad: &PhaseQuadrature) -> Result<f64> {
    LinearMoments::from_table(table, quad)?.optimal_slope()
}

/// Prior-averaged MSE of `est` on a table sampled at the quadrature phases.
pub fn bmse(table: &OutcomeTable, est: &Estimator, quad: &PhaseQuadrature) -> Result<CostReport> {
    check_alignment(table, quad)?;
    let curve = mse_curve(table, est)?;
    let mse: Vec<f64> = curve.iter().map(|(_, v)| *v).collect();
    let c = quad.integrate(&mse);
    let kind = match est {
        Estimator::Linear { .. } => EstimatorKind::Linear,
        Estimator::Arcsine { .. } => EstimatorKind::Arcsine,
        Estimator::Mbmse { .. } => EstimatorKind::Mbmse,
    };
    let mut report = CostReport::new(c, quad.prior, kind, est.slope()).with_quadrature(quad.scheme);
    if let Estimator::Linear { offset, .. } = est {
        report.offset = *offset;
    }
    Ok(report)
}

/// Exact prior moments of a circuit with a linear readout, without any
/// phase quadrature: the Gaussian average of `e^{iφ(m - m')}` (and of
/// `φ e^{iφ(m - m')}`) is taken analytically for every coherence of the
/// encoded state, propagated through the Heisenberg-picture readout operators
/// `W† J_z W` and `W† J_z² W`.
pub fn bmse_linear_exact(circuit: &PreparedCircuit, prior: Prior) -> LinearMoments {
    let psi = circuit.encoded_state();
    let psi = psi.amplitudes();
    let m = circuit.system().projections();
    let w = circuit.readout_unitary();
    let d = m.len();
    // columns of W scaled by m and m², so O_k = W† diag(m^k) W
    let s2 = prior.variance();
    let mut cross = 0.0;
    let mut second = 0.0;
    let mut o1 = vec![C64::new(0.0, 0.0); d];
    let mut o2 = vec![C64::new(0.0, 0.0); d];
    let ws = w.as_slice();
    for k in 0..d {
        let col_k = &ws[k * d..(k + 1) * d];
        for j in 0..d {
            let col_j = &ws[j * d..(j + 1) * d];
            let (mut a1, mut a2) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            for l in 0..d {
                let t = col_j[l].conj() * col_k[l];
                a1 += t * m[l];
                a2 += t * (m[l] * m[l]);
            }
            o1[j] = a1;
            o2[j] = a2;
        }
        for j in 0..d {
            let delta = m[j] - m[k];
            let g = (-0.5 * s2 * delta * delta).exp();
            let rho = psi[j].conj() * psi[k];
            // E[φ e^{iφΔ}] = i σ² Δ e^{-σ²Δ²/2}
            cross += (rho * o1[j] * C64::new(0.0, s2 * delta * g)).re;
            second += (rho * o2[j]).re * g;
        }
    }
    LinearMoments { phase_second: s2, cross, outcome_second: second }
}

/// Ideal (simulator) cost of a circuit with an estimator chosen optimally
/// within its family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealCost {
    pub n_particles: usize,
    pub prior: Prior,
    pub estimator: EstimatorKind,
    /// `None` selects the closed-form prior average (linear estimator only).
    pub scheme: Option<QuadratureScheme>,
}

impl IdealCost {
    pub fn linear_exact(n_particles: usize, prior: Prior) -> Self {
        Self { n_particles, prior, estimator: EstimatorKind::Linear, scheme: None }
    }

    pub fn report(&self, params: &CircuitParams) -> Result<CostReport> {
        let circuit = PreparedCircuit::new(params, self.n_particles)?;
        let Some(scheme) = self.scheme else {
            if self.estimator != EstimatorKind::Linear {
                return Err(Error::InvalidArgument("closed-form averaging supports the linear estimator only".into()));
            }
            let mom = bmse_linear_exact(&circuit, self.prior);
            let a = mom.optimal_slope()?;
            return Ok(CostReport::new(mom.bmse_at(a), self.prior, EstimatorKind::Linear, Some(a)));
        };
        let quad = PhaseQuadrature::new(self.prior, scheme)?;
        let table = circuit.outcome_table(&quad.phases)?;
        let est = match self.estimator {
            EstimatorKind::Linear => Estimator::linear(optimal_linear_slope(&table, &quad)?),
            EstimatorKind::Arcsine => {
                let mom = LinearMoments::from_table(&table, &quad)?;
                Estimator::arcsine(self.n_particles, if mom.cross < 0.0 { -1.0 } else { 1.0 })
            }
            EstimatorKind::Mbmse => mbmse_table(&table, &quad)?,
        };
        bmse(&table, &est, &quad)
    }

    pub fn bmse(&self, params: &CircuitParams) -> Result<f64> {
        Ok(self.report(params)?.bmse)
    }
}

/// Convenience wrapper around [`IdealCost::report`].
pub fn ideal_cost(
    params: &CircuitParams,
    n: usize,
    prior: Prior,
    estimator: EstimatorKind,
    scheme: Option<QuadratureScheme>,
) -> Result<CostReport> {
    IdealCost { n_particles: n, prior, estimator, scheme }.report(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{outcome_table, LayerAngles};
    use approx::assert_relative_eq;

    #[test]
    fn perfect_estimator_has_zero_mse() {
        // one phase per row and the estimator returning exactly that phase
        let t = OutcomeTable::new(2, vec![0.3], vec![vec![0.0, 1.0, 0.0]]).unwrap();
        let est = Estimator::Mbmse { estimates: vec![9.0, 0.3, -9.0] };
        assert_eq!(mse_curve(&t, &est).unwrap(), vec![(0.3, 0.0)]);
    }

    #[test]
    fn flat_table_is_degenerate() {
        let prior = Prior::new(1.0).unwrap();
        let q = PhaseQuadrature::new(prior, QuadratureScheme::GaussHermite { nodes: 20 }).unwrap();
        let t = OutcomeTable::new(2, q.phases.clone(), vec![vec![0.25, 0.5, 0.25]; q.len()]).unwrap();
        assert!(matches!(optimal_linear_slope(&t, &q), Err(Error::DegenerateDistribution(_))));
    }

    #[test]
    fn zero_information_mbmse_keeps_prior_width() {
        let prior = Prior::new(0.6).unwrap();
        let q = PhaseQuadrature::new(prior, QuadratureScheme::GaussHermite { nodes: 40 }).unwrap();
        let t = OutcomeTable::new(3, q.phases.clone(), vec![vec![0.1, 0.2, 0.3, 0.4]; q.len()]).unwrap();
        let r = bmse(&t, &mbmse_table(&t, &q).unwrap(), &q).unwrap();
        assert_relative_eq!(r.bmse, 0.36, max_relative = 1e-12);
        assert_relative_eq!(r.ratio, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn closed_form_slope_minimizes_quadratic() {
        let prior = Prior::new(0.9).unwrap();
        let q = PhaseQuadrature::new(prior, QuadratureScheme::GaussHermite { nodes: 60 }).unwrap();
        let p = CircuitParams {
            entangling: vec![LayerAngles::new(0.07, 0.01, -1.1)],
            decoding: vec![LayerAngles::new(0.05, 0.02, 0.6)],
            ..Default::default()
        };
        let t = outcome_table(&p, 8, &q.phases).unwrap();
        let a = optimal_linear_slope(&t, &q).unwrap();
        let c = |s: f64| bmse(&t, &Estimator::linear(s), &q).unwrap().bmse;
        // golden-section search on the same quadrature
        let (mut lo, mut hi) = (a - 1.0, a + 1.0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let x1 = hi - g * (hi - lo);
            let x2 = lo + g * (hi - lo);
            if c(x1) < c(x2) {
                hi = x2
            } else {
                lo = x1
            }
        }
        assert!((0.5 * (lo + hi) - a).abs() < 1e-8);
    }

    #[test]
    fn exact_moments_match_dense_quadrature() {
        let prior = Prior::new(0.75).unwrap();
        let p = CircuitParams {
            entangling: vec![LayerAngles::new(0.09, 0.03, -1.3)],
            decoding: vec![LayerAngles::new(0.04, 0.06, 0.7), LayerAngles::new(0.02, 0.0, -0.5)],
            ..Default::default()
        };
        let circuit = PreparedCircuit::new(&p, 10).unwrap();
        let exact = bmse_linear_exact(&circuit, prior);
        let q = PhaseQuadrature::new(prior, QuadratureScheme::GaussHermite { nodes: 160 }).unwrap();
        let quad = LinearMoments::from_table(&circuit.outcome_table(&q.phases).unwrap(), &q).unwrap();
        assert_relative_eq!(exact.cross, quad.cross, max_relative = 1e-10);
        assert_relative_eq!(exact.outcome_second, quad.outcome_second, max_relative = 1e-10);
        assert_relative_eq!(exact.phase_second, quad.phase_second, max_relative = 1e-12);
    }
}
