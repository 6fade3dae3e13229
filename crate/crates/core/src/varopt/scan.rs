use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParams;
use crate::error::{Error, Result};
use crate::metrology::{fit_with_weights, ExperimentalFit, PhaseHistogram, PhaseQuadrature, Prior, QuadratureScheme};
use crate::spin::projections;
use crate::varopt::{derive_seed, Evaluation, Evaluator};

/// A (possibly noisy) device that returns outcome counts, indexed by
/// `k = m + N/2`, for a circuit at an injected phase.
pub trait Sensor: Sync {
    fn n_particles(&self) -> usize;

    fn measure(&self, params: &CircuitParams, phi: f64, shots: usize, seed: u64) -> Result<Vec<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub scheme: QuadratureScheme,
    /// Rounded up to a whole number of batches.
    pub shots_per_node: usize,
    pub batch: usize,
    /// Extra attempts for a batch that fails before the error propagates.
    pub retries: usize,
}

impl ScanSpec {
    /// Half-axis Gauss–Hermite nodes, mirrored by symmetry.
    pub fn coarse() -> Self {
        Self { scheme: QuadratureScheme::GaussHermiteHalf { measured: 10 }, shots_per_node: 100, batch: 50, retries: 1 }
    }

    /// Nodes on both sides, no symmetry assumption.
    pub fn fine() -> Self {
        Self { scheme: QuadratureScheme::GaussHermite { nodes: 20 }, shots_per_node: 250, batch: 50, retries: 1 }
    }

    fn shots(&self) -> usize {
        self.shots_per_node.div_ceil(self.batch) * self.batch
    }

    fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.shots_per_node == 0 {
            return Err(Error::InvalidArgument("scan needs positive shots and batch size".into()));
        }
        Ok(())
    }
}

/// Fine-scan output: per-node MSE at the fixed slope, the resulting cost, and
/// a refit of slope and offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FineScan {
    pub curve: Vec<(f64, f64)>,
    pub evaluation: Evaluation,
    pub fit: ExperimentalFit,
    pub histograms: Vec<PhaseHistogram>,
}

struct NodeSample {
    counts: Vec<f64>,
    mse: f64,
    mse_var: f64,
}

fn sample_counts<S: Sensor + ?Sized>(
    sensor: &S,
    params: &CircuitParams,
    phi: f64,
    spec: &ScanSpec,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = sensor.n_particles();
    let mut counts = vec![0.0; n + 1];
    for b in 0..spec.shots() / spec.batch {
        let mut attempt = 0;
        let batch = loop {
            match sensor.measure(params, phi, spec.batch, derive_seed(seed, (b * (spec.retries + 1) + attempt) as u64)) {
                Ok(c) => break c,
                Err(Error::EvaluatorFailure(_)) if attempt < spec.retries => attempt += 1,
                Err(e) => return Err(e),
            }
        };
        if batch.len() != n + 1 {
            return Err(Error::EvaluatorFailure(format!("sensor returned {} outcomes, expected {}", batch.len(), n + 1)));
        }
        counts.iter_mut().zip(&batch).for_each(|(c, b)| *c += b);
    }
    Ok(counts)
}

fn node_mse(counts: Vec<f64>, phi: f64, slope: f64) -> NodeSample {
    let total: f64 = counts.iter().sum();
    let m = projections(counts.len() - 1);
    let (mut s1, mut s2) = (0.0, 0.0);
    for (c, m) in counts.iter().zip(&m) {
        let e = (phi - slope * m).powi(2);
        s1 += c * e;
        s2 += c * e * e;
    }
    let mse = s1 / total;
    let var = if total > 1.0 { ((s2 / total - mse * mse) * total / (total - 1.0)).max(0.0) / total } else { 0.0 };
    NodeSample { counts, mse, mse_var: var }
}

/// Slope minimizing the quadrature cost of the sampled histograms.
fn fitted_slope(quad: &PhaseQuadrature, counts: &[Vec<f64>]) -> Result<f64> {
    let (mut cross, mut second) = (0.0, 0.0);
    for ((&phi, w), c) in quad.phases.iter().zip(&quad.weights).zip(counts) {
        let total: f64 = c.iter().sum();
        let m = projections(c.len() - 1);
        let (e1, e2) = c.iter().zip(&m).fold((0.0, 0.0), |(a, b), (c, m)| (a + c * m, b + c * m * m));
        cross += w * phi * e1 / total;
        second += w * e2 / total;
    }
    if !(second > 0.0) {
        return Err(Error::DegenerateDistribution("histograms carry no outcome spread".into()));
    }
    Ok(cross / second)
}

fn scan<S: Sensor + ?Sized>(
    sensor: &S,
    params: &CircuitParams,
    prior: Prior,
    spec: &ScanSpec,
    slope: Option<f64>,
    seed: u64,
) -> Result<(PhaseQuadrature, Vec<NodeSample>, Evaluation, f64)> {
    spec.validate()?;
    let quad = PhaseQuadrature::new(prior, spec.scheme)?;
    let counts: Vec<Vec<f64>> = quad
        .phases
        .iter()
        .enumerate()
        .map(|(i, &phi)| sample_counts(sensor, params, phi, spec, derive_seed(seed, i as u64)))
        .collect::<Result<_>>()?;
    let slope = match slope {
        Some(a) => a,
        None => fitted_slope(&quad, &counts)?,
    };
    let nodes: Vec<NodeSample> = counts.into_iter().zip(&quad.phases).map(|(c, &phi)| node_mse(c, phi, slope)).collect();
    let cost = nodes.iter().zip(&quad.weights).map(|(s, w)| w * s.mse).sum();
    let variance = nodes.iter().zip(&quad.weights).map(|(s, w)| w * w * s.mse_var).sum();
    let shots = quad.len() * spec.shots();
    Ok((quad, nodes, Evaluation { cost, variance, shots }, slope))
}

/// Cost estimate from shots at the scan nodes, at a fixed estimator slope or,
/// with `None`, at the slope fitted to the same shots.
pub fn coarse_scan<S: Sensor + ?Sized>(
    sensor: &S,
    params: &CircuitParams,
    prior: Prior,
    spec: &ScanSpec,
    slope: Option<f64>,
    seed: u64,
) -> Result<Evaluation> {
    Ok(scan(sensor, params, prior, spec, slope, seed)?.2)
}

pub fn fine_scan<S: Sensor + ?Sized>(
    sensor: &S,
    params: &CircuitParams,
    prior: Prior,
    spec: &ScanSpec,
    slope: Option<f64>,
    seed: u64,
) -> Result<FineScan> {
    let (quad, nodes, evaluation, _) = scan(sensor, params, prior, spec, slope, seed)?;
    let curve = quad.phases.iter().zip(&nodes).map(|(&p, s)| (p, s.mse)).collect();
    let histograms: Vec<PhaseHistogram> =
        quad.phases.iter().zip(&nodes).map(|(&p, s)| PhaseHistogram { phase: p, counts: s.counts.clone() }).collect();
    let weights: Vec<f64> = quad.phases.iter().zip(&quad.weights).map(|(&p, w)| w / prior.density(p)).collect();
    let fit = fit_with_weights(&histograms, &weights, prior, Some(spec.scheme))?;
    Ok(FineScan { curve, evaluation, fit, histograms })
}

/// Exposes a sensor to the optimizer: each evaluation is a scan with the
/// slope fitted to its own shots. `shots` overrides the shots per node.
pub struct ScanEvaluator<S: Sensor> {
    pub sensor: S,
    pub prior: Prior,
    pub spec: ScanSpec,
}

impl<S: Sensor> Evaluator for ScanEvaluator<S> {
    fn evaluate(&self, params: &CircuitParams, shots: Option<usize>, seed: u64) -> Result<Evaluation> {
        let spec = ScanSpec { shots_per_node: shots.unwrap_or(self.spec.shots_per_node), ..self.spec };
        coarse_scan(&self.sensor, params, self.prior, &spec, None, seed)
    }

    fn n_particles(&self) -> Option<usize> {
        Some(self.sensor.n_particles())
    }
}
