//! Finite-shot emulation of the sensor with configurable imperfections.

mod frequency;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitParams, PreparedCircuit};
use crate::error::{Error, Result};
use crate::metrology::{fit_with_weights, CostReport, PhaseHistogram, PhaseQuadrature, Prior, QuadratureScheme};
use crate::varopt::{derive_seed, ScanSpec, Sensor};

pub use frequency::{run_frequency_experiment, FreqExperimentConfig, FreqExperimentResult, FreqPoint, SequenceStats};

/// Shots per acquisition batch; a refreeze discards one batch.
pub const BATCH_SHOTS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Multiplies every twisting angle.
    pub twist_scale: f64,
    /// Added to every rotation that is not skipped.
    pub rotation_offset: f64,
    /// Programmed rotations with smaller magnitude are not applied.
    pub rotation_skip_threshold: f64,
    /// Flicker bandwidth `b_α` in rad/s (frequency experiment only).
    pub flicker_bandwidth: f64,
    pub flicker_exponent: f64,
    /// Probability that a batch is lost and redrawn.
    pub refreeze_probability: f64,
    /// Redraws allowed per batch before giving up.
    pub max_redraws: usize,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            twist_scale: 1.0,
            rotation_offset: 0.0,
            rotation_skip_threshold: 0.0,
            flicker_bandwidth: 0.0,
            flicker_exponent: 2.0,
            refreeze_probability: 0.0,
            max_redraws: 10,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.twist_scale > 0.0) || !self.twist_scale.is_finite() {
            return Err(Error::InvalidArgument("twist_scale must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.refreeze_probability) {
            return Err(Error::InvalidArgument("refreeze_probability must lie in [0, 1]".into()));
        }
        if !(self.rotation_skip_threshold >= 0.0) || !(self.flicker_bandwidth >= 0.0) {
            return Err(Error::InvalidArgument("skip threshold and flicker bandwidth must be non-negative".into()));
        }
        if !(self.flicker_exponent > 0.0 && self.flicker_exponent <= 2.0) {
            return Err(Error::InvalidArgument("flicker exponent must lie in (0, 2]".into()));
        }
        if !self.rotation_offset.is_finite() {
            return Err(Error::InvalidArgument("rotation_offset must be finite".into()));
        }
        Ok(())
    }

    /// Angles the device actually applies when `params` is programmed.
    pub fn implemented(&self, params: &CircuitParams) -> CircuitParams {
        params.map_angles(
            |t| t * self.twist_scale,
            |r| if r.abs() < self.rotation_skip_threshold || r == 0.0 { 0.0 } else { r + self.rotation_offset },
        )
    }

    /// Standard deviation of the flicker phase accumulated over `ramsey_time`.
    pub fn flicker_phase_sd(&self, ramsey_time: f64) -> f64 {
        if self.flicker_bandwidth == 0.0 {
            0.0
        } else {
            (self.flicker_bandwidth * ramsey_time).powf(self.flicker_exponent / 2.0)
        }
    }
}

/// Multinomial draw by sequential binomials.
pub(crate) fn multinomial<R: Rng>(rng: &mut R, shots: usize, probs: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; probs.len()];
    let mut left = shots as u64;
    let mut mass = 1.0;
    for (k, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == probs.len() {
            counts[k] = left as f64;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let c = if q >= 1.0 { left } else { Binomial::new(left, q).map(|b| b.sample(rng)).unwrap_or(0) };
        counts[k] = c as f64;
        left -= c;
        mass -= p;
    }
    counts
}

fn sample_prepared(circuit: &PreparedCircuit, phi: f64, shots: usize, noise: &NoiseModel, seed: u64) -> Result<Vec<f64>> {
    if shots == 0 {
        return Err(Error::InvalidArgument("need at least one shot".into()));
    }
    let probs = circuit.probabilities(phi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0.0; probs.len()];
    let mut left = shots;
    while left > 0 {
        let size = left.min(BATCH_SHOTS);
        let mut redraws = 0;
        let batch = loop {
            let b = multinomial(&mut rng, size, &probs);
            if noise.refreeze_probability > 0.0 && rng.random::<f64>() < noise.refreeze_probability {
                redraws += 1;
                if redraws > noise.max_redraws {
                    return Err(Error::EvaluatorFailure(format!("batch lost to refreeze {redraws} times")));
                }
                continue;
            }
            break b;
        };
        counts.iter_mut().zip(&batch).for_each(|(c, b)| *c += b);
        left -= size;
    }
    Ok(counts)
}

/// Outcome counts, indexed by `k = m + N/2`, for `shots` repetitions at phase `phi`.
pub fn sample_outcomes(
    params: &CircuitParams,
    n: usize,
    phi: f64,
    shots: usize,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<f64>> {
    noise.validate()?;
    let circuit = PreparedCircuit::new(&noise.implemented(params), n)?;
    sample_prepared(&circuit, phi, shots, noise, derive_seed(noise.seed, seed))
}

/// A simulated device behind the [`Sensor`] interface.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualLab {
    pub n_particles: usize,
    pub noise: NoiseModel,
}

impl VirtualLab {
    pub fn new(n_particles: usize, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        if n_particles == 0 {
            return Err(Error::InvalidArgument("need at least one particle".into()));
        }
        Ok(Self { n_particles, noise })
    }
}

impl Sensor for VirtualLab {
    fn n_particles(&self) -> usize {
        self.n_particles
    }

    fn measure(&self, params: &CircuitParams, phi: f64, shots: usize, seed: u64) -> Result<Vec<f64>> {
        sample_outcomes(params, self.n_particles, phi, shots, &self.noise, seed)
    }
}

/// Cost estimated the way an experiment would: histograms at the scan nodes,
/// then a fit of slope and offset. Half-axis schemes are mirrored through
/// `p(m|-φ) = p(-m|φ)` before fitting.
pub fn empirical_cost(
    params: &CircuitParams,
    n: usize,
    prior: Prior,
    spec: &ScanSpec,
    noise: &NoiseModel,
    seed: u64,
) -> Result<CostReport> {
    noise.validate()?;
    if spec.shots_per_node == 0 {
        return Err(Error::InvalidArgument("scan needs at least one shot per node".into()));
    }
    let circuit = PreparedCircuit::new(&noise.implemented(params), n)?;
    let quad = PhaseQuadrature::new(prior, spec.scheme)?;
    let base = derive_seed(noise.seed, seed);
    let mut hists = Vec::with_capacity(2 * quad.len());
    let mut weights = Vec::with_capacity(2 * quad.len());
    for (i, (&phi, &w)) in quad.phases.iter().zip(&quad.weights).enumerate() {
        let counts = sample_prepared(&circuit, phi, spec.shots_per_node, noise, derive_seed(base, i as u64))?;
        let w = w / prior.density(phi);
        if let QuadratureScheme::GaussHermiteHalf { .. } = spec.scheme {
            hists.push(PhaseHistogram { phase: -phi, counts: counts.iter().rev().copied().collect() });
            weights.push(0.5 * w);
            hists.push(PhaseHistogram { phase: phi, counts });
            weights.push(0.5 * w);
        } else {
            hists.push(PhaseHistogram { phase: phi, counts });
            weights.push(w);
        }
    }
    Ok(fit_with_weights(&hists, &weights, prior, Some(spec.scheme))?.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::LayerAngles;

    #[test]
    fn single_particle_closed_form() {
        let c = sample_outcomes(&CircuitParams::css(), 1, std::f64::consts::FRAC_PI_2, 1_000_000, &NoiseModel::ideal(), 3)
            .unwrap();
        let p = PreparedCircuit::new(&CircuitParams::css(), 1).unwrap().probabilities(std::f64::consts::FRAC_PI_2);
        let dominant = if p[0] > p[1] { 0 } else { 1 };
        assert!(p[dominant] > 1.0 - 1e-12);
        assert_eq!(c[dominant], 1_000_000.0);
    }

    #[test]
    fn multinomial_preserves_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = multinomial(&mut rng, 1234, &[0.1, 0.0, 0.4, 0.5]);
        assert_eq!(c.iter().sum::<f64>(), 1234.0);
        assert_eq!(c[1], 0.0);
    }

    #[test]
    fn implemented_angles() {
        let noise = NoiseModel { twist_scale: 1.5, rotation_offset: 0.01, rotation_skip_threshold: 0.05, ..Default::default() };
        let p = CircuitParams { entangling: vec![LayerAngles::new(0.1, 0.0, 0.04)], decoding: vec![LayerAngles::new(0.0, 0.2, -0.5)], ..CircuitParams::zeros(1, 1) };
        let q = noise.implemented(&p);
        assert!((q.entangling[0].twist_1 - 0.15).abs() < 1e-15);
        assert_eq!(q.entangling[0].rotation, 0.0);
        assert!((q.decoding[0].rotation + 0.49).abs() < 1e-15);
        assert!((q.decoding[0].twist_2 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn refreeze_beyond_cap_fails() {
        let noise = NoiseModel { refreeze_probability: 1.0, max_redraws: 3, ..Default::default() };
        let r = sample_outcomes(&CircuitParams::css(), 4, 0.1, 10, &noise, 0);
        assert!(matches!(r, Err(Error::EvaluatorFailure(_))));
    }

    #[test]
    fn rejects_bad_noise() {
        assert!(NoiseModel { refreeze_probability: 1.5, ..Default::default() }.validate().is_err());
        assert!(NoiseModel { twist_scale: 0.0, ..Default::default() }.validate().is_err());
    }
}
