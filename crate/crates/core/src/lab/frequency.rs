//! Reconstruction of injected frequency detunings with single-shot Ramsey
//! estimates, including drift correction against a reference sequence.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{multinomial, NoiseModel};
use crate::circuit::{CircuitParams, PreparedCircuit};
use crate::error::{Error, Result};
use crate::metrology::quadrature::{gauss_hermite, simpson_weights};
use crate::metrology::{bmse_linear_exact, Prior};
use crate::spin::projections;
use crate::varopt::derive_seed;
use crate::varopt::local::{theory_optimum, LocalOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreqExperimentConfig {
    pub n_particles: usize,
    pub css: CircuitParams,
    /// Defaults to the (1,2) theory optimum at `design_width`.
    pub optimized: Option<CircuitParams>,
    pub design_width: f64,
    /// Standard deviation `Δω_N` of the injected detuning, rad/s.
    pub detuning_spread: f64,
    /// Detunings beyond `truncation·Δω_N` are redrawn.
    pub truncation: f64,
    pub samples_per_time: usize,
    pub shots_per_sample: usize,
    /// Ramsey times in seconds.
    pub ramsey_times: Vec<f64>,
    pub reference_time: f64,
    pub reference_shots: usize,
    pub bootstrap: usize,
    /// Relative twist error per rad/s of detuning; zero disables it.
    pub twist_error_per_detuning: f64,
    pub seed: u64,
}

impl Default for FreqExperimentConfig {
    fn default() -> Self {
        Self {
            n_particles: 12,
            css: CircuitParams::css(),
            optimized: None,
            design_width: 0.6893,
            detuning_spread: 2.0 * PI * 40.0,
            truncation: 2.0,
            samples_per_time: 200,
            shots_per_sample: 50,
            ramsey_times: vec![1.0e-3, 1.5e-3, 2.0e-3, 2.5e-3, 3.0e-3, 3.5e-3],
            reference_time: 15e-3,
            reference_shots: 50,
            bootstrap: 200,
            twist_error_per_detuning: 0.0,
            seed: 0,
        }
    }
}

impl FreqExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.design_width, self.detuning_spread, self.reference_time];
        if self.n_particles == 0 || positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("particle number, widths and times must be positive".into()));
        }
        if !(self.truncation >= 1.0) {
            return Err(Error::InvalidArgument("truncation must be at least 1".into()));
        }
        if self.samples_per_time < 2 || self.shots_per_sample == 0 || self.reference_shots == 0 {
            return Err(Error::InvalidArgument("need at least 2 samples and one shot per sequence".into()));
        }
        if self.ramsey_times.is_empty() || self.ramsey_times.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidArgument("Ramsey times must be positive".into()));
        }
        if !(self.twist_error_per_detuning >= 0.0) {
            return Err(Error::InvalidArgument("twist_error_per_detuning must be non-negative".into()));
        }
        Ok(())
    }
}

/// One sequence at one Ramsey time. Frequencies in rad/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceStats {
    pub slope: f64,
    /// Standard deviation of `ω_est − Δω` over all shots.
    pub std: f64,
    pub bootstrap_se: f64,
    pub theory_std: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqPoint {
    pub ramsey_time: f64,
    /// `Δω_N·T_R`.
    pub prior_width: f64,
    pub css: SequenceStats,
    pub optimized: SequenceStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqExperimentResult {
    pub optimized: CircuitParams,
    pub points: Vec<FreqPoint>,
}

/// (1,2) circuit minimizing the linear-estimator cost at `width`.
pub fn optimized_sequence(n: usize, width: f64, seed: u64) -> Result<CircuitParams> {
    Ok(theory_optimum(n, (1, 2), Prior::new(width)?, &[], 12, seed, &LocalOptions::default())?.params)
}

struct Sequence {
    params: CircuitParams,
    slope: f64,
    circuit: PreparedCircuit,
}

impl Sequence {
    fn new(params: &CircuitParams, n: usize, noise: &NoiseModel, width: f64) -> Result<Self> {
        let ideal = PreparedCircuit::new(params, n)?;
        let slope = bmse_linear_exact(&ideal, Prior::new(width)?).optimal_slope()?;
        let circuit = PreparedCircuit::new(&noise.implemented(params), n)?;
        Ok(Self { params: params.clone(), slope, circuit })
    }

    /// Outcome law at the detuning `dw` and phase `phi`.
    fn probabilities(&self, cfg: &FreqExperimentConfig, noise: &NoiseModel, dw: f64, phi: f64) -> Result<Vec<f64>> {
        if cfg.twist_error_per_detuning == 0.0 {
            return Ok(self.circuit.probabilities(phi));
        }
        let scale = noise.twist_scale * (1.0 + cfg.twist_error_per_detuning * dw.abs());
        let noisy = NoiseModel { twist_scale: scale, ..noise.clone() };
        Ok(PreparedCircuit::new(&noisy.implemented(&self.params), cfg.n_particles)?.probabilities(phi))
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng, sd: f64, cut: f64) -> f64 {
    let normal = Normal::new(0.0, sd).expect("positive spread");
    loop {
        let x = normal.sample(rng);
        if x.abs() <= cut * sd {
            return x;
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sd).expect("positive spread").sample(rng)
    }
}

/// `(Σe, Σe², shots)` of one trial per sequence.
type TrialSums = [(f64, f64, f64); 2];

fn pooled_std(trials: &[TrialSums], k: usize, pick: impl Iterator<Item = usize>) -> f64 {
    let (mut s1, mut s2, mut n) = (0.0, 0.0, 0.0);
    for i in pick {
        let (a, b, c) = trials[i][k];
        s1 += a;
        s2 += b;
        n += c;
    }
    let mean = s1 / n;
    (s2 / n - mean * mean).max(0.0).sqrt()
}

/// Gauss–Hermite nodes and weights for a zero-mean normal of the given sd.
fn normal_rule(sd: f64) -> Vec<(f64, f64)> {
    if sd == 0.0 {
        return vec![(0.0, 1.0)];
    }
    let (x, w) = gauss_hermite(20);
    x.iter().zip(&w).map(|(x, w)| (std::f64::consts::SQRT_2 * sd * x, w / PI.sqrt())).collect()
}

/// First and second moments of the drift-corrected reference frequency.
fn reference_moments(reference: &Sequence, cfg: &FreqExperimentConfig, noise: &NoiseModel) -> Result<(f64, f64)> {
    let m = projections(cfg.n_particles);
    let (mut mu, mut sq) = (0.0, 0.0);
    for (eps, w) in normal_rule(noise.flicker_phase_sd(cfg.reference_time)) {
        let p = reference.probabilities(cfg, noise, 0.0, eps)?;
        let e1: f64 = p.iter().zip(&m).map(|(p, m)| p * reference.slope * m).sum();
        let e2: f64 = p.iter().zip(&m).map(|(p, m)| p * (reference.slope * m).powi(2)).sum();
        mu += w * e1;
        sq += w * ((e2 - e1 * e1) / cfg.reference_shots as f64 + e1 * e1);
    }
    let t = cfg.reference_time;
    Ok((mu / t, sq / (t * t)))
}

fn theory_std(seq: &Sequence, cfg: &FreqExperimentConfig, noise: &NoiseModel, t: f64, reference: (f64, f64)) -> Result<f64> {
    let points = 241;
    let cut = cfg.truncation * cfg.detuning_spread;
    let h = 2.0 * cut / (points - 1) as f64;
    let sw = simpson_weights(points, h)?;
    let m = projections(cfg.n_particles);
    let flicker = normal_rule(noise.flicker_phase_sd(t));
    let (mut norm, mut e1, mut e2) = (0.0, 0.0, 0.0);
    for (i, w) in sw.iter().enumerate() {
        let dw = -cut + i as f64 * h;
        let w = w * (-0.5 * (dw / cfg.detuning_spread).powi(2)).exp();
        norm += w;
        for &(eps, we) in &flicker {
            let p = seq.probabilities(cfg, noise, dw, dw * t + eps)?;
            for (p, m) in p.iter().zip(&m) {
                let e = (seq.slope * m - dw * t) / t;
                e1 += w * we * p * e;
                e2 += w * we * p * e * e;
            }
        }
    }
    let (mean, second) = (e1 / norm, e2 / norm);
    let (mu_r, sq_r) = reference;
    let total_mean = mean - mu_r;
    let total_second = second - 2.0 * mean * mu_r + sq_r;
    Ok((total_second - total_mean * total_mean).max(0.0).sqrt())
}

/// Simulates the detuning-reconstruction protocol at every Ramsey time and
/// compares with the prediction from the outcome laws.
pub fn run_frequency_experiment(cfg: &FreqExperimentConfig, noise: &NoiseModel) -> Result<FreqExperimentResult> {
    cfg.validate()?;
    noise.validate()?;
    let n = cfg.n_particles;
    let optimized = match &cfg.optimized {
        Some(p) => p.clone(),
        None => optimized_sequence(n, cfg.design_width, cfg.seed)?,
    };
    let m = projections(n);
    let mut reference = Sequence::new(&CircuitParams::css(), n, noise, cfg.design_width)?;
    // small-angle inverse of the mean projection, no prior needed at zero detuning
    reference.slope = -2.0 / n as f64;
    let ref_moments = reference_moments(&reference, cfg, noise)?;
    let base = derive_seed(cfg.seed, noise.seed);

    let points = cfg
        .ramsey_times
        .par_iter()
        .enumerate()
        .map(|(ti, &t)| -> Result<FreqPoint> {
            let width = cfg.detuning_spread * t;
            let seqs = [Sequence::new(&cfg.css, n, noise, width)?, Sequence::new(&optimized, n, noise, width)?];
            let seed_t = derive_seed(base, ti as u64);
            let mut trials: Vec<TrialSums> = Vec::with_capacity(cfg.samples_per_time);
            for s in 0..cfg.samples_per_time {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed_t, s as u64));
                let dw = truncated_normal(&mut rng, cfg.detuning_spread, cfg.truncation);
                let eps_ref = gaussian(&mut rng, noise.flicker_phase_sd(cfg.reference_time));
                let p_ref = reference.probabilities(cfg, noise, 0.0, eps_ref)?;
                let c_ref = multinomial(&mut rng, cfg.reference_shots, &p_ref);
                let w_ref = c_ref.iter().zip(&m).map(|(c, m)| c * reference.slope * m).sum::<f64>()
                    / (cfg.reference_shots as f64 * cfg.reference_time);
                let mut sums: TrialSums = [(0.0, 0.0, 0.0); 2];
                for (k, seq) in seqs.iter().enumerate() {
                    let eps = gaussian(&mut rng, noise.flicker_phase_sd(t));
                    let p = seq.probabilities(cfg, noise, dw, dw * t + eps)?;
                    let c = multinomial(&mut rng, cfg.shots_per_sample, &p);
                    for (c, m) in c.iter().zip(&m) {
                        let e = seq.slope * m / t - w_ref - dw;
                        sums[k].0 += c * e;
                        sums[k].1 += c * e * e;
                        sums[k].2 += c;
                    }
                }
                trials.push(sums);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed_t, u64::MAX));
            let stats = |k: usize, rng: &mut ChaCha8Rng| -> Result<SequenceStats> {
                let std = pooled_std(&trials, k, 0..trials.len());
                let boot: Vec<f64> = (0..cfg.bootstrap)
                    .map(|_| {
                        let pick: Vec<usize> =
                            (0..trials.len()).map(|_| rand::Rng::random_range(rng, 0..trials.len())).collect();
                        pooled_std(&trials, k, pick.into_iter())
                    })
                    .collect();
                let bootstrap_se = if boot.len() > 1 {
                    let mean = boot.iter().sum::<f64>() / boot.len() as f64;
                    (boot.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (boot.len() - 1) as f64).sqrt()
                } else {
                    0.0
                };
                let theory_std = theory_std(&seqs[k], cfg, noise, t, ref_moments)?;
                Ok(SequenceStats { slope: seqs[k].slope, std, bootstrap_se, theory_std })
            };
            let css = stats(0, &mut rng)?;
            let optimized = stats(1, &mut rng)?;
            Ok(FreqPoint { ramsey_time: t, prior_width: width, css, optimized })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FreqExperimentResult { optimized, points })
}
