//! Gaussian-process meta-model over circuit angles.
//!
//! Product of per-dimension periodic kernels
//! `k(x, x') = s² Π_d exp(-2 sin²(π(x_d - x'_d)/p_d) / ℓ_d²)`, with `p_d` the
//! generator period of the angle. Observations carry their own noise
//! variance. Only used to rank cells; never to pick the incumbent.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    /// Training points kept (lowest observed costs first).
    pub max_training: usize,
    /// Length-scale candidates, in units of `sin(π·width/period)` per dimension.
    pub length_grid: Vec<f64>,
    pub amplitude_grid: Vec<f64>,
    pub sweeps: usize,
    pub jitter: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            max_training: 128,
            length_grid: vec![0.05, 0.1, 0.2, 0.4, 0.8, 1.6],
            amplitude_grid: vec![0.5, 1.0, 2.0],
            sweeps: 2,
            jitter: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Surrogate {
    periods: Vec<f64>,
    lengths: Vec<f64>,
    amplitude: f64,
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

fn kernel(a: &[f64], b: &[f64], periods: &[f64], lengths: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..a.len() {
        let t = (PI * (a[d] - b[d]) / periods[d]).sin();
        s += 2.0 * t * t / (lengths[d] * lengths[d]);
    }
    (-s).exp()
}

struct Fit {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_ml: f64,
}

fn fit_once(x: &[Vec<f64>], y: &DVector<f64>, noise: &[f64], periods: &[f64], lengths: &[f64], amp: f64, jitter: f64) -> Option<Fit> {
    let n = x.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| amp * kernel(&x[i], &x[j], periods, lengths));
    for i in 0..n {
        k[(i, i)] += noise[i] + jitter * amp.max(1.0);
    }
    let chol = Cholesky::new(k)?;
    let alpha = chol.solve(y);
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let log_ml = -0.5 * y.dot(&alpha) - 0.5 * logdet;
    Some(Fit { chol, alpha, log_ml })
}

impl Surrogate {
    /// Fits hyperparameters by coordinate search on the log marginal
    /// likelihood. `widths` are the box widths of the dimensions.
    pub fn fit(
        x: &[Vec<f64>],
        values: &[f64],
        variances: &[f64],
        periods: &[f64],
        widths: &[f64],
        cfg: &SurrogateConfig,
    ) -> Result<Self> {
        if x.is_empty() || x.len() != values.len() || x.len() != variances.len() {
            return Err(Error::InsufficientData("surrogate needs matching, non-empty training data".into()));
        }
        let d = periods.len();
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        order.truncate(cfg.max_training.max(1));
        let xs: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let n = ys.len() as f64;
        let y_mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(ys.len(), ys.iter().map(|v| (v - y_mean) / y_scale));
        let noise: Vec<f64> = order.iter().map(|&i| variances[i] / (y_scale * y_scale)).collect();
        let unit: Vec<f64> = (0..d).map(|k| (PI * widths[k] / periods[k]).sin().abs().max(1e-6)).collect();

        let mut scale = vec![cfg.length_grid[cfg.length_grid.len() / 2]; d];
        let mut amp = 1.0;
        let lengths = |s: &[f64]| -> Vec<f64> { s.iter().zip(&unit).map(|(a, b)| a * b).collect() };
        let mut best = fit_once(&xs, &y, &noise, periods, &lengths(&scale), amp, cfg.jitter)
            .ok_or_else(|| Error::DegenerateDistribution("surrogate covariance is not positive definite".into()))?;
        for _ in 0..cfg.sweeps {
            for &a in &cfg.amplitude_grid {
                if let Some(f) = fit_once(&xs, &y, &noise, periods, &lengths(&scale), a, cfg.jitter) {
                    if f.log_ml > best.log_ml {
                        best = f;
                        amp = a;
                    }
                }
            }
            for k in 0..d {
                for &c in &cfg.length_grid {
                    let mut trial = scale.clone();
                    trial[k] = c;
                    if let Some(f) = fit_once(&xs, &y, &noise, periods, &lengths(&trial), amp, cfg.jitter) {
                        if f.log_ml > best.log_ml {
                            best = f;
                            scale = trial;
                        }
                    }
                }
            }
        }
        Ok(Self {
            periods: periods.to_vec(),
            lengths: lengths(&scale),
            amplitude: amp,
            x: xs,
            y_mean,
            y_scale,
            alpha: best.alpha,
            chol: best.chol,
        })
    }

    /// Posterior mean and variance of the noise-free cost.
    pub fn predict(&self, at: &[f64]) -> (f64, f64) {
        let kx = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| self.amplitude * kernel(at, xi, &self.periods, &self.lengths)),
        );
        let mean = kx.dot(&self.alpha);
        let v = self.chol.solve(&kx);
        let var = (self.amplitude - kx.dot(&v)).max(0.0);
        (self.y_mean + self.y_scale * mean, var * self.y_scale * self.y_scale)
    }

    pub fn length_scales(&self) -> &[f64] {
        &self.lengths
    }

    pub fn training_len(&self) -> usize {
        self.x.len()
    }
}
