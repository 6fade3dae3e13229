use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrology::cost::CostReport;

/// Free-running clock parameters. Noise with spectral density `S(f) ∝ f^{1-α}`
/// broadens the prior over one Ramsey cycle to `δφ = (b_α T_R)^{α/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSpec {
    pub alpha: f64,
    /// `b_α` in rad/s.
    pub bandwidth: f64,
    /// `T_R` in s.
    pub ramsey_time: f64,
    /// `τ` in s.
    pub averaging_time: f64,
    /// `ω_A` in rad/s.
    pub reference_frequency: f64,
}

impl ClockSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [self.bandwidth, self.ramsey_time, self.averaging_time, self.reference_frequency];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("clock parameters must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::InvalidArgument(format!("noise exponent must lie in (0, 2], got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn prior_width(&self) -> f64 {
        prior_width_from_time(self.bandwidth, self.ramsey_time, self.alpha)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllanReport {
    /// Effective single-cycle uncertainty `Δφ_M`.
    pub delta_phi_m: f64,
    /// `σ(τ)`.
    pub sigma: f64,
    /// `σ·ω_A·√(τ/b_α)`.
    pub normalized: f64,
}

pub fn prior_width_from_time(bandwidth: f64, ramsey_time: f64, alpha: f64) -> f64 {
    (bandwidth * ramsey_time).powf(alpha / 2.0)
}

pub fn ramsey_time_from_width(bandwidth: f64, prior_width: f64, alpha: f64) -> f64 {
    prior_width.powf(2.0 / alpha) / bandwidth
}

/// `Δφ_M = Δφ/√(1 - (Δφ/δφ)²)`.
fn effective_uncertainty(report: &CostReport) -> Result<f64> {
    if !(report.ratio < 1.0) {
        return Err(Error::NoInformation { ratio: report.ratio });
    }
    Ok(report.posterior_width / (1.0 - report.ratio * report.ratio).sqrt())
}

/// Allan deviation of a clock without deadtime operated with the
/// interferometer described by `report`.
pub fn allan(report: &CostReport, clock: &ClockSpec) -> Result<AllanReport> {
    clock.validate()?;
    let dpm = effective_uncertainty(report)?;
    let sigma = dpm / (clock.reference_frequency * clock.ramsey_time) * (clock.ramsey_time / clock.averaging_time).sqrt();
    let normalized = sigma * clock.reference_frequency * (clock.averaging_time / clock.bandwidth).sqrt();
    Ok(AllanReport { delta_phi_m: dpm, sigma, normalized })
}

/// Bandwidth-normalized Allan deviation when the Ramsey time is matched to
/// the report's prior width: `Δφ_M / δφ^{1/α}`.
pub fn normalized_allan(report: &CostReport, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidArgument(format!("noise exponent must lie in (0, 2], got {alpha}")));
    }
    Ok(effective_uncertainty(report)? / report.prior_width.powf(1.0 / alpha))
}
