//! Phase estimators, Bayesian mean-squared-error costs, fundamental bounds and
//! clock figures of merit.

mod bounds;
mod clock;
mod cost;
mod estimator;
mod fit;
pub mod quadrature;
mod squeezing;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bounds::{hl_bmse, phase_slip_probability, psl_bmse, sql_bmse, van_trees_bound};
pub use clock::{allan, normalized_allan, prior_width_from_time, ramsey_time_from_width, AllanReport, ClockSpec};
pub use cost::{
    bmse, bmse_linear_exact, ideal_cost, mse_curve, optimal_linear_slope, to_db, CostReport, EstimatorKind, IdealCost,
    LinearMoments,
};
pub use estimator::{estimate_phase, mbmse_table, Estimator};
pub use fit::{fit_experimental_cost, fit_with_weights, histograms_from_table, ExperimentalFit, PhaseHistogram};
pub use quadrature::{PhaseQuadrature, QuadratureScheme};
pub use squeezing::{wineland_state, wineland_xi, WinelandReport};

/// Zero-mean Gaussian prior over the phase with standard deviation `width`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    width: f64,
}

impl Prior {
    pub fn new(width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidArgument(format!("prior width must be positive, got {width}")));
        }
        Ok(Self { width })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn variance(&self) -> f64 {
        self.width * self.width
    }

    pub fn density(&self, phi: f64) -> f64 {
        let z = phi / self.width;
        (-0.5 * z * z).exp() / (self.width * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// `∫ P(φ) e^{iφΔ} dφ`, real for the zero-mean prior.
    pub fn characteristic(&self, delta: f64) -> f64 {
        (-0.5 * self.variance() * delta * delta).exp()
    }
}
