use serde::{Deserialize, Serialize};

use crate::circuit::OutcomeTable;
use crate::error::{Error, Result};
use crate::metrology::cost::{CostReport, EstimatorKind};
use crate::metrology::quadrature::simpson_weights;
use crate::metrology::{Prior, QuadratureScheme};

/// Outcome counts at one implemented phase, indexed by `k = m + N/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseHistogram {
    pub phase: f64,
    pub counts: Vec<f64>,
}

impl PhaseHistogram {
    pub fn new(phase: f64, counts: Vec<f64>) -> Result<Self> {
        if counts.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidArgument("histogram counts must be finite and non-negative".into()));
        }
        if counts.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InsufficientData(format!("empty histogram at phase {phase}")));
        }
        Ok(Self { phase, counts })
    }

    /// Exact probabilities as a histogram of unit total weight.
    pub fn from_probabilities(phase: f64, probs: &[f64]) -> Self {
        Self { phase, counts: probs.to_vec() }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn n_particles(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let t = self.total();
        self.counts.iter().map(|c| c / t).collect()
    }
}

/// Histograms of an ideal table, one per tabulated phase.
pub fn histograms_from_table(table: &OutcomeTable) -> Vec<PhaseHistogram> {
    table.phases().iter().zip(table.rows()).map(|(&p, row)| PhaseHistogram::from_probabilities(p, row)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentalFit {
    pub slope: f64,
    pub offset: f64,
    pub report: CostReport,
}

struct Sums {
    phase: Vec<f64>,
    weight: Vec<f64>,
    m1: Vec<f64>,
    m2: Vec<f64>,
}

impl Sums {
    /// Optimal slope and cost for a trial offset; the prior density is
    /// re-centred on the true phase `φ_exp - offset`.
    fn at(&self, prior: &Prior, offset: f64) -> (f64, f64) {
        let (mut pp, mut cross, mut mm) = (0.0, 0.0, 0.0);
        for i in 0..self.phase.len() {
            let phi = self.phase[i] - offset;
            let w = self.weight[i] * prior.density(phi);
            pp += w * phi * phi;
            cross += w * phi * self.m1[i];
            mm += w * self.m2[i];
        }
        let a = if mm > 0.0 { cross / mm } else { 0.0 };
        (a, pp - 2.0 * a * cross + a * a * mm)
    }
}

/// Fits slope `a` and phase offset `φ̃` of a linear estimator to measured
/// histograms by minimizing the Simpson-integrated BMSE, with `φ = φ_exp - φ̃`.
///
/// The implemented phases must form an equally spaced ascending grid.
pub fn fit_experimental_cost(hists: &[PhaseHistogram], prior: Prior) -> Result<ExperimentalFit> {
    if hists.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 phase points, got {}", hists.len())));
    }
    let h = hists[1].phase - hists[0].phase;
    let span = hists[hists.len() - 1].phase - hists[0].phase;
    let uniform = hists.windows(2).all(|p| ((p[1].phase - p[0].phase) - h).abs() <= 1e-9 * span.abs().max(1.0));
    if !(h > 0.0) || !uniform {
        return Err(Error::InvalidArgument("Simpson fit needs an ascending, equally spaced phase grid".into()));
    }
    let weights = simpson_weights(hists.len(), h)?;
    let half_width = hists.iter().map(|x| x.phase.abs()).fold(0.0, f64::max) / prior.width();
    let scheme = QuadratureScheme::Simpson { points: hists.len(), half_width };
    fit_with_weights(hists, &weights, prior, Some(scheme))
}

/// Same fit with caller-supplied integration weights `w_i` such that
/// `Σ w_i P(φ_i) f(φ_i) ≈ ∫ P f` (prior density applied internally).
pub fn fit_with_weights(
    hists: &[PhaseHistogram],
    weights: &[f64],
    prior: Prior,
    scheme: Option<QuadratureScheme>,
) -> Result<ExperimentalFit> {
    if hists.len() != weights.len() {
        return Err(Error::InvalidArgument("one weight per histogram required".into()));
    }
    let n = hists.first().map(|h| h.n_particles()).unwrap_or(0);
    if hists.iter().any(|h| h.n_particles() != n) {
        return Err(Error::InvalidArgument("histograms disagree on the particle number".into()));
    }
    let half = n as f64 / 2.0;
    let mut sums = Sums { phase: vec![], weight: weights.to_vec(), m1: vec![], m2: vec![] };
    for hist in hists {
        let f = hist.frequencies();
        let (m1, m2) = f.iter().enumerate().fold((0.0, 0.0), |(a, b), (k, p)| {
            let m = k as f64 - half;
            (a + p * m, b + p * m * m)
        });
        sums.phase.push(hist.phase);
        sums.m1.push(m1);
        sums.m2.push(m2);
    }
    // golden-section search over the offset
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (-0.25 * prior.width(), 0.25 * prior.width());
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (sums.at(&prior, x1).1, sums.at(&prior, x2).1);
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = sums.at(&prior, x1).1;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = sums.at(&prior, x2).1;
        }
    }
    let offset = 0.5 * (lo + hi);
    let (slope, c) = sums.at(&prior, offset);
    let mut report = CostReport::new(c, prior, EstimatorKind::Linear, Some(slope));
    report.offset = offset;
    report.quadrature = scheme;
    Ok(ExperimentalFit { slope, offset, report })
}
