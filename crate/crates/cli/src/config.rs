use std::f64::consts::PI;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use varsense::lab::{FreqExperimentConfig, NoiseModel};
use varsense::metrology::EstimatorKind;
use varsense::oqi::OqiOptions;
use varsense::varopt::{Constraints, OptimizeConfig, ScanSpec};
use varsense::CircuitParams;

/// `points` equally spaced values from `start` to `stop`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(start: f64, stop: f64, points: usize) -> Self {
        Self { start, stop, points }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points == 0 || !(self.start > 0.0) || !(self.stop >= self.start) {
            bail!("grid needs points >= 1 and 0 < start <= stop, got {:?}", self);
        }
        if self.points == 1 {
            return Ok(vec![self.start]);
        }
        if self.stop == self.start {
            bail!("grid with several points needs stop > start");
        }
        let h = (self.stop - self.start) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| self.start + h * i as f64).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveConfig {
    pub n_particles: usize,
    /// `[n_en, n_de]` per curve.
    pub shapes: Vec<[usize; 2]>,
    pub widths: Grid,
    pub estimator: EstimatorKind,
    /// Gauss–Hermite nodes for the arcsine and MBMSE estimators.
    pub nodes: usize,
    /// Restrict twist angles while optimizing.
    pub constraints: Option<Constraints>,
    pub random_starts: usize,
    /// Fixed circuits; when non-empty, replaces `shapes` and no optimization runs.
    pub params: Vec<CircuitParams>,
    pub oqi: bool,
    pub oqi_max_iter: usize,
    pub seed: u64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            n_particles: 12,
            shapes: vec![[0, 0], [1, 0], [0, 2], [1, 2]],
            widths: Grid::new(0.3, 1.1, 33),
            estimator: EstimatorKind::Linear,
            nodes: 60,
            constraints: None,
            random_starts: 8,
            params: vec![],
            oqi: true,
            oqi_max_iter: 5000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub n_particles: usize,
    pub widths: Grid,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { n_particles: 12, widths: Grid::new(0.1, 1.5, 29) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OqiConfig {
    pub n_particles: usize,
    pub widths: Grid,
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OqiConfig {
    fn default() -> Self {
        let o = OqiOptions::default();
        Self { n_particles: 12, widths: Grid::new(0.6, 1.1, 21), tol: o.tol, max_iter: o.max_iter, restarts: o.restarts, seed: 0 }
    }
}

impl OqiConfig {
    pub fn options(&self) -> OqiOptions {
        OqiOptions { tol: self.tol, max_iter: self.max_iter, restarts: self.restarts, seed: self.seed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorKind {
    /// Exact simulator cost.
    Ideal,
    /// Finite-shot scans on the virtual lab.
    Lab,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeJob {
    pub n_particles: usize,
    pub shape: [usize; 2],
    pub prior_width: f64,
    /// Centre of the search box; defaults to the constrained theory optimum.
    pub theory: Option<CircuitParams>,
    /// Random box displacement as a fraction of the box width.
    pub displacement: f64,
    pub evaluator: EvaluatorKind,
    pub noise: NoiseModel,
    pub scan: ScanSpec,
    /// Fine scan of the final incumbent (lab evaluator only).
    pub fine: Option<ScanSpec>,
    pub constraints: Constraints,
    pub optimizer: OptimizeConfig,
    pub seed: u64,
}

impl Default for OptimizeJob {
    fn default() -> Self {
        Self {
            n_particles: 12,
            shape: [1, 2],
            prior_width: 0.8,
            theory: None,
            displacement: 0.1,
            evaluator: EvaluatorKind::Ideal,
            noise: NoiseModel::default(),
            scan: ScanSpec::coarse(),
            fine: Some(ScanSpec::fine()),
            constraints: Constraints::default(),
            optimizer: OptimizeConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClockJob {
    pub n_particles: usize,
    /// Noise exponent of the prior-width mapping.
    pub alpha: f64,
    /// Noise bandwidth `b_α` in rad/s, used to convert widths to Ramsey times.
    pub bandwidth: f64,
    pub widths: Grid,
    pub constraints: Option<Constraints>,
    pub random_starts: usize,
    pub starts: Vec<CircuitParams>,
    pub seed: u64,
}

impl Default for ClockJob {
    fn default() -> Self {
        Self {
            n_particles: 12,
            alpha: 2.0,
            bandwidth: 2.0 * PI * 6.0,
            widths: Grid::new(0.4, 1.1, 29),
            constraints: Some(Constraints::default()),
            random_starts: 8,
            starts: vec![],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreqJob {
    pub experiment: FreqExperimentConfig,
    pub noise: NoiseModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelftestConfig {
    pub seed: u64,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        Self { seed: 7 }
    }
}

/// Contents of a `--config` file: one optional table per command.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub curve: Option<CurveConfig>,
    pub optimize: Option<OptimizeJob>,
    pub bounds: Option<BoundsConfig>,
    pub oqi: Option<OqiConfig>,
    pub clock: Option<ClockJob>,
    #[serde(rename = "freq-exp")]
    pub freq_exp: Option<FreqJob>,
    pub selftest: Option<SelftestConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = Grid::new(0.5, 1.0, 6).values().unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], 0.5);
        assert!((g[5] - 1.0).abs() < 1e-15);
        assert_eq!(Grid::new(0.5, 0.5, 1).values().unwrap(), vec![0.5]);
        assert!(Grid::new(0.0, 1.0, 3).values().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("[bounds]\nn_particle = 3\n").is_err());
        assert!(toml::from_str::<FileConfig>("[bound]\n").is_err());
        let c: FileConfig = toml::from_str("[bounds]\nn_particles = 3\n").unwrap();
        assert_eq!(c.bounds.unwrap().n_particles, 3);
    }

    #[test]
    fn nested_sections_parse() {
        let c: FileConfig = toml::from_str(
            "[freq-exp.experiment]\nsamples_per_time = 10\n[freq-exp.noise]\nflicker_bandwidth = 37.7\n",
        )
        .unwrap();
        let f = c.freq_exp.unwrap();
        assert_eq!(f.experiment.samples_per_time, 10);
        assert_eq!(f.noise.flicker_bandwidth, 37.7);
    }
}
