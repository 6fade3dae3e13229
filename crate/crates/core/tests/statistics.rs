mod common;

use common::{random_params, rng};
use varsense::lab::{empirical_cost, run_frequency_experiment, sample_outcomes, FreqExperimentConfig, NoiseModel, VirtualLab};
use varsense::metrology::{hl_bmse, ideal_cost, EstimatorKind, QuadratureScheme};
use varsense::oqi::{oqi_bound, OqiOptions};
use varsense::varopt::local::{theory_optimum, LocalOptions};
use varsense::varopt::{optimize, Constraints, OptimizeConfig, ScanEvaluator, ScanSpec, SearchBox};
use varsense::{CircuitParams, PreparedCircuit, Prior};

fn scan(shots: usize) -> ScanSpec {
    ScanSpec { scheme: QuadratureScheme::GaussHermite { nodes: 20 }, shots_per_node: shots, batch: 50, retries: 1 }
}

fn rms_error(params: &CircuitParams, n: usize, prior: Prior, shots: usize, noise: &NoiseModel, seeds: u64) -> (f64, f64) {
    let ideal = ideal_cost(params, n, prior, EstimatorKind::Linear, Some(scan(shots).scheme)).unwrap().bmse;
    let costs: Vec<f64> = (0..seeds).map(|s| empirical_cost(params, n, prior, &scan(shots), noise, s).unwrap().bmse).collect();
    let mean = costs.iter().sum::<f64>() / costs.len() as f64;
    let rms = (costs.iter().map(|c| (c - ideal).powi(2)).sum::<f64>() / costs.len() as f64).sqrt();
    (rms, mean)
}

#[test]
fn empirical_cost_converges_at_shot_noise_rate() {
    let params = random_params(&mut rng(5), 1, 2, 8);
    let prior = Prior::new(0.8).unwrap();
    let noise = NoiseModel::ideal();
    let (coarse, _) = rms_error(&params, 8, prior, 200, &noise, 40);
    let (fine, _) = rms_error(&params, 8, prior, 3200, &noise, 40);
    // 16x the shots: error should shrink by 4, allowed off by a factor 2 either way
    let ratio = coarse / fine;
    assert!((2.0..=8.0).contains(&ratio), "error ratio {ratio} ({coarse} vs {fine})");
}

#[test]
fn sampled_frequencies_are_unbiased() {
    let params = random_params(&mut rng(9), 1, 0, 6);
    let phi = 0.37;
    let p = PreparedCircuit::new(&params, 6).unwrap().probabilities(phi);
    let shots = 200_000;
    let counts = sample_outcomes(&params, 6, phi, shots, &NoiseModel::ideal(), 1).unwrap();
    assert_eq!(counts.iter().sum::<f64>(), shots as f64);
    for (c, p) in counts.iter().zip(&p) {
        let f = c / shots as f64;
        assert!((f - p).abs() < 5.0 * (p * (1.0 - p) / shots as f64).sqrt() + 1e-6, "{f} vs {p}");
    }
}

#[test]
fn refreezes_leave_the_cost_unbiased() {
    let params = random_params(&mut rng(2), 1, 0, 6);
    let prior = Prior::new(0.7).unwrap();
    let clean = rms_error(&params, 6, prior, 500, &NoiseModel::ideal(), 30);
    let noisy = NoiseModel { refreeze_probability: 0.3, max_redraws: 50, ..NoiseModel::ideal() };
    let refrozen = rms_error(&params, 6, prior, 500, &noisy, 30);
    // both means scatter by about rms/√30
    let tol = 4.0 * (clean.0.max(refrozen.0)) / 30f64.sqrt();
    assert!((clean.1 - refrozen.1).abs() < tol, "{clean:?} vs {refrozen:?}");
}

#[test]
fn seeded_runs_repeat_exactly() {
    let n = 6;
    let prior = Prior::new(0.8).unwrap();
    let theory = random_params(&mut rng(3), 1, 0, n);
    let bx = SearchBox::theory_scaled(&theory, 0.1, 4);
    let ev = ScanEvaluator { sensor: VirtualLab::new(n, NoiseModel::ideal()).unwrap(), prior, spec: ScanSpec::coarse() };
    let run = |seed| optimize(&ev, &bx, &Constraints::default(), &OptimizeConfig { max_evaluations: 60, seed, ..Default::default() }).unwrap();
    let (a, b, c) = (run(1), run(1), run(2));
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.best, b.best);
    assert_ne!(a.trace, c.trace);

    let cfg = FreqExperimentConfig { n_particles: 4, samples_per_time: 30, ramsey_times: vec![1e-3, 2e-3], bootstrap: 20, ..Default::default() };
    let x = run_frequency_experiment(&cfg, &NoiseModel::ideal()).unwrap();
    let y = run_frequency_experiment(&cfg, &NoiseModel::ideal()).unwrap();
    assert_eq!(x, y);
    let s = |seed| sample_outcomes(&theory, n, 0.2, 300, &NoiseModel::ideal(), seed).unwrap();
    assert_eq!(s(8), s(8));
}

#[test]
fn bounds_sandwich_optimized_circuits() {
    let local = LocalOptions::default();
    for n in [2usize, 6, 12] {
        for width in [0.4, 0.7, 1.0] {
            let prior = Prior::new(width).unwrap();
            // narrow priors converge slowly
            let oqi = oqi_bound(n, width, &OqiOptions { max_iter: 5000, ..Default::default() }).unwrap();
            let best = theory_optimum(n, (1, 2), prior, &[], 4, 0, &local).unwrap();
            let gh = Some(QuadratureScheme::GaussHermite { nodes: 80 });
            let circuit = ideal_cost(&best.params, n, prior, EstimatorKind::Mbmse, gh).unwrap().bmse;
            let hl = hl_bmse(n, width);
            assert!(hl <= oqi.bmse + 1e-9, "n={n} w={width}: hl {hl} oqi {}", oqi.bmse);
            assert!(oqi.bmse <= circuit + 1e-8, "n={n} w={width}: oqi {} circuit {circuit}", oqi.bmse);
            assert!(oqi.ratio > 0.0 && oqi.ratio <= 1.0);
        }
    }
}
