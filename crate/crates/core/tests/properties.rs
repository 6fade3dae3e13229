mod common;

use std::f64::consts::PI;

use common::{normal_two_sided_tail, random_params, random_state, rng, TensorSpins};
use proptest::prelude::*;
use varsense::circuit::outcome_table;
use varsense::metrology::{
    bmse, hl_bmse, ideal_cost, mbmse_table, psl_bmse, sql_bmse, EstimatorKind, PhaseQuadrature, QuadratureScheme,
};
use varsense::spin::{apply_rotation, apply_twist};
use varsense::varopt::{project_constraints, Constraints};
use varsense::{Axis, CircuitForm, Estimator, PreparedCircuit, Prior};

fn axis() -> impl Strategy<Value = Axis> {
    prop_oneof![Just(Axis::X), Just(Axis::Y), Just(Axis::Z)]
}

fn shape() -> impl Strategy<Value = (usize, usize)> {
    prop_oneof![Just((0, 0)), Just((1, 0)), Just((0, 2)), Just((1, 2))]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gates_preserve_norm(n in 1usize..40, seed: u64, ax in axis(), angle in -20.0f64..20.0) {
        let s = random_state(&mut rng(seed), n);
        let r = apply_rotation(&s, ax, angle).unwrap();
        let t = apply_twist(&s, ax, angle).unwrap();
        prop_assert!((r.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!((t.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotations_compose(n in 1usize..30, seed: u64, ax in axis(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let s = random_state(&mut rng(seed), n);
        let two = apply_rotation(&apply_rotation(&s, ax, a).unwrap(), ax, b).unwrap();
        let one = apply_rotation(&s, ax, a + b).unwrap();
        for (x, y) in two.amplitudes().iter().zip(one.amplitudes()) {
            prop_assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn gates_match_tensor_product(n in 1usize..=4, seed: u64, ax in axis(), angle in -4.0f64..4.0) {
        let t = TensorSpins::new(n);
        let s = random_state(&mut rng(seed), n);
        let psi = t.embed(&s);
        for (ours, theirs) in [
            (apply_rotation(&s, ax, angle).unwrap(), &t.rotation(ax, angle) * &psi),
            (apply_twist(&s, ax, angle).unwrap(), &t.twist(ax, angle) * &psi),
        ] {
            for (x, y) in ours.amplitudes().iter().zip(t.project(&theirs)) {
                prop_assert!((x - y).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn circuits_match_tensor_product(n in 1usize..=4, seed: u64, sh in shape(), phi in -PI..PI) {
        let params = random_params(&mut rng(seed), sh.0, sh.1, n);
        let ours = PreparedCircuit::new(&params, n).unwrap().probabilities(phi);
        let theirs = TensorSpins::new(n).probabilities(&params, phi);
        for (x, y) in ours.iter().zip(&theirs) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn forms_periodicity_and_rows(n in 1usize..=26, seed: u64, sh in shape(), phi in -PI..PI) {
        let params = random_params(&mut rng(seed), sh.0, sh.1, n);
        let canon = PreparedCircuit::new(&params, n).unwrap();
        let exp = PreparedCircuit::new(&params.clone().with_form(CircuitForm::Experimental), n).unwrap();
        let p = canon.probabilities(phi);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(p.iter().all(|&v| (-1e-15..=1.0 + 1e-12).contains(&v)));
        for (a, b) in p.iter().zip(exp.probabilities(phi)) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in p.iter().zip(canon.probabilities(phi + 2.0 * PI)) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn mirror_symmetric_outcomes(n in 1usize..=20, seed: u64, sh in shape(), phi in 0.0..PI) {
        // p(m|-φ) = p(-m|φ), so MSE(φ) = MSE(-φ) for any odd estimator
        let params = random_params(&mut rng(seed), sh.0, sh.1, n);
        let c = PreparedCircuit::new(&params, n).unwrap();
        let (a, b) = (c.probabilities(phi), c.probabilities(-phi));
        for (x, y) in a.iter().zip(b.iter().rev()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hermite_agrees_with_simpson(n in 2usize..=12, seed: u64, sh in shape(), width in 0.3f64..1.1) {
        let params = random_params(&mut rng(seed), sh.0, sh.1, n);
        let prior = Prior::new(width).unwrap();
        let gh = ideal_cost(&params, n, prior, EstimatorKind::Linear, Some(QuadratureScheme::GaussHermite { nodes: 60 })).unwrap();
        let simpson = Some(QuadratureScheme::Simpson { points: 2001, half_width: 6.0 });
        let si = ideal_cost(&params, n, prior, EstimatorKind::Linear, simpson).unwrap();
        prop_assert!(((gh.bmse - si.bmse) / si.bmse).abs() < 1e-6, "{} vs {}", gh.bmse, si.bmse);
    }

    #[test]
    fn estimator_ordering(n in 1usize..=16, seed: u64, sh in shape(), width in 0.2f64..1.2) {
        let params = random_params(&mut rng(seed), sh.0, sh.1, n);
        let prior = Prior::new(width).unwrap();
        let q = PhaseQuadrature::new(prior, QuadratureScheme::GaussHermite { nodes: 60 }).unwrap();
        let t = outcome_table(&params, n, &q.phases).unwrap();
        let cost = |e: &Estimator| bmse(&t, e, &q).unwrap().bmse;
        let mb = cost(&mbmse_table(&t, &q).unwrap());
        let lin = ideal_cost(&params, n, prior, EstimatorKind::Linear, Some(q.scheme)).unwrap().bmse;
        let arc = ideal_cost(&params, n, prior, EstimatorKind::Arcsine, Some(q.scheme)).unwrap().bmse;
        // the zero estimator costs the prior variance; the fitted linear one never does worse
        let trivial = cost(&Estimator::linear(0.0));
        prop_assert!((trivial - width * width).abs() < 1e-10);
        prop_assert!(mb <= lin + 1e-8);
        prop_assert!(mb <= arc + 1e-8);
        prop_assert!(lin <= trivial + 1e-12);
    }

    #[test]
    fn bounds_match_arithmetic(n in 1usize..400, width in 0.05f64..3.0) {
        let (nf, w2) = (n as f64, width * width);
        prop_assert!((sql_bmse(n, width) - w2 / (1.0 + nf * w2)).abs() < 1e-12);
        prop_assert!((hl_bmse(n, width) - w2 / (1.0 + nf * nf * w2)).abs() < 1e-12);
        prop_assert!(hl_bmse(n, width) <= sql_bmse(n, width));
    }

    #[test]
    fn projection_is_admissible(seed: u64, n in 2usize..30) {
        let p = random_params(&mut rng(seed), 1, 2, n);
        for drop_small in [true, false] {
            let c = Constraints { drop_small, ..Default::default() };
            prop_assert!(c.admissible(&project_constraints(&p, &c)));
        }
    }
}

#[test]
fn slip_bound_matches_integrated_tail() {
    for w in [0.3, 0.5, 0.8, 1.0, 1.5, 2.5] {
        let reference = 4.0 * PI * PI * normal_two_sided_tail(PI, w);
        assert!((psl_bmse(w) - reference).abs() < 1e-12, "{w}: {} vs {reference}", psl_bmse(w));
    }
}
