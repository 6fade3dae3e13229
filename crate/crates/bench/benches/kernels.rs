use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use varsense::metrology::{ideal_cost, EstimatorKind, IdealCost, QuadratureScheme};
use varsense::oqi::{oqi_bound, OqiOptions};
use varsense::varopt::{optimize, Constraints, IdealEvaluator, OptimizeConfig, SearchBox};
use varsense::{CircuitParams, PreparedCircuit, Prior};

fn sample_params() -> CircuitParams {
    CircuitParams::from_lab_table(&[[0.0626, 0.0, -1.2725]], &[[0.6938, 0.0196, 0.0631], [-0.6518, 0.0196, 0.0]])
}

fn circuits(c: &mut Criterion) {
    let p = sample_params();
    for n in [12, 26, 100] {
        let circ = PreparedCircuit::new(&p, n).unwrap();
        c.bench_function(&format!("probabilities n={n}"), |b| b.iter(|| circ.probabilities(black_box(0.3))));
        c.bench_function(&format!("prepare n={n}"), |b| b.iter(|| PreparedCircuit::new(black_box(&p), n).unwrap()));
    }
}

fn costs(c: &mut Criterion) {
    let p = sample_params();
    let prior = Prior::new(0.74).unwrap();
    let cost = IdealCost::linear_exact(26, prior);
    c.bench_function("linear cost n=26", |b| b.iter(|| cost.bmse(black_box(&p)).unwrap()));
    let gh = Some(QuadratureScheme::GaussHermite { nodes: 60 });
    c.bench_function("mbmse cost n=26", |b| {
        b.iter(|| ideal_cost(black_box(&p), 26, prior, EstimatorKind::Mbmse, gh).unwrap())
    });
}

fn oqi(c: &mut Criterion) {
    let opts = OqiOptions::default();
    let mut g = c.benchmark_group("oqi");
    g.sample_size(10);
    for n in [12, 26] {
        g.bench_function(format!("bound n={n}"), |b| b.iter(|| oqi_bound(n, black_box(0.8), &opts).unwrap()));
    }
    g.finish();
}

fn direct(c: &mut Criterion) {
    let prior = Prior::new(0.74).unwrap();
    let eval = IdealEvaluator::linear(12, prior);
    let bx = SearchBox::theory_scaled(&sample_params(), 0.1, 0);
    let cfg = OptimizeConfig { max_evaluations: 500, ..Default::default() };
    let mut g = c.benchmark_group("direct");
    g.sample_size(10);
    g.bench_function("500 evaluations n=12", |b| b.iter(|| optimize(&eval, &bx, &Constraints::default(), &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, circuits, costs, oqi, direct);
criterion_main!(benches);
