use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use wpm_core::graphs::{graph_sum, BModelWeights};
use wpm_core::intersect::tau;
use wpm_core::rmatrix::bmodel_r_laplace;
use wpm_core::spectral::EoSolver;
use wpm_core::thimble::{thimble_integral, Integrand};
use wpm_core::{Model, ModelParams, C64};

fn model21() -> Model {
    Model::new(ModelParams {
        m: 2,
        n: 1,
        w_pos: vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.05)],
        w_neg: vec![C64::new(0.1, -0.3)],
        q_pos: vec![C64::new(0.4, 0.2)],
        q_neg: vec![C64::new(1.1, 0.3)],
    })
    .expect("model")
}

fn recursion(c: &mut Criterion) {
    let model = model21();
    c.bench_function("eo_recursion g=2 n=1", |b| {
        b.iter(|| {
            let mut eo = EoSolver::new(&model, 2, 1).unwrap();
            black_box(eo.eo_recursion(2, 1).unwrap())
        })
    });
    let mut eo = EoSolver::new(&model, 2, 1).unwrap();
    eo.eo_recursion(1, 2).unwrap();
    c.bench_function("bmodel graph sum g=1 n=2", |b| {
        b.iter(|| black_box(graph_sum(1, 2, model.size(), &BModelWeights::new(&eo.data)).unwrap()))
    });
}

fn rmatrix(c: &mut Criterion) {
    let model = model21();
    c.bench_function("laplace R order 6", |b| b.iter(|| black_box(bmodel_r_laplace(&model, 6).unwrap())));
}

fn thimble(c: &mut Criterion) {
    let model = model21();
    c.bench_function("thimble theta integral z=-0.1", |b| {
        b.iter(|| black_box(thimble_integral(&model, 0, -0.1, Integrand::Theta(1)).unwrap()))
    });
}

fn intersections(c: &mut Criterion) {
    // the cache makes repeats cheap; this measures lookups after the first fill
    c.bench_function("tau g=3 <tau_7>", |b| b.iter(|| black_box(tau(3, &[7]).unwrap())));
}

criterion_group!(benches, recursion, rmatrix, thimble, intersections);
criterion_main!(benches);
