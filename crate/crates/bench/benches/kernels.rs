use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use equibundle::{
    audit_point, eigen_dense, newton_on_level_set, numeric_rank, rotation_family, track_matrix_loop, DVector,
    Tolerances, TrackOptions,
};
use equibundle_bench::{rfmr, rfmr_equilibrium, test_matrix};

fn linear_algebra(c: &mut Criterion) {
    let a = test_matrix(40);
    c.bench_function("numeric_rank 40x40", |b| b.iter(|| numeric_rank(black_box(&a), None)));
    c.bench_function("eigen_dense 40x40", |b| b.iter(|| eigen_dense(black_box(&a))));
}

fn equilibria(c: &mut Criterion) {
    let tols = Tolerances::default();
    let sys = rfmr(10);
    let u = rfmr_equilibrium(10);
    c.bench_function("audit rfmr(10)", |b| {
        b.iter(|| audit_point(&sys, black_box(&u), &tols).unwrap())
    });
    let start = DVector::from_element(10, 0.45);
    let level = DVector::from_element(1, 5.0);
    c.bench_function("newton rfmr(10)", |b| {
        b.iter(|| newton_on_level_set(&sys, &u.lambda, &level, black_box(&start), &tols).unwrap())
    });
}

fn monodromy(c: &mut Criterion) {
    let tols = Tolerances::default();
    let family = rotation_family(256);
    let opts = TrackOptions::default();
    c.bench_function("track rotation family", |b| {
        b.iter(|| track_matrix_loop(black_box(&family), 0, &opts, &tols).unwrap())
    });
}

criterion_group!(benches, linear_algebra, equilibria, monodromy);
criterion_main!(benches);
