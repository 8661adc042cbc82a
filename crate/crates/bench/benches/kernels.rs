use codedopt::geometry::estimate_gaussian_width;
use codedopt::linalg::gaussian_vector;
use codedopt::rng::rng_from_seed;
use codedopt::{
    build_encoder, run_encoded_pgd, sample_descent_directions, EncoderKind, EncoderSpec, RegularizerSpec, RunOptions,
    StepRule, StragglerModel,
};
use codedopt_bench::fixture;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn l1_projection(c: &mut Criterion) {
    let mut group = c.benchmark_group("l1_projection");
    for d in [400, 4000] {
        let v = gaussian_vector(d, &mut rng_from_seed(0));
        let spec = RegularizerSpec::l1_ball(5.0);
        group.bench_with_input(BenchmarkId::from_parameter(d), &v, |b, v| b.iter(|| spec.project(black_box(v.view()))));
    }
    group.finish();
}

fn encoded_pgd(c: &mut Criterion) {
    let f = fixture(300, 400, 5, 240, EncoderKind::Gaussian);
    let rule = StepRule::fixed(0.2 / 240.0);
    let model = StragglerModel::row_level(40, 4);
    let opts = RunOptions::new(50);
    c.bench_function("encoded_pgd_50_iters_m240", |b| {
        b.iter(|| run_encoded_pgd(&f.encoded, &f.truth, &f.spec, &rule, &model, black_box(&opts)).unwrap())
    });
}

fn encoders(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_encoder");
    for kind in [EncoderKind::Gaussian, EncoderKind::RandomizedDct] {
        let spec = EncoderSpec::new(kind, 240, 300, 5);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{kind:?}")), &spec, |b, s| {
            b.iter(|| build_encoder(black_box(s)).unwrap())
        });
    }
    group.finish();
}

fn gaussian_width(c: &mut Criterion) {
    let f = fixture(300, 400, 5, 240, EncoderKind::Gaussian);
    let dirs = sample_descent_directions(&f.spec, &f.truth, 2000, 6).unwrap();
    c.bench_function("gaussian_width_2000x100", |b| b.iter(|| estimate_gaussian_width(black_box(&dirs), 100, 7)));
}

criterion_group!(benches, l1_projection, encoded_pgd, encoders, gaussian_width);
criterion_main!(benches);
