use chatterfree::integrator::{project_to_manifold, ProjectionOptions};
use chatterfree::sliding::{alpha_from_normals, kappa_from_normals};
use chatterfree::{FlowMap, HybridModel, SwitchingFunction, WeightOptions};
use chatterfree_bench::attractive_block;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn weights(c: &mut Criterion) {
    let opts = WeightOptions::default();
    let mut g = c.benchmark_group("weights");
    for m in 1..=3 {
        let block = attractive_block(m);
        g.bench_with_input(BenchmarkId::new("alpha", m), &block, |b, blk| {
            b.iter(|| alpha_from_normals(black_box(blk), &opts).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("kappa", m), &block, |b, blk| {
            b.iter(|| kappa_from_normals(black_box(blk), &opts).unwrap())
        });
    }
    g.finish();
}

fn projection(c: &mut Criterion) {
    let zero = |_: &[f64], d: &mut [f64]| d.fill(0.0);
    let circle = HybridModel::builder(["x", "y"])
        .switching(
            SwitchingFunction::new("circle", |x: &[f64]| x[0] * x[0] + x[1] * x[1] - 1.0).with_gradient(
                |x: &[f64], g: &mut [f64]| {
                    g[0] = 2.0 * x[0];
                    g[1] = 2.0 * x[1];
                },
            ),
        )
        .flow(FlowMap::new("in", zero))
        .flow(FlowMap::new("out", zero))
        .build()
        .unwrap();
    let opts = ProjectionOptions::default();
    c.bench_function("project_circle", |b| {
        b.iter(|| project_to_manifold(&circle, black_box(&[2.0, 0.5]), &[0], &opts).unwrap())
    });
}

criterion_group!(benches, weights, projection);
criterion_main!(benches);
