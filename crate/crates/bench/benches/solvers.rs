use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use heatprobe_bench::{bump, grid, potential};
use heatprobe_core::{dtn_apply, NewtonOptions, Nonlinearity, Scheme};

fn forward(c: &mut Criterion) {
    let sch = Scheme::crank_nicolson();
    let mut group = c.benchmark_group("forward");
    for (n, nx, nt) in [(1, 65, 257), (1, 129, 1025), (2, 17, 65), (2, 33, 129)] {
        let g = grid(n, nx, nt);
        let (q, b) = (potential(&g), bump(&g));
        group.bench_with_input(BenchmarkId::new(format!("{n}d"), format!("{nx}x{nt}")), &g, |bench, _| {
            bench.iter(|| dtn_apply(&sch, black_box(&q), black_box(&b), None).unwrap())
        });
    }
    group.finish();
}

fn semilinear(c: &mut Criterion) {
    let g = grid(1, 65, 257);
    let b = bump(&g);
    let a = Nonlinearity::polynomial(&[0.0, 1.0, 0.0, 0.5]);
    let opts = NewtonOptions::default();
    c.bench_function("semilinear/1d/65x257", |bench| {
        bench.iter(|| Scheme::crank_nicolson().solve_semilinear(&g, black_box(&a), black_box(&b), None, &opts).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = forward, semilinear
}
criterion_main!(benches);
