use criterion::{black_box, criterion_group, criterion_main, Criterion};
use heatprobe_bench::{grid, potential};
use heatprobe_core::{build_cgo, fourier_slice, CgoParams, Potential, Scheme, Sign, SimulatedDtn, Torus};

fn cgo(c: &mut Criterion) {
    let g = grid(1, 129, 1025);
    let q = potential(&g);
    let params = CgoParams::new(Sign::Plus, vec![1.0], vec![0.0], std::f64::consts::PI, 16.0);
    c.bench_function("cgo/1d/129x1025", |b| {
        b.iter(|| build_cgo(&Scheme::crank_nicolson(), black_box(&params), &q, None).unwrap())
    });
}

fn slice(c: &mut Criterion) {
    let g = grid(1, 65, 513);
    let q = potential(&g);
    let sch = Scheme::crank_nicolson();
    let data = SimulatedDtn::new(sch, q.clone());
    let zero = Potential::zero(&g);
    c.bench_function("slice/1d/65x513", |b| {
        b.iter(|| fourier_slice(&sch, &data, &zero, &zero, (&[0.0], 0.0), &[1.0], black_box(8.0)).unwrap())
    });
}

fn spectrum(c: &mut Criterion) {
    let g = grid(2, 33, 257);
    let torus = Torus::new(&g);
    let p = potential(&g).to_field();
    c.bench_function("torus_spectrum/2d/33x257", |b| b.iter(|| torus.spectrum(black_box(&p)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = cgo, slice, spectrum
}
criterion_main!(benches);
