use criterion::{black_box, criterion_group, criterion_main, Criterion};
use fastslow_bench::{lattice_state, micro_pair};
use fastslow_core::greenkubo::estimate_pair_correlation;
use fastslow_core::micro::dynamics::micro_simulate_from;
use fastslow_core::micro::{BolzaSurface, BumpPotential, MicroState};
use fastslow_core::rng::stream;
use fastslow_core::sde::{em_step, sample_edge_noise};

fn sde_step(c: &mut Criterion) {
    let (graph, model, state) = lattice_state(8).unwrap();
    let mut rng = stream(1, "bench-noise", 0);
    let noise = sample_edge_noise(&graph, 1e-3, &mut rng);
    c.bench_function("sde_em_step_8x8", |b| {
        b.iter(|| em_step(black_box(&state), &graph, &model, 1e-3, black_box(&noise)).unwrap())
    });
}

fn geodesic_flow(c: &mut Criterion) {
    let s = BolzaSurface::get();
    let g = s.sample_uniform(&mut stream(1, "bench-frame", 0));
    c.bench_function("bolza_flow_t1", |b| b.iter(|| s.flow(black_box(&g), 1.0).unwrap()));
}

fn micro_run(c: &mut Criterion) {
    let cfg = micro_pair(100).unwrap();
    let start = MicroState::sample(&cfg.initial, 1, 0);
    c.bench_function("micro_pair_100_rk4_steps", |b| {
        b.iter(|| micro_simulate_from(&cfg, black_box(start.clone())).unwrap())
    });
}

fn pair_correlation(c: &mut Criterion) {
    let p = BumpPotential::default();
    let mut g = c.benchmark_group("greenkubo");
    g.sample_size(10);
    g.bench_function("pair_correlation_256", |b| {
        b.iter(|| estimate_pair_correlation(&p, 1.0, 1.0, 0.05, 200, 256, 1).unwrap())
    });
    g.finish();
}

criterion_group!(benches, sde_step, geodesic_flow, micro_run, pair_correlation);
criterion_main!(benches);
