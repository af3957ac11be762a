use std::hint::black_box;

use criterion::{Criterion, criterion_group, criterion_main};
use qcc_bench::{click_streams, operating_point, thirty_db};
use qcc_core::analytic::analytic_point;
use qcc_core::phase::estimate_pair_phase;
use qcc_core::security::decoy_lp_bounds;
use qcc_core::sim::{Engine, SimOptions, simulate};
use qcc_core::{ReferenceCounts, pair_clicks};

fn pairing(c: &mut Criterion) {
    let s = click_streams(1e-3, 10_000_000);
    c.bench_function("pair 1e7 slots at p=1e-3", |b| {
        b.iter(|| {
            pair_clicks([&s[0], &s[1], &s[2]], black_box(50_000))
                .unwrap()
                .len()
        })
    });
}

fn simulation(c: &mut Criterion) {
    let cfg = thirty_db();
    let mut g = c.benchmark_group("simulate 30 dB");
    g.sample_size(10);
    g.bench_function("fast engine 1e7 quantum slots", |b| {
        b.iter(|| {
            simulate(&cfg, &SimOptions::new(10_000_000, 1))
                .unwrap()
                .tallies
                .triples
        })
    });
    g.bench_function("slot engine 1e5 quantum slots", |b| {
        let mut o = SimOptions::new(100_000, 1);
        o.engine = Engine::Slot;
        b.iter(|| simulate(&cfg, &o).unwrap().tallies.triples)
    });
    g.finish();
}

fn estimator(c: &mut Criterion) {
    let counts = ReferenceCounts {
        n_r: 6123,
        n_l: 3877,
        n_r_half: 212,
        n_l_half: 788,
        n_r_three: 790,
        n_l_three: 210,
    };
    c.bench_function("phase estimate", |b| {
        b.iter(|| estimate_pair_phase(black_box(&counts)).unwrap())
    });
}

fn security(c: &mut Criterion) {
    let (cfg, acc) = operating_point();
    let mut g = c.benchmark_group("security");
    g.sample_size(10);
    g.bench_function("decoy LP at 66.3 dB", |b| {
        b.iter(|| decoy_lp_bounds(black_box(&acc), None).unwrap())
    });
    g.bench_function("analytic point at 66.3 dB", |b| {
        b.iter(|| analytic_point(&cfg, 5.17e12, None).unwrap().rate_per_pulse)
    });
    g.finish();
}

criterion_group!(benches, pairing, simulation, estimator, security);
criterion_main!(benches);
