use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion as Bench};
use lawnsim_core::criteria::{self, Criterion};
use lawnsim_core::montecarlo::run_batch;
use lawnsim_core::region::{region_for, EvalGrid};
use lawnsim_core::waveform::{gen_echo, ml_delay_estimate, PilotPattern};
use lawnsim_core::{DronePosition, Scenario};

fn probabilities(c: &mut Bench) {
    let s = Scenario::default();
    let p = DronePosition::new(20.0, 150.0, 200.0);
    c.bench_function("ho_probabilities", |b| b.iter(|| criteria::ho_probabilities(&s, black_box(&p)).unwrap()));
}

fn regions(c: &mut Bench) {
    let s = Scenario::default();
    let mut g = c.benchmark_group("region_for");
    for crit in Criterion::ALL {
        g.bench_with_input(BenchmarkId::from_parameter(crit), &crit, |b, &crit| {
            b.iter(|| region_for(&s, crit, black_box(300.0), 200.0).unwrap())
        });
    }
    g.finish();

    let grid = EvalGrid { y_step: 50.0, ..EvalGrid::default() };
    let ys = grid.ys();
    c.bench_function("joint_rows_41", |b| {
        b.iter(|| lawnsim_core::region::region_rows(&s, Criterion::Joint, 200.0, black_box(&ys)).unwrap())
    });
}

fn monte_carlo(c: &mut Bench) {
    let s = Scenario::default();
    let p = DronePosition::new(0.0, 0.0, 200.0);
    c.bench_function("run_batch_100k", |b| b.iter(|| run_batch(&s, &p, 100_000, black_box(7)).unwrap()));
}

fn estimator(c: &mut Bench) {
    let s = Scenario::default();
    let frame = gen_echo(&s, 500.0, 10.0, 3, PilotPattern::Contiguous).unwrap();
    c.bench_function("ml_delay_estimate", |b| b.iter(|| ml_delay_estimate(black_box(&frame)).unwrap()));
    c.bench_function("gen_echo", |b| {
        b.iter(|| gen_echo(&s, 500.0, 10.0, black_box(3), PilotPattern::Contiguous).unwrap())
    });
}

criterion_group!(benches, probabilities, regions, monte_carlo, estimator);
criterion_main!(benches);
