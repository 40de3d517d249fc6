use criterion::{criterion_group, criterion_main, Criterion};
use nlr_bench::small_power_scenario;
use nlr_core::sim::{run_power_study_with_threads, Scenario};
use nlr_core::Side;

fn power_curves(c: &mut Criterion) {
    let mut group = c.benchmark_group("power study R=200");
    group.sample_size(10);
    let plus = small_power_scenario(200);
    let minus = Scenario {
        side: Side::Minus,
        h_grid: plus.h_grid.iter().map(|h| -h).collect(),
        ..plus.clone()
    };
    for threads in [1, 4] {
        group.bench_function(format!("plus, {threads} threads"), |b| {
            b.iter(|| run_power_study_with_threads(&plus, Some(threads)).unwrap())
        });
    }
    group.bench_function("minus sentinel, 4 threads", |b| {
        b.iter(|| run_power_study_with_threads(&minus, Some(4)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, power_curves);
criterion_main!(benches);
