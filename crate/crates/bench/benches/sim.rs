use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use qnoc::{
    cdg_acyclic, quantize, run, Direction, MeshConfig, PatternKind, PolicyConfig, PolicyKind,
    QFormat, QTable, SimConfig, TrafficSchedule, VcClass,
};
use qnoc_bench::Loaded;

fn step_under_load(c: &mut Criterion) {
    let mut g = c.benchmark_group("step_1000_cycles");
    g.sample_size(20);
    for kind in PolicyKind::ALL {
        g.bench_with_input(BenchmarkId::from_parameter(kind), &kind, |b, &kind| {
            b.iter_batched(
                || Loaded::new(kind, PatternKind::Transpose, 0.08, 2_000),
                |mut l| l.advance(1_000),
                BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

fn short_run(c: &mut Criterion) {
    let cfg = SimConfig {
        policy: PolicyConfig::new(PolicyKind::Qrasp),
        traffic: TrafficSchedule::fixed(PatternKind::Uniform, 0.05, 4),
        warmup_cycles: 500,
        measure_cycles: 2_000,
        ..SimConfig::default()
    };
    let mut g = c.benchmark_group("engine");
    g.sample_size(10);
    g.bench_function("run_qrasp_2500_cycles", |b| b.iter(|| run(&cfg).unwrap()));
    g.finish();
}

fn qtable_update(c: &mut Criterion) {
    let mesh = MeshConfig::default();
    let mut t = QTable::new(27, &mesh, QFormat::Q6_4);
    let est = quantize(3.0);
    c.bench_function("qtable_update", |b| {
        b.iter(|| t.update(63, Direction::East, 0.7, 5.4, 0.9, est).unwrap())
    });
}

fn turn_model(c: &mut Criterion) {
    let mesh = MeshConfig::default();
    c.bench_function("cdg_acyclic_8x8", |b| {
        b.iter(|| cdg_acyclic(&VcClass::A, &mesh))
    });
}

criterion_group!(
    benches,
    step_under_load,
    short_run,
    qtable_update,
    turn_model
);
criterion_main!(benches);
