use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;
use wpinn_bench::Fixture;
use wpinn_core::loss::LossStrategy;
use wpinn_core::optim::{lbfgs_minimize, Control, LbfgsConfig};
use wpinn_core::Objective;

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_batch");
    for n in [256, 1024] {
        let f = Fixture::laplace(n);
        group.throughput(Throughput::Elements(n as u64));
        for order in [0, 2] {
            group.bench_with_input(BenchmarkId::new(format!("order{order}"), n), &n, |b, _| {
                b.iter(|| {
                    f.network
                        .forward_batch(f.params.values(), black_box(&f.points.interior), order)
                        .unwrap()
                })
            });
        }
    }
    group.finish();
}

fn loss_gradient(c: &mut Criterion) {
    let f = Fixture::laplace(512);
    let lambda = 1.0e-2;
    let strategies = [
        ("original", LossStrategy::original(2.0).unwrap()),
        ("optimal_weight", LossStrategy::optimal_weight(lambda, 2.0).unwrap()),
        (
            "magnitude_normalized",
            LossStrategy::magnitude_normalized(2.0, Some(0.5)).unwrap(),
        ),
    ];
    let mut group = c.benchmark_group("loss_gradient_512");
    for (name, strategy) in strategies {
        let objective = f.objective(strategy);
        group.bench_function(name, |b| {
            b.iter(|| objective.evaluate(black_box(f.params.values())).unwrap())
        });
    }
    group.finish();
}

fn lbfgs(c: &mut Criterion) {
    let f = Fixture::laplace(256);
    let config = LbfgsConfig {
        max_iterations: 10,
        ..LbfgsConfig::default()
    };
    c.bench_function("lbfgs_10_iterations_256", |b| {
        b.iter(|| {
            let mut objective = f.objective(LossStrategy::original(2.0).unwrap());
            lbfgs_minimize(&mut objective, f.params.values().to_vec(), &config, |_, _| {
                Ok(Control::Continue)
            })
            .unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = forward, loss_gradient, lbfgs
}
criterion_main!(benches);
