use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use greenhouse_bench::prepared;
use greenhouse_core::actuators::NU;
use greenhouse_core::climate::NX;
use greenhouse_core::empc::{finite_difference_gradient, solve, Problem};
use greenhouse_core::integrate::AdaptiveOptions;
use greenhouse_core::simulator::{integrate_step, step_jacobian, Mode};

fn model(c: &mut Criterion) {
    let prep = prepared("smoke_6h.toml");
    let x = prep.x0.to_array();
    let u = [20.0, 30.0, 10.0, 40.0];
    let inputs = &prep.track.steps[60];
    let p = inputs.substeps[0];
    let dt = prep.track.dt;

    c.bench_function("rhs", |b| {
        let mut dx = [0.0; NX];
        b.iter(|| prep.model.rhs(black_box(&x), black_box(&u), &p, &mut dx).unwrap())
    });
    c.bench_function("integrate_step/control", |b| {
        b.iter(|| {
            integrate_step(
                &prep.model,
                black_box(&x),
                &u,
                inputs,
                dt,
                Mode::ControlModel,
                &AdaptiveOptions::default(),
            )
        })
    });
    c.bench_function("integrate_step/plant", |b| {
        b.iter(|| {
            integrate_step(
                &prep.model,
                black_box(&x),
                &u,
                inputs,
                dt,
                Mode::Plant,
                &AdaptiveOptions::default(),
            )
        })
    });
    c.bench_function("step_jacobian", |b| {
        b.iter(|| step_jacobian(&prep.model, black_box(&x), &u, inputs, dt))
    });
}

fn controller(c: &mut Criterion) {
    let prep = prepared("smoke_6h.toml");
    let cfg = prep.config.nempc_config();
    let window = prep.track.window(60, cfg.horizon).unwrap();
    let problem = Problem::new(&prep.model, &cfg, window, prep.x0.to_array()).unwrap();
    let z = vec![0.3; cfg.n_vars()];
    let mut g = vec![0.0; cfg.n_vars()];

    let mut group = c.benchmark_group("gradient");
    group.sample_size(20);
    group.bench_function("adjoint", |b| {
        b.iter(|| problem.objective_and_gradient(black_box(&z), &mut g))
    });
    group.bench_function("finite_difference", |b| {
        b.iter(|| finite_difference_gradient(&problem, black_box(&z), &mut g))
    });
    group.finish();

    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function(format!("horizon_{}x{NU}", cfg.control_steps), |b| {
        b.iter_batched(
            || vec![0.0; cfg.n_vars()],
            |z0| solve(&problem, &z0),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, model, controller);
criterion_main!(benches);
