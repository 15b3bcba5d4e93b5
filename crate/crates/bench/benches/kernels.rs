use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use cone_bench::{gamma_measure, setup, SEED};
use cone_core::densities::{ThetaDensity, Truncation};
use cone_core::dynamics::{BesselState, ParticleSystem};
use cone_core::functionals::dirichlet_integrand;
use cone_core::rng::stream;
use cone_core::verify::fixtures::{partner_function, slp, theta_bump};
use cone_core::{sample_eta, IntensityModel};

fn sampling(c: &mut Criterion) {
    let (space, gamma, _) = setup();
    let slp = slp();
    // warm the inverse-CDF tables so only sampling is timed
    gamma.mass_sampler(1e-6).unwrap();
    slp.mass_sampler(1e-6).unwrap();
    let mut rng = stream(&[SEED]);
    c.bench_function("sample_eta gamma eps=1e-6", |b| {
        b.iter(|| sample_eta(&gamma, &space, black_box(1e-6), &mut rng).unwrap())
    });
    c.bench_function("sample_eta log-power eps=1e-6", |b| {
        b.iter(|| sample_eta(&slp, &space, black_box(1e-6), &mut rng).unwrap())
    });
    c.bench_function("mass sampler table build", |b| {
        b.iter_batched(
            IntensityModel::gamma,
            |m| m.mass_sampler(black_box(1e-6)).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn calculus(c: &mut Criterion) {
    let (space, model, f) = setup();
    let g = partner_function();
    let eta = gamma_measure(1e-6);
    c.bench_function("cylinder eval", |b| b.iter(|| f.eval(&space, black_box(&eta))));
    c.bench_function("generator", |b| b.iter(|| f.generator(&space, &model, black_box(&eta))));
    c.bench_function("dirichlet integrand", |b| {
        b.iter(|| dirichlet_integrand(&f, &g, &space, black_box(&eta)))
    });
    let density = ThetaDensity::new(&model, &space, &theta_bump(0.3), 1e-6, Truncation::Full).unwrap();
    c.bench_function("theta density", |b| b.iter(|| density.evaluate(black_box(&eta))));
}

fn dynamics(c: &mut Criterion) {
    let (space, model, _) = setup();
    let eta = gamma_measure(1e-4);
    c.bench_function("particle system step dt=1e-3", |b| {
        b.iter_batched(
            || ParticleSystem::new(&eta, &model, &space, &[SEED]).unwrap(),
            |mut sys| sys.step(1e-3).unwrap(),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("bessel path to absorption or t=1", |b| {
        let mut rng = stream(&[SEED, 1]);
        b.iter(|| {
            let mut q = BesselState::new(1.0);
            for _ in 0..8_600 {
                q.step(1e-4, &mut rng);
                if q.absorbed {
                    break;
                }
            }
            q
        })
    });
}

criterion_group!(benches, sampling, calculus, dynamics);
criterion_main!(benches);
