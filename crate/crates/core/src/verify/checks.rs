use rand::Rng;

use super::fixtures::{
    bump, flow_field, ibp_cases, intertwining_observable, intertwining_start, level_function, linear_function,
    quadratic_function, random_configuration, random_cylinder, slp, stationarity_panel, theta_bump, unit_square,
};
use super::{column, replicate, CheckName, CheckParams, CheckResult, Comparison, Injection, RunContext, Sensitivity};
use crate::cone::{sample_eta, Theta};
use crate::densities::{gamma_log_density, ibp_b_h_with, ibp_b_v, PartialDensity, ThetaDensity, Truncation};
use crate::dynamics::{
    bessel_absorption, coupled_mass_levels, evolve, heat_semigroup_exact, mass_semigroup_reference, DriftControl, StepDiagnostics,
};
use crate::error::Result;
use crate::functionals::{dirichlet_integrand, finite_difference, MarkFunction, MassProfile};
use crate::intensity::IntensityModel;
use crate::quadrature::{integrate, integrate_real_line, QuadOptions};
use crate::space::VectorField;
use crate::stats::Estimate;

const CORRUPTION: f64 = 1.05;
const BOUNDARY_ERROR: f64 = 0.95;

fn density_factor(p: &CheckParams) -> f64 {
    if p.inject == Some(Injection::CorruptDensity) {
        CORRUPTION
    } else {
        1.0
    }
}

fn drift_control(p: &CheckParams) -> DriftControl {
    if p.inject == Some(Injection::FlipDrift) {
        DriftControl::flipped()
    } else {
        DriftControl::default()
    }
}

fn tight() -> QuadOptions {
    QuadOptions::with_tol(1e-12, 1e-11)
}

/// `∫ χ(s) w(s) l(s) ds` over the support of `χ`.
fn profile_mass_integral(model: &IntensityModel, chi: &MassProfile, w: impl Fn(f64) -> f64) -> f64 {
    let (a, b) = (chi.support_min().ln(), chi.support_max().ln());
    integrate(
        |y: f64| {
            let s = y.exp();
            chi.value(s) * w(s) * s * model.l(s)
        },
        a,
        b,
        &tight(),
    )
    .value
}

/// Estimates of `E[X]` and of `Var X` with delta-method errors.
fn mean_and_variance(xs: &[f64]) -> (Estimate, Estimate, Vec<f64>) {
    let m = Estimate::from_samples(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m.mean) * (x - m.mean)).collect();
    let v = Estimate::from_samples(&sq);
    (m, v, sq)
}

pub fn check_laplace_functional(p: &CheckParams, ctx: &RunContext) -> Result<CheckResult> {
    let name = CheckName::LaplaceFunctional;
    let space = unit_square();
    let eps = p.epsilon;
    let mut parts = Vec::new();

    let gamma = IntensityModel::gamma();
    let level = 0.5;
    let vals = replicate(ctx, name, 0, p.replicas, |rng| {
        Ok((level * sample_eta(&gamma, &space, eps, rng)?.total_mass()).exp())
    })?;
    let est = Estimate::from_samples(&vals);
    let closed = (1.0 - level).powf(-space.volume());
    // atoms below ε scale the mean by exp(vol ∫_0^ε (e^{φs} - 1) e^{-s} s⁻¹ ds)
    let missing = integrate(
        |s: f64| {
            if s == 0.0 {
                level
            } else {
                (level * s).exp_m1() / s * (-s).exp()
            }
        },
        0.0,
        eps,
        &tight(),
    )
    .value
        * space.volume();
    parts.push(Comparison::exact(
        "gamma exponential moment",
        est,
        closed,
        closed * missing.exp_m1(),
    ));
    parts.push(Comparison::tolerance(
        "gamma relative stderr",
        Estimate::exact(est.stderr / est.mean),
        0.0,
        0.01,
    ));

    let model = slp();
    let phi = bump([0.5, 0.5], 0.35, 2.0);
    let inner = QuadOptions::with_tol(1e-12, 1e-11);
    let outer = QuadOptions::with_tol(1e-10, 1e-10);
    let re = phi.integrate_composed(
        &space,
        |v| {
            if v == 0.0 {
                return 0.0;
            }
            integrate_real_line(
                |u: f64| {
                    let l = model.l_log(u);
                    if l == 0.0 {
                        return 0.0;
                    }
                    let h = (0.5 * u.exp() * v).sin();
                    -2.0 * h * h * l
                },
                0.0,
                &inner,
            )
            .value
        },
        &outer,
    );
    let im = phi.integrate_composed(
        &space,
        |v| {
            if v == 0.0 {
                return 0.0;
            }
            integrate_real_line(
                |u: f64| {
                    let l = model.l_log(u);
                    if l == 0.0 {
                        0.0
                    } else {
                        (u.exp() * v).sin() * l
                    }
                },
                0.0,
                &inner,
            )
            .value
        },
        &outer,
    );
    let target = (re.exp() * im.cos(), re.exp() * im.sin());
    let rows = replicate(ctx, name, 1, p.replicas, |rng| {
        let eta = sample_eta(&model, &space, eps, rng)?;
        let a = eta.pairing(|x| phi.value(&space, x));
        Ok([a.cos(), a.sin()])
    })?;
    // |e^z - e^w| ≤ |z - w| for Re z, Re w ≤ 0; the missing atoms move the exponent by ≤ ∫|φ| ∫_0^ε l
    let budget = phi.integral(&space).abs() * model.mass_integral(0.0, eps)? + 1e-8;
    parts.push(Comparison::exact(
        "fourier real part",
        Estimate::from_samples(&column(&rows, 0)),
        target.0,
        budget,
    ));
    parts.push(Comparison::exact(
        "fourier imaginary part",
        Estimate::from_samples(&column(&rows, 1)),
        target.1,
        budget,
    ));
    let mut out = CheckResult::new(name, ctx, p, parts);
    out.notes.push(format!("quadrature exponent {re:.12} + {im:.12}i"));
    Ok(out)
}

pub fn check_mecke(p: &CheckParams, ctx: &RunContext) -> Result<CheckResult> {
    let name = CheckName::Mecke;
    let space = unit_square();
    let eps = p.epsilon;
    let mut parts = Vec::new();
    let chi2 = MassProfile::Plateau {
        lo: 0.3,
        hi: 6.0,
        ramp: 0.5,
    };
    let u2 = bump([0.3, 0.7], 0.3, 1.0);
    let chi3 = MassProfile::Bump { lo: 0.2, hi: 5.0 };
    let base = bump([0.5, 0.5], 0.35, 1.0);
    let strength = 0.8;
    let psi = MarkFunction::new(
        MassProfile::Plateau {
            lo: 0.05,
            hi: 20.0,
            ramp: 0.5,
        },
        bump([0.5, 0.5], 0.35, strength),
    );
    for (k, model) in [IntensityModel::gamma(), slp()].into_iter().enumerate() {
        let tail = space.volume() * model.mass_integral(1.0, f64::INFINITY)?;
        let g2 = profile_mass_integral(&model, &chi2, |_| 1.0) * u2.integral(&space);
        let g3 = base.integrate_composed(
            &space,
            |b| b * profile_mass_integral(&model, &chi3, |s| (-strength * b * psi.chi.value(s)).exp()),
            &tight(),
        );
        let rows = replicate(ctx, name, k as u64, p.replicas, |rng| {
            let eta = sample_eta(&model, &space, eps, rng)?;
            let big = eta.atoms.iter().filter(|a| a.s >= 1.0).map(|a| a.s).sum::<f64>();
            let mark = eta.marked_pairing(|s, x| s * chi2.value(s) * u2.value(&space, x));
            let damp = (-eta.marked_pairing(|s, x| psi.value(&space, s, x))).exp();
            let local = eta.marked_pairing(|s, x| s * chi3.value(s) * base.value(&space, x));
            Ok([big, mark, damp * local, damp * g3])
        })?;
        let m = model.name();
        let big = Estimate::from_samples(&column(&rows, 0));
        parts.push(Comparison::exact(format!("{m}/indicator s>=1"), big, tail, 0.0));
        parts.push(Comparison::exact(
            format!("{m}/mark"),
            Estimate::from_samples(&column(&rows, 1)),
            g2,
            0.0,
        ));
        parts.push(Comparison::paired_samples(
            format!("{m}/eta-dependent"),
            &column(&rows, 2),
            &column(&rows, 3),
            0.0,
        ));
        if k == 0 {
            parts.push(Comparison::exact("gamma/indicator vs 1/e", big, (-1.0f64).exp(), 0.0));
        }
    }
    Ok(CheckResult::new(name, ctx, p, parts))
}

pub fn check_quasi_invariance(p: &CheckParams, ctx: &RunContext) -> Result<CheckResult> {
    let name = CheckName::QuasiInvariance;
    let space = unit_square();
    let gamma = IntensityModel::gamma();
    let theta = theta_bump(0.3);
    let f = level_function();
    let corrupt = density_factor(p);
    let mut parts = Vec::new();
    let mut sens = Sensitivity {
        parameter: "epsilon".into(),
        values: Vec::new(),
        residuals: Vec::new(),
    };
    let run = |model: &IntensityModel, eps: f64, mode: Truncation, part: u64| -> Result<(Comparison, f64)> {
        let dens = ThetaDensity::new(model, &space, &theta, eps, mode)?;
        let rows = replicate(ctx, name, part, p.replicas, |rng| {
            let eta = sample_eta(model, &space, eps, rng)?;
            let moved = eta.act_theta(&space, &theta)?;
            Ok([
                f.eval(&space, &moved),
                f.eval(&space, &eta) * dens.evaluate(&eta).density() * corrupt,
            ])
        })?;
        // |F| < 1, and the missing atoms change E[Fρ] by a factor within e^{±bias}
        let budget = dens.bias_bound().exp_m1();
        let label = format!("{}/{:?}/eps={eps:e}", model.name(), mode).to_lowercase();
        Ok((
            Comparison::paired_samples(label, &column(&rows, 0), &column(&rows, 1), budget),
            dens.bias_bound(),
        ))
    };
    for (k, eps) in [p.epsilon, 0.5 * p.epsilon].into_iter().enumerate() {
        let (c, _) = run(&gamma, eps, Truncation::Full, k as u64)?;
        sens.values.push(eps);
        sens.residuals.push(c.residual);
        parts.push(c);
    }
    parts.push(run(&slp(), p.epsilon, Truncation::Consistent, 2)?.0);

    let dens = ThetaDensity::new(&gamma, &space, &theta, p.epsilon, Truncation::Full)?;
    let diffs = replicate(ctx, name, 3, 100, |rng| {
        let eta = sample_eta(&gamma, &space, p.epsilon, rng)?;
        Ok((dens.evaluate(&eta).log_density - gamma_log_density(&eta, &theta, &space)).abs())
    })?;
    let worst = diffs.iter().copied().fold(0.0, f64::max);
    parts.push(Comparison::tolerance(
        "gamma closed form vs general (max abs, 100 samples)",
        Estimate::exact(worst),
        0.0,
        1e-10,
    ));
    let mut out = CheckResult::new(name, ctx, p, parts);
    out.sensitivity = Some(sens);
    Ok(out)
}

pub fn check_partial_quasi_invariance(p: &CheckParams, ctx: &RunContext) -> Result<CheckResult> {
    let name = CheckName::PartialQuasiInvariance;
    let space = unit_square();
    let gamma = IntensityModel::gamma();
    let f = level_function();
    let corrupt = density_factor(p);
    let level = f.level;
    let pd = PartialDensity::new(
        &gamma,
        &space,
        &flow_field(),
        0.2,
        &theta_bump(0.3),
        level,
        p.epsilon,
        Truncation::Full,
    )?;
    let rows = replicate(ctx, name, 0, p.replicas, |rng| {
        let eta = sample_eta(&gamma, &space, p.epsilon, rng)?;
        let r = pd.evaluate(&eta)?.density() * corrupt;
        Ok([f.eval(&space, &pd.transform(&eta)?), f.eval(&space, &eta) * r, r])
    })?;
    let budget = pd.theta_density.bias_bound().exp_m1();
    let mut parts = vec![
        Comparison::paired_samples("E[F(g eta)] vs E[F R]", &column(&rows, 0), &column(&rows, 1), budget),
        Comparison::exact("E[R] = 1", Estimate::from_samples(&column(&rows, 2)), 1.0, budget),
    ];
    let id = PartialDensity::new(
        &gamma,
        &space,
        &VectorField::Zero,
        0.0,
        &Theta::identity(),
        level,
        p.epsilon,
        Truncation::Full,
    )?;
    let gaps = replicate(ctx, name, 1, 100, |rng| {
        let eta = sample_eta(&gamma, &space, p.epsilon, rng)?;
        let r = id.evaluate(&eta)?.density();
        Ok((f.eval(&space, &id.transform(&eta)?) - f.eval(&space, &eta) * r).abs() + (r - 1.0).abs())
    })?;
    parts.push(Comparison::tolerance(
        "identity element (max abs, 100 samples)",
        Estimate::exact(gaps.iter().copied().fold(0.0, f64::max)),
        0.0,
        super::FLOOR,
    ));
    let mut out = CheckResult::new(name, ctx, p, parts);
    out.notes.push(format!("m = {} for n = {level}", pd.m));
    Ok(out)
}

pub fn check_ibp(p: &CheckParams, ctx: &RunContext) -> Result<CheckResult> {
    let name = CheckName::Ibp;
    let space = unit_square();
    let eps = p.epsilon;
    let scale = if p.inject == Some(Injection::WrongBoundary) {
        BOUNDARY_ERROR
    } else {
        1.0
    };
    let mut parts = Vec::new();
    let cases = ibp_cases();
    for (k, c) in cases.iter().enumerate() {
        let n = c.f.level.max(c.g.level);
        // l(ε) in place of l(0) accounts for the atoms the sampler omits
        let boundary = scale * c.model.l(eps) * c.h.integral(&space);
        let rows = replicate(ctx, name, k as u64, p.replicas, |rng| {
            let eta = sample_eta(&c.model, &space, eps, rng)?;
            let (fv, gv) = (c.f.eval(&space, &eta), c.g.eval(&space, &eta));
            let df = c.f.directional_derivative(&space, &eta, &c.v, &c.h);
            let dg = c.g.directional_derivative(&space, &eta, &c.v, &c.h);
            let b = ibp_b_v(&eta, &c.v, n, &space) + ibp_b_h_with(&eta, &c.h, &c.model, &space, boundary);
            Ok([df * gv + fv * dg, -fv * gv * b])
        })?;
        parts.push(Comparison::paired_samples(c.label, &column(&rows, 0), &column(&rows, 1), 0.0));
    }
    for (k, c) in [&cases[0], &cases[2]].into_iter().enumerate() {
        let boundary = scale * c.model.l(eps) * c.h.integral(&space);
        let vals = replicate(ctx, name, 10 + k as u64, p.replicas, |rng| {
            let eta = sample_eta(&c.model, &space, eps, rng)?;
            Ok(ibp_b_h_with(&eta, &c.h, &c.model, &space, boundary))
        })?;
        parts.push(Comparison::exact(
            format!("campbell E[B_h] ({})", c.model.name()),
            Estimate::from_samples(&vals),
            0.0,
            0.0,
        ));
    }
    let v = flow_field();
    let gamma = IntensityModel::gamma();
    let vals = replicate(ctx, name, 12, p.replicas, |rng| {
        Ok(ibp_b_v(&sample_eta(&gamma, &space, eps, rng)?, &v, 10, &space))
    })?;
    parts.push(Comparison::exact(
        "campbell E[B_v] (gamma, n=10)",
        Estimate::from_samples(&vals),
        0.0,
        0.0,
    ));
    Ok(CheckResult::new(name, ctx, p, parts))
}

pub fn check_generator(p: &CheckParams, ctx: &RunContext) -> Result<CheckResult> {
    let name = CheckName::Generator;
    let space = unit_square();
    let models = [IntensityModel::gamma(), slp()];
    let rel = replicate(ctx, name, 0, p.replicas, |rng| {
        let f = random_cylinder(rng);
        let eta = random_configuration(rng);
        let model = &models[rng.random_range(0..2usize)];
        let an = f.generator(&space, model, &eta);
        // floor: near a support edge the generator can be exponentially small
        let scale = finite_difference::generator_scale(&f, &space, model, &eta)
            .max(an.abs())
            .max(1e-6);
        let fd = finite_difference::generator_converged(&f, &space, model, &eta, 1e-3, 1e-4 * scale, 3);
        Ok((an - fd).abs() / scale)
    })?;
    let worst = rel.iter().copied().fold(0.0, f64::max);
    let parts = vec![
        Comparison::tolerance("max relative error vs finite differences", Estimate::exact(worst), 0.0, 1e-3),
        Comparison::report("mean relative error", Estimate::from_samples(&rel), Estimate::exact(0.0)),
    ];
    Ok(CheckResult::new(name, ctx, p, parts))
}

pub fn check_dirichlet_form(p: &CheckParams, ctx: &RunContext) -> Result<CheckResult> {
    let name = CheckName::DirichletForm;
    let space = unit_square();
    let mut parts = Vec::new();
    let lin = linear_function();
    let quad = quadratic_function();
    for (k, model) in [IntensityModel::gamma(), slp()].into_iter().enumerate() {
        let m = model.name();
        let rows = replicate(ctx, name, k as u64, p.replicas, |rng| {
            let eta = sample_eta(&model, &space, p.epsilon, rng)?;
            let (lf, lq) = (lin.generator(&space, &model, &eta), quad.generator(&space, &model, &eta));
            let (fl, fq) = (lin.eval(&space, &eta), quad.eval(&space, &eta));
            Ok([
                dirichlet_integrand(&lin, &lin, &space, &eta),
                -lf * fl,
                dirichlet_integrand(&quad, &lin, &space, &eta),
                -lq * fl,
                lq * fl,
                fq * lf,
            ])
        })?;
        parts.push(Comparison::paired_samples(
            format!("{m}/E(F,F) = -(LF,F), F linear"),
            &column(&rows, 0),
            &column(&rows, 1),
            0.0,
        ));
        parts.push(Comparison::paired_samples(
            format!("{m}/E(F,G) = -(LF,G), F quadratic"),
            &column(&rows, 2),
            &column(&rows, 3),
            0.0,
        ));
        parts.push(Comparison::paired_samples(
            format!("{m}/(LF,G) = (F,LG)"),
            &column(&rows, 4),
            &column(&rows, 5),
            0.0,
        ));
    }
    Ok(CheckResult::new(name, ctx, p, parts))
}

pub fn check_intertwining(p: &CheckParams, ctx: &RunContext) -> Result<CheckResult> {
    let name = CheckName::Intertwining;
    let space = unit_square();
    let model = IntensityModel::gamma();
    let eta0 = intertwining_start();
    let phi = intertwining_observable();
    let t = 0.1;
    let dt = p.dt;
    let drift = drift_control(p);
    let masses: Vec<f64> = eta0.atoms.iter().map(|a| a.s).collect();
    let reference = mass_semigroup_reference(&model, &phi.chi, &masses, t)?;
    let mut rhs = 0.0;
    for (a, w) in eta0.atoms.iter().zip(&reference) {
        rhs += w * heat_semigroup_exact(&space, &phi.u, &a.x, t).expect("Fourier mode");
    }
    let rows = replicate(ctx, name, 0, p.replicas, |rng| {
        let mut diag = StepDiagnostics::default();
        let mut out = [0.0; 3];
        for a in &eta0.atoms {
            let ys = coupled_mass_levels(&model, drift, a.s.ln(), t, dt, 3, rng, &mut diag)?;
            let x = space.brownian_step(&a.x, t.sqrt(), rng);
            let u = phi.u.value(&space, &x);
            for (o, y) in out.iter_mut().zip(&ys) {
                *o += phi.chi.value(y.exp()) * u;
            }
        }
        Ok(out)
    })?;
    let cols: Vec<Vec<f64>> = (0..3).map(|k| column(&rows, k)).collect();
    let diff = |a: usize, b: usize| -> Vec<f64> { cols[a].iter().zip(&cols[b]).map(|(x, y)| x - y).collect() };
    let (d1, d2) = (diff(0, 1), diff(1, 2));
    let e1 = Estimate::from_samples(&d1);
    let e2 = Estimate::from_samples(&d2);
    // weak order one: bias(dt) ≈ 2·(E[O_dt] - E[O_dt/2])
    let bias = 2.0 * e1.mean.abs();
    let ratio = e2.mean / e1.mean;
    let influence: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| (b - ratio * a) / e1.mean).collect();
    let ratio_est = Estimate {
        mean: ratio,
        stderr: Estimate::from_samples(&influence).stderr,
    };
    let extrapolated: Vec<f64> = cols[0].iter().zip(&cols[1]).map(|(a, b)| 2.0 * b - a).collect();
    let lhs = Estimate::from_samples(&cols[0]);
    let parts = vec![
        Comparison::exact(format!("first chaos at dt={dt:e}"), lhs, rhs, bias),
        Comparison::exact("richardson extrapolation", Estimate::from_samples(&extrapolated), rhs, 0.0),
        Comparison::tolerance("bias ratio (dt/2 vs dt) = 1/2", ratio_est, 0.5, 0.25),
    ];
    let mut out = CheckResult::new(name, ctx, p, parts);
    out.sensitivity = Some(Sensitivity {
        parameter: "dt".into(),
        values: vec![dt, 0.5 * dt, 0.25 * dt],
        residuals: cols
            .iter()
            .map(|c| {
                let e = Estimate::from_samples(c);
                Estimate {
                    mean: e.mean - rhs,
                    stderr: e.stderr,
                }
            })
            .collect(),
    });
    out.notes.push(format!(
        "coupled differences: D1 = {:.6e} ± {:.1e}, D2 = {:.6e} ± {:.1e}",
        e1.mean, e1.stderr, e2.mean, e2.stderr
    ));
    Ok(out)
}

pub fn check_stationarity(p: &CheckParams, ctx: &RunContext) -> Result<CheckResult> {
    let name = CheckName::Stationarity;
    let space = unit_square();
    let model = IntensityModel::gamma();
    let panel = stationarity_panel();
    let times = [0.0, 0.1, 0.25];
    let drift = drift_control(p);
    let mut parts = Vec::new();
    let mut sens = Sensitivity {
        parameter: "epsilon".into(),
        values: Vec::new(),
        residuals: Vec::new(),
    };
    for (k, eps) in [p.epsilon, 0.5 * p.epsilon].into_iter().enumerate() {
        let rows = replicate(ctx, name, k as u64, p.replicas, |rng| {
            let eta0 = sample_eta(&model, &space, eps, rng)?;
            let key: u64 = rng.random();
            let traj = evolve(&eta0, &model, &space, &times, p.dt, &[key], drift)?;
            let mut out = [0.0; 9];
            for (i, snap) in traj.snapshots.iter().enumerate() {
                for (j, obs) in panel.iter().enumerate() {
                    out[3 * j + i] = obs.evaluate(&space, snap);
                }
            }
            Ok(out)
        })?;
        let mut worst: Option<Comparison> = None;
        for (j, obs) in panel.iter().enumerate() {
            let label = obs.label;
            let start = column(&rows, 3 * j);
            let (_, v0, sq0) = mean_and_variance(&start);
            for (i, &t) in times.iter().enumerate().skip(1) {
                let later = column(&rows, 3 * j + i);
                let (_, vt, sqt) = mean_and_variance(&later);
                let dv: Vec<f64> = sqt.iter().zip(&sq0).map(|(a, b)| a - b).collect();
                let mean_c = Comparison::paired_samples(format!("eps={eps:e}/{label}/mean t={t}"), &later, &start, 0.0);
                let var_c = Comparison::paired(
                    format!("eps={eps:e}/{label}/variance t={t}"),
                    vt,
                    v0,
                    Estimate::from_samples(&dv),
                    0.0,
                );
                for c in [mean_c, var_c] {
                    if k == 0 {
                        parts.push(c);
                    } else {
                        if worst.as_ref().is_none_or(|w| c.z.abs() > w.z.abs()) {
                            worst = Some(c.clone());
                        }
                        parts.push(Comparison::report(c.label.clone(), c.lhs, c.rhs));
                    }
                }
            }
        }
        sens.values.push(eps);
        let lead = if k == 0 {
            parts
                .iter()
                .max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()))
                .map(|c| c.residual)
        } else {
            worst.map(|c| c.residual)
        };
        sens.residuals.push(lead.unwrap_or(Estimate::exact(0.0)));
    }
    let mut out = CheckResult::new(name, ctx, p, parts);
    out.sensitivity = Some(sens);
    out.notes
        .push("sensitivity lists the largest-|z| residual at each truncation level".into());
    Ok(out)
}

pub fn check_bessel(p: &CheckParams, ctx: &RunContext) -> Result<CheckResult> {
    let name = CheckName::Bessel;
    let (s, t) = (1.0, 1.0);
    let key = [ctx.seed, crate::rng::tag(name.as_str())];
    let r = bessel_absorption(s, t, p.dt, p.replicas, &key, ctx.workers)?;
    let parts = vec![
        Comparison::exact("absorption vs squared Bessel law exp(-s/(e^t-1))", r.estimate, r.oracle, 0.0),
        Comparison::report(
            "absorption vs exp(-s/(1-e^{-t/2}))",
            r.estimate,
            Estimate::exact(r.alternative_formula),
        ),
    ];
    let mut out = CheckResult::new(name, ctx, p, parts);
    out.notes.push(format!(
        "single-step crossings from above 36 dt: {:.4}%",
        100.0 * r.jump_fraction
    ));
    if let Some(w) = r.warning {
        out.notes.push(w);
    }
    Ok(out)
}
