//! The cone-valued diffusion: each atom carries an independent log-mass SDE
//! `dY = dW + b(Y) dt` and an independent Brownian position on the torus.
//! Also the one-particle semigroup and the squared Bessel absorption check.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cone::{DiscreteMeasure, HatPoint};
use crate::error::{domain, Error, Result};
use crate::functionals::{MarkFunction, MassProfile};
use crate::intensity::IntensityModel;
use crate::parallel::map_indexed;
use crate::rng::{stream, SimRng};
use crate::space::{Point, ScalarField, TorusSpace};
use crate::stats::Estimate;

/// Largest admissible Euler step.
pub const MAX_DT: f64 = 1e-2;
/// Bound on recursive step halvings for one step of one atom.
const MAX_HALVINGS: u32 = 16;
/// Log-masses are clamped here; only a reversed drift gets this far.
pub const MAX_LOG_MASS: f64 = 700.0;

/// `b(Y) = e^Y l'(e^Y) / (2 l(e^Y))`.
#[inline]
pub fn mass_drift(model: &IntensityModel, y: f64) -> f64 {
    0.5 * model.elasticity_log(y)
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt <= MAX_DT {
        Ok(())
    } else {
        Err(domain(format!("time step must lie in (0, {MAX_DT}], got {dt}")))
    }
}

/// Counters for rejected steps; merged in atom order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub steps: u64,
    pub halvings: u64,
    pub max_depth: u32,
    /// Steps that ended above [`MAX_LOG_MASS`].
    pub clamped: u64,
    pub warnings: Vec<String>,
}

impl StepDiagnostics {
    pub fn merge(&mut self, other: &StepDiagnostics) {
        self.steps += other.steps;
        self.halvings += other.halvings;
        self.max_depth = self.max_depth.max(other.max_depth);
        self.clamped += other.clamped;
        self.warnings.extend(other.warnings.iter().cloned());
    }
}

/// Drift sign: `-1` reverses the drift, a negative control for stationarity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftControl {
    pub sign: f64,
}

impl Default for DriftControl {
    fn default() -> Self {
        Self { sign: 1.0 }
    }
}

impl DriftControl {
    pub fn flipped() -> Self {
        Self { sign: -1.0 }
    }
}

/// One Euler step of length `h` driven by the increment `dw`; when
/// `|b|h > 1` the step is split at a Brownian-bridge midpoint.
fn advance_mass<R: Rng + ?Sized>(
    model: &IntensityModel,
    drift: DriftControl,
    y: f64,
    h: f64,
    dw: f64,
    rng: &mut R,
    depth: u32,
    diag: &mut StepDiagnostics,
) -> f64 {
    let b = drift.sign * mass_drift(model, y);
    if (b * h).abs() > 1.0 && depth < MAX_HALVINGS {
        diag.halvings += 1;
        diag.max_depth = diag.max_depth.max(depth + 1);
        let z: f64 = rng.sample(StandardNormal);
        let mid = 0.5 * dw + (0.25 * h).sqrt() * z;
        let y = advance_mass(model, drift, y, 0.5 * h, mid, rng, depth + 1, diag);
        return advance_mass(model, drift, y, 0.5 * h, dw - mid, rng, depth + 1, diag);
    }
    let next = y + b * h + dw;
    if next > MAX_LOG_MASS {
        diag.clamped += 1;
        return MAX_LOG_MASS;
    }
    next
}

/// An atom in log-mass coordinates with its own random streams.
#[derive(Clone, Debug)]
pub struct Particle {
    pub id: u64,
    pub y: f64,
    pub x: Point,
    mass_rng: SimRng,
    pos_rng: SimRng,
}

impl Particle {
    pub fn mass(&self) -> f64 {
        self.y.exp()
    }
}

#[derive(Clone, Debug)]
pub struct ParticleSystem {
    pub particles: Vec<Particle>,
    pub time: f64,
    pub drift: DriftControl,
    pub diagnostics: StepDiagnostics,
    model: IntensityModel,
    space: TorusSpace,
    epsilon: f64,
}

impl ParticleSystem {
    /// Atom `i` of `eta` draws from the streams `(key…, i, 0)` for its mass
    /// and `(key…, i, 1)` for its position.
    pub fn new(eta: &DiscreteMeasure, model: &IntensityModel, space: &TorusSpace, key: &[u64]) -> Result<Self> {
        let mut path = key.to_vec();
        path.extend([0, 0]);
        let k = path.len();
        let particles = eta
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| {
                if !(a.s > 0.0 && a.s.is_finite()) {
                    return Err(domain(format!("atom {i} has mass {}", a.s)));
                }
                path[k - 2] = i as u64;
                path[k - 1] = 0;
                let mass_rng = stream(&path);
                path[k - 1] = 1;
                let pos_rng = stream(&path);
                Ok(Particle {
                    id: i as u64,
                    y: a.s.ln(),
                    x: a.x,
                    mass_rng,
                    pos_rng,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            particles,
            time: 0.0,
            drift: DriftControl::default(),
            diagnostics: StepDiagnostics::default(),
            model: model.clone(),
            space: *space,
            epsilon: eta.epsilon,
        })
    }

    pub fn with_drift(mut self, drift: DriftControl) -> Self {
        self.drift = drift;
        self
    }

    pub fn to_measure(&self) -> DiscreteMeasure {
        DiscreteMeasure {
            atoms: self.particles.iter().map(|p| HatPoint { s: p.mass(), x: p.x }).collect(),
            epsilon: self.epsilon,
            model: self.model.name(),
        }
    }

    /// Advances every atom by `dt`.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        check_dt(dt)?;
        let sq = dt.sqrt();
        for p in &mut self.particles {
            let z: f64 = p.mass_rng.sample(StandardNormal);
            p.y = advance_mass(
                &self.model,
                self.drift,
                p.y,
                dt,
                sq * z,
                &mut p.mass_rng,
                0,
                &mut self.diagnostics,
            );
            if !p.y.is_finite() {
                return Err(Error::Numerical(format!("atom {} left the cone: log-mass {}", p.id, p.y)));
            }
            p.x = self.space.brownian_step(&p.x, sq, &mut p.pos_rng);
        }
        self.diagnostics.steps += 1;
        self.time += dt;
        Ok(())
    }

    /// Advances to time `t` with equal steps no longer than `dt`.
    pub fn advance_to(&mut self, t: f64, dt: f64) -> Result<()> {
        check_dt(dt)?;
        let span = t - self.time;
        if span < 0.0 {
            return Err(domain(format!("cannot move back from {} to {t}", self.time)));
        }
        if span == 0.0 {
            return Ok(());
        }
        let n = (span / dt * (1.0 - 1e-12)).ceil().max(1.0) as u64;
        let h = span / n as f64;
        for _ in 0..n {
            self.step(h)?;
        }
        self.time = t;
        Ok(())
    }
}

/// Advances `system` by one step of `dt`.
pub fn step_particles(system: &mut ParticleSystem, dt: f64) -> Result<()> {
    system.step(dt)
}

/// Snapshots of one run at increasing times.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<DiscreteMeasure>,
    pub diagnostics: StepDiagnostics,
}

/// Runs the diffusion from `eta0`, recording the state at each of `times`
/// (nondecreasing, nonnegative). Atom `i` keeps index `i` in every snapshot.
pub fn evolve(
    eta0: &DiscreteMeasure,
    model: &IntensityModel,
    space: &TorusSpace,
    times: &[f64],
    dt: f64,
    key: &[u64],
    drift: DriftControl,
) -> Result<Trajectory> {
    check_dt(dt)?;
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(domain("snapshot times must be finite, nonnegative and nondecreasing"));
    }
    let mut system = ParticleSystem::new(eta0, model, space, key)?.with_drift(drift);
    let mut snapshots = Vec::with_capacity(times.len());
    for &t in times {
        if t == 0.0 {
            snapshots.push(eta0.clone());
            continue;
        }
        system.advance_to(t, dt)?;
        snapshots.push(system.to_measure());
    }
    Ok(Trajectory {
        times: times.to_vec(),
        snapshots,
        diagnostics: system.diagnostics,
    })
}

/// Final log-masses of Euler schemes at steps `dt, dt/2, …, dt/2^(levels-1)`
/// driven by one Brownian path, started from `y0` and run to `t`.
pub fn coupled_mass_levels<R: Rng + ?Sized>(
    model: &IntensityModel,
    drift: DriftControl,
    y0: f64,
    t: f64,
    dt: f64,
    levels: usize,
    rng: &mut R,
    diag: &mut StepDiagnostics,
) -> Result<Vec<f64>> {
    check_dt(dt)?;
    if levels == 0 || levels > 16 {
        return Err(domain("levels must lie in 1..=16"));
    }
    let n0 = (t / dt).round();
    if n0 < 1.0 || (n0 * dt - t).abs() > 1e-9 * t {
        return Err(domain(format!("horizon {t} must be a positive multiple of dt = {dt}")));
    }
    let fine = 1u64 << (levels - 1);
    let n_fine = n0 as u64 * fine;
    let h_fine = t / n_fine as f64;
    let sq = h_fine.sqrt();
    let mut y = vec![y0; levels];
    let mut acc = vec![0.0; levels];
    for k in 1..=n_fine {
        let z: f64 = rng.sample(StandardNormal);
        let dw = sq * z;
        for l in 0..levels {
            acc[l] += dw;
            let stride = 1u64 << (levels - 1 - l);
            if k % stride == 0 {
                let h = h_fine * stride as f64;
                y[l] = advance_mass(model, drift, y[l], h, acc[l], rng, 0, diag);
                acc[l] = 0.0;
            }
        }
    }
    diag.steps += n_fine;
    Ok(y)
}

/// `e^{λt/2} u(x)` when `Δu = λu`.
pub fn heat_semigroup_exact(space: &TorusSpace, u: &ScalarField, x: &Point, t: f64) -> Option<f64> {
    match u {
        ScalarField::Zero => Some(0.0),
        ScalarField::Constant { value } => Some(*value),
        ScalarField::Fourier(f) => Some((0.5 * f.eigenvalue(space) * t).exp() * f.value(space, x)),
        ScalarField::Bump(_) => None,
    }
}

/// Monte Carlo estimate of `E[χ(Z_t)u(B_t)]` from `(s, x)`; the position
/// factor is exact when `u` is a Fourier mode or constant.
#[allow(clippy::too_many_arguments)]
pub fn one_particle_semigroup(
    phi: &MarkFunction,
    model: &IntensityModel,
    space: &TorusSpace,
    s: f64,
    x: &Point,
    t: f64,
    dt: f64,
    n: usize,
    key: &[u64],
) -> Result<Estimate> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(domain(format!("mass must be positive, got {s}")));
    }
    if t == 0.0 {
        return Ok(Estimate::exact(phi.value(space, s, x)));
    }
    check_dt(dt)?;
    if n < 2 {
        return Err(domain("at least two replicas are needed"));
    }
    let exact = heat_semigroup_exact(space, &phi.u, x, t);
    if let MassProfile::Constant { value } = phi.chi {
        if let Some(e) = exact {
            return Ok(Estimate::exact(value * e));
        }
    }
    let steps = (t / dt * (1.0 - 1e-12)).ceil().max(1.0) as u64;
    let h = t / steps as f64;
    let sq = h.sqrt();
    let mut path = key.to_vec();
    path.push(0);
    let last = path.len() - 1;
    let mut diag = StepDiagnostics::default();
    let mut vals = Vec::with_capacity(n);
    for r in 0..n {
        path[last] = r as u64;
        let mut rng = stream(&path);
        let mut y = s.ln();
        for _ in 0..steps {
            let z: f64 = rng.sample(StandardNormal);
            y = advance_mass(model, DriftControl::default(), y, h, sq * z, &mut rng, 0, &mut diag);
        }
        let chi = phi.chi.value(y.exp());
        let pos = match exact {
            Some(e) => e,
            None => {
                let xt = space.brownian_step(x, t.sqrt(), &mut rng);
                phi.u.value(space, &xt)
            }
        };
        vals.push(chi * pos);
    }
    Ok(Estimate::from_samples(&vals))
}

/// `E[χ(Z_t) | Z_0 = s]` for each `s` in `masses`, by Crank–Nicolson on the
/// backward equation `w_t = ½w_YY + b(Y)w_Y` in `Y = log s`, killed far
/// outside the support of `χ` and the starting points.
pub fn mass_semigroup_reference(model: &IntensityModel, chi: &MassProfile, masses: &[f64], t: f64) -> Result<Vec<f64>> {
    mass_semigroup_grid(model, chi, masses, t, 1e-3, 2000)
}

pub(crate) fn mass_semigroup_grid(
    model: &IntensityModel,
    chi: &MassProfile,
    masses: &[f64],
    t: f64,
    h_max: f64,
    time_steps: usize,
) -> Result<Vec<f64>> {
    chi.validate()?;
    if masses.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(domain("masses must be positive and finite"));
    }
    if t == 0.0 {
        return Ok(masses.iter().map(|&s| chi.value(s)).collect());
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(domain(format!("time must be nonnegative, got {t}")));
    }
    if let MassProfile::Constant { value } = *chi {
        return Ok(vec![value; masses.len()]);
    }
    let reach = 12.0 * t.sqrt() + 1.0;
    let lo_y = masses.iter().map(|s| s.ln()).fold(chi.support_min().ln(), f64::min) - reach;
    let hi_y = masses.iter().map(|s| s.ln()).fold(chi.support_max().ln(), f64::max) + reach;
    let b_max = (0..=1000)
        .map(|i| mass_drift(model, lo_y + (hi_y - lo_y) * i as f64 / 1000.0).abs())
        .fold(0.0, f64::max);
    // central differences stay monotone while |b| h ≤ 1
    let h = h_max.min(0.9 / b_max.max(1e-300));
    let cells = ((hi_y - lo_y) / h).ceil() as usize;
    if cells > 2_000_000 {
        return Err(Error::Numerical(format!("reference grid would need {cells} cells")));
    }
    let h = (hi_y - lo_y) / cells as f64;
    let n = cells - 1;
    let grid_y = |j: usize| lo_y + (j + 1) as f64 * h;
    let mut w: Vec<f64> = (0..n).map(|j| chi.value(grid_y(j).exp())).collect();
    let (mut lower, mut diag, mut upper) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for j in 0..n {
        let b = mass_drift(model, grid_y(j));
        lower[j] = 0.5 / (h * h) - b / (2.0 * h);
        diag[j] = -1.0 / (h * h);
        upper[j] = 0.5 / (h * h) + b / (2.0 * h);
    }
    let apply = |w: &[f64], out: &mut [f64], scale: f64| {
        for j in 0..n {
            let left = if j > 0 { w[j - 1] } else { 0.0 };
            let right = if j + 1 < n { w[j + 1] } else { 0.0 };
            out[j] = w[j] + scale * (lower[j] * left + diag[j] * w[j] + upper[j] * right);
        }
    };
    let solve = |rhs: &[f64], out: &mut [f64], scale: f64| {
        // (I - scale·A) out = rhs by the Thomas algorithm
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for j in 0..n {
            let a = -scale * lower[j];
            let bb = 1.0 - scale * diag[j];
            let cc = -scale * upper[j];
            let (cp, dp) = if j == 0 { (0.0, 0.0) } else { (c[j - 1], d[j - 1]) };
            let m = bb - a * cp;
            c[j] = cc / m;
            d[j] = (rhs[j] - a * dp) / m;
        }
        for j in (0..n).rev() {
            out[j] = d[j] - if j + 1 < n { c[j] * out[j + 1] } else { 0.0 };
        }
    };
    let tau = t / time_steps as f64;
    let mut tmp = vec![0.0; n];
    // four implicit quarter steps damp the stiff modes before Crank–Nicolson
    for _ in 0..4 {
        let rhs = w.clone();
        solve(&rhs, &mut w, 0.25 * tau);
    }
    for _ in 1..time_steps {
        apply(&w, &mut tmp, 0.5 * tau);
        solve(&tmp, &mut w, 0.5 * tau);
    }
    Ok(masses
        .iter()
        .map(|&s| {
            let pos = (s.ln() - lo_y) / h - 1.0;
            let j = (pos.floor() as isize).clamp(1, n as isize - 3) as usize;
            let f = pos - j as f64;
            let (p0, p1, p2, p3) = (w[j - 1], w[j], w[j + 1], w[j + 2]);
            // cubic Lagrange through j-1..j+2
            -f * (f - 1.0) * (f - 2.0) / 6.0 * p0 + (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0 * p1
                - (f + 1.0) * f * (f - 2.0) / 2.0 * p2
                + (f + 1.0) * f * (f - 1.0) / 6.0 * p3
        })
        .collect())
}

/// Squared zero-dimensional Bessel path state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesselState {
    pub q: f64,
    pub absorbed: bool,
}

impl BesselState {
    pub fn new(q: f64) -> Self {
        Self { q, absorbed: q <= 0.0 }
    }

    /// One Euler step of `dQ = 2√Q dW`; returns whether this step crossed
    /// from above the `3σ` scale `36h`.
    pub fn step<R: Rng + ?Sized>(&mut self, h: f64, rng: &mut R) -> bool {
        if self.absorbed {
            return false;
        }
        let z: f64 = rng.sample(StandardNormal);
        let next = self.q + 2.0 * (self.q * h).sqrt() * z;
        if next <= 0.0 {
            let jumped = self.q > 36.0 * h;
            self.q = 0.0;
            self.absorbed = true;
            return jumped;
        }
        self.q = next;
        false
    }
}

/// Absorption probability of the mass process `e^{-t} Q((e^t - 1)/2)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BesselReport {
    pub initial_mass: f64,
    pub time: f64,
    pub dt: f64,
    pub replicas: usize,
    pub estimate: Estimate,
    /// `exp(-s/(e^t - 1))`, the squared Bessel absorption law at `u = (e^t-1)/2`.
    pub oracle: f64,
    /// `exp(-s/(1 - e^{-t/2}))`, recorded for comparison only.
    pub alternative_formula: f64,
    pub jump_fraction: f64,
    pub warning: Option<String>,
}

pub fn bessel_absorption_oracle(s: f64, t: f64) -> f64 {
    (-s / t.exp_m1()).exp()
}

pub fn bessel_alternative_formula(s: f64, t: f64) -> f64 {
    (-s / (-(-0.5 * t).exp_m1())).exp()
}

pub fn bessel_absorption(s: f64, t: f64, dt: f64, n: usize, key: &[u64], workers: usize) -> Result<BesselReport> {
    if !(s > 0.0 && s.is_finite() && t > 0.0 && t.is_finite()) {
        return Err(domain(format!("need s > 0 and t > 0, got s = {s}, t = {t}")));
    }
    check_dt(dt)?;
    if n < 2 {
        return Err(domain("at least two replicas are needed"));
    }
    let u = 0.5 * t.exp_m1();
    let steps = (u / dt * (1.0 - 1e-12)).ceil().max(1.0) as u64;
    let h = u / steps as f64;
    let outcomes = map_indexed(n, workers, |r| {
        let mut path = key.to_vec();
        path.push(r);
        let mut rng = stream(&path);
        let mut st = BesselState::new(s);
        let mut jumped = false;
        for _ in 0..steps {
            jumped |= st.step(h, &mut rng);
            if st.absorbed {
                break;
            }
        }
        (st.absorbed, jumped)
    })?;
    let hits: Vec<f64> = outcomes.iter().map(|o| if o.0 { 1.0 } else { 0.0 }).collect();
    let jump_fraction = outcomes.iter().filter(|o| o.1).count() as f64 / n as f64;
    let warning = (jump_fraction > 0.01).then(|| {
        format!(
            "{:.2}% of paths crossed 0 in a single step from above 36·dt; reduce dt",
            100.0 * jump_fraction
        )
    });
    Ok(BesselReport {
        initial_mass: s,
        time: t,
        dt,
        replicas: n,
        estimate: Estimate::from_samples(&hits),
        oracle: bessel_absorption_oracle(s, t),
        alternative_formula: bessel_alternative_formula(s, t),
        jump_fraction,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::sample_eta;
    use crate::space::FourierField;
    use crate::stats::{ks_two_sample, ks_two_sample_critical_1pct};

    #[test]
    fn drift_values() {
        let g = IntensityModel::gamma();
        for y in [-3.0, 0.0, 1.5] {
            assert!((mass_drift(&g, y) + 0.5 * f64::exp(y)).abs() < 1e-14);
        }
        assert!(mass_drift(&g, -800.0).abs() < 1e-300);
        let m = IntensityModel::smoothed_log_power(1.0).unwrap();
        for y in [-30.0, -2.0, 0.3, 2.0] {
            let h: f64 = 1e-5;
            let fd = 0.25 * (m.ln_l((y + h).exp()) - m.ln_l((y - h).exp())) / h;
            assert!((mass_drift(&m, y) - fd).abs() < 1e-6 * fd.abs().max(1e-3), "{y}");
        }
        assert!(mass_drift(&m, -1e4).abs() < 1e-3);
    }

    #[test]
    fn halving_keeps_large_gamma_atoms_stable() {
        let g = IntensityModel::gamma();
        let mut eta = DiscreteMeasure::empty(1e-3);
        eta.atoms.push(HatPoint { s: 5000.0, x: [0.5; 4] });
        let space = TorusSpace::unit_square();
        let traj = evolve(&eta, &g, &space, &[0.01], 1e-2, &[1], DriftControl::default()).unwrap();
        assert!(traj.diagnostics.halvings > 0);
        let s = traj.snapshots[0].atoms[0].s;
        // deterministic part: s(t) = s0 / (1 + s0 t/2)
        assert!(s > 50.0 && s < 400.0, "{s}");
    }

    #[test]
    fn zero_time_echoes_and_seeds_reproduce() {
        let g = IntensityModel::gamma();
        let space = TorusSpace::unit_square();
        let eta = sample_eta(&g, &space, 1e-3, &mut stream(&[5])).unwrap();
        let a = evolve(&eta, &g, &space, &[0.0, 0.05, 0.1], 1e-3, &[9], DriftControl::default()).unwrap();
        let b = evolve(&eta, &g, &space, &[0.0, 0.05, 0.1], 1e-3, &[9], DriftControl::default()).unwrap();
        assert_eq!(a.snapshots[0], eta);
        assert_eq!(a.snapshots[2], b.snapshots[2]);
        assert_eq!(a.snapshots[2].len(), eta.len());
        assert!(evolve(&eta, &g, &space, &[0.1], 0.02, &[9], DriftControl::default()).is_err());
    }

    #[test]
    fn weak_euler_mean_of_one_gamma_atom() {
        let g = IntensityModel::gamma();
        let y0 = 0.5_f64;
        let t = 1e-3;
        let n = 100_000;
        let mut diag = StepDiagnostics::default();
        let vals: Vec<f64> = (0..n)
            .map(|r| {
                let mut rng = stream(&[77, r]);
                coupled_mass_levels(&g, DriftControl::default(), y0, t, 1e-4, 1, &mut rng, &mut diag).unwrap()[0] - y0
            })
            .collect();
        let e = Estimate::from_samples(&vals);
        let expect = -0.5 * y0.exp() * t;
        assert!((e.mean - expect).abs() < 3.0 * e.stderr + 1e-6, "{e:?} {expect}");
    }

    #[test]
    fn increments_of_mass_and_position_are_uncorrelated() {
        let g = IntensityModel::gamma();
        let space = TorusSpace::unit_square();
        let mut eta = DiscreteMeasure::empty(1e-3);
        eta.atoms.push(HatPoint { s: 1.0, x: [0.5; 4] });
        let mut prod = Vec::new();
        for r in 0..20_000u64 {
            let tr = evolve(&eta, &g, &space, &[0.01], 1e-3, &[3, r], DriftControl::default()).unwrap();
            let a = &tr.snapshots[0].atoms[0];
            prod.push(a.s.ln() * (a.x[0] - 0.5));
        }
        let e = Estimate::from_samples(&prod);
        assert!(e.mean.abs() < 3.0 * e.stderr);
    }

    #[test]
    fn markov_split_matches_single_run_in_law() {
        let g = IntensityModel::gamma();
        let space = TorusSpace::unit_square();
        let phi = MarkFunction::new(
            MassProfile::Plateau {
                lo: 0.05,
                hi: 20.0,
                ramp: 0.5,
            },
            ScalarField::Fourier(FourierField::new(&[1, 0], 0.0, 1.0)),
        );
        let n = 10_000u64;
        let mut one = Vec::new();
        let mut two = Vec::new();
        for r in 0..n {
            let eta = sample_eta(&g, &space, 1e-2, &mut stream(&[11, r])).unwrap();
            let full = evolve(&eta, &g, &space, &[0.1], 1e-3, &[12, r], DriftControl::default()).unwrap();
            one.push(full.snapshots[0].marked_pairing(|s, x| phi.value(&space, s, x)));
            let half = evolve(&eta, &g, &space, &[0.05], 1e-3, &[13, r], DriftControl::default()).unwrap();
            let rest = evolve(
                &half.snapshots[0],
                &g,
                &space,
                &[0.05],
                1e-3,
                &[14, r],
                DriftControl::default(),
            )
            .unwrap();
            two.push(rest.snapshots[0].marked_pairing(|s, x| phi.value(&space, s, x)));
        }
        let d = ks_two_sample(&one, &two);
        assert!(d < ks_two_sample_critical_1pct(one.len(), two.len()), "{d}");
    }

    #[test]
    fn displacement_shrinks_like_sqrt_dt() {
        let g = IntensityModel::gamma();
        let space = TorusSpace::unit_square();
        let eta = sample_eta(&g, &space, 1e-2, &mut stream(&[21])).unwrap();
        let dts = [1e-3, 1e-4, 1e-5, 1e-6];
        let mut logs = Vec::new();
        for &dt in &dts {
            let mut sys = ParticleSystem::new(&eta, &g, &space, &[22]).unwrap();
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                let before: Vec<f64> = sys.particles.iter().map(|p| p.y).collect();
                sys.step(dt).unwrap();
                for (p, y) in sys.particles.iter().zip(&before) {
                    worst = worst.max((p.y - y).abs());
                }
            }
            logs.push((dt.ln(), worst.ln()));
        }
        let n = logs.len() as f64;
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
        let slope =
            logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope - 0.5).abs() < 0.1, "{slope}");
    }

    #[test]
    fn semigroup_trivial_cases() {
        let g = IntensityModel::gamma();
        let space = TorusSpace::unit_square();
        let phi = MarkFunction::new(
            MassProfile::Bump { lo: 0.5, hi: 4.0 },
            ScalarField::Fourier(FourierField::new(&[1, 0], 0.2, 1.0)),
        );
        let x = [0.3, 0.6, 0.0, 0.0];
        let at0 = one_particle_semigroup(&phi, &g, &space, 1.2, &x, 0.0, 1e-3, 10, &[1]).unwrap();
        assert_eq!(at0.mean, phi.value(&space, 1.2, &x));
        let one = MarkFunction::new(MassProfile::Constant { value: 1.0 }, ScalarField::Constant { value: 1.0 });
        let e = one_particle_semigroup(&one, &g, &space, 1.2, &x, 0.3, 1e-3, 10, &[1]).unwrap();
        assert_eq!(e.mean, 1.0);
    }

    #[test]
    fn reference_semigroup_converges_and_matches_generator() {
        let chi = MassProfile::Plateau {
            lo: 1.0,
            hi: 8.0,
            ramp: 0.5,
        };
        for m in [IntensityModel::gamma(), IntensityModel::smoothed_log_power(1.0).unwrap()] {
            let masses = [0.7, 1.5, 3.0, 6.0];
            let a = mass_semigroup_grid(&m, &chi, &masses, 0.1, 2e-3, 1000).unwrap();
            let b = mass_semigroup_grid(&m, &chi, &masses, 0.1, 1e-3, 2000).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 2e-6, "{x} {y}");
            }
            // short-time slope matches the one-particle generator
            let space = TorusSpace::unit_square();
            let mark = MarkFunction::new(chi, ScalarField::Constant { value: 1.0 });
            let tau = 1e-4;
            let w1 = mass_semigroup_grid(&m, &chi, &masses, tau, 1e-3, 200).unwrap();
            let w2 = mass_semigroup_grid(&m, &chi, &masses, 0.5 * tau, 1e-3, 200).unwrap();
            for ((&s, a), b) in masses.iter().zip(&w1).zip(&w2) {
                // Richardson: removes the τ·L²χ/2 term of the difference quotient
                let slope = 2.0 * (b - chi.value(s)) / (0.5 * tau) - (a - chi.value(s)) / tau;
                let gen = mark.one_particle_generator(&space, &m, s, &[0.0; 4]);
                assert!(
                    (slope - gen).abs() < 2e-3 * gen.abs().max(1.0),
                    "{} {s}: {slope} {gen}",
                    m.name()
                );
            }
        }
    }

    #[test]
    fn heat_factor_matches_brownian_average() {
        let space = TorusSpace::unit_square();
        let u = ScalarField::Fourier(FourierField::new(&[1, 1], 0.3, 1.0));
        let x = [0.2, 0.7, 0.0, 0.0];
        let t = 0.05;
        let mut rng = stream(&[61]);
        let vals: Vec<f64> = (0..100_000)
            .map(|_| u.value(&space, &space.brownian_increment(&x, t, &mut rng).unwrap()))
            .collect();
        let e = Estimate::from_samples(&vals);
        let exact = heat_semigroup_exact(&space, &u, &x, t).unwrap();
        assert!((e.mean - exact).abs() < 3.0 * e.stderr, "{e:?} {exact}");
        assert!(exact.abs() < u.value(&space, &x).abs());
    }

    #[test]
    fn semigroup_mc_agrees_with_reference() {
        let g = IntensityModel::gamma();
        let space = TorusSpace::unit_square();
        let chi = MassProfile::Plateau {
            lo: 1.0,
            hi: 8.0,
            ramp: 0.5,
        };
        let phi = MarkFunction::new(chi, ScalarField::Fourier(FourierField::new(&[1, 0], 0.0, 1.0)));
        let x = [0.1, 0.2, 0.0, 0.0];
        let e = one_particle_semigroup(&phi, &g, &space, 2.0, &x, 0.1, 1e-3, 20_000, &[31]).unwrap();
        let r =
            mass_semigroup_reference(&g, &chi, &[2.0], 0.1).unwrap()[0] * heat_semigroup_exact(&space, &phi.u, &x, 0.1).unwrap();
        assert!((e.mean - r).abs() < 3.0 * e.stderr + 1e-3, "{e:?} {r}");
    }

    #[test]
    fn bessel_limits_and_formulas() {
        assert!((bessel_absorption_oracle(1.0, 1.0) - (-1.0 / (1.0_f64.exp() - 1.0)).exp()).abs() < 1e-15);
        assert!(bessel_absorption_oracle(50.0, 0.5) < 1e-20);
        assert!(bessel_absorption_oracle(1.0, 40.0) > 0.999_999);
        let r = bessel_absorption(1.0, 0.5, 1e-3, 4000, &[1], 1).unwrap();
        assert!((r.estimate.mean - r.oracle).abs() < 3.0 * r.estimate.stderr + 0.02, "{r:?}");
        let far = bessel_absorption(30.0, 0.2, 1e-3, 200, &[1], 1).unwrap();
        assert_eq!(far.estimate.mean, 0.0);
        let coarse = bessel_absorption(1.0, 1.0, 1e-2, 2000, &[2], 1).unwrap();
        assert!(coarse.jump_fraction >= 0.0);
    }
}
