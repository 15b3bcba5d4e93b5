//! Radon–Nikodym densities for the mass and full group actions, and the
//! boundary terms of the integration-by-parts formula.
//!
//! The flow Jacobian entering the partial density is `det D(ψ⁻¹)(x)`, the
//! density of the pushforward of `dx` under `ψ`; with it `-d/dt R` at `t = 0`
//! equals `Σ div v` over the retained atoms.

use serde::{Deserialize, Serialize};

use crate::cone::{DiscreteMeasure, Theta};
use crate::error::{config, domain, Result};
use crate::intensity::IntensityModel;
use crate::quadrature::{integrate_from_neg_infinity, integrate_real_line, integrate_to_infinity, QuadOptions};
use crate::space::{flow, ScalarField, TorusSpace, VectorField};

/// `log(dμ^θ/dμ)` for one realization with a bound on the truncation error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityValue {
    pub log_density: f64,
    /// Bound on `|log-density error|` caused by the atoms below the cut.
    pub bias_bound: f64,
}

impl DensityValue {
    pub fn density(&self) -> f64 {
        self.log_density.exp()
    }
}

/// How the compensator integral treats masses below the truncation level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// The exact formula; the missing atoms are covered by `bias_bound`.
    Full,
    /// `s`-integral over `[ε, ∞)` only: exact for the sampler truncated at `ε`
    /// when the test function ignores masses below `ε·max(1, sup θ)`.
    Consistent,
}

/// Precomputed evaluator for `dμ^θ/dμ` with `θ = e^h`.
#[derive(Clone, Debug)]
pub struct ThetaDensity {
    model: IntensityModel,
    space: TorusSpace,
    theta: Theta,
    compensator: f64,
    bias_bound: f64,
    pub mode: Truncation,
    pub epsilon: f64,
}

fn inner_opts() -> QuadOptions {
    QuadOptions::with_tol(1e-12, 1e-11)
}

fn outer_opts() -> QuadOptions {
    QuadOptions::with_tol(1e-11, 1e-11)
}

/// `∫_a^∞ (l(s) - l(rs)) s⁻¹ ds` in log-mass coordinates, `r = e^{-v}`;
/// `a = 0` when `log_a` is `-∞`.
fn compensator_kernel(model: &IntensityModel, v: f64, log_a: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let f = |u: f64| model.l_log(u) - model.l_log(u - v);
    if log_a == f64::NEG_INFINITY {
        integrate_real_line(f, 0.0, &inner_opts()).value
    } else {
        integrate_to_infinity(f, log_a, &inner_opts()).value
    }
}

/// `∫_0^ε |l(s/θ) - l(s)| s⁻¹ ds` with `θ = e^v`.
fn bias_kernel(model: &IntensityModel, v: f64, log_eps: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    integrate_from_neg_infinity(|u: f64| (model.l_log(u - v) - model.l_log(u)).abs(), log_eps, &inner_opts()).value
}

fn single_factor(theta: &Theta) -> Result<Option<ScalarField>> {
    let active: Vec<&ScalarField> = theta.log_factors.iter().filter(|h| !h.is_zero()).collect();
    match active.len() {
        0 => Ok(None),
        1 => Ok(Some(*active[0])),
        _ => Err(config("density evaluation supports θ = e^h with a single field h")),
    }
}

impl ThetaDensity {
    pub fn new(model: &IntensityModel, space: &TorusSpace, theta: &Theta, eps: f64, mode: Truncation) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(domain(format!("truncation level must be positive, got {eps}")));
        }
        for h in &theta.log_factors {
            h.validate(space)?;
        }
        let (compensator, bias_bound) = match single_factor(theta)? {
            None => (0.0, 0.0),
            Some(h) => {
                let log_a = match mode {
                    Truncation::Full => f64::NEG_INFINITY,
                    Truncation::Consistent => eps.ln(),
                };
                let comp = h.integrate_composed(space, |v| compensator_kernel(model, v, log_a), &outer_opts());
                let bias = match mode {
                    Truncation::Full => h.integrate_composed(space, |v| bias_kernel(model, v, eps.ln()), &outer_opts()),
                    Truncation::Consistent => 0.0,
                };
                (comp, bias)
            }
        };
        if !compensator.is_finite() {
            return Err(crate::Error::Numerical("compensator integral did not converge".into()));
        }
        Ok(Self {
            model: model.clone(),
            space: *space,
            theta: theta.clone(),
            compensator,
            bias_bound,
            mode,
            epsilon: eps,
        })
    }

    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    /// `∫_X ∫ (l(s) - l(θ⁻¹(x)s)) s⁻¹ ds dx` over the mode's mass range.
    pub fn compensator(&self) -> f64 {
        self.compensator
    }

    pub fn bias_bound(&self) -> f64 {
        self.bias_bound
    }

    /// `Σ_x log(l(θ⁻¹(x)s_x)/l(s_x))`.
    #[inline]
    pub fn atom_sum(&self, eta: &DiscreteMeasure) -> f64 {
        let mut acc = 0.0;
        for a in &eta.atoms {
            if !self.theta.in_support(&self.space, &a.x) {
                continue;
            }
            let v = self.theta.log_value(&self.space, &a.x);
            if v != 0.0 {
                acc += self.model.ln_l(a.s * (-v).exp()) - self.model.ln_l(a.s);
            }
        }
        acc
    }

    pub fn evaluate(&self, eta: &DiscreteMeasure) -> DensityValue {
        DensityValue {
            log_density: self.atom_sum(eta) + self.compensator,
            bias_bound: self.bias_bound,
        }
    }
}

/// One-shot `dμ^θ/dμ` with the exact compensator.
pub fn rn_density_theta(
    eta: &DiscreteMeasure,
    theta: &Theta,
    model: &IntensityModel,
    space: &TorusSpace,
) -> Result<DensityValue> {
    Ok(ThetaDensity::new(model, space, theta, eta.epsilon, Truncation::Full)?.evaluate(eta))
}

/// Closed form for the gamma model: `Σ (1 - θ⁻¹(x))s_x - ∫ log θ dx`.
pub fn gamma_log_density(eta: &DiscreteMeasure, theta: &Theta, space: &TorusSpace) -> f64 {
    let atoms: f64 = eta
        .atoms
        .iter()
        .map(|a| (1.0 - (-theta.log_value(space, &a.x)).exp()) * a.s)
        .sum();
    let integral: f64 = theta.log_factors.iter().map(|h| h.integral(space)).sum();
    atoms - integral
}

/// The smallest `m` with `m ≥ n·sup θ` and `m ≥ n / inf θ`.
pub fn partial_level(n: u32, theta: &Theta) -> u32 {
    let (lo, hi) = theta.bounds();
    let need = f64::from(n) * hi.max(1.0 / lo);
    // guard against 10·1.0000000000000002 rounding up
    (need * (1.0 - 1e-14)).ceil().max(f64::from(n)) as u32
}

/// Evaluator for `R_g^{(n)}(η) = Π_{s_x ≥ θ(x)/m} det Dψ⁻¹(x) · dμ^θ/dμ(η)`
/// with `g = (ψ_t^v, θ)`.
#[derive(Clone, Debug)]
pub struct PartialDensity {
    pub theta_density: ThetaDensity,
    pub field: VectorField,
    pub time: f64,
    pub n: u32,
    pub m: u32,
}

impl PartialDensity {
    pub fn new(
        model: &IntensityModel,
        space: &TorusSpace,
        field: &VectorField,
        time: f64,
        theta: &Theta,
        n: u32,
        eps: f64,
        mode: Truncation,
    ) -> Result<Self> {
        if n == 0 {
            return Err(domain("level n must be at least 1"));
        }
        field.validate(space)?;
        let m = partial_level(n, theta);
        let (lo, _) = theta.bounds();
        if eps > lo / f64::from(m) {
            return Err(config(format!(
                "truncation level {eps} exceeds inf θ / m = {}; atoms entering the Jacobian product would be missing",
                lo / f64::from(m)
            )));
        }
        Ok(Self {
            theta_density: ThetaDensity::new(model, space, theta, eps, mode)?,
            field: field.clone(),
            time,
            n,
            m,
        })
    }

    /// `Σ log det Dψ⁻¹(x)` over atoms with `s_x ≥ θ(x)/m`.
    pub fn log_jacobian_product(&self, eta: &DiscreteMeasure) -> Result<f64> {
        let space = &self.theta_density.space;
        let theta = &self.theta_density.theta;
        let mf = f64::from(self.m);
        let mut acc = 0.0;
        for a in &eta.atoms {
            if a.s * mf >= theta.value(space, &a.x) && self.field.in_support(space, &a.x) {
                acc += flow(space, &self.field, -self.time, &a.x)?.jacobian.ln();
            }
        }
        Ok(acc)
    }

    pub fn evaluate(&self, eta: &DiscreteMeasure) -> Result<DensityValue> {
        let base = self.theta_density.evaluate(eta);
        Ok(DensityValue {
            log_density: base.log_density + self.log_jacobian_product(eta)?,
            bias_bound: base.bias_bound,
        })
    }

    /// `gη` restricted to what a level-`n` function can see: atoms of `η`
    /// with `s ≥ 1/m` are moved, the rest dropped.
    pub fn transform(&self, eta: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        let space = &self.theta_density.space;
        eta.restrict_mass(1.0 / f64::from(self.m))
            .act_group(space, &self.field, self.time, &self.theta_density.theta)
    }
}

/// One-shot `R_g^{(n)}` with the exact compensator.
pub fn partial_density(
    eta: &DiscreteMeasure,
    field: &VectorField,
    time: f64,
    theta: &Theta,
    n: u32,
    model: &IntensityModel,
    space: &TorusSpace,
) -> Result<DensityValue> {
    PartialDensity::new(model, space, field, time, theta, n, eta.epsilon, Truncation::Full)?.evaluate(eta)
}

/// `B_v^{(n)}(η) = Σ_{s_x ≥ 1/n} div v(x)`.
pub fn ibp_b_v(eta: &DiscreteMeasure, v: &VectorField, n: u32, space: &TorusSpace) -> f64 {
    let cut = 1.0 / f64::from(n.max(1));
    eta.atoms
        .iter()
        .filter(|a| a.s >= cut)
        .map(|a| v.divergence(space, &a.x))
        .sum()
}

/// `Σ_x (l'(s_x)/l(s_x)) h(x) s_x + boundary`, where `boundary` is the
/// precomputed `l(·)·∫h dx` term.
#[inline]
pub fn ibp_b_h_with(eta: &DiscreteMeasure, h: &ScalarField, model: &IntensityModel, space: &TorusSpace, boundary: f64) -> f64 {
    let mut acc = 0.0;
    for a in &eta.atoms {
        let hv = h.value(space, &a.x);
        if hv != 0.0 {
            acc += model.log_deriv(a.s) * hv * a.s;
        }
    }
    acc + boundary
}

/// `B_h(η) = Σ_x (l'(s_x)/l(s_x)) h(x) s_x + l(0)∫h dx`.
pub fn ibp_b_h(eta: &DiscreteMeasure, h: &ScalarField, model: &IntensityModel, space: &TorusSpace) -> f64 {
    ibp_b_h_with(eta, h, model, space, model.l_zero() * h.integral(space))
}

/// `B_h` for a sample truncated at `ε`: `l(0)` is replaced by `l(ε)`, which
/// adds the expected contribution `(l(ε) - l(0))∫h` of the missing atoms.
pub fn ibp_b_h_truncated(eta: &DiscreteMeasure, h: &ScalarField, model: &IntensityModel, space: &TorusSpace) -> f64 {
    ibp_b_h_with(eta, h, model, space, model.l(eta.epsilon) * h.integral(space))
}
