//! Truncated realizations `η = Σ sᵢ δ_{xᵢ}` of the random discrete measure,
//! and the group actions on them.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::intensity::IntensityModel;
use crate::space::{fixed, flow, Point, ScalarField, TorusSpace, VectorField};

/// An atom `(s, x)` of `η`, i.e. a point of `ℝ₊ × X`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HatPoint {
    pub s: f64,
    #[serde(with = "fixed")]
    pub x: Point,
}

/// A finite discrete measure with every mass at least `epsilon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub atoms: Vec<HatPoint>,
    pub epsilon: f64,
    pub model: String,
}

/// A multiplicative mass transformation `θ = exp(Σ hₖ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Theta {
    pub log_factors: Vec<ScalarField>,
}

impl Theta {
    pub fn identity() -> Self {
        Self { log_factors: Vec::new() }
    }

    pub fn exp_of(h: ScalarField) -> Self {
        Self { log_factors: vec![h] }
    }

    /// `θ₁θ₂`.
    pub fn product(&self, other: &Theta) -> Self {
        let mut log_factors = self.log_factors.clone();
        log_factors.extend_from_slice(&other.log_factors);
        Self { log_factors }
    }

    pub fn inverse(&self) -> Self {
        Self {
            log_factors: self.log_factors.iter().map(negate).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.log_factors.iter().all(ScalarField::is_zero)
    }

    #[inline]
    pub fn log_value(&self, space: &TorusSpace, x: &Point) -> f64 {
        self.log_factors.iter().map(|h| h.value(space, x)).sum()
    }

    #[inline]
    pub fn value(&self, space: &TorusSpace, x: &Point) -> f64 {
        self.log_value(space, x).exp()
    }

    /// Lower and upper bounds on `θ`; exact for a single factor.
    pub fn bounds(&self) -> (f64, f64) {
        let (lo, hi) = self
            .log_factors
            .iter()
            .map(ScalarField::range)
            .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
        (lo.exp(), hi.exp())
    }

    /// Whether `x` lies where `θ ≠ 1` may hold.
    pub fn in_support(&self, space: &TorusSpace, x: &Point) -> bool {
        self.log_factors.iter().any(|h| match h {
            ScalarField::Zero => false,
            ScalarField::Bump(b) => b.in_support(space, x),
            _ => true,
        })
    }
}

fn negate(h: &ScalarField) -> ScalarField {
    match *h {
        ScalarField::Zero => ScalarField::Zero,
        ScalarField::Constant { value } => ScalarField::Constant { value: -value },
        ScalarField::Bump(mut b) => {
            b.amplitude = -b.amplitude;
            ScalarField::Bump(b)
        }
        ScalarField::Fourier(mut f) => {
            f.amplitude = -f.amplitude;
            ScalarField::Fourier(f)
        }
    }
}

/// Draws `η` restricted to masses `≥ ε`: a Poisson number of atoms with mean
/// `vol·λ([ε, ∞))`, uniform positions and independent masses.
pub fn sample_eta<R: Rng + ?Sized>(model: &IntensityModel, space: &TorusSpace, eps: f64, rng: &mut R) -> Result<DiscreteMeasure> {
    let sampler = model.mass_sampler(eps)?;
    let mean = space.volume() * sampler.total();
    let n = Poisson::new(mean)
        .map_err(|e| domain(format!("Poisson mean {mean}: {e}")))?
        .sample(rng) as usize;
    let mut atoms = Vec::with_capacity(n);
    for _ in 0..n {
        let x = space.uniform_point(rng);
        let s = sampler.sample(rng);
        atoms.push(HatPoint { s, x });
    }
    Ok(DiscreteMeasure {
        atoms,
        epsilon: eps,
        model: model.name(),
    })
}

impl DiscreteMeasure {
    pub fn empty(eps: f64) -> Self {
        Self {
            atoms: Vec::new(),
            epsilon: eps,
            model: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `η(X) = Σ sᵢ`.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.s).sum()
    }

    /// `⟨φ, η⟩ = Σ sᵢ φ(xᵢ)`.
    pub fn pairing(&self, phi: impl Fn(&Point) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.s * phi(&a.x)).sum()
    }

    /// `⟨⟨φ, η⟩⟩ = Σ φ(sᵢ, xᵢ)`.
    pub fn marked_pairing(&self, phi: impl Fn(f64, &Point) -> f64) -> f64 {
        self.atoms.iter().map(|a| phi(a.s, &a.x)).sum()
    }

    pub fn has_distinct_positions(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.atoms.len());
        self.atoms.iter().all(|a| seen.insert(a.x.map(f64::to_bits)))
    }

    /// `θ·η` for a general positive `θ`; `inf_theta` rescales the truncation level.
    pub fn scale_masses(&self, theta: impl Fn(&Point) -> f64, inf_theta: f64) -> Result<Self> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let t = theta(&a.x);
            if !(t > 0.0 && t.is_finite()) {
                return Err(domain(format!("θ must be positive and finite, got {t}")));
            }
            atoms.push(HatPoint { s: t * a.s, x: a.x });
        }
        Ok(Self {
            atoms,
            epsilon: self.epsilon * inf_theta,
            model: self.model.clone(),
        })
    }

    /// `θ·η`: masses `sᵢ ↦ θ(xᵢ)sᵢ`, positions unchanged.
    pub fn act_theta(&self, space: &TorusSpace, theta: &Theta) -> Result<Self> {
        let (lo, _) = theta.bounds();
        self.scale_masses(|x| theta.value(space, x), lo)
    }

    /// `ψ*η`: positions `xᵢ ↦ ψ(xᵢ)`, masses unchanged.
    pub fn act_diffeo(&self, psi: impl Fn(&Point) -> Result<Point>) -> Result<Self> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Ok(HatPoint { s: a.s, x: psi(&a.x)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            atoms,
            epsilon: self.epsilon,
            model: self.model.clone(),
        })
    }

    /// `ψ_t^v * η` for the flow of a vector field.
    pub fn act_flow(&self, space: &TorusSpace, v: &VectorField, t: f64) -> Result<Self> {
        self.act_diffeo(|x| Ok(flow(space, v, t, x)?.point))
    }

    /// `gη = θ·(ψ*η)` for `g = (ψ_t^v, θ)`.
    pub fn act_group(&self, space: &TorusSpace, v: &VectorField, t: f64, theta: &Theta) -> Result<Self> {
        self.act_flow(space, v, t)?.act_theta(space, theta)
    }

    /// Keeps the atoms with `s ≥ 1/n`.
    pub fn restrict_sigma_n(&self, n: u32) -> Self {
        self.restrict_mass(1.0 / f64::from(n.max(1)))
    }

    /// Keeps the atoms with `s ≥ cut`; the truncation level becomes `max(ε, cut)`.
    pub fn restrict_mass(&self, cut: f64) -> Self {
        Self {
            atoms: self.atoms.iter().copied().filter(|a| a.s >= cut).collect(),
            epsilon: self.epsilon.max(cut),
            model: self.model.clone(),
        }
    }

    /// `η + sδ_x`.
    pub fn with_atom(&self, s: f64, x: Point) -> Self {
        let mut out = self.clone();
        out.atoms.push(HatPoint { s, x });
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThetaRow {
    pub r: u32,
    pub count: usize,
    /// `κ(B(r)) = λ(B_λ(r))·|B_X(r)|`.
    pub ball_measure: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThetaReport {
    pub k: f64,
    pub rows: Vec<ThetaRow>,
    pub pass: bool,
    /// Smallest integer constant for which every radius passes.
    pub smallest_k: u64,
}

/// Compares atom counts in the balls `B(r) = {d_λ(s,1) < r} × {d_X(x,x₀) < r}`
/// with `K·κ(B(r))` for `r = 1..=r_max`.
pub fn theta_diagnostic(
    eta: &DiscreteMeasure,
    model: &IntensityModel,
    space: &TorusSpace,
    k: f64,
    r_max: u32,
    x0: &Point,
) -> Result<ThetaReport> {
    let upper = model.lambda_interval(1.0, f64::INFINITY)?;
    let mut hat = Vec::with_capacity(eta.len());
    for a in &eta.atoms {
        let d = model.d_lambda(a.s, 1.0)?.max(space.distance(&a.x, x0));
        hat.push(d);
    }
    let mut rows = Vec::with_capacity(r_max as usize);
    let mut smallest_k = 1u64;
    for r in 1..=r_max {
        let rf = f64::from(r);
        let count = hat.iter().filter(|&&d| d < rf).count();
        // λ((a, 1)) = r always has a solution because λ((0, 1)) = ∞
        let ball_measure = (rf + rf.min(upper)) * space.ball_volume(rf);
        let bound = k * ball_measure;
        if count > 0 {
            smallest_k = smallest_k.max((count as f64 / ball_measure).ceil() as u64);
        }
        rows.push(ThetaRow {
            r,
            count,
            ball_measure,
            bound,
            pass: count as f64 <= bound,
        });
    }
    Ok(ThetaReport {
        k,
        pass: rows.iter().all(|r| r.pass),
        rows,
        smallest_k,
    })
}
