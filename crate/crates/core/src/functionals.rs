//! Cylinder functions `F(η) = g(⟨⟨φ₁,η⟩⟩, …, ⟨⟨φ_N,η⟩⟩)` with product marks
//! `φ(s, x) = χ(s)u(x)`, and their exact atomwise derivatives.
//!
//! Mass profiles are written in `w = ln s`, so `sχ'(s) = χ_w` and
//! `s²χ''(s) = χ_ww - χ_w` are available without cancellation.

use serde::{Deserialize, Serialize};

use crate::cone::DiscreteMeasure;
use crate::error::{config, Result};
use crate::intensity::IntensityModel;
use crate::space::{FieldJet, Point, ScalarField, TorusSpace, VectorField, MAX_DIM};

/// Maximum number of marks in a cylinder function.
pub const MAX_MARKS: usize = 4;

/// `(χ, χ_w, χ_ww)` at one mass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProfileJet {
    pub value: f64,
    pub dw: f64,
    pub dww: f64,
}

impl ProfileJet {
    /// `sχ'(s)`.
    #[inline]
    pub fn s_d1(&self) -> f64 {
        self.dw
    }

    /// `s²χ''(s)`.
    #[inline]
    pub fn s2_d2(&self) -> f64 {
        self.dww - self.dw
    }
}

/// Smooth mass profile `χ`, given as a function of `ln s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MassProfile {
    /// Mollifier on `[lo, hi]`, peak 1 at the geometric mean.
    Bump { lo: f64, hi: f64 },
    /// 0 below `lo`, 1 on `[lo·e^ramp, hi·e^-ramp]`, 0 above `hi`.
    Plateau { lo: f64, hi: f64, ramp: f64 },
    /// Not admissible inside a cylinder function.
    Constant { value: f64 },
}

// Smooth step 0 → 1 on [0, 1] built from e^{-1/z}; returns (S, S', S'').
#[inline]
fn smooth_step(z: f64) -> (f64, f64, f64) {
    if z <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if z >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let psi = |t: f64| {
        let e = (-1.0 / t).exp();
        (e, e / (t * t), e * (1.0 / (t * t * t * t) - 2.0 / (t * t * t)))
    };
    let (a, a1, a2) = psi(z);
    let (b, b1, b2) = psi(1.0 - z);
    // d/dz of ψ(1 - z) flips the sign of odd derivatives
    let (b1, b2) = (-b1, b2);
    let d = a + b;
    let n = a1 * b - a * b1;
    let d1 = a1 + b1;
    let n1 = a2 * b - a * b2;
    (a / d, n / (d * d), (n1 * d - 2.0 * n * d1) / (d * d * d))
}

impl MassProfile {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MassProfile::Bump { lo, hi } => {
                if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                    return Err(config(format!("bump profile needs 0 < lo < hi < ∞, got [{lo}, {hi}]")));
                }
            }
            MassProfile::Plateau { lo, hi, ramp } => {
                if !(lo > 0.0 && hi > lo && hi.is_finite() && ramp > 0.0) {
                    return Err(config(format!(
                        "plateau needs 0 < lo < hi < ∞ and ramp > 0, got [{lo}, {hi}], {ramp}"
                    )));
                }
                if 2.0 * ramp > (hi / lo).ln() {
                    return Err(config("plateau ramps overlap: need 2·ramp ≤ ln(hi/lo)"));
                }
            }
            MassProfile::Constant { value } => {
                if !value.is_finite() {
                    return Err(config("constant profile must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Smallest mass in the support (0 for a constant).
    pub fn support_min(&self) -> f64 {
        match *self {
            MassProfile::Bump { lo, .. } | MassProfile::Plateau { lo, .. } => lo,
            MassProfile::Constant { .. } => 0.0,
        }
    }

    pub fn support_max(&self) -> f64 {
        match *self {
            MassProfile::Bump { hi, .. } | MassProfile::Plateau { hi, .. } => hi,
            MassProfile::Constant { .. } => f64::INFINITY,
        }
    }

    #[inline]
    pub fn jet(&self, s: f64) -> ProfileJet {
        match *self {
            MassProfile::Constant { value } => ProfileJet {
                value,
                ..ProfileJet::default()
            },
            MassProfile::Bump { lo, hi } => {
                if s <= lo || s >= hi {
                    return ProfileJet::default();
                }
                let (wl, wh) = (lo.ln(), hi.ln());
                let c = 0.5 * (wl + wh);
                let h = 0.5 * (wh - wl);
                let z = (s.ln() - c) / h;
                let p = 1.0 - z * z;
                let m = (1.0 - 1.0 / p).exp();
                let f = -2.0 * z / (p * p);
                let f1 = -2.0 / (p * p) - 8.0 * z * z / (p * p * p);
                ProfileJet {
                    value: m,
                    dw: m * f / h,
                    dww: m * (f * f + f1) / (h * h),
                }
            }
            MassProfile::Plateau { lo, hi, ramp } => {
                if s <= lo || s >= hi {
                    return ProfileJet::default();
                }
                let w = s.ln();
                let (a, a1, a2) = smooth_step((w - lo.ln()) / ramp);
                let (b, b1, b2) = smooth_step((hi.ln() - w) / ramp);
                let r = ramp;
                ProfileJet {
                    value: a * b,
                    dw: (a1 * b - a * b1) / r,
                    dww: (a2 * b - 2.0 * a1 * b1 + a * b2) / (r * r),
                }
            }
        }
    }

    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        self.jet(s).value
    }
}

/// `φ(s, x) = χ(s)·u(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkFunction {
    pub chi: MassProfile,
    pub u: ScalarField,
}

/// The pieces of a mark's derivatives at one atom.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MarkJet {
    /// `χ(s)u(x)`.
    pub value: f64,
    /// `χ(s)∇u(x)`.
    pub grad: Point,
    /// `χ(s)Δu(x)`.
    pub lap: f64,
    /// `sχ'(s)u(x)`.
    pub a: f64,
    /// `s²χ''(s)u(x)`.
    pub b: f64,
}

impl MarkFunction {
    pub fn new(chi: MassProfile, u: ScalarField) -> Self {
        Self { chi, u }
    }

    pub fn validate(&self, space: &TorusSpace) -> Result<()> {
        self.chi.validate()?;
        self.u.validate(space)
    }

    #[inline]
    pub fn value(&self, space: &TorusSpace, s: f64, x: &Point) -> f64 {
        let c = self.chi.value(s);
        if c == 0.0 {
            0.0
        } else {
            c * self.u.value(space, x)
        }
    }

    #[inline]
    pub fn jet(&self, space: &TorusSpace, s: f64, x: &Point) -> MarkJet {
        let p = self.chi.jet(s);
        if p.value == 0.0 && p.dw == 0.0 && p.dww == 0.0 {
            return MarkJet::default();
        }
        let u: FieldJet = self.u.jet(space, x);
        let mut grad = [0.0; MAX_DIM];
        for i in 0..space.dim {
            grad[i] = p.value * u.grad[i];
        }
        MarkJet {
            value: p.value * u.value,
            grad,
            lap: p.value * u.laplacian,
            a: p.s_d1() * u.value,
            b: p.s2_d2() * u.value,
        }
    }

    /// `(L^X̂φ)(s, x) = ½χΔu + ½u(s²χ'' + sχ' + s²(l'/l)χ')`.
    pub fn one_particle_generator(&self, space: &TorusSpace, model: &IntensityModel, s: f64, x: &Point) -> f64 {
        let p = self.chi.jet(s);
        let u = self.u.jet(space, x);
        let mass = p.s2_d2() + p.s_d1() + s * model.log_deriv(s) * p.s_d1();
        0.5 * p.value * u.laplacian + 0.5 * u.value * mass
    }

    /// Mass part of the alternative one-particle operator, `½(sχ'' + s(l'/l)χ')u`.
    pub fn alt_mass_generator(&self, space: &TorusSpace, model: &IntensityModel, s: f64, x: &Point) -> f64 {
        let p = self.chi.jet(s);
        0.5 * self.u.value(space, x) * (p.s2_d2() / s + model.log_deriv(s) * p.s_d1())
    }
}

/// Closed-form outer function `g: ℝ^N → ℝ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Outer {
    /// `c + Σ aᵢyᵢ`.
    Affine {
        #[serde(default)]
        constant: f64,
        coeffs: Vec<f64>,
    },
    /// `c + Σ aᵢyᵢ + Σ bᵢyᵢ²`.
    Quadratic {
        #[serde(default)]
        constant: f64,
        linear: Vec<f64>,
        diagonal: Vec<f64>,
    },
    /// `k·yᵢyⱼ`.
    Product {
        i: usize,
        j: usize,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `tanh(c + Σ aᵢyᵢ)`.
    TanhAffine {
        #[serde(default)]
        constant: f64,
        coeffs: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

/// Value, gradient and Hessian of `g`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OuterJet {
    pub value: f64,
    pub grad: [f64; MAX_MARKS],
    pub hess: [[f64; MAX_MARKS]; MAX_MARKS],
}

impl Outer {
    pub fn validate(&self, n: usize) -> Result<()> {
        let check = |v: &[f64], what: &str| {
            if v.len() != n {
                Err(config(format!("{what} has {} entries for {n} marks", v.len())))
            } else if v.iter().any(|x| !x.is_finite()) {
                Err(config(format!("{what} must be finite")))
            } else {
                Ok(())
            }
        };
        match self {
            Outer::Affine { coeffs, .. } | Outer::TanhAffine { coeffs, .. } => check(coeffs, "coefficient list"),
            Outer::Quadratic { linear, diagonal, .. } => {
                check(linear, "linear coefficients")?;
                check(diagonal, "diagonal coefficients")
            }
            Outer::Product { i, j, .. } => {
                if *i >= n || *j >= n {
                    Err(config(format!("product indices ({i}, {j}) out of range for {n} marks")))
                } else {
                    Ok(())
                }
            }
        }
    }

    #[inline]
    pub fn value(&self, y: &[f64; MAX_MARKS]) -> f64 {
        match self {
            Outer::Affine { constant, coeffs } => constant + coeffs.iter().zip(y).map(|(a, v)| a * v).sum::<f64>(),
            Outer::Quadratic {
                constant,
                linear,
                diagonal,
            } => {
                constant
                    + linear.iter().zip(y).map(|(a, v)| a * v).sum::<f64>()
                    + diagonal.iter().zip(y).map(|(b, v)| b * v * v).sum::<f64>()
            }
            Outer::Product { i, j, scale } => scale * y[*i] * y[*j],
            Outer::TanhAffine { constant, coeffs } => (constant + coeffs.iter().zip(y).map(|(a, v)| a * v).sum::<f64>()).tanh(),
        }
    }

    pub fn jet(&self, y: &[f64; MAX_MARKS]) -> OuterJet {
        let mut out = OuterJet {
            value: self.value(y),
            ..OuterJet::default()
        };
        match self {
            Outer::Affine { coeffs, .. } => {
                out.grad[..coeffs.len()].copy_from_slice(coeffs);
            }
            Outer::Quadratic { linear, diagonal, .. } => {
                for k in 0..linear.len() {
                    out.grad[k] = linear[k] + 2.0 * diagonal[k] * y[k];
                    out.hess[k][k] = 2.0 * diagonal[k];
                }
            }
            Outer::Product { i, j, scale } => {
                out.grad[*i] += scale * y[*j];
                out.grad[*j] += scale * y[*i];
                out.hess[*i][*j] += scale;
                out.hess[*j][*i] += scale;
            }
            Outer::TanhAffine { coeffs, .. } => {
                let t = out.value;
                let d1 = 1.0 - t * t;
                let d2 = -2.0 * t * d1;
                for k in 0..coeffs.len() {
                    out.grad[k] = d1 * coeffs[k];
                    for l in 0..coeffs.len() {
                        out.hess[k][l] = d2 * coeffs[k] * coeffs[l];
                    }
                }
            }
        }
        out
    }
}

/// `∇^K F` at one atom: the spatial gradient and the mass derivative `s ∂_s`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AtomGradient {
    pub spatial: Point,
    pub mass: f64,
}

/// `(Δ^X_x F, Δ^{R+}_x F)` at one atom.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AtomLaplacian {
    pub spatial: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderFunction {
    pub outer: Outer,
    pub marks: Vec<MarkFunction>,
    /// Every mark vanishes for masses below `1/level`.
    pub level: u32,
}

/// Per-atom mark jets and the outer jet at the current pairings.
struct Expanded {
    outer: OuterJet,
    atoms: Vec<[MarkJet; MAX_MARKS]>,
}

impl CylinderFunction {
    pub fn new(outer: Outer, marks: Vec<MarkFunction>, level: u32) -> Result<Self> {
        let f = Self { outer, marks, level };
        f.validate_marks()?;
        Ok(f)
    }

    fn validate_marks(&self) -> Result<()> {
        let n = self.marks.len();
        if n == 0 || n > MAX_MARKS {
            return Err(config(format!("a cylinder function needs 1..={MAX_MARKS} marks, got {n}")));
        }
        if self.level == 0 {
            return Err(config("cylinder level must be at least 1"));
        }
        self.outer.validate(n)?;
        let cut = 1.0 / f64::from(self.level);
        for m in &self.marks {
            m.chi.validate()?;
            if let MassProfile::Constant { .. } = m.chi {
                return Err(config("constant mass profiles are not admissible in a cylinder function"));
            }
            if m.chi.support_min() < cut * (1.0 - 1e-12) {
                return Err(config(format!(
                    "mark support starts at {} below the level cut 1/{} = {cut}",
                    m.chi.support_min(),
                    self.level
                )));
            }
        }
        Ok(())
    }

    pub fn validate(&self, space: &TorusSpace) -> Result<()> {
        self.validate_marks()?;
        self.marks.iter().try_for_each(|m| m.u.validate(space))
    }

    /// `(⟨⟨φ₁,η⟩⟩, …)`, zero-padded.
    #[inline]
    pub fn pairings(&self, space: &TorusSpace, eta: &DiscreteMeasure) -> [f64; MAX_MARKS] {
        let mut y = [0.0; MAX_MARKS];
        for a in &eta.atoms {
            for (k, m) in self.marks.iter().enumerate() {
                y[k] += m.value(space, a.s, &a.x);
            }
        }
        y
    }

    #[inline]
    pub fn eval(&self, space: &TorusSpace, eta: &DiscreteMeasure) -> f64 {
        self.outer.value(&self.pairings(space, eta))
    }

    fn expand(&self, space: &TorusSpace, eta: &DiscreteMeasure) -> Expanded {
        let mut y = [0.0; MAX_MARKS];
        let mut atoms = Vec::with_capacity(eta.len());
        for a in &eta.atoms {
            let mut jets = [MarkJet::default(); MAX_MARKS];
            for (k, m) in self.marks.iter().enumerate() {
                jets[k] = m.jet(space, a.s, &a.x);
                y[k] += jets[k].value;
            }
            atoms.push(jets);
        }
        Expanded {
            outer: self.outer.jet(&y),
            atoms,
        }
    }

    /// `∇^X_x F = Σ ∂ₖg·χₖ∇uₖ` and `∇^{R+}_x F = Σ ∂ₖg·sχₖ'uₖ` per atom.
    pub fn grad_atoms(&self, space: &TorusSpace, eta: &DiscreteMeasure) -> Vec<AtomGradient> {
        let e = self.expand(space, eta);
        let n = self.marks.len();
        e.atoms
            .iter()
            .map(|jets| {
                let mut g = AtomGradient::default();
                for k in 0..n {
                    let dg = e.outer.grad[k];
                    for i in 0..space.dim {
                        g.spatial[i] += dg * jets[k].grad[i];
                    }
                    g.mass += dg * jets[k].a;
                }
                g
            })
            .collect()
    }

    /// Atomwise Laplacians including the Hessian cross terms of `g`.
    pub fn laplacian_atoms(&self, space: &TorusSpace, model: &IntensityModel, eta: &DiscreteMeasure) -> Vec<AtomLaplacian> {
        let e = self.expand(space, eta);
        e.atoms
            .iter()
            .zip(&eta.atoms)
            .map(|(jets, atom)| self.atom_laplacian(space, &e.outer, jets, atom.s, model))
            .collect()
    }

    #[inline]
    fn atom_laplacian(
        &self,
        space: &TorusSpace,
        g: &OuterJet,
        jets: &[MarkJet; MAX_MARKS],
        s: f64,
        model: &IntensityModel,
    ) -> AtomLaplacian {
        let n = self.marks.len();
        let mut spatial = 0.0;
        let mut first = 0.0;
        let mut second = 0.0;
        for k in 0..n {
            let dg = g.grad[k];
            spatial += dg * jets[k].lap;
            first += dg * jets[k].a;
            second += dg * jets[k].b;
            for l in 0..n {
                let h = g.hess[k][l];
                if h != 0.0 {
                    let dot: f64 = (0..space.dim).map(|i| jets[k].grad[i] * jets[l].grad[i]).sum();
                    spatial += h * dot;
                    second += h * jets[k].a * jets[l].a;
                }
            }
        }
        // an atom outside every mark's support contributes nothing
        let drift = if first == 0.0 { 0.0 } else { s * model.log_deriv(s) * first };
        AtomLaplacian {
            spatial,
            mass: second + first + drift,
        }
    }

    /// `(L^K F)(η) = ½ Σ_x [Δ^X_x F + Δ^{R+}_x F]`.
    pub fn generator(&self, space: &TorusSpace, model: &IntensityModel, eta: &DiscreteMeasure) -> f64 {
        let e = self.expand(space, eta);
        let mut acc = 0.0;
        for (jets, atom) in e.atoms.iter().zip(&eta.atoms) {
            let l = self.atom_laplacian(space, &e.outer, jets, atom.s, model);
            acc += l.spatial + l.mass;
        }
        0.5 * acc
    }

    /// `(L^M F)(η) = Σ_x [Δ^X_x F/(2s_x) + ½(s_x f'' + s_x(l'/l) f')]`, the
    /// alternative generator with mass operator `½(sf'' + s(l'/l)f')`.
    pub fn alt_generator(&self, space: &TorusSpace, model: &IntensityModel, eta: &DiscreteMeasure) -> f64 {
        let e = self.expand(space, eta);
        let n = self.marks.len();
        let mut acc = 0.0;
        for (jets, atom) in e.atoms.iter().zip(&eta.atoms) {
            let s = atom.s;
            let l = self.atom_laplacian(space, &e.outer, jets, s, model);
            // s²f'' = Σ ∂g·b + Σ ∂²g·a a
            let mut s2f2 = 0.0;
            let mut sf1 = 0.0;
            for k in 0..n {
                s2f2 += e.outer.grad[k] * jets[k].b;
                sf1 += e.outer.grad[k] * jets[k].a;
                for m in 0..n {
                    s2f2 += e.outer.hess[k][m] * jets[k].a * jets[m].a;
                }
            }
            let drift = if sf1 == 0.0 { 0.0 } else { model.log_deriv(s) * sf1 };
            acc += l.spatial / (2.0 * s) + 0.5 * (s2f2 / s + drift);
        }
        acc
    }

    /// `∇_{(v,h)} F = Σ_x ⟨∇^X_x F, v(x)⟩ + Σ_x ∇^{R+}_x F·h(x)`.
    pub fn directional_derivative(&self, space: &TorusSpace, eta: &DiscreteMeasure, v: &VectorField, h: &ScalarField) -> f64 {
        let grads = self.grad_atoms(space, eta);
        grads
            .iter()
            .zip(&eta.atoms)
            .map(|(g, a)| {
                let vx = v.value(space, &a.x);
                let dot: f64 = (0..space.dim).map(|i| g.spatial[i] * vx[i]).sum();
                dot + if g.mass == 0.0 { 0.0 } else { g.mass * h.value(space, &a.x) }
            })
            .sum()
    }
}

/// `½⟨∇^K F, ∇^K G⟩_{T_η}`: half the sum over atoms of the spatial dot
/// product plus the product of mass derivatives.
pub fn dirichlet_integrand(f: &CylinderFunction, g: &CylinderFunction, space: &TorusSpace, eta: &DiscreteMeasure) -> f64 {
    let gf = f.grad_atoms(space, eta);
    let gg = g.grad_atoms(space, eta);
    0.5 * gf
        .iter()
        .zip(&gg)
        .map(|(a, b)| (0..space.dim).map(|i| a.spatial[i] * b.spatial[i]).sum::<f64>() + a.mass * b.mass)
        .sum::<f64>()
}

/// Finite-difference route to the atomwise derivatives, independent of the
/// chain rule: positions are shifted along coordinate axes and masses along
/// `s·e^τ`.
pub mod finite_difference {
    use super::*;

    fn moved(eta: &DiscreteMeasure, i: usize, f: impl Fn(&mut crate::cone::HatPoint)) -> DiscreteMeasure {
        let mut out = eta.clone();
        f(&mut out.atoms[i]);
        out
    }

    /// `(∇^X, s∂_s)` at atom `i`, central differences with step `h`.
    pub fn gradient(f: &CylinderFunction, space: &TorusSpace, eta: &DiscreteMeasure, i: usize, h: f64) -> AtomGradient {
        let mut g = AtomGradient::default();
        for k in 0..space.dim {
            let p = f.eval(space, &moved(eta, i, |a| a.x[k] += h));
            let m = f.eval(space, &moved(eta, i, |a| a.x[k] -= h));
            g.spatial[k] = (p - m) / (2.0 * h);
        }
        let p = f.eval(space, &moved(eta, i, |a| a.s *= h.exp()));
        let m = f.eval(space, &moved(eta, i, |a| a.s *= (-h).exp()));
        g.mass = (p - m) / (2.0 * h);
        g
    }

    /// Second central difference at steps `h` and `h/2`, Richardson-combined
    /// so the truncation error is `O(h⁴)`.
    fn second_difference(f: impl Fn(f64) -> f64, f0: f64, h: f64) -> f64 {
        let d = |h: f64| (f(h) - 2.0 * f0 + f(-h)) / (h * h);
        (4.0 * d(0.5 * h) - d(h)) / 3.0
    }

    /// `(Δ^X_x F, Δ^{R+}_x F)` at atom `i`: second differences with step `h2`
    /// and first differences with step `h1`, using
    /// `s²f'' + sf' = ∂_τ² f(se^τ)` and `sf' = ∂_τ f(se^τ)`.
    pub fn laplacian(
        f: &CylinderFunction,
        space: &TorusSpace,
        model: &IntensityModel,
        eta: &DiscreteMeasure,
        i: usize,
        h1: f64,
        h2: f64,
    ) -> AtomLaplacian {
        let f0 = f.eval(space, eta);
        let mut spatial = 0.0;
        for k in 0..space.dim {
            spatial += second_difference(|h| f.eval(space, &moved(eta, i, |a| a.x[k] += h)), f0, h2);
        }
        let ftt = second_difference(|h| f.eval(space, &moved(eta, i, |a| a.s *= h.exp())), f0, h2);
        let p = f.eval(space, &moved(eta, i, |a| a.s *= h1.exp()));
        let m = f.eval(space, &moved(eta, i, |a| a.s *= (-h1).exp()));
        let ft = (p - m) / (2.0 * h1);
        let s = eta.atoms[i].s;
        AtomLaplacian {
            spatial,
            mass: ftt + s * model.log_deriv(s) * ft,
        }
    }

    /// `½ Σ_x (Δ^X_x F + Δ^{R+}_x F)` from finite differences.
    pub fn generator(
        f: &CylinderFunction,
        space: &TorusSpace,
        model: &IntensityModel,
        eta: &DiscreteMeasure,
        h1: f64,
        h2: f64,
    ) -> f64 {
        0.5 * (0..eta.len())
            .map(|i| {
                let l = laplacian(f, space, model, eta, i, h1, h2);
                l.spatial + l.mass
            })
            .sum::<f64>()
    }

    /// [`generator`] with the second-difference step halved from `h2` until
    /// two successive values agree to `tol`, at most `max_halvings` times.
    pub fn generator_converged(
        f: &CylinderFunction,
        space: &TorusSpace,
        model: &IntensityModel,
        eta: &DiscreteMeasure,
        h2: f64,
        tol: f64,
        max_halvings: u32,
    ) -> f64 {
        let mut h = h2;
        let mut prev = generator(f, space, model, eta, 1e-5, h);
        for _ in 0..max_halvings {
            h *= 0.5;
            let next = generator(f, space, model, eta, 1e-5, h);
            if (next - prev).abs() <= tol {
                return next;
            }
            prev = next;
        }
        prev
    }

    /// Sum of the absolute atomwise contributions, the scale for relative errors.
    pub fn generator_scale(f: &CylinderFunction, space: &TorusSpace, model: &IntensityModel, eta: &DiscreteMeasure) -> f64 {
        0.5 * f
            .laplacian_atoms(space, model, eta)
            .iter()
            .map(|l| l.spatial.abs() + l.mass.abs())
            .sum::<f64>()
    }
}
