//! The flat torus `[0, L)^d` with closed-form test fields and their flows.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::quadrature::{integrate, QuadOptions};

pub const MAX_DIM: usize = 4;

/// A torus point; coordinates beyond the space dimension are zero.
pub type Point = [f64; MAX_DIM];

/// Serializes fixed arrays as variable-length lists (trailing zeros trimmed
/// to the space dimension by the caller's validation).
pub(crate) mod fixed {
    use super::MAX_DIM;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize + Copy + Default + PartialEq, S: Serializer>(
        v: &[T; MAX_DIM],
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let mut n = MAX_DIM;
        while n > 1 && v[n - 1] == T::default() {
            n -= 1;
        }
        v[..n].serialize(s)
    }

    pub fn deserialize<'de, T: Deserialize<'de> + Copy + Default, D: Deserializer<'de>>(d: D) -> Result<[T; MAX_DIM], D::Error> {
        let raw: Vec<T> = Vec::deserialize(d)?;
        if raw.is_empty() || raw.len() > MAX_DIM {
            return Err(D::Error::custom(format!(
                "expected 1..={MAX_DIM} coordinates, got {}",
                raw.len()
            )));
        }
        let mut out = [T::default(); MAX_DIM];
        out[..raw.len()].copy_from_slice(&raw);
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusSpace {
    pub dim: usize,
    pub side: f64,
}

impl TorusSpace {
    pub fn new(dim: usize, side: f64) -> Result<Self> {
        let s = Self { dim, side };
        s.validate()?;
        Ok(s)
    }

    pub fn unit_square() -> Self {
        Self { dim: 2, side: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DIM).contains(&self.dim) {
            return Err(config(format!("dimension must be in 1..={MAX_DIM}, got {}", self.dim)));
        }
        if !(self.side.is_finite() && self.side > 0.0) {
            return Err(config(format!("side length must be positive, got {}", self.side)));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    pub fn max_distance(&self) -> f64 {
        0.5 * self.side * (self.dim as f64).sqrt()
    }

    #[inline]
    pub fn wrap(&self, mut x: Point) -> Point {
        for c in x.iter_mut().take(self.dim) {
            *c = c.rem_euclid(self.side);
            // rem_euclid can round up to exactly `side`
            if *c >= self.side {
                *c = 0.0;
            }
        }
        x
    }

    /// Minimal-image displacement `y - x`, each coordinate in `[-L/2, L/2]`.
    #[inline]
    pub fn displacement(&self, x: &Point, y: &Point) -> Point {
        let mut d = [0.0; MAX_DIM];
        let l = self.side;
        for i in 0..self.dim {
            let mut t = y[i] - x[i];
            t -= l * (t / l).round();
            d[i] = t;
        }
        d
    }

    /// Periodic Euclidean distance `d_X`.
    #[inline]
    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        self.displacement(x, y).iter().map(|t| t * t).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.iter().take(self.dim).all(|&c| (0.0..self.side).contains(&c)) && x[self.dim..].iter().all(|&c| c == 0.0)
    }

    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let mut x = [0.0; MAX_DIM];
        for c in x.iter_mut().take(self.dim) {
            *c = rng.random::<f64>() * self.side;
        }
        x
    }

    /// Exact Brownian step `x + √dt·N(0, I)`, wrapped.
    pub fn brownian_increment<R: Rng + ?Sized>(&self, x: &Point, dt: f64, rng: &mut R) -> Result<Point> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(domain(format!("time step must be positive, got {dt}")));
        }
        Ok(self.brownian_step(x, dt.sqrt(), rng))
    }

    #[inline]
    pub(crate) fn brownian_step<R: Rng + ?Sized>(&self, x: &Point, sqrt_dt: f64, rng: &mut R) -> Point {
        let mut y = *x;
        for c in y.iter_mut().take(self.dim) {
            let z: f64 = rng.sample(StandardNormal);
            *c += sqrt_dt * z;
        }
        self.wrap(y)
    }

    /// Volume of the geodesic ball of radius `r` on the torus.
    pub fn ball_volume(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r >= self.max_distance() {
            return self.volume();
        }
        let half = 0.5 * self.side;
        if r <= half {
            return unit_ball_volume(self.dim) * r.powi(self.dim as i32);
        }
        cube_ball_volume(self.dim, r, half)
    }
}

/// Volume of `{|y| < r} ∩ [-a, a]^d` by nested quadrature over the first axis.
fn cube_ball_volume(d: usize, r: f64, a: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if d == 1 {
        return 2.0 * r.min(a);
    }
    if r * r >= d as f64 * a * a {
        return (2.0 * a).powi(d as i32);
    }
    let top = r.min(a);
    2.0 * integrate(
        |y| cube_ball_volume(d - 1, (r * r - y * y).max(0.0).sqrt(), a),
        0.0,
        top,
        &QuadOptions::with_tol(1e-11, 1e-10),
    )
    .value
}

pub fn unit_ball_volume(d: usize) -> f64 {
    use std::f64::consts::PI;
    match d {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        4 => 0.5 * PI * PI,
        _ => unreachable!("dimension is validated to 1..=4"),
    }
}

fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

/// Value, gradient and Laplacian of a scalar field at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    pub grad: Point,
    pub laplacian: f64,
}

/// `A·exp(1 - 1/(1 - |y|²/R²))` for `|y| < R`, zero outside; `y` is the
/// minimal-image offset from the centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpField {
    #[serde(with = "fixed")]
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
}

impl BumpField {
    pub fn new(center: &[f64], radius: f64, amplitude: f64) -> Self {
        let mut c = [0.0; MAX_DIM];
        c[..center.len()].copy_from_slice(center);
        Self {
            center: c,
            radius,
            amplitude,
        }
    }

    pub fn validate(&self, space: &TorusSpace) -> Result<()> {
        if !(self.radius > 0.0 && self.radius < 0.5 * space.side) {
            return Err(config(format!(
                "bump radius must lie in (0, L/2) = (0, {}), got {}",
                0.5 * space.side,
                self.radius
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(config("bump amplitude must be finite"));
        }
        if !space.contains(&self.center) {
            return Err(config(format!(
                "bump centre {:?} lies outside the torus",
                &self.center[..space.dim]
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn in_support(&self, space: &TorusSpace, x: &Point) -> bool {
        let y = space.displacement(&self.center, x);
        let r2: f64 = y.iter().map(|t| t * t).sum();
        r2 < self.radius * self.radius
    }

    #[inline]
    pub fn value(&self, space: &TorusSpace, x: &Point) -> f64 {
        let y = space.displacement(&self.center, x);
        let q = y.iter().map(|t| t * t).sum::<f64>() / (self.radius * self.radius);
        if q >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - 1.0 / (1.0 - q)).exp()
        }
    }

    pub fn jet(&self, space: &TorusSpace, x: &Point) -> FieldJet {
        let y = space.displacement(&self.center, x);
        let r2: f64 = y.iter().map(|t| t * t).sum();
        let rr = self.radius * self.radius;
        let q = r2 / rr;
        if q >= 1.0 {
            return FieldJet::default();
        }
        let w = 1.0 - q;
        let m = (1.0 - 1.0 / w).exp();
        // derivatives of the profile in q
        let g1 = -m / (w * w);
        let g2 = m * (2.0 * q - 1.0) / (w * w * w * w);
        let a = self.amplitude;
        let mut grad = [0.0; MAX_DIM];
        for i in 0..space.dim {
            grad[i] = a * g1 * 2.0 * y[i] / rr;
        }
        FieldJet {
            value: a * m,
            grad,
            laplacian: a * (g2 * 4.0 * r2 / (rr * rr) + g1 * 2.0 * space.dim as f64 / rr),
        }
    }

    /// Radial profile as a function of the distance to the centre.
    fn radial(&self, r: f64) -> f64 {
        let q = r * r / (self.radius * self.radius);
        if q >= 1.0 {
            0.0
        } else {
            self.amplitude * (1.0 - 1.0 / (1.0 - q)).exp()
        }
    }
}

/// `A·cos(2π k·x / L + phase)`; an eigenfunction of the Laplacian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierField {
    #[serde(with = "fixed")]
    pub k: [i32; MAX_DIM],
    #[serde(default)]
    pub phase: f64,
    pub amplitude: f64,
}

impl FourierField {
    pub fn new(k: &[i32], phase: f64, amplitude: f64) -> Self {
        let mut kk = [0; MAX_DIM];
        kk[..k.len()].copy_from_slice(k);
        Self { k: kk, phase, amplitude }
    }

    pub fn validate(&self, space: &TorusSpace) -> Result<()> {
        if self.k[space.dim..].iter().any(|&k| k != 0) {
            return Err(config("wave vector has more components than the space dimension"));
        }
        if !(self.amplitude.is_finite() && self.phase.is_finite()) {
            return Err(config("Fourier amplitude and phase must be finite"));
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        self.k.iter().all(|&k| k == 0)
    }

    /// `-(2π|k|/L)²`.
    pub fn eigenvalue(&self, space: &TorusSpace) -> f64 {
        let k2: f64 = self.k.iter().map(|&k| f64::from(k) * f64::from(k)).sum();
        let w = 2.0 * std::f64::consts::PI / space.side;
        -w * w * k2
    }

    #[inline]
    fn angle(&self, space: &TorusSpace, x: &Point) -> f64 {
        let w = 2.0 * std::f64::consts::PI / space.side;
        let mut dot = 0.0;
        for i in 0..space.dim {
            dot += f64::from(self.k[i]) * x[i];
        }
        w * dot + self.phase
    }

    #[inline]
    pub fn value(&self, space: &TorusSpace, x: &Point) -> f64 {
        self.amplitude * self.angle(space, x).cos()
    }

    pub fn jet(&self, space: &TorusSpace, x: &Point) -> FieldJet {
        let a = self.angle(space, x);
        let value = self.amplitude * a.cos();
        let w = 2.0 * std::f64::consts::PI / space.side;
        let s = -self.amplitude * a.sin();
        let mut grad = [0.0; MAX_DIM];
        for i in 0..space.dim {
            grad[i] = s * w * f64::from(self.k[i]);
        }
        FieldJet {
            value,
            grad,
            laplacian: self.eigenvalue(space) * value,
        }
    }
}

/// Scalar test field on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarField {
    Zero,
    Constant { value: f64 },
    Bump(BumpField),
    Fourier(FourierField),
}

impl ScalarField {
    pub fn validate(&self, space: &TorusSpace) -> Result<()> {
        match self {
            ScalarField::Zero => Ok(()),
            ScalarField::Constant { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(config("constant field must be finite"))
                }
            }
            ScalarField::Bump(b) => b.validate(space),
            ScalarField::Fourier(f) => f.validate(space),
        }
    }

    #[inline]
    pub fn value(&self, space: &TorusSpace, x: &Point) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Constant { value } => *value,
            ScalarField::Bump(b) => b.value(space, x),
            ScalarField::Fourier(f) => f.value(space, x),
        }
    }

    pub fn jet(&self, space: &TorusSpace, x: &Point) -> FieldJet {
        match self {
            ScalarField::Zero => FieldJet::default(),
            ScalarField::Constant { value } => FieldJet {
                value: *value,
                ..FieldJet::default()
            },
            ScalarField::Bump(b) => b.jet(space, x),
            ScalarField::Fourier(f) => f.jet(space, x),
        }
    }

    /// Exact `(inf, sup)` of the field over the torus.
    pub fn range(&self) -> (f64, f64) {
        match self {
            ScalarField::Zero => (0.0, 0.0),
            ScalarField::Constant { value } => (*value, *value),
            ScalarField::Bump(b) => (b.amplitude.min(0.0), b.amplitude.max(0.0)),
            ScalarField::Fourier(f) if f.is_constant() => {
                let v = f.amplitude * f.phase.cos();
                (v, v)
            }
            ScalarField::Fourier(f) => (-f.amplitude.abs(), f.amplitude.abs()),
        }
    }

    /// True when the field vanishes identically.
    pub fn is_zero(&self) -> bool {
        self.range() == (0.0, 0.0)
    }

    /// `∫_X f(u(x)) dx`, reduced to a one-dimensional integral: radial over a
    /// bump's ball, or over the phase for a nonconstant Fourier mode.
    pub fn integrate_composed(&self, space: &TorusSpace, f: impl Fn(f64) -> f64, opts: &QuadOptions) -> f64 {
        let vol = space.volume();
        match self {
            ScalarField::Zero => vol * f(0.0),
            ScalarField::Constant { value } => vol * f(*value),
            ScalarField::Fourier(fr) if fr.is_constant() => vol * f(fr.amplitude * fr.phase.cos()),
            ScalarField::Fourier(fr) => {
                let pi = std::f64::consts::PI;
                // the pushforward of dx under the phase is uniform on the circle;
                // cos is symmetric, so half a period suffices
                vol / pi * integrate(|t| f(fr.amplitude * t.cos()), 0.0, pi, opts).value
            }
            ScalarField::Bump(b) => {
                let d = space.dim;
                let f0 = f(0.0);
                let inner = integrate(|r| (f(b.radial(r)) - f0) * r.powi(d as i32 - 1), 0.0, b.radius, opts).value;
                unit_sphere_area(d) * inner + vol * f0
            }
        }
    }

    /// `∫_X u(x) dx`.
    pub fn integral(&self, space: &TorusSpace) -> f64 {
        match self {
            ScalarField::Fourier(f) if !f.is_constant() => 0.0,
            _ => self.integrate_composed(space, |v| v, &QuadOptions::with_tol(1e-14, 1e-13)),
        }
    }
}

/// One coordinate of a vector field carried by a bump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentBump {
    pub axis: usize,
    pub bump: BumpField,
}

/// Compactly supported vector field on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorField {
    Zero,
    /// `v_axis(x) = Σ bump(x)` over the listed components.
    Components {
        components: Vec<ComponentBump>,
    },
    /// Rotation generated by a stream-function bump `ψ` in the `(i, j)` plane:
    /// `v_i = ∂_j ψ`, `v_j = -∂_i ψ`; divergence-free by construction.
    Curl {
        plane: [usize; 2],
        stream: BumpField,
    },
}

/// Largest RK4 step used by [`flow`].
pub const FLOW_STEP: f64 = 1e-3;

impl VectorField {
    pub fn validate(&self, space: &TorusSpace) -> Result<()> {
        match self {
            VectorField::Zero => Ok(()),
            VectorField::Components { components } => {
                for c in components {
                    if c.axis >= space.dim {
                        return Err(config(format!("component axis {} exceeds dimension {}", c.axis, space.dim)));
                    }
                    c.bump.validate(space)?;
                }
                Ok(())
            }
            VectorField::Curl { plane, stream } => {
                if plane[0] == plane[1] || plane[0] >= space.dim || plane[1] >= space.dim {
                    return Err(config(format!(
                        "invalid rotation plane {plane:?} for dimension {}",
                        space.dim
                    )));
                }
                stream.validate(space)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            VectorField::Zero => true,
            VectorField::Components { components } => components.iter().all(|c| c.bump.amplitude == 0.0),
            VectorField::Curl { stream, .. } => stream.amplitude == 0.0,
        }
    }

    #[inline]
    pub fn in_support(&self, space: &TorusSpace, x: &Point) -> bool {
        match self {
            VectorField::Zero => false,
            VectorField::Components { components } => components.iter().any(|c| c.bump.in_support(space, x)),
            VectorField::Curl { stream, .. } => stream.in_support(space, x),
        }
    }

    #[inline]
    pub fn value(&self, space: &TorusSpace, x: &Point) -> Point {
        let mut v = [0.0; MAX_DIM];
        match self {
            VectorField::Zero => {}
            VectorField::Components { components } => {
                for c in components {
                    v[c.axis] += c.bump.value(space, x);
                }
            }
            VectorField::Curl { plane, stream } => {
                let g = stream.jet(space, x).grad;
                v[plane[0]] = g[plane[1]];
                v[plane[1]] = -g[plane[0]];
            }
        }
        v
    }

    #[inline]
    pub fn divergence(&self, space: &TorusSpace, x: &Point) -> f64 {
        match self {
            VectorField::Zero | VectorField::Curl { .. } => 0.0,
            VectorField::Components { components } => components.iter().map(|c| c.bump.jet(space, x).grad[c.axis]).sum(),
        }
    }

    /// `(v(x), div v(x))`.
    #[inline]
    fn value_div(&self, space: &TorusSpace, x: &Point) -> (Point, f64) {
        match self {
            VectorField::Components { components } => {
                let mut v = [0.0; MAX_DIM];
                let mut div = 0.0;
                for c in components {
                    let j = c.bump.jet(space, x);
                    v[c.axis] += j.value;
                    div += j.grad[c.axis];
                }
                (v, div)
            }
            _ => (self.value(space, x), 0.0),
        }
    }
}

/// Image `ψ_t(x)` of the flow of `v` together with `det Dψ_t(x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowPoint {
    pub point: Point,
    pub jacobian: f64,
}

/// RK4 integration of `ẋ = v(x)` alongside `d/dt log J = div v(x(t))`.
pub fn flow(space: &TorusSpace, v: &VectorField, t: f64, x: &Point) -> Result<FlowPoint> {
    if !(t.is_finite() && t.abs() <= 10.0) {
        return Err(domain(format!("flow time must satisfy |t| <= 10, got {t}")));
    }
    if t == 0.0 || !v.in_support(space, x) {
        return Ok(FlowPoint {
            point: *x,
            jacobian: 1.0,
        });
    }
    let steps = (t.abs() / FLOW_STEP).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    if h == 0.0 || !h.is_finite() {
        return Err(crate::Error::Numerical("flow step underflow".into()));
    }
    let mut y = *x;
    let mut log_j = 0.0;
    let shift = |p: &Point, k: &Point, c: f64| {
        let mut q = *p;
        for i in 0..space.dim {
            q[i] += c * k[i];
        }
        q
    };
    for _ in 0..steps {
        let (k1, d1) = v.value_div(space, &y);
        let (k2, d2) = v.value_div(space, &shift(&y, &k1, 0.5 * h));
        let (k3, d3) = v.value_div(space, &shift(&y, &k2, 0.5 * h));
        let (k4, d4) = v.value_div(space, &shift(&y, &k3, h));
        for i in 0..space.dim {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        log_j += h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
    }
    Ok(FlowPoint {
        point: space.wrap(y),
        jacobian: log_j.exp(),
    })
}

/// `ψ_t^v(x)`.
pub fn flow_point(space: &TorusSpace, v: &VectorField, t: f64, x: &Point) -> Result<Point> {
    Ok(flow(space, v, t, x)?.point)
}

/// `det Dψ_t^v(x)`.
pub fn flow_jacobian(space: &TorusSpace, v: &VectorField, t: f64, x: &Point) -> Result<f64> {
    Ok(flow(space, v, t, x)?.jacobian)
}
