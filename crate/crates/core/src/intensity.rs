//! Lévy intensity models `λ(ds) = l(s)/s ds` on the positive half-line.
//!
//! All integrals against `λ` are taken in log-mass coordinates `u = ln s`,
//! where `λ(du) = l(e^u) du` has no singularity at the origin.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::quadrature::{
    integrate, integrate_from_neg_infinity, integrate_real_line, integrate_to_infinity, QuadOptions, QuadResult,
};

/// Serializable description of a built-in intensity model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Gamma,
    SmoothedLogPower { alpha: f64 },
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied `l` with its derivative and the limit `l(0)`.
#[derive(Clone)]
pub struct CustomIntensity {
    pub name: String,
    pub l: ScalarFn,
    pub dl: ScalarFn,
    pub l_zero: f64,
}

impl fmt::Debug for CustomIntensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomIntensity")
            .field("name", &self.name)
            .field("l_zero", &self.l_zero)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub enum ModelKind {
    /// `l(s) = e^{-s}`: the gamma random measure.
    Gamma,
    /// `l(s) = (ln(1 + 1/s))^{-α} e^{-s}`, which behaves like `(-ln s)^{-α}` at 0.
    SmoothedLogPower {
        alpha: f64,
    },
    Custom(CustomIntensity),
}

struct ModelInner {
    kind: ModelKind,
    tables: Mutex<HashMap<u64, Arc<MassSampler>>>,
}

/// An intensity model. Cloning is cheap; inverse-CDF tables are shared.
#[derive(Clone)]
pub struct IntensityModel {
    inner: Arc<ModelInner>,
}

impl fmt::Debug for IntensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("IntensityModel").field(&self.inner.kind).finish()
    }
}

fn quad_tight() -> QuadOptions {
    QuadOptions::with_tol(1e-12, 1e-12)
}

impl IntensityModel {
    fn from_kind(kind: ModelKind) -> Self {
        Self {
            inner: Arc::new(ModelInner {
                kind,
                tables: Mutex::new(HashMap::new()),
            }),
        }
    }

    pub fn gamma() -> Self {
        Self::from_kind(ModelKind::Gamma)
    }

    pub fn smoothed_log_power(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(config(format!("log-power exponent must be positive, got {alpha}")));
        }
        Ok(Self::from_kind(ModelKind::SmoothedLogPower { alpha }))
    }

    pub fn custom(
        name: impl Into<String>,
        l: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dl: impl Fn(f64) -> f64 + Send + Sync + 'static,
        l_zero: f64,
    ) -> Self {
        Self::from_kind(ModelKind::Custom(CustomIntensity {
            name: name.into(),
            l: Arc::new(l),
            dl: Arc::new(dl),
            l_zero,
        }))
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        match *spec {
            ModelSpec::Gamma => Ok(Self::gamma()),
            ModelSpec::SmoothedLogPower { alpha } => Self::smoothed_log_power(alpha),
        }
    }

    pub fn kind(&self) -> &ModelKind {
        &self.inner.kind
    }

    pub fn spec(&self) -> Option<ModelSpec> {
        match self.inner.kind {
            ModelKind::Gamma => Some(ModelSpec::Gamma),
            ModelKind::SmoothedLogPower { alpha } => Some(ModelSpec::SmoothedLogPower { alpha }),
            ModelKind::Custom(_) => None,
        }
    }

    pub fn name(&self) -> String {
        match &self.inner.kind {
            ModelKind::Gamma => "gamma".to_string(),
            ModelKind::SmoothedLogPower { alpha } => format!("smoothed_log_power(alpha={alpha})"),
            ModelKind::Custom(c) => c.name.clone(),
        }
    }

    /// `l(s)` without argument checks.
    #[inline]
    pub fn l(&self, s: f64) -> f64 {
        match &self.inner.kind {
            ModelKind::Gamma => (-s).exp(),
            ModelKind::SmoothedLogPower { alpha } => {
                let decay = (-s).exp();
                if decay == 0.0 {
                    0.0
                } else {
                    log_ratio(s).powf(-alpha) * decay
                }
            }
            ModelKind::Custom(c) => (c.l)(s),
        }
    }

    /// `ln l(s)` without argument checks.
    #[inline]
    pub fn ln_l(&self, s: f64) -> f64 {
        match &self.inner.kind {
            ModelKind::Gamma => -s,
            ModelKind::SmoothedLogPower { alpha } => -alpha * log_ratio(s).ln() - s,
            ModelKind::Custom(c) => (c.l)(s).ln(),
        }
    }

    /// `l(e^u)`, stable for very negative `u`.
    #[inline]
    pub fn l_log(&self, u: f64) -> f64 {
        match &self.inner.kind {
            ModelKind::Gamma => (-u.exp()).exp(),
            ModelKind::SmoothedLogPower { alpha } => {
                let decay = (-u.exp()).exp();
                if decay == 0.0 {
                    return 0.0;
                }
                let big = if u < 0.0 { u.exp().ln_1p() - u } else { (-u).exp().ln_1p() };
                big.powf(-alpha) * decay
            }
            ModelKind::Custom(c) => (c.l)(u.exp()),
        }
    }

    #[inline]
    pub fn dl(&self, s: f64) -> f64 {
        match &self.inner.kind {
            ModelKind::Custom(c) => (c.dl)(s),
            _ => {
                let l = self.l(s);
                if l == 0.0 {
                    0.0
                } else {
                    self.log_deriv(s) * l
                }
            }
        }
    }

    /// `s·l'(s)`, finite even where `1/s` overflows.
    #[inline]
    pub fn s_dl(&self, s: f64) -> f64 {
        match &self.inner.kind {
            ModelKind::Gamma => {
                let d = (-s).exp();
                if d == 0.0 {
                    0.0
                } else {
                    -s * d
                }
            }
            ModelKind::SmoothedLogPower { alpha } => {
                let l = self.l(s);
                if l == 0.0 {
                    0.0
                } else {
                    l * (alpha / ((1.0 + s) * log_ratio(s)) - s)
                }
            }
            ModelKind::Custom(c) => s * (c.dl)(s),
        }
    }

    /// `s·l'(s)` at `s = e^u`, stable for very negative `u`.
    #[inline]
    pub fn s_dl_log(&self, u: f64) -> f64 {
        match &self.inner.kind {
            ModelKind::SmoothedLogPower { alpha } => {
                let l = self.l_log(u);
                if l == 0.0 {
                    return 0.0;
                }
                let s = u.exp();
                let big = if u < 0.0 { s.ln_1p() - u } else { (-u).exp().ln_1p() };
                l * (alpha / ((1.0 + s) * big) - s)
            }
            _ => self.s_dl(u.exp()),
        }
    }

    /// `l'(s)/l(s)` without argument checks.
    #[inline]
    pub fn log_deriv(&self, s: f64) -> f64 {
        match &self.inner.kind {
            ModelKind::Gamma => -1.0,
            ModelKind::SmoothedLogPower { alpha } => alpha / (s * (1.0 + s) * log_ratio(s)) - 1.0,
            ModelKind::Custom(c) => (c.dl)(s) / (c.l)(s),
        }
    }

    /// `s·l'(s)/l(s)` at `s = e^u`, finite for every real `u`.
    #[inline]
    pub fn elasticity_log(&self, u: f64) -> f64 {
        match &self.inner.kind {
            ModelKind::Gamma => -u.exp(),
            ModelKind::SmoothedLogPower { alpha } => {
                let s = u.exp();
                let big = if u < 0.0 { s.ln_1p() - u } else { (-u).exp().ln_1p() };
                alpha / ((1.0 + s) * big) - s
            }
            ModelKind::Custom(c) => {
                let s = u.exp();
                s * (c.dl)(s) / (c.l)(s)
            }
        }
    }

    /// `l(0) = lim_{s→0} l(s)`.
    pub fn l_zero(&self) -> f64 {
        match &self.inner.kind {
            ModelKind::Gamma => 1.0,
            ModelKind::SmoothedLogPower { .. } => 0.0,
            ModelKind::Custom(c) => c.l_zero,
        }
    }

    pub fn l_value(&self, s: f64) -> Result<f64> {
        check_mass(s)?;
        Ok(self.l(s))
    }

    pub fn log_derivative(&self, s: f64) -> Result<f64> {
        check_mass(s)?;
        Ok(self.log_deriv(s))
    }

    /// `λ((a, b)) = ∫_a^b l(s)/s ds`; `b` may be `f64::INFINITY`.
    pub fn lambda_interval(&self, a: f64, b: f64) -> Result<f64> {
        check_mass(a)?;
        if b.is_nan() || b < a {
            return Err(domain(format!("interval ({a}, {b}) is empty or reversed")));
        }
        if a == b {
            return Ok(0.0);
        }
        let opts = QuadOptions::with_tol(1e-10, 1e-12);
        let r = if b.is_infinite() {
            integrate_to_infinity(|u| self.l_log(u), a.ln(), &opts)
        } else {
            integrate(|u| self.l_log(u), a.ln(), b.ln(), &opts)
        };
        if !r.converged || !r.value.is_finite() {
            return Err(crate::Error::Numerical(format!(
                "λ(({a}, {b})) did not converge for {}",
                self.name()
            )));
        }
        Ok(r.value)
    }

    /// The metric `d_λ(s1, s2) = λ((min, max))`.
    pub fn d_lambda(&self, s1: f64, s2: f64) -> Result<f64> {
        check_mass(s1)?;
        check_mass(s2)?;
        self.lambda_interval(s1.min(s2), s1.max(s2))
    }

    /// `λ([ε, ∞))`, the mean number of atoms per unit volume above the cut.
    pub fn tail_mass(&self, eps: f64) -> Result<f64> {
        self.lambda_interval(eps, f64::INFINITY)
    }

    /// `∫_a^b l(s) ds = ∫_a^b s λ(ds)`; `a` may be 0 and `b` infinite.
    pub fn mass_integral(&self, a: f64, b: f64) -> Result<f64> {
        if !(a >= 0.0) || b.is_nan() || b < a {
            return Err(domain(format!("invalid mass interval ({a}, {b})")));
        }
        if a == b {
            return Ok(0.0);
        }
        let f = |u: f64| {
            let v = self.l_log(u);
            if v == 0.0 {
                0.0
            } else {
                v * u.exp()
            }
        };
        let opts = quad_tight();
        let r = match (a == 0.0, b.is_infinite()) {
            (true, true) => integrate_real_line(f, 0.0, &opts),
            (true, false) => integrate_from_neg_infinity(f, b.ln(), &opts),
            (false, true) => integrate_to_infinity(f, a.ln(), &opts),
            (false, false) => integrate(f, a.ln(), b.ln(), &opts),
        };
        if !r.converged || !r.value.is_finite() {
            return Err(crate::Error::Numerical(format!("∫ l ds over ({a}, {b}) did not converge")));
        }
        Ok(r.value)
    }

    /// Expected total mass of the atoms dropped by truncating at `eps`:
    /// `volume · ∫_0^ε l(s) ds`.
    pub fn truncated_mass_bias(&self, eps: f64, volume: f64) -> Result<f64> {
        check_mass(eps)?;
        if !(volume > 0.0) {
            return Err(domain(format!("volume must be positive, got {volume}")));
        }
        Ok(volume * self.mass_integral(0.0, eps)?)
    }

    /// Inverse-CDF sampler for `λ` restricted to `[ε, ∞)`, built once per `ε`.
    pub fn mass_sampler(&self, eps: f64) -> Result<Arc<MassSampler>> {
        check_mass(eps)?;
        let key = eps.to_bits();
        if let Some(t) = self.inner.tables.lock().expect("table cache poisoned").get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(MassSampler::build(self, eps)?);
        self.inner
            .tables
            .lock()
            .expect("table cache poisoned")
            .entry(key)
            .or_insert_with(|| Arc::clone(&table));
        Ok(table)
    }

    pub fn sample_mass<R: Rng + ?Sized>(&self, eps: f64, rng: &mut R) -> Result<f64> {
        Ok(self.mass_sampler(eps)?.sample(rng))
    }

    /// Smallest `s ≥ 1` (a power of two) beyond which `l` is negligible.
    fn upper_cutoff(&self) -> Result<f64> {
        let reference = self.l(1.0).max(f64::MIN_POSITIVE);
        let mut s = 1.0_f64;
        for _ in 0..64 {
            s *= 2.0;
            let v = self.l(s);
            if v.is_finite() && v <= 1e-20 * reference && self.l(2.0 * s) <= v {
                return Ok(s);
            }
        }
        Err(config(format!("l(s) does not decay for large s in model {}", self.name())))
    }

    /// Numerically checks the integrability and regularity hypotheses on `l`.
    pub fn check_conditions(&self, n_max: u32) -> ConditionReport {
        conditions::check_all(self, n_max.max(1))
    }
}

/// `ln(1 + 1/s)` without cancellation.
#[inline]
fn log_ratio(s: f64) -> f64 {
    if s < 1.0 {
        s.ln_1p() - s.ln()
    } else {
        (1.0 / s).ln_1p()
    }
}

fn check_mass(s: f64) -> Result<()> {
    if s.is_finite() && s > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("mass must be positive and finite, got {s}")))
    }
}

/// Tabulated inverse CDF of `λ` on `[ε, ∞)` in log-mass coordinates.
///
/// The cumulative integral is stored on knots `u_k`, with the density `l(e^u)`
/// as the exact slope, and interpolated by cubic Hermite pieces. Cells are
/// bisected until the interpolant is monotone and within `1e-9` (normalized)
/// of the quadrature CDF at every cell midpoint.
#[derive(Clone, Debug)]
pub struct MassSampler {
    eps: f64,
    knots: Vec<f64>,
    cum: Vec<f64>,
    slope: Vec<f64>,
    total: f64,
}

const CDF_TOL: f64 = 1e-9;

impl MassSampler {
    fn build(model: &IntensityModel, eps: f64) -> Result<Self> {
        let u_lo = eps.ln();
        let s_hi = model.upper_cutoff()?.max(2.0 * eps);
        let u_hi = s_hi.ln();
        let f = |u: f64| model.l_log(u);
        let cell_opts = QuadOptions::with_tol(1e-16, 1e-13);
        let n0 = (((u_hi - u_lo) / 0.25).ceil() as usize).max(32);
        let h = (u_hi - u_lo) / n0 as f64;
        let mut knots: Vec<f64> = (0..=n0).map(|i| u_lo + h * i as f64).collect();
        knots[n0] = u_hi;
        let mut pieces: Vec<f64> = knots.windows(2).map(|w| integrate(f, w[0], w[1], &cell_opts).value).collect();
        let total_est: f64 = pieces.iter().sum();
        if !(total_est.is_finite() && total_est > 0.0) {
            return Err(config(format!(
                "λ([{eps}, ∞)) is zero or not finite for model {}",
                model.name()
            )));
        }
        let abs_tol = CDF_TOL * total_est;
        // Refine: a work list of (u0, u1, integral over cell).
        let mut done: Vec<(f64, f64, f64)> = Vec::new();
        let mut work: Vec<(f64, f64, f64)> = knots
            .windows(2)
            .zip(pieces.drain(..))
            .map(|(w, p)| (w[0], w[1], p))
            .rev()
            .collect();
        while let Some((a, b, p)) = work.pop() {
            let m = 0.5 * (a + b);
            let left = integrate(f, a, m, &cell_opts).value;
            let (fa, fb) = (f(a), f(b));
            let delta = b - a;
            let predicted = hermite(0.5, 0.0, p, delta * fa, delta * fb);
            let secant = p / delta;
            let monotone = if secant > 0.0 {
                let (x, y) = (fa / secant, fb / secant);
                x * x + y * y <= 9.0
            } else {
                fa == 0.0 && fb == 0.0
            };
            if ((predicted - left).abs() <= abs_tol && monotone) || delta < 1e-12 {
                done.push((a, b, p));
            } else {
                if done.len() + work.len() > 2_000_000 {
                    return Err(crate::Error::Numerical("inverse-CDF table refinement exploded".into()));
                }
                work.push((m, b, p - left));
                work.push((a, m, left));
            }
        }
        let mut knots = Vec::with_capacity(done.len() + 1);
        let mut cum = Vec::with_capacity(done.len() + 1);
        let mut acc = 0.0;
        knots.push(done[0].0);
        cum.push(0.0);
        for &(_, b, p) in &done {
            acc += p;
            knots.push(b);
            cum.push(acc);
        }
        let slope = knots.iter().map(|&u| f(u)).collect();
        Ok(Self {
            eps,
            knots,
            cum,
            slope,
            total: acc,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    /// `λ([ε, ∞))` as tabulated.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn cells(&self) -> usize {
        self.knots.len() - 1
    }

    /// Tabulated normalized CDF at mass `s`.
    pub fn cdf(&self, s: f64) -> f64 {
        if s <= self.eps {
            return 0.0;
        }
        let u = s.ln();
        if u >= *self.knots.last().unwrap() {
            return 1.0;
        }
        let i = self.knots.partition_point(|&k| k <= u) - 1;
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        let d = b - a;
        let t = (u - a) / d;
        (self.cum[i]
            + hermite(
                t,
                0.0,
                self.cum[i + 1] - self.cum[i],
                d * self.slope[i],
                d * self.slope[i + 1],
            ))
            / self.total
    }

    /// Mass whose tabulated CDF equals `p` in `[0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let target = p.clamp(0.0, 1.0) * self.total;
        let n = self.knots.len() - 1;
        let i = (self.cum.partition_point(|&c| c <= target).max(1) - 1).min(n - 1);
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        let d = b - a;
        let (c0, c1) = (self.cum[i], self.cum[i + 1]);
        let (m0, m1) = (d * self.slope[i], d * self.slope[i + 1]);
        let goal = target - c0;
        let span = c1 - c0;
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        let mut t = if span > 0.0 { (goal / span).clamp(0.0, 1.0) } else { 0.5 };
        for _ in 0..60 {
            let v = hermite(t, 0.0, span, m0, m1) - goal;
            if v > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            if v.abs() <= 1e-15 * self.total || hi - lo < 1e-15 {
                break;
            }
            let dv = hermite_dt(t, 0.0, span, m0, m1);
            let next = if dv > 0.0 { t - v / dv } else { f64::NAN };
            t = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        }
        (a + t * d).exp().max(self.eps)
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

#[inline]
fn hermite(t: f64, c0: f64, c1: f64, m0: f64, m1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * c0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * c1 + (t3 - t2) * m1
}

#[inline]
fn hermite_dt(t: f64, c0: f64, c1: f64, m0: f64, m1: f64) -> f64 {
    let t2 = t * t;
    (6.0 * t2 - 6.0 * t) * c0 + (3.0 * t2 - 4.0 * t + 1.0) * m0 + (-6.0 * t2 + 6.0 * t) * c1 + (3.0 * t2 - 2.0 * t) * m1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub name: String,
    pub description: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    pub value: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionReport {
    pub model: String,
    pub n_max: u32,
    pub conditions: Vec<ConditionEntry>,
    pub all_pass: bool,
}

impl ConditionReport {
    pub fn entry(&self, name: &str) -> Option<&ConditionEntry> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

mod conditions {
    use super::*;

    // Values above this are treated as divergent.
    const FINITE_CAP: f64 = 1e12;
    const SUP_GRID: usize = 64;

    fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        let (a, b) = (lo.ln(), hi.ln());
        (0..n).map(move |i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
    }

    /// Improper integral verdict: converged, finite, and stable when the
    /// tolerance is tightened (relative change below 1e-6).
    fn improper(f: impl Fn(f64) -> f64 + Copy, run: impl Fn(&dyn Fn(f64) -> f64, &QuadOptions) -> QuadResult) -> (f64, bool) {
        let coarse = run(&f, &QuadOptions::with_tol(1e-9, 1e-9));
        let fine = run(&f, &QuadOptions::with_tol(1e-12, 1e-12));
        let stable = (fine.value - coarse.value).abs() <= 1e-6 * fine.value.abs().max(1e-12);
        let ok = coarse.converged && fine.converged && fine.value.is_finite() && fine.value.abs() < FINITE_CAP && stable;
        (if ok { fine.value } else { f64::INFINITY }, ok)
    }

    fn whole_line(f: &dyn Fn(f64) -> f64, o: &QuadOptions) -> QuadResult {
        integrate_real_line(f, 0.0, o)
    }

    /// Supremum over a log grid, required to be stable when the grid is
    /// extended by four decades on each side.
    fn bounded_sup(f: impl Fn(f64) -> f64, lo: f64, hi: f64, extend_hi: bool) -> (f64, bool) {
        let base = log_grid(lo, hi, 1024).map(&f).fold(f64::NEG_INFINITY, f64::max);
        let ext_hi = if extend_hi { hi * 1e4 } else { hi };
        let ext = log_grid(lo * 1e-4, ext_hi, 1536).map(&f).fold(f64::NEG_INFINITY, f64::max);
        let ok = base.is_finite() && ext.is_finite() && ext < FINITE_CAP && ext <= base + 1e-2 * base.abs().max(1.0);
        (ext, ok)
    }

    pub(super) fn check_all(model: &IntensityModel, n_max: u32) -> ConditionReport {
        let mut out = Vec::new();
        let mut push = |name: &str, description: &str, level: Option<u32>, value: f64, ok: bool| {
            out.push(ConditionEntry {
                name: name.to_string(),
                description: description.to_string(),
                level,
                value,
                verdict: Verdict::from_bool(ok),
            });
        };

        // ∫ l(s) min{1, 1/s} ds = ∫ l(e^u) min{e^u, 1} du
        let (v, ok) = improper(|u: f64| model.l_log(u) * u.exp().min(1.0), whole_line);
        push("levy_integrability", "∫ l(s)·min{1, 1/s} ds < ∞", None, v, ok);

        let pos = log_grid(1e-12, 1e2, 2048).all(|s| model.l(s) > 0.0);
        push(
            "positivity",
            "l(s) > 0 for s > 0 (log grid 1e-12..1e2)",
            None,
            f64::from(u8::from(pos)),
            pos,
        );

        // sup_{r∈[1/n,n]} ∫_0^1 |l(rs) - l(s)| s^{-1} ds
        for n in 1..=n_max {
            let nf = f64::from(n);
            let mut worst = 0.0_f64;
            let mut ok = true;
            for r in log_grid(1.0 / nf, nf, SUP_GRID) {
                let lr = r.ln();
                let (v, good) = improper(
                    move |u: f64| (model.l_log(u + lr) - model.l_log(u)).abs(),
                    |f, o| integrate_from_neg_infinity(f, 0.0, o),
                );
                ok &= good;
                worst = worst.max(v);
            }
            push(
                "local_quasi_invariance",
                "sup_{r∈[1/n,n]} ∫_(0,1) |l(rs) - l(s)| s^{-1} ds < ∞",
                Some(n),
                worst,
                ok,
            );
        }

        // ∫_(0, ρ/n) sup_{u∈[s/n, sn]} |l'(u)| ds with ρ = 1/2
        for n in 1..=n_max {
            let nf = f64::from(n);
            let top = (0.5 / nf).ln();
            let (v, ok) = improper(
                move |w: f64| {
                    let ln_n = nf.ln();
                    (0..SUP_GRID)
                        .map(|k| {
                            let v = w - ln_n + 2.0 * ln_n * k as f64 / (SUP_GRID - 1) as f64;
                            model.s_dl_log(v).abs() * (w - v).exp()
                        })
                        .fold(0.0, f64::max)
                },
                |f, o| integrate_from_neg_infinity(f, top, o),
            );
            push(
                "derivative_envelope",
                "∫_(0,ρ/n) sup_{u∈[s/n,sn]} |l'(u)| ds < ∞ (ρ = 1/2)",
                Some(n),
                v,
                ok,
            );
        }

        // l ∈ C²: finite second differences of l on a log grid
        let c2 = log_grid(1e-10, 1e3, 2048).all(|s| {
            let h = 1e-4 * s;
            let d2 = (model.dl(s + h) - model.dl(s - h)) / (2.0 * h);
            d2.is_finite() && model.dl(s).is_finite()
        });
        push(
            "twice_differentiable",
            "l ∈ C²(ℝ₊) (finite second differences)",
            None,
            f64::from(u8::from(c2)),
            c2,
        );

        let (v, ok) = improper(|u: f64| model.s_dl_log(u).abs(), whole_line);
        push("derivative_integrable", "l' ∈ L¹(ℝ₊)", None, v, ok);

        let (v, ok) = bounded_sup(|s| model.log_deriv(s) * s, 1e-12, 1e6, true);
        push("drift_upper_bound", "sup_s s·l'(s)/l(s) < ∞", None, v, ok);

        let (v, ok) = bounded_sup(|s| model.log_deriv(s) * s / s.ln(), 1e-12, 0.5, false);
        push("drift_log_bound", "sup_{s∈(0,1/2]} s·l'(s)/(l(s)·ln s) < ∞", None, v, ok);

        let all_pass = out.iter().all(|c| c.verdict.passed());
        ConditionReport {
            model: model.name(),
            n_max,
            conditions: out,
            all_pass,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::{ks_critical_1pct, ks_statistic, Estimate};

    // E_1(1) and E_1(1e-6), the exponential integral.
    const E1_ONE: f64 = 0.219_383_934_395_520_3;
    const E1_MICRO: f64 = 13.238_295_893_062_49;

    #[test]
    fn gamma_values() {
        let m = IntensityModel::gamma();
        assert!((m.l_value(1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((m.l_value(1e-12).unwrap() - m.l_zero()).abs() < 1e-11);
        assert_eq!(m.log_derivative(0.3).unwrap(), -1.0);
        assert!(m.l_value(0.0).is_err());
        assert!(m.l_value(-1.0).is_err());
        assert!(m.log_derivative(0.0).is_err());
    }

    #[test]
    fn log_power_matches_asymptote_near_zero() {
        let m = IntensityModel::smoothed_log_power(1.0).unwrap();
        let s: f64 = 1e-6;
        let asym = (-s.ln()).powf(-1.0);
        assert!((m.l_value(s).unwrap() / asym - 1.0).abs() < 0.05);
        let s: f64 = 1e-8;
        let asymptote = -1.0 / (s * f64::ln(s));
        assert!((m.log_derivative(s).unwrap() / asymptote - 1.0).abs() < 1e-6);
        assert_eq!(m.l_zero(), 0.0);
        // l_log agrees with l at moderate arguments
        for u in [-5.0, -0.3, 0.0, 0.7, 3.0] {
            assert!((m.l_log(u) - m.l(f64::exp(u))).abs() < 1e-14);
        }
    }

    #[test]
    fn ln_l_is_log_of_l() {
        for m in [IntensityModel::gamma(), IntensityModel::smoothed_log_power(0.7).unwrap()] {
            for s in [1e-9, 1e-3, 0.4, 1.0, 30.0] {
                assert!((m.ln_l(s) - m.l(s).ln()).abs() < 1e-13 * m.ln_l(s).abs().max(1.0));
            }
        }
    }

    #[test]
    fn log_derivative_matches_finite_differences() {
        let models = [
            IntensityModel::gamma(),
            IntensityModel::smoothed_log_power(1.0).unwrap(),
            IntensityModel::smoothed_log_power(0.4).unwrap(),
        ];
        for m in &models {
            let s: f64 = 0.5;
            let h = 1e-6;
            let fd = (m.l(s + h).ln() - m.l(s - h).ln()) / (2.0 * h);
            let an = m.log_derivative(s).unwrap();
            assert!((fd - an).abs() <= 1e-6 * an.abs(), "{} {fd} {an}", m.name());
            for i in 0..100 {
                let s = (-8.0 + 10.0 * i as f64 / 99.0_f64).exp();
                let h = 1e-5 * s;
                let fd = (m.l(s + h).ln() - m.l(s - h).ln()) / (2.0 * h);
                let an = m.log_deriv(s);
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{} s={s} {fd} {an}", m.name());
            }
        }
    }

    #[test]
    fn lambda_intervals_against_exponential_integral() {
        let m = IntensityModel::gamma();
        assert!((m.lambda_interval(1.0, f64::INFINITY).unwrap() - E1_ONE).abs() < 1e-10);
        assert!((m.tail_mass(1e-6).unwrap() - E1_MICRO).abs() < 1e-9);
        // asymptote -γ - ln ε + ε
        let asym = -0.577_215_664_901_532_9 - (1e-6f64).ln() + 1e-6;
        assert!((m.tail_mass(1e-6).unwrap() - asym).abs() < 1e-9);
        assert_eq!(m.lambda_interval(2.0, 2.0).unwrap(), 0.0);
        assert!(m.lambda_interval(0.0, 1.0).is_err());
        assert!(m.lambda_interval(2.0, 1.0).is_err());
    }

    #[test]
    fn d_lambda_metric() {
        let m = IntensityModel::gamma();
        // E_1(1) - E_1(2)
        assert!((m.d_lambda(1.0, 2.0).unwrap() - 0.170_483_423_687_459_4).abs() < 1e-10);
        assert_eq!(m.d_lambda(0.7, 0.7).unwrap(), 0.0);
        let mut rng = stream(&[5]);
        for _ in 0..50 {
            let a = (rng.random::<f64>() * 6.0 - 4.0).exp();
            let b = (rng.random::<f64>() * 6.0 - 4.0).exp();
            let c = (rng.random::<f64>() * 6.0 - 4.0).exp();
            let ab = m.d_lambda(a, b).unwrap();
            assert_eq!(ab, m.d_lambda(b, a).unwrap());
            assert!(ab <= m.d_lambda(a, c).unwrap() + m.d_lambda(c, b).unwrap() + 1e-9);
        }
    }

    #[test]
    fn truncated_mass_bias_values() {
        let m = IntensityModel::gamma();
        let v = m.truncated_mass_bias(1e-3, 1.0).unwrap();
        assert!((v - (1.0 - (-1e-3f64).exp())).abs() < 1e-14);
        assert!(m.truncated_mass_bias(1e-300, 1.0).unwrap() < 1e-299);
        // log-power α = 1: independent quadrature in s (midpoint-free substitution s = ε t²)
        let m = IntensityModel::smoothed_log_power(1.0).unwrap();
        let eps = 1e-3;
        let oracle = crate::quadrature::integrate(
            |t: f64| if t == 0.0 { 0.0 } else { m.l(eps * t * t) * 2.0 * eps * t },
            0.0,
            1.0,
            &QuadOptions::with_tol(1e-16, 1e-12),
        )
        .value;
        assert!(
            (m.truncated_mass_bias(eps, 1.0).unwrap() - oracle).abs() < 1e-12 * oracle.max(1e-3) + 1e-15,
            "{oracle}"
        );
        assert!((oracle - 1.280_780_344_807e-4).abs() < 1e-12);
    }

    #[test]
    fn sampler_table_is_accurate() {
        for m in [IntensityModel::gamma(), IntensityModel::smoothed_log_power(1.0).unwrap()] {
            let t = m.mass_sampler(1e-6).unwrap();
            let total = m.tail_mass(1e-6).unwrap();
            assert!((t.total() / total - 1.0).abs() < 1e-9);
            for s in [2e-6, 1e-4, 0.01, 0.3, 1.0, 2.5, 7.0] {
                let exact = m.lambda_interval(1e-6, s).unwrap() / total;
                assert!((t.cdf(s) - exact).abs() < 1e-8, "{} s={s}", m.name());
                let q = t.quantile(exact);
                let back = m.lambda_interval(1e-6, q).unwrap() / total;
                assert!((back - exact).abs() < 1e-8, "{} q={q} s={s}", m.name());
            }
            // cached
            assert!(Arc::ptr_eq(&t, &m.mass_sampler(1e-6).unwrap()));
        }
    }

    #[test]
    fn sample_mass_gamma_mean_above_one() {
        let m = IntensityModel::gamma();
        let mut rng = stream(&[11]);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| m.sample_mass(1.0, &mut rng).unwrap()).collect();
        assert!(xs.iter().all(|&x| x >= 1.0));
        let e = Estimate::from_samples(&xs);
        // ∫_1^∞ e^{-s} ds / E_1(1), both by quadrature
        let oracle = m.mass_integral(1.0, f64::INFINITY).unwrap() / m.tail_mass(1.0).unwrap();
        assert!((oracle - 1.676_875_028_178_699).abs() < 1e-9);
        assert!((e.mean - oracle).abs() < 3.0 * e.stderr, "{e:?} {oracle}");
    }

    #[test]
    fn sample_mass_small_cut_cdf_at_one() {
        let m = IntensityModel::gamma();
        let mut rng = stream(&[12]);
        let n = 200_000;
        let below: Vec<f64> = (0..n)
            .map(|_| f64::from(u8::from(m.sample_mass(1e-6, &mut rng).unwrap() <= 1.0)))
            .collect();
        let e = Estimate::from_samples(&below);
        let oracle = 1.0 - E1_ONE / E1_MICRO;
        assert!((oracle - 0.983_428_083_480_858_9).abs() < 1e-9);
        assert!((e.mean - oracle).abs() < 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn sample_mass_ks_against_quadrature_cdf() {
        for m in [IntensityModel::gamma(), IntensityModel::smoothed_log_power(1.0).unwrap()] {
            let eps = 1e-4;
            let mut rng = stream(&[13]);
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|_| m.sample_mass(eps, &mut rng).unwrap()).collect();
            let total = m.tail_mass(eps).unwrap();
            // Oracle CDF on a grid, interpolated in log s; independent of the table.
            let grid: Vec<(f64, f64)> = (0..=400)
                .map(|i| {
                    let s = (eps.ln() + (60f64.ln() - eps.ln()) * i as f64 / 400.0).exp();
                    (s.ln(), m.lambda_interval(eps, s).unwrap() / total)
                })
                .collect();
            let cdf = |s: f64| {
                let u = s.ln();
                let j = grid.partition_point(|g| g.0 <= u).clamp(1, grid.len() - 1);
                let (a, b) = (grid[j - 1], grid[j]);
                a.1 + (b.1 - a.1) * ((u - a.0) / (b.0 - a.0)).clamp(0.0, 1.0)
            };
            let d = ks_statistic(&xs, cdf);
            assert!(d < ks_critical_1pct(n), "{} D={d}", m.name());
        }
    }

    #[test]
    fn zero_mass_model_is_a_configuration_error() {
        let m = IntensityModel::custom("vanishing", |_| 0.0, |_| 0.0, 0.0);
        assert!(matches!(m.mass_sampler(1e-3), Err(crate::Error::Config(_))));
    }

    #[test]
    fn conditions_pass_for_built_in_models() {
        for m in [IntensityModel::gamma(), IntensityModel::smoothed_log_power(1.0).unwrap()] {
            let r = m.check_conditions(3);
            for c in &r.conditions {
                assert!(c.verdict.passed(), "{}: {:?}", m.name(), c);
            }
            assert!(r.all_pass);
            let json = serde_json::to_string(&r).unwrap();
            assert!(json.contains("\"PASS\""));
        }
    }

    #[test]
    fn envelope_at_level_one_is_l_at_half() {
        // l is increasing on (0, 1/2) for the log-power model, so the integral of |l'| is l(1/2) - l(0).
        let m = IntensityModel::smoothed_log_power(1.0).unwrap();
        let r = m.check_conditions(1);
        let e = r.entry("derivative_envelope").unwrap();
        let closed = (-0.5f64).exp() / 3f64.ln();
        assert!((e.value - closed).abs() < 1e-8, "{} {closed}", e.value);
        for u in [-50.0, -3.0, 0.2, 2.0] {
            assert!((m.s_dl_log(u) - m.s_dl(f64::exp(u))).abs() <= 1e-12 * m.s_dl_log(u).abs());
        }
    }

    #[test]
    fn inverse_s_fails_integrability() {
        let m = IntensityModel::custom("inverse", |s| 1.0 / s, |s| -1.0 / (s * s), f64::INFINITY);
        let r = m.check_conditions(1);
        assert_eq!(r.conditions[0].name, "levy_integrability");
        assert_eq!(r.conditions[0].verdict, Verdict::Fail);
        assert!(!r.all_pass);
    }
}
