//! Monte Carlo identity harness.
//!
//! Every check draws replica `r` from the stream `(seed, tag(check), part, r)`
//! and reduces in replica order, so recorded numbers do not depend on the
//! number of workers.

mod checks;
pub mod fixtures;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::intensity::Verdict;
use crate::parallel::try_map_indexed;
use crate::rng::{stream, tag, SimRng};
use crate::stats::Estimate;

pub use checks::{
    check_bessel, check_dirichlet_form, check_generator, check_ibp, check_intertwining, check_laplace_functional, check_mecke,
    check_partial_quasi_invariance, check_quasi_invariance, check_stationarity,
};

/// Width of the statistical gate in standard errors.
pub const SIGMAS: f64 = 3.0;
/// Absolute floor that keeps exactly-zero residuals from failing on rounding.
pub const FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    LaplaceFunctional,
    Mecke,
    QuasiInvariance,
    PartialQuasiInvariance,
    Ibp,
    Generator,
    DirichletForm,
    Intertwining,
    Stationarity,
    Bessel,
}

impl CheckName {
    pub const ALL: [CheckName; 10] = [
        CheckName::LaplaceFunctional,
        CheckName::Mecke,
        CheckName::QuasiInvariance,
        CheckName::PartialQuasiInvariance,
        CheckName::Ibp,
        CheckName::Generator,
        CheckName::DirichletForm,
        CheckName::Intertwining,
        CheckName::Stationarity,
        CheckName::Bessel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::LaplaceFunctional => "laplace_functional",
            CheckName::Mecke => "mecke",
            CheckName::QuasiInvariance => "quasi_invariance",
            CheckName::PartialQuasiInvariance => "partial_quasi_invariance",
            CheckName::Ibp => "ibp",
            CheckName::Generator => "generator",
            CheckName::DirichletForm => "dirichlet_form",
            CheckName::Intertwining => "intertwining",
            CheckName::Stationarity => "stationarity",
            CheckName::Bessel => "bessel",
        }
    }

    pub fn default_replicas(self) -> usize {
        match self {
            CheckName::Generator => 100,
            CheckName::Stationarity => 10_000,
            _ => 100_000,
        }
    }

    pub fn default_epsilon(self) -> f64 {
        match self {
            CheckName::DirichletForm | CheckName::Stationarity => 1e-4,
            _ => 1e-6,
        }
    }

    pub fn default_dt(self) -> f64 {
        match self {
            CheckName::Bessel => 1e-4,
            _ => 1e-3,
        }
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckName {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckName::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| config(format!("unknown check '{s}'")))
    }
}

/// A deliberate error used to confirm that a check can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    /// Density values multiplied by 1.05.
    CorruptDensity,
    /// Mass drift with reversed sign.
    FlipDrift,
    /// Boundary term of `B_h` multiplied by 0.95.
    WrongBoundary,
}

/// One check as requested by a configuration; unset fields take the check's defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub name: CheckName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject: Option<Injection>,
}

impl CheckSpec {
    pub fn new(name: CheckName) -> Self {
        Self {
            name,
            replicas: None,
            epsilon: None,
            dt: None,
            inject: None,
        }
    }

    pub fn with_replicas(mut self, n: usize) -> Self {
        self.replicas = Some(n);
        self
    }

    pub fn with_injection(mut self, inject: Injection) -> Self {
        self.inject = Some(inject);
        self
    }

    pub fn resolve(&self) -> Result<CheckParams> {
        let p = CheckParams {
            replicas: self.replicas.unwrap_or(self.name.default_replicas()),
            epsilon: self.epsilon.unwrap_or(self.name.default_epsilon()),
            dt: self.dt.unwrap_or(self.name.default_dt()),
            inject: self.inject,
        };
        if p.replicas < 2 {
            return Err(config(format!("{}: replicas must be at least 2", self.name)));
        }
        if !(p.epsilon > 0.0 && p.epsilon < 1e-2) {
            return Err(config(format!(
                "{}: epsilon must lie in (0, 1e-2), got {}",
                self.name, p.epsilon
            )));
        }
        if !(p.dt > 0.0 && p.dt <= crate::dynamics::MAX_DT) {
            return Err(config(format!("{}: dt must lie in (0, 1e-2], got {}", self.name, p.dt)));
        }
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckParams {
    pub replicas: usize,
    pub epsilon: f64,
    pub dt: f64,
    pub inject: Option<Injection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunContext {
    pub seed: u64,
    /// `0` uses every available core.
    pub workers: usize,
}

/// How a comparison is decided.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    /// `|residual| ≤ 3·stderr + budget + 1e-10`.
    Statistical,
    /// `|residual| ≤ budget`.
    Tolerance,
    /// Recorded only.
    Report,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub residual: Estimate,
    pub z: f64,
    pub budget: f64,
    pub gate: Gate,
    pub pass: bool,
}

impl Comparison {
    fn build(label: impl Into<String>, lhs: Estimate, rhs: Estimate, residual: Estimate, budget: f64, gate: Gate) -> Self {
        let z = if residual.stderr > 0.0 {
            residual.mean / residual.stderr
        } else {
            0.0
        };
        let r = residual.mean.abs();
        let pass = match gate {
            Gate::Statistical => r <= SIGMAS * residual.stderr + budget + FLOOR,
            Gate::Tolerance => r <= budget,
            Gate::Report => true,
        } && residual.mean.is_finite();
        Self {
            label: label.into(),
            lhs,
            rhs,
            residual,
            z,
            budget,
            gate,
            pass: pass || gate == Gate::Report,
        }
    }

    /// Both sides estimated on common samples; `residual` is the per-sample difference.
    pub fn paired(label: impl Into<String>, lhs: Estimate, rhs: Estimate, residual: Estimate, budget: f64) -> Self {
        Self::build(label, lhs, rhs, residual, budget, Gate::Statistical)
    }

    pub fn paired_samples(label: impl Into<String>, lhs: &[f64], rhs: &[f64], budget: f64) -> Self {
        let diff: Vec<f64> = lhs.iter().zip(rhs).map(|(a, b)| a - b).collect();
        Self::paired(
            label,
            Estimate::from_samples(lhs),
            Estimate::from_samples(rhs),
            Estimate::from_samples(&diff),
            budget,
        )
    }

    /// A Monte Carlo estimate against a known value.
    pub fn exact(label: impl Into<String>, lhs: Estimate, value: f64, budget: f64) -> Self {
        let residual = Estimate {
            mean: lhs.mean - value,
            stderr: lhs.stderr,
        };
        Self::build(label, lhs, Estimate::exact(value), residual, budget, Gate::Statistical)
    }

    /// A deterministic quantity against a target with an absolute tolerance.
    pub fn tolerance(label: impl Into<String>, value: Estimate, target: f64, tol: f64) -> Self {
        let residual = Estimate {
            mean: value.mean - target,
            stderr: value.stderr,
        };
        Self::build(label, value, Estimate::exact(target), residual, tol, Gate::Tolerance)
    }

    pub fn report(label: impl Into<String>, lhs: Estimate, rhs: Estimate) -> Self {
        let residual = Estimate {
            mean: lhs.mean - rhs.mean,
            stderr: (lhs.stderr * lhs.stderr + rhs.stderr * rhs.stderr).sqrt(),
        };
        Self::build(label, lhs, rhs, residual, 0.0, Gate::Report)
    }
}

/// A residual recorded at several values of a discretization parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub parameter: String,
    pub values: Vec<f64>,
    pub residuals: Vec<Estimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub seed: u64,
    pub replicas: usize,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub residual: Estimate,
    pub z: f64,
    pub verdict: Verdict,
    pub parts: Vec<Comparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<Sensitivity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injection: Option<Injection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckResult {
    /// Summary fields come from the gated part with the largest `|z|`.
    pub fn new(name: CheckName, ctx: &RunContext, p: &CheckParams, parts: Vec<Comparison>) -> Self {
        let lead = parts
            .iter()
            .filter(|c| c.gate != Gate::Report)
            .max_by(|a, b| {
                let key = |c: &Comparison| if c.pass { c.z.abs() } else { f64::INFINITY };
                key(a).total_cmp(&key(b))
            })
            .or(parts.first());
        let (lhs, rhs, residual, z) = lead.map_or((Estimate::exact(0.0), Estimate::exact(0.0), Estimate::exact(0.0), 0.0), |c| {
            (c.lhs, c.rhs, c.residual, c.z)
        });
        let ok = !parts.is_empty() && parts.iter().all(|c| c.pass);
        Self {
            name: name.as_str().to_string(),
            seed: ctx.seed,
            replicas: p.replicas,
            lhs,
            rhs,
            residual,
            z,
            verdict: Verdict::from_bool(ok),
            parts,
            sensitivity: None,
            injection: p.inject,
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }

    pub fn part(&self, label: &str) -> Option<&Comparison> {
        self.parts.iter().find(|c| c.label == label)
    }
}

pub fn run_check(spec: &CheckSpec, ctx: &RunContext) -> Result<CheckResult> {
    let p = spec.resolve()?;
    match spec.name {
        CheckName::LaplaceFunctional => check_laplace_functional(&p, ctx),
        CheckName::Mecke => check_mecke(&p, ctx),
        CheckName::QuasiInvariance => check_quasi_invariance(&p, ctx),
        CheckName::PartialQuasiInvariance => check_partial_quasi_invariance(&p, ctx),
        CheckName::Ibp => check_ibp(&p, ctx),
        CheckName::Generator => check_generator(&p, ctx),
        CheckName::DirichletForm => check_dirichlet_form(&p, ctx),
        CheckName::Intertwining => check_intertwining(&p, ctx),
        CheckName::Stationarity => check_stationarity(&p, ctx),
        CheckName::Bessel => check_bessel(&p, ctx),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub results: Vec<CheckResult>,
    pub all_pass: bool,
}

/// Runs `specs` in order; an empty list runs every check with defaults.
pub fn run_suite(specs: &[CheckSpec], ctx: &RunContext) -> Result<SuiteReport> {
    let defaults: Vec<CheckSpec> = CheckName::ALL.iter().map(|&n| CheckSpec::new(n)).collect();
    let specs = if specs.is_empty() { &defaults[..] } else { specs };
    for s in specs {
        s.resolve()?;
    }
    let results = specs.iter().map(|s| run_check(s, ctx)).collect::<Result<Vec<_>>>()?;
    let all_pass = results.iter().all(CheckResult::passed);
    Ok(SuiteReport {
        seed: ctx.seed,
        results,
        all_pass,
    })
}

/// `check,part,lhs,rhs,z,verdict` rows, one per comparison.
pub fn summary_csv(report: &SuiteReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "check", "part", "lhs", "rhs", "residual", "stderr", "z", "budget", "gate", "verdict",
    ])?;
    for r in &report.results {
        for c in &r.parts {
            let gate = match c.gate {
                Gate::Statistical => "statistical",
                Gate::Tolerance => "tolerance",
                Gate::Report => "report",
            };
            w.write_record([
                r.name.clone(),
                c.label.clone(),
                format!("{:e}", c.lhs.mean),
                format!("{:e}", c.rhs.mean),
                format!("{:e}", c.residual.mean),
                format!("{:e}", c.residual.stderr),
                format!("{:.3}", c.z),
                format!("{:e}", c.budget),
                gate.to_string(),
                if c.pass { "PASS" } else { "FAIL" }.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| domain(e.to_string()))
}

/// Evaluates `f` on replica streams `(seed, tag(name), part, r)` for `r < n`.
pub(crate) fn replicate<T, F>(ctx: &RunContext, name: CheckName, part: u64, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut SimRng) -> Result<T> + Sync + Send,
{
    let t = tag(name.as_str());
    try_map_indexed(n, ctx.workers, |r| {
        let mut rng = stream(&[ctx.seed, t, part, r]);
        f(&mut rng)
    })
}

/// Column `k` of row-major replica output.
pub(crate) fn column<const K: usize>(rows: &[[f64; K]], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for n in CheckName::ALL {
            assert_eq!(n.as_str().parse::<CheckName>().unwrap(), n);
            let json = serde_json::to_string(&n).unwrap();
            assert_eq!(json, format!("\"{}\"", n.as_str()));
        }
        assert!("nope".parse::<CheckName>().is_err());
    }

    #[test]
    fn gates() {
        let e = Estimate { mean: 0.29, stderr: 0.1 };
        assert!(Comparison::exact("a", e, 0.0, 0.0).pass);
        assert!(!Comparison::exact("a", Estimate { mean: 0.31, stderr: 0.1 }, 0.0, 0.0).pass);
        assert!(Comparison::exact("a", Estimate { mean: 0.31, stderr: 0.1 }, 0.0, 0.02).pass);
        assert!(Comparison::exact("zero", Estimate::exact(1e-12), 0.0, 0.0).pass);
        assert!(!Comparison::tolerance("t", Estimate::exact(2e-3), 0.0, 1e-3).pass);
        assert!(Comparison::report("r", Estimate::exact(5.0), Estimate::exact(0.0)).pass);
        let nan = Estimate {
            mean: f64::NAN,
            stderr: 1.0,
        };
        assert!(!Comparison::exact("nan", nan, 0.0, 0.0).pass);
    }

    #[test]
    fn spec_validation() {
        let mut s = CheckSpec::new(CheckName::Mecke);
        assert_eq!(s.resolve().unwrap().replicas, 100_000);
        s.epsilon = Some(0.0);
        assert!(s.resolve().is_err());
        s.epsilon = None;
        s.dt = Some(0.5);
        assert!(s.resolve().is_err());
        let bad: std::result::Result<CheckSpec, _> = serde_json::from_str(r#"{"name":"mecke","sigma":2}"#);
        assert!(bad.is_err());
    }
}
