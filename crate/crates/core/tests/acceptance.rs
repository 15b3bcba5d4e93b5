//! Acceptance gate: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p cone-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use cone_core::verify::{
    run_check, run_suite, CheckName, CheckResult, CheckSpec, Comparison, Gate, Injection, RunContext, SuiteReport,
};

const SEED: u64 = 20261016;

struct Line {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn result(report: &SuiteReport, name: CheckName) -> &CheckResult {
    report
        .results
        .iter()
        .find(|r| r.name == name.as_str())
        .expect("check was run")
}

fn gated(r: &CheckResult, select: impl Fn(&str) -> bool) -> Vec<&Comparison> {
    r.parts
        .iter()
        .filter(|c| c.gate != Gate::Report && select(&c.label))
        .collect()
}

fn describe(c: &Comparison) -> String {
    match c.gate {
        Gate::Tolerance => format!("{} = {:.3e} (limit {:.1e})", c.label, c.lhs.mean, c.budget),
        _ => format!(
            "{}: {:.6} ± {:.2e} vs {:.6} (z = {:.2}, budget {:.1e})",
            c.label, c.lhs.mean, c.residual.stderr, c.rhs.mean, c.z, c.budget
        ),
    }
}

/// Passes when every selected gated part passes; reports the worst one.
fn from_parts(id: u32, title: &'static str, r: &CheckResult, select: impl Fn(&str) -> bool) -> Line {
    let parts = gated(r, select);
    assert!(!parts.is_empty(), "criterion {id} selects no parts");
    let pass = parts.iter().all(|c| c.pass);
    let worst = parts
        .iter()
        .max_by(|a, b| {
            let key = |c: &Comparison| if c.pass { c.z.abs() } else { f64::INFINITY };
            key(a).total_cmp(&key(b))
        })
        .unwrap();
    let detail = format!("{} parts; worst {}", parts.len(), describe(worst));
    Line { id, title, pass, detail }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let serial = RunContext { seed: SEED, workers: 1 };
    // An empty list is the full suite with each check's default size.
    let report = run_suite(&[], &serial).expect("suite runs");
    let mut lines = Vec::new();

    let laplace = result(&report, CheckName::LaplaceFunctional);
    lines.push(from_parts(1, "gamma Laplace functional", laplace, |l| l.starts_with("gamma")));
    lines.push(from_parts(2, "general Fourier functional", laplace, |l| {
        l.starts_with("fourier")
    }));
    lines.push(from_parts(3, "Mecke identity", result(&report, CheckName::Mecke), |_| true));
    lines.push(from_parts(
        4,
        "quasi-invariance change of variables",
        result(&report, CheckName::QuasiInvariance),
        |_| true,
    ));
    lines.push(from_parts(
        5,
        "partial quasi-invariance",
        result(&report, CheckName::PartialQuasiInvariance),
        |_| true,
    ));
    lines.push(from_parts(6, "integration by parts", result(&report, CheckName::Ibp), |_| {
        true
    }));
    lines.push(from_parts(
        7,
        "generator vs finite differences",
        result(&report, CheckName::Generator),
        |_| true,
    ));
    lines.push(from_parts(
        8,
        "Dirichlet form identity and symmetry",
        result(&report, CheckName::DirichletForm),
        |_| true,
    ));
    lines.push(from_parts(
        9,
        "first-chaos intertwining",
        result(&report, CheckName::Intertwining),
        |_| true,
    ));

    let stationarity = result(&report, CheckName::Stationarity);
    let mut line = from_parts(10, "stationarity", stationarity, |_| true);
    let flipped = run_check(
        &CheckSpec::new(CheckName::Stationarity).with_injection(Injection::FlipDrift),
        &serial,
    )
    .expect("control runs");
    let control_fails = !flipped.passed();
    let max_z = flipped.parts.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    line.detail += &format!(
        "; drift-flip control {} (max |z| = {max_z:.1})",
        if control_fails { "fails" } else { "PASSES" }
    );
    line.pass &= control_fails;
    lines.push(line);

    let bessel = result(&report, CheckName::Bessel);
    let mut line = from_parts(11, "Bessel absorption", bessel, |_| true);
    if let Some(alt) = bessel.parts.iter().find(|c| c.gate == Gate::Report) {
        line.detail += &format!("; not gated: {} gives {:.6}", alt.label, alt.rhs.mean);
    }
    lines.push(line);

    let parallel = RunContext { seed: SEED, workers: 3 };
    let again = run_suite(&[], &parallel).expect("suite runs");
    let a = serde_json::to_string(&report).unwrap();
    let b = serde_json::to_string(&again).unwrap();
    let bitwise = a == b && report == again;
    lines.push(Line {
        id: 12,
        title: "determinism",
        pass: bitwise,
        detail: format!(
            "full suite with 1 and 3 workers: {} ({} bytes of results)",
            if bitwise { "identical" } else { "DIFFERENT" },
            a.len()
        ),
    });

    for l in &lines {
        println!(
            "[{}] {:>2} {}: {}",
            if l.pass { "PASS" } else { "FAIL" },
            l.id,
            l.title,
            l.detail
        );
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!(
        "acceptance: {} of {} criteria pass (seed {SEED}, {:.0} s)",
        lines.len() - failed,
        lines.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
