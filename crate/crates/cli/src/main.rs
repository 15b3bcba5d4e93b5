//! `cone`: sample, evolve and verify measure-valued diffusions from one config file.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cone_core::config::ObservableConfig;
use cone_core::dynamics::StepDiagnostics;
use cone_core::io::{self, Metadata};
use cone_core::rng::{stream, tag};
use cone_core::verify::summary_csv;
use cone_core::{
    evolve, run_suite, sample_eta, CheckName, CheckSpec, DiscreteMeasure, DriftControl, Error, Experiment, ExperimentConfig,
    RunContext, SuiteReport, TorusSpace,
};

#[derive(Parser)]
#[command(
    name = "cone",
    version,
    about = "Sampling, dynamics and identity checks for random discrete measures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw measures from the configured model.
    Sample(Common),
    /// Run the diffusion from a sampled measure.
    Evolve(Common),
    /// Run checks; exits 1 if any fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Check to run, repeatable; replaces the config's list but keeps its
        /// settings for checks named in both.
        #[arg(long = "check", value_name = "NAME")]
        checks: Vec<String>,
    },
    /// Summarize a previous `verify` run found in the output directory.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, value_name = "N", default_value_t = 0)]
    workers: usize,
}

enum Failure {
    Checks,
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sample(c) => cmd_sample(&c),
        Command::Evolve(c) => cmd_evolve(&c),
        Command::Verify { common, checks } => cmd_verify(&common, &checks),
        Command::Report(c) => cmd_report(&c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(c: &Common) -> std::result::Result<Experiment, Failure> {
    let path = c
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config is required".into()))?;
    Ok(ExperimentConfig::load(path)?.into_experiment(c.seed)?)
}

fn prepare_out(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))
}

#[derive(Serialize)]
struct ObservableSeries<'a> {
    name: &'a str,
    values: Vec<f64>,
}

fn observe<'a>(obs: &'a [ObservableConfig], space: &TorusSpace, etas: &[&DiscreteMeasure]) -> Vec<ObservableSeries<'a>> {
    obs.iter()
        .map(|o| ObservableSeries {
            name: &o.name,
            values: etas
                .iter()
                .map(|eta| eta.marked_pairing(|s, x| o.mark.value(space, s, x)))
                .collect(),
        })
        .collect()
}

#[derive(Serialize)]
struct SampleBody<'a> {
    model: String,
    epsilon: f64,
    measures: &'a [DiscreteMeasure],
    observables: Vec<ObservableSeries<'a>>,
}

fn cmd_sample(c: &Common) -> Outcome {
    let exp = load(c)?;
    prepare_out(&c.out)?;
    let cfg = &exp.config;
    let meta = Metadata::new(&exp.hash, cfg.seed);
    let eps = cfg.model.epsilon;
    let measures = (0..cfg.sample.replicas as u64)
        .map(|r| sample_eta(&exp.model, &exp.space, eps, &mut stream(&[cfg.seed, tag("sample"), r])))
        .collect::<cone_core::Result<Vec<_>>>()?;
    for (r, eta) in measures.iter().enumerate() {
        let text = io::measure_csv(eta, exp.space.dim, &meta)?;
        io::write_text(&c.out.join(format!("measure_{r:04}.csv")), &text)?;
    }
    let refs: Vec<&DiscreteMeasure> = measures.iter().collect();
    let body = SampleBody {
        model: exp.model.name(),
        epsilon: eps,
        measures: &measures,
        observables: observe(&cfg.observables, &exp.space, &refs),
    };
    io::write_json(&c.out.join("sample.json"), &meta, &body)?;
    println!("sampled {} measure(s) into {}", measures.len(), c.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvolveBody<'a> {
    model: String,
    epsilon: f64,
    dt: f64,
    times: &'a [f64],
    atoms: usize,
    diagnostics: &'a StepDiagnostics,
    observables: Vec<ObservableSeries<'a>>,
}

fn cmd_evolve(c: &Common) -> Outcome {
    let exp = load(c)?;
    let cfg = &exp.config;
    let dynamics = cfg
        .dynamics
        .as_ref()
        .ok_or_else(|| Failure::Usage("evolve needs a [dynamics] section".into()))?;
    prepare_out(&c.out)?;
    let meta = Metadata::new(&exp.hash, cfg.seed);
    let eps = cfg.model.epsilon;
    let eta0 = sample_eta(&exp.model, &exp.space, eps, &mut stream(&[cfg.seed, tag("evolve"), 0]))?;
    let key = [cfg.seed, tag("evolve"), 1];
    let traj = evolve(
        &eta0,
        &exp.model,
        &exp.space,
        &dynamics.times,
        dynamics.dt,
        &key,
        DriftControl::default(),
    )?;
    io::write_text(
        &c.out.join("trajectory.csv"),
        &io::trajectory_csv(&traj, exp.space.dim, &meta)?,
    )?;
    let refs: Vec<&DiscreteMeasure> = traj.snapshots.iter().collect();
    let body = EvolveBody {
        model: exp.model.name(),
        epsilon: eps,
        dt: dynamics.dt,
        times: &traj.times,
        atoms: eta0.len(),
        diagnostics: &traj.diagnostics,
        observables: observe(&cfg.observables, &exp.space, &refs),
    };
    io::write_json(&c.out.join("diagnostics.json"), &meta, &body)?;
    println!(
        "evolved {} atom(s) through {} snapshot(s) into {}",
        eta0.len(),
        traj.times.len(),
        c.out.display()
    );
    Ok(())
}

fn cmd_verify(c: &Common, names: &[String]) -> Outcome {
    let exp = load(c)?;
    let specs: Vec<CheckSpec> = if names.is_empty() {
        exp.config.checks.clone()
    } else {
        names
            .iter()
            .map(|n| {
                let name = n.parse::<CheckName>()?;
                Ok(exp
                    .config
                    .checks
                    .iter()
                    .find(|c| c.name == name)
                    .cloned()
                    .unwrap_or_else(|| CheckSpec::new(name)))
            })
            .collect::<cone_core::Result<_>>()?
    };
    prepare_out(&c.out)?;
    let ctx = RunContext {
        seed: exp.config.seed,
        workers: c.workers,
    };
    let report = run_suite(&specs, &ctx)?;
    let meta = Metadata::new(&exp.hash, ctx.seed);
    io::write_json(&c.out.join("verify.json"), &meta, &report)?;
    io::write_text(&c.out.join("summary.csv"), &io::with_comment(&summary_csv(&report)?, &meta))?;
    for r in &report.results {
        println!(
            "{:<28} {:>4}  z={:>7.2}  {}",
            r.name,
            if r.passed() { "PASS" } else { "FAIL" },
            r.z,
            r.notes.join("; ")
        );
    }
    if report.all_pass {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_report(c: &Common) -> Outcome {
    let path = c.out.join("verify.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let doc: io::Document<SuiteReport> =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{} is not a verify report: {e}", path.display())))?;
    if let Some(cfg) = &c.config {
        let hash = ExperimentConfig::load(cfg)?.hash();
        if hash != doc.meta.config_sha256 {
            return Err(Failure::Usage(format!(
                "{} was produced from a different config",
                path.display()
            )));
        }
    }
    let md = render_markdown(&doc.meta, &doc.body);
    io::write_text(&c.out.join("report.md"), &md)?;
    print!("{md}");
    if doc.body.all_pass {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn render_markdown(meta: &Metadata, report: &SuiteReport) -> String {
    let mut s = format!(
        "<!-- config_sha256={} seed={} version={} -->\n# Verification report\n\n| check | part | lhs | rhs | z | verdict |\n|---|---|---|---|---|---|\n",
        meta.config_sha256, meta.seed, meta.version
    );
    for r in &report.results {
        for p in &r.parts {
            s += &format!(
                "| {} | {} | {:.6e} ± {:.1e} | {:.6e} ± {:.1e} | {:.2} | {} |\n",
                r.name,
                p.label.replace('|', "/"),
                p.lhs.mean,
                p.lhs.stderr,
                p.rhs.mean,
                p.rhs.stderr,
                p.z,
                if p.pass { "pass" } else { "FAIL" }
            );
        }
    }
    s += &format!(
        "\n{}\n",
        if report.all_pass {
            "All checks passed."
        } else {
            "Some checks failed."
        }
    );
    s
}
