//! Command-line front end: `conekit <command> [--config PATH] ...`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::charfn;
use crate::config::{CaseSpec, RunConfig};
use crate::cone::{ConeModel, ConeSpec};
use crate::error::ConeError;
use crate::harness::{self, Verdict};
use crate::mc::McConfig;
use crate::report::{self, RunReport};
use crate::selftest;
use crate::util::fmt_f64;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "conekit", version, about = "Homogeneous cones, their integral operators and weighted norm inequalities")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dual model, sigma, fixed point and duality constants of a cone.
    DescribeCone(Common),
    /// Run the invariant suite and write a JUnit summary.
    Selftest {
        #[command(flatten)]
        common: Common,
        /// Only invariants whose id starts with this prefix.
        #[arg(long)]
        only: Option<String>,
    },
    /// Verify every case of the config once.
    Verify(Common),
    /// Sweep gamma (or alpha) across the condition boundary.
    Sweep(Common),
    /// Estimate the integrability threshold sigma0 by Monte Carlo.
    Sigma(Common),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override mc.samples.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Output directory (overrides out_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cone for describe-cone/sigma without a config: JSON, or kind:dim
    /// such as lorentz:3.
    #[arg(long)]
    pub cone: Option<String>,
}

struct Usage(String);

enum Failure {
    Usage(String),
    Run(ConeError),
}

impl From<ConeError> for Failure {
    fn from(e: ConeError) -> Self {
        Failure::Run(e)
    }
}

impl From<Usage> for Failure {
    fn from(u: Usage) -> Self {
        Failure::Usage(u.0)
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut rc = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            ConeError::Config(m) => Failure::Usage(m),
            e => Failure::Run(e),
        })?,
        None => RunConfig::from_json(r#"{"schema_version": 1}"#)?,
    };
    if let Some(s) = common.seed {
        rc.mc.seed = s;
    }
    if let Some(n) = common.samples {
        rc.mc.samples = n;
    }
    if let Some(o) = &common.out {
        rc.out_dir = o.clone();
    }
    if let Some(c) = &common.cone {
        rc.cone = Some(parse_cone(c)?);
    }
    rc.mc.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(rc)
}

fn parse_cone(s: &str) -> Result<ConeSpec, Usage> {
    let s = s.trim();
    if s.starts_with('{') {
        return serde_json::from_str(s).map_err(|e| Usage(format!("--cone: {e}")));
    }
    let (kind, dim) = s
        .split_once(':')
        .ok_or_else(|| Usage(format!("--cone expects JSON or kind:dim, got {s:?}")))?;
    let dim = dim.parse().map_err(|_| Usage(format!("--cone: bad dimension {dim:?}")))?;
    Ok(ConeSpec {
        kind: kind.to_string(),
        dim,
        matrix: None,
        factors: None,
        label: String::new(),
    })
}

fn cone_of(rc: &RunConfig) -> Result<ConeModel, Failure> {
    rc.cone_model()?
        .ok_or_else(|| Failure::Usage("no cone given (config \"cone\" or --cone)".into()))
}

fn case_label(i: usize, c: &CaseSpec) -> String {
    format!("case {} ({})", i + 1, c.theorem)
}

/// Verifies every case of `rc`; errors become rows, the run continues.
pub fn run_verify(rc: &RunConfig, mc: &McConfig) -> RunReport {
    let mut rep = RunReport::new("conekit verify", mc);
    let default = match rc.cone_model() {
        Ok(c) => c,
        Err(e) => {
            rep.config_error("cone", &e);
            return rep;
        }
    };
    for (i, spec) in rc.cases.iter().enumerate() {
        match spec.build(default.as_ref()) {
            Err(e) => rep.config_error(&case_label(i, spec), &e),
            Ok((case, family)) => match harness::verify(&case, &family, mc) {
                Ok(r) => {
                    if r.verdict == Verdict::Violated {
                        rep.failures += 1;
                    }
                    rep.verification(&r)
                }
                Err(e) => rep.error(&case, &e),
            },
        }
    }
    rep
}

/// Sweeps every case of `rc` over `rc.sweep`.
pub fn run_sweep(rc: &RunConfig, mc: &McConfig) -> Result<RunReport, ConeError> {
    let sw = rc
        .sweep
        .as_ref()
        .ok_or_else(|| ConeError::Config("sweep needs a \"sweep\" section".into()))?;
    let mut rep = RunReport::new("conekit sweep", mc);
    let default = rc.cone_model()?;
    for (i, spec) in rc.cases.iter().enumerate() {
        match spec.build(default.as_ref()) {
            Err(e) => rep.config_error(&case_label(i, spec), &e),
            Ok((case, family)) => match harness::sweep(&case, sw.parameter, &sw.values, &family, mc) {
                Ok(points) => {
                    for p in &points {
                        rep.sweep_point(&case, p);
                    }
                }
                Err(e) => rep.error(&case, &e),
            },
        }
    }
    Ok(rep)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, ConeError> {
    std::fs::create_dir_all(dir).map_err(|e| ConeError::io(dir, e))?;
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| ConeError::io(&p, e))?;
    Ok(p)
}

fn need_cases(rc: &RunConfig) -> Result<(), Failure> {
    if rc.cases.is_empty() {
        Err(Failure::Usage("config has no cases".into()))
    } else {
        Ok(())
    }
}

fn dispatch(cmd: &Command) -> Result<i32, Failure> {
    match cmd {
        Command::DescribeCone(common) => {
            let rc = load(common)?;
            let cone = cone_of(&rc)?;
            let md = report::describe_cone(&cone, &rc.mc)?;
            let p = write_text(&rc.out_dir, "describe-cone.md", &md)?;
            print!("{md}");
            eprintln!("wrote {}", p.display());
            Ok(EXIT_OK)
        }
        Command::Selftest { common, only } => {
            let rc = load(common)?;
            let mut mc = selftest::default_config();
            if let Some(s) = common.seed {
                mc.seed = s;
            }
            if let Some(n) = common.samples {
                mc.samples = n;
            }
            let outcomes = selftest::run(&mc, only.as_deref());
            for o in &outcomes {
                let tag = if o.passed { "PASS" } else { "FAIL" };
                println!("{tag} {} ({:.1}s) {}", o.id, o.seconds, o.detail);
            }
            let p = write_text(&rc.out_dir, "selftest.xml", &selftest::junit_xml(&outcomes))?;
            eprintln!("wrote {}", p.display());
            let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
            if failed.is_empty() {
                Ok(EXIT_OK)
            } else {
                eprintln!("failing invariants: {}", failed.join(", "));
                Ok(EXIT_FAILURE)
            }
        }
        Command::Verify(common) => {
            let rc = load(common)?;
            need_cases(&rc)?;
            let rep = run_verify(&rc, &rc.mc);
            rep.write(&rc.out_dir, "verify")?;
            print!("{}", rep.csv_string()?);
            eprintln!("wrote {}", rc.out_dir.join("verify.csv").display());
            Ok(if rep.failures == 0 { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Sweep(common) => {
            let rc = load(common)?;
            need_cases(&rc)?;
            if rc.sweep.is_none() {
                return Err(Failure::Usage("sweep needs a \"sweep\" section".into()));
            }
            let rep = run_sweep(&rc, &rc.mc)?;
            rep.write(&rc.out_dir, "sweep")?;
            print!("{}", rep.csv_string()?);
            eprintln!("wrote {}", rc.out_dir.join("sweep.csv").display());
            Ok(EXIT_OK)
        }
        Command::Sigma(common) => {
            let rc = load(common)?;
            let cone = cone_of(&rc)?;
            let alphas = rc
                .alphas
                .clone()
                .unwrap_or_else(|| (0..15).map(|i| -1.5 + 0.1 * i as f64).collect());
            let est = charfn::sigma0_estimate(&cone, &alphas, &rc.mc)?;
            let closed = charfn::sigma0(&cone);
            let mut md = format!(
                "# sigma0 of {}\n\nclosed form: sigma0 = {}, sigma = {}\n\nestimate: sigma0 = {}, sigma = {}",
                cone.label(),
                fmt_f64(closed.sigma0),
                fmt_f64(closed.sigma),
                fmt_f64(est.sigma0),
                fmt_f64(est.sigma)
            );
            if let Some(b) = est.bracket {
                md.push_str(&format!(", bracket ({}, {})", fmt_f64(b.low), fmt_f64(b.high)));
            }
            md.push_str("\n\n| alpha | decay rate | decay rate (N/4) | divergent | stable |\n|---|---|---|---|---|\n");
            for c in &est.classes {
                md.push_str(&format!(
                    "| {} | {} | {} | {} | {} |\n",
                    fmt_f64(c.alpha),
                    fmt_f64(c.decay_rate),
                    fmt_f64(c.decay_rate_quarter),
                    c.divergent,
                    c.stable
                ));
            }
            for f in &est.flags {
                md.push_str(&format!("\nflag: {f}\n"));
            }
            let p = write_text(&rc.out_dir, "sigma.md", &md)?;
            print!("{md}");
            eprintln!("wrote {}", p.display());
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_USAGE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    }
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}
