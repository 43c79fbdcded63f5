//! Command-line driver behind the `fracbvp` binary.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 a sufficient
//! condition fails, 3 the root search or the iteration does not converge.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::conditions::check_conditions;
use crate::determine::{
    existence_check_scalar, exclusion_sweep, solve_determining, DeterminingResult, SolverConfig,
};
use crate::error::{Error, Result};
use crate::iterate::{run_iteration, ApproxSolution, IterationOptions};
use crate::problem::{load_problem_with, BoundSampling, LoadOptions, Problem, BUILTINS};
use crate::verify::{emit_figure_data, residuals};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_CONDITIONS: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;

const THREADS_VAR: &str = "FRACBVP_THREADS";

// stdout may be a closed pipe
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "fracbvp", version, about = "Successive approximations for Caputo boundary value problems")]
pub struct Cli {
    #[command(flatten)]
    pub source: Source,
    /// Grid node count, overrides the config.
    #[arg(long, global = true)]
    pub grid_n: Option<usize>,
    /// Seed for Latin-hypercube bound sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "fracbvp-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct Source {
    /// Problem config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Name of a built-in problem (see `example-list`).
    #[arg(long, global = true)]
    pub builtin: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the sufficient conditions and print all constants.
    Check,
    /// Solve the determining equations for m = 0..M and emit the iterates.
    Solve {
        /// Number of iteration steps.
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Iterate at the final root until the sup-difference is below TOL.
        #[arg(long)]
        tol: Option<f64>,
        /// Proceed although r(Q) >= 1.
        #[arg(long)]
        force: bool,
    },
    /// Subdivide the parameter box and drop boxes that cannot hold a root.
    Exclude {
        #[arg(long, default_value_t = 1)]
        m: usize,
        /// Boxes per axis.
        #[arg(long, default_value_t = 13)]
        subdiv: usize,
    },
    /// Residuals of the Caputo equation for the solved approximation.
    Verify {
        /// Iteration count; defaults to the one used by `solve`.
        #[arg(long)]
        m: Option<usize>,
        /// Solve inline instead of reading the `solve` outputs.
        #[arg(long)]
        recompute: bool,
    },
    /// List built-in problems.
    ExampleList,
}

/// Settings echoed next to every output set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub source: String,
    pub grid_n: usize,
    pub m: Option<usize>,
    pub tol: Option<f64>,
    pub subdiv: Option<usize>,
    pub seed: u64,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    configure_threads();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::BoundUndefined { .. } => EXIT_CONDITIONS,
        Error::NoRootBracket { .. }
        | Error::NonConvergence { .. }
        | Error::DomainEscape { .. }
        | Error::Eval { .. } => EXIT_CONVERGENCE,
        _ => EXIT_CONFIG,
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => log::warn!("ignoring {THREADS_VAR}={v}: expected a positive integer"),
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    if let Command::ExampleList = cli.command {
        for (name, description, _) in BUILTINS {
            say!("{name:<10} {description}");
        }
        return Ok(EXIT_OK);
    }
    let (prob, source) = load(cli)?;
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Check => cmd_check(cli, &prob, &source),
        Command::Solve { m, tol, force } => cmd_solve(cli, &prob, &source, *m, *tol, *force),
        Command::Exclude { m, subdiv } => cmd_exclude(cli, &prob, &source, *m, *subdiv),
        Command::Verify { m, recompute } => cmd_verify(cli, &prob, &source, *m, *recompute),
        Command::ExampleList => unreachable!("handled above"),
    }
}

fn load(cli: &Cli) -> Result<(Problem, String)> {
    let opts = LoadOptions {
        nodes: cli.grid_n,
        sampling: BoundSampling {
            seed: cli.seed,
            ..BoundSampling::default()
        },
    };
    match (&cli.source.config, &cli.source.builtin) {
        (Some(path), None) => Ok((load_problem_with(path, &opts)?, path.display().to_string())),
        (None, Some(name)) => Ok((Problem::builtin(name, &opts)?, format!("builtin:{name}"))),
        _ => Err(Error::Config("one of --config or --builtin is required".into())),
    }
}

fn manifest(cli: &Cli, prob: &Problem, source: &str, command: &str) -> RunManifest {
    let (m, tol, subdiv) = match &cli.command {
        Command::Solve { m, tol, .. } => (Some(*m), *tol, None),
        Command::Exclude { m, subdiv } => (Some(*m), None, Some(*subdiv)),
        Command::Verify { m, .. } => (*m, None, None),
        _ => (None, None, None),
    };
    RunManifest {
        command: command.to_string(),
        source: source.to_string(),
        grid_n: prob.grid.len(),
        m,
        tol,
        subdiv,
        seed: cli.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn write_manifest(cli: &Cli, prob: &Problem, source: &str, command: &str) -> Result<()> {
    let m = manifest(cli, prob, source, command);
    let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Config(e.to_string()))?;
    write(&cli.out, &format!("{command}.manifest.json"), &text)
}

fn json_text(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize")
}

fn cmd_check(cli: &Cli, prob: &Problem, source: &str) -> Result<i32> {
    let report = check_conditions(prob);
    let summary = report.human_summary();
    say!("{}", summary.trim_end());
    write(&cli.out, "conditions.csv", &report.to_csv())?;
    write(&cli.out, "conditions.json", &json_text(&report.to_json()))?;
    write(&cli.out, "conditions.txt", &summary)?;
    write_manifest(cli, prob, source, "check")?;
    Ok(if report.all_hold() { EXIT_OK } else { EXIT_CONDITIONS })
}

fn cmd_solve(
    cli: &Cli,
    prob: &Problem,
    source: &str,
    m: usize,
    tol: Option<f64>,
    force: bool,
) -> Result<i32> {
    let report = check_conditions(prob);
    if !report.contraction_ok() && !force {
        eprintln!("{}", report.human_summary());
        return Err(Error::BoundUndefined {
            spectral_radius: report.spectral_radius,
        });
    }
    let cfg = SolverConfig {
        force,
        ..SolverConfig::default()
    };
    write_manifest(cli, prob, source, "solve")?;

    let mut roots: Vec<DeterminingResult> = Vec::new();
    let mut failure = None;
    for k in 0..=m {
        match solve_determining(prob, k, &cfg) {
            Ok(r) => {
                say!(
                    "m = {k}: chi1 = [{}], |Delta_{k}| = [{}]",
                    fmt_list(&r.chi1_star, 6),
                    fmt_sci(&r.residual)
                );
                roots.push(r);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    write(&cli.out, "chi_trace.csv", &chi_trace_csv(&roots))?;
    write(&cli.out, "solver_trace.csv", &solver_trace_csv(&roots))?;
    let Some(last) = roots.last() else {
        return Err(failure.expect("no roots means an error"));
    };

    let mut solution = last.solution.clone();
    if let Some(tol) = tol {
        let opts = IterationOptions {
            m_max: m.max(200),
            tol: Some(vec![tol]),
            force,
        };
        solution = run_iteration(prob, &last.chi1_star, &opts)?;
    }
    write(&cli.out, "iterates.csv", &emit_figure_data(prob, &solution)?)?;
    write(&cli.out, "sup_diffs.csv", &sup_diffs_csv(&solution))?;
    let doc = json!({
        "m": last.iterations_used,
        "chi1_star": last.chi1_star,
        "residual": last.residual,
        "roots": roots.iter().map(|r| json!({
            "m": r.iterations_used,
            "chi1": r.chi1_star,
            "residual": r.residual,
            "probes": r.solver_trace.len(),
        })).collect::<Vec<_>>(),
        "iterations": solution.m,
        "converged": solution.converged,
        "tol": solution.tol,
        "domain_escapes": solution.domain_escapes.len(),
        "complete": failure.is_none(),
    });
    write(&cli.out, "determining.json", &json_text(&doc))?;
    if !solution.domain_escapes.is_empty() {
        say!(
            "note: {} node value(s) of the iterates lie outside D",
            solution.domain_escapes.len()
        );
    }
    if let Some(e) = failure {
        return Err(e);
    }
    if tol.is_some() {
        say!("converged = {} after {} step(s)", solution.converged, solution.m);
        if !solution.converged {
            return Ok(EXIT_CONVERGENCE);
        }
    }
    Ok(EXIT_OK)
}

fn cmd_exclude(cli: &Cli, prob: &Problem, source: &str, m: usize, subdiv: usize) -> Result<i32> {
    write_manifest(cli, prob, source, "exclude")?;
    let res = exclusion_sweep(prob, m, subdiv)?;
    let n = prob.dim();
    let mut csv = String::from("box");
    for c in 1..=n {
        write!(csv, ",lo_{c},hi_{c}").expect("string write");
    }
    for c in 1..=n {
        write!(csv, ",chi_{c}").expect("string write");
    }
    for c in 1..=n {
        write!(csv, ",delta_{c},threshold_{c}").expect("string write");
    }
    csv.push_str(",verdict\n");
    for (i, b) in res.subsets.iter().enumerate() {
        write!(csv, "{i}").expect("string write");
        for c in 0..n {
            write!(csv, ",{:.16e},{:.16e}", b.domain.lo[c], b.domain.hi[c]).expect("string write");
        }
        for c in 0..n {
            write!(csv, ",{:.16e}", b.representative[c]).expect("string write");
        }
        for c in 0..n {
            write!(csv, ",{:.16e},{:.16e}", b.delta[c], b.threshold[c]).expect("string write");
        }
        csv.push_str(if b.keep { ",keep\n" } else { ",exclude\n" });
    }
    write(&cli.out, "exclusion.csv", &csv)?;
    let kept = res.survivors();
    say!(
        "m = {m}: {} of {} box(es) kept, {} excluded",
        kept.len(),
        res.subsets.len(),
        res.excluded()
    );
    for &i in &kept {
        let b = &res.subsets[i];
        say!("  keep [{}] .. [{}]", fmt_list(&b.domain.lo, 4), fmt_list(&b.domain.hi, 4));
    }
    if n == 1 {
        let ex = existence_check_scalar(prob, m)?;
        say!(
            "endpoint test: Delta_{m} = {:.6e} at lo, {:.6e} at hi, tube {:.6e}: {}",
            ex.phi_lo,
            ex.phi_hi,
            ex.tube,
            if ex.certified { "existence certified" } else { "inconclusive" }
        );
    }
    Ok(EXIT_OK)
}

fn cmd_verify(
    cli: &Cli,
    prob: &Problem,
    source: &str,
    m: Option<usize>,
    recompute: bool,
) -> Result<i32> {
    let (chi, m) = if recompute {
        let m = m.unwrap_or(2);
        let root = solve_determining(prob, m, &SolverConfig::default())?;
        (root.chi1_star, m)
    } else {
        let path = cli.out.join("determining.json");
        let text = std::fs::read_to_string(&path).map_err(|_| {
            Error::Config(format!(
                "{} not found: run solve first (or pass --recompute)",
                path.display()
            ))
        })?;
        let doc: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let chi: Vec<f64> = serde_json::from_value(doc["chi1_star"].clone())
            .map_err(|e| Error::Config(format!("{}: chi1_star: {e}", path.display())))?;
        let solved_m = doc["m"]
            .as_u64()
            .ok_or_else(|| Error::Config(format!("{}: missing m", path.display())))?;
        (chi, m.unwrap_or(solved_m as usize))
    };
    write_manifest(cli, prob, source, "verify")?;
    let approx = run_iteration(prob, &chi, &IterationOptions::fixed(m))?;
    let with = residuals(prob, &approx, true)?;
    let without = residuals(prob, &approx, false)?;
    write(&cli.out, "residuals.csv", &residual_csv(prob, &approx, &with, &without))?;
    write(&cli.out, "figure.csv", &emit_figure_data(prob, &approx)?)?;

    // baseline: the m = 0 root
    let base = solve_determining(prob, 0, &SolverConfig::default())?;
    let base_rep = residuals(prob, &base.solution, true)?;
    let ratio: Vec<f64> = with
        .sup_residual
        .iter()
        .zip(&base_rep.sup_residual)
        .map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 })
        .collect();
    let doc = json!({
        "m": m,
        "chi1": chi,
        "delta_m": with.delta,
        "sup_residual_with_delta": with.sup_residual,
        "sup_residual_without_delta": without.sup_residual,
        "boundary_residual_start": with.boundary_residuals.0,
        "boundary_residual_end": with.boundary_residuals.1,
        "baseline_m0_chi1": base.chi1_star,
        "baseline_m0_sup_residual": base_rep.sup_residual,
        "ratio_to_m0": ratio,
    });
    write(&cli.out, "verify.json", &json_text(&doc))?;
    say!(
        "m = {m}, chi1 = [{}]: sup residual [{}] with Delta_m, [{}] without",
        fmt_list(&chi, 6),
        fmt_sci(&with.sup_residual),
        fmt_sci(&without.sup_residual)
    );
    say!(
        "m = 0 baseline: sup residual [{}]; ratio [{}]",
        fmt_sci(&base_rep.sup_residual),
        fmt_sci(&ratio)
    );
    Ok(EXIT_OK)
}

fn fmt_list(v: &[f64], digits: usize) -> String {
    v.iter().map(|x| format!("{x:.digits$}")).collect::<Vec<_>>().join(", ")
}

fn fmt_sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ")
}

fn chi_trace_csv(roots: &[DeterminingResult]) -> String {
    let n = roots.first().map_or(0, |r| r.chi1_star.len());
    let mut out = String::from("m");
    for c in 1..=n {
        write!(out, ",chi_{c}").expect("string write");
    }
    for c in 1..=n {
        write!(out, ",residual_{c}").expect("string write");
    }
    out.push_str(",probes\n");
    for r in roots {
        write!(out, "{}", r.iterations_used).expect("string write");
        for x in r.chi1_star.iter().chain(&r.residual) {
            write!(out, ",{x:.16e}").expect("string write");
        }
        writeln!(out, ",{}", r.solver_trace.len()).expect("string write");
    }
    out
}

fn solver_trace_csv(roots: &[DeterminingResult]) -> String {
    let n = roots.first().map_or(0, |r| r.chi1_star.len());
    let mut out = String::from("m,probe");
    for c in 1..=n {
        write!(out, ",chi_{c}").expect("string write");
    }
    for c in 1..=n {
        write!(out, ",delta_{c}").expect("string write");
    }
    out.push('\n');
    for r in roots {
        for (i, (chi, d)) in r.solver_trace.iter().enumerate() {
            write!(out, "{},{i}", r.iterations_used).expect("string write");
            for x in chi.iter().chain(d) {
                write!(out, ",{x:.16e}").expect("string write");
            }
            out.push('\n');
        }
    }
    out
}

fn sup_diffs_csv(sol: &ApproxSolution) -> String {
    let n = sol.tol.len();
    let mut out = String::from("k");
    for c in 1..=n {
        write!(out, ",sup_diff_{c}").expect("string write");
    }
    for c in 1..=n {
        write!(out, ",bound_{c}").expect("string write");
    }
    out.push('\n');
    for (k, (d, b)) in sol.sup_diffs.iter().zip(&sol.bounds_used).enumerate() {
        write!(out, "{}", k + 1).expect("string write");
        for x in d.iter().chain(b) {
            write!(out, ",{x:.16e}").expect("string write");
        }
        out.push('\n');
    }
    out
}

fn residual_csv(
    prob: &Problem,
    approx: &ApproxSolution,
    with: &crate::verify::ResidualReport,
    without: &crate::verify::ResidualReport,
) -> String {
    let n = prob.dim();
    let mut out = String::from("t");
    for c in 1..=n {
        write!(out, ",u_{c},residual_{c},residual_no_delta_{c}").expect("string write");
    }
    out.push('\n');
    let u = approx.last();
    for (j, t) in prob.grid.nodes().enumerate() {
        write!(out, "{t:.16e}").expect("string write");
        for c in 0..n {
            write!(
                out,
                ",{:.16e},{:.16e},{:.16e}",
                u.value(c, j),
                with.residual_grid.value(c, j),
                without.residual_grid.value(c, j)
            )
            .expect("string write");
        }
        out.push('\n');
    }
    out
}
