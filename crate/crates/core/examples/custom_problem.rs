//! Loads a problem from a TOML file, estimates M and K, solves and checks
//! the residual.
//!
//! ```text
//! cargo run --example custom_problem -- [path/to/problem.toml]
//! ```

use fracbvp::conditions::check_conditions;
use fracbvp::determine::{solve_determining, SolverConfig};
use fracbvp::problem::load_problem;
use fracbvp::verify::residuals;

fn main() -> fracbvp::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/logistic.toml").to_string());
    let prob = load_problem(&path)?;
    let est = prob.bounds.estimate.as_ref();
    println!(
        "M = {:.4} ({:?}), K = {:.4} ({:?}), {} samples",
        prob.bounds.m[0],
        prob.bounds.m_source,
        prob.bounds.k[(0, 0)],
        prob.bounds.k_source,
        est.map_or(0, |e| e.samples)
    );
    let report = check_conditions(&prob);
    println!("r(Q) = {:.4}, all conditions hold: {}", report.spectral_radius, report.all_hold());

    let root = solve_determining(&prob, 4, &SolverConfig::default())?;
    println!("chi1* = {:.8}, |Delta_4| = {:.2e}", root.chi1_star[0], root.residual[0]);
    let res = residuals(&prob, &root.solution, true)?;
    println!("interior residual {:.3e}", res.sup_residual[0]);
    for t in [0.0, 0.5, 1.0, 1.5, 2.0] {
        println!("u({t}) = {:.6}", root.solution.last().eval(t)[0]);
    }
    Ok(())
}
