//! Determining-equation roots for the gyre problem at m = 0, 1, 2.

use fracbvp::determine::{solve_sequence, SolverConfig};
use fracbvp::problem::{LoadOptions, Problem};

fn main() -> fracbvp::Result<()> {
    let prob = Problem::builtin("acc-gyre", &LoadOptions::default())?;
    let roots = solve_sequence(&prob, 2, &SolverConfig::default())?;
    for (m, r) in roots.iter().enumerate() {
        println!(
            "m = {m}: chi1 = {:.4}, |Delta_m| = {:.2e}, probes = {}, nodes outside D = {}",
            r.chi1_star[0],
            r.residual[0],
            r.solver_trace.len(),
            r.solution.domain_escapes.len()
        );
    }
    let last = roots.last().expect("three roots").solution.last();
    println!("u_2(0.5) = {:.6}", last.eval(0.5)[0]);
    Ok(())
}
