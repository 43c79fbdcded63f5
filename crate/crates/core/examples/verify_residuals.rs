//! Caputo residual of the gyre approximations at m = 0, 1, 2.

use fracbvp::determine::{solve_determining, SolverConfig};
use fracbvp::problem::{LoadOptions, Problem};
use fracbvp::verify::residuals;

fn main() -> fracbvp::Result<()> {
    let prob = Problem::builtin("acc-gyre", &LoadOptions::default())?;
    for m in 0..=2 {
        let root = solve_determining(&prob, m, &SolverConfig::default())?;
        let with = residuals(&prob, &root.solution, true)?;
        let without = residuals(&prob, &root.solution, false)?;
        println!(
            "m = {m}, chi1 = {:.4}: sup residual {:.4e} (with Delta_m), {:.4e} (without)",
            root.chi1_star[0], with.sup_residual[0], without.sup_residual[0]
        );
    }
    Ok(())
}
