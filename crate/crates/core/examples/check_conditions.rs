//! Constants and verdicts of the sufficient conditions for the gyre problem.

use fracbvp::conditions::check_conditions;
use fracbvp::problem::{LoadOptions, Problem};

fn main() -> fracbvp::Result<()> {
    let prob = Problem::builtin("acc-gyre", &LoadOptions::default())?;
    let report = check_conditions(&prob);
    print!("{}", report.human_summary());
    for (m, bound) in report.apriori_bounds.iter().take(5).enumerate() {
        println!("|u - u_{m}| <= {:.3e}", bound[0]);
    }
    Ok(())
}
