//! Drops parameter sub-intervals that cannot hold a root, then runs the
//! endpoint existence test.

use fracbvp::determine::{exclusion_sweep, existence_check_scalar};
use fracbvp::problem::{LoadOptions, Problem};

fn main() -> fracbvp::Result<()> {
    for (name, m, per_axis) in [("zero-rhs", 1, 8), ("acc-gyre", 2, 13)] {
        let prob = Problem::builtin(name, &LoadOptions::default())?;
        let res = exclusion_sweep(&prob, m, per_axis)?;
        println!("{name}: m = {m}, tube = {:.4e}, slope = {:.4}", res.tube[0], res.coefficient[(0, 0)]);
        for b in &res.subsets {
            println!(
                "  [{:9.4}, {:9.4}]  |Delta| = {:10.4e}  threshold = {:10.4e}  {}",
                b.domain.lo[0],
                b.domain.hi[0],
                b.delta[0].abs(),
                b.threshold[0],
                if b.keep { "keep" } else { "drop" }
            );
        }
        let v = existence_check_scalar(&prob, m)?;
        println!(
            "  existence: Phi(a) = {:.4e}, Phi(b) = {:.4e}, degree = {}, certified = {}",
            v.phi_lo, v.phi_hi, v.degree, v.certified
        );
    }
    Ok(())
}
