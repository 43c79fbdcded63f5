//! Product-trapezoid fractional integrals and the numerical Caputo
//! derivative against closed forms.

use fracbvp::fracops::{alpha1_max, caputo_derivative, frac_integral_all, gamma, Grid, GridFunction};

fn main() -> fracbvp::Result<()> {
    let p = 1.5;
    for n in [101, 201, 401, 801] {
        let grid = Grid::new(1.0, n)?;
        let one = GridFunction::from_fn(grid, 1, |_, out| out[0] = 1.0)?;
        let integral = frac_integral_all(&one, p)?;
        let int_err = grid
            .nodes()
            .enumerate()
            .map(|(j, t)| (integral.value(0, j) - t.powf(p) / gamma(p + 1.0).unwrap()).abs())
            .fold(0.0, f64::max);

        let u = GridFunction::from_fn(grid, 1, |t, out| out[0] = t.powf(p) + t.powi(3))?;
        let d = caputo_derivative(&u, p)?;
        let exact = |t: f64| gamma(p + 1.0).unwrap() + 6.0 * t.powf(3.0 - p) / gamma(4.0 - p).unwrap();
        let caputo_err = (2..n - 2)
            .map(|j| (d.value(0, j) - exact(grid.node(j))).abs())
            .fold(0.0, f64::max);
        println!("N = {n:4}: I^p[1] error {int_err:.2e}, Caputo error {caputo_err:.2e}");
    }
    println!("max alpha_1 on [0, 1] for p = {p}: {:.6}", alpha1_max(0.0, 1.0, p));
    Ok(())
}
