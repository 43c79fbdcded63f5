//! A-posteriori checks: the numerical Caputo derivative of an iterate
//! against the right-hand side, and figure tables.

use std::fmt::Write as _;

use crate::determine::delta_m;
use crate::error::{Error, Result};
use crate::fracops::{caputo_derivative, GridFunction};
use crate::iterate::{rhs_on_grid, ApproxSolution};
use crate::problem::Problem;

/// End panels left out of the interior supremum.
const EDGE_PANELS: usize = 2;

#[derive(Debug, Clone)]
pub struct ResidualReport {
    /// `|ᶜD^p u_m − f(·, u_m) − Δ_m|` at every node (`Δ_m` only when
    /// `includes_delta_offset`).
    pub residual_grid: GridFunction,
    /// Supremum over nodes `2 ..= N−3`.
    pub sup_residual: Vec<f64>,
    /// `(|u(0) − α₁|, |u(T) − α₂|)` per component.
    pub boundary_residuals: (Vec<f64>, Vec<f64>),
    pub includes_delta_offset: bool,
    pub delta: Vec<f64>,
    pub m: usize,
}

pub fn residuals(prob: &Problem, approx: &ApproxSolution, include_delta: bool) -> Result<ResidualReport> {
    let u = approx.last();
    let len = prob.grid.len();
    if len < 5 {
        return Err(Error::Size(format!("residuals need N >= 5 nodes, got {len}")));
    }
    let caputo = caputo_derivative(u, prob.order)?;
    let f = rhs_on_grid(prob, u)?;
    let delta = delta_m(prob, approx)?;
    let comps: Vec<Vec<f64>> = (0..prob.dim())
        .map(|c| {
            let offset = if include_delta { delta[c] } else { 0.0 };
            caputo
                .component(c)
                .iter()
                .zip(&f[c])
                .map(|(d, fv)| (d - fv - offset).abs())
                .collect()
        })
        .collect();
    let sup_residual = comps
        .iter()
        .map(|r| r[EDGE_PANELS..len - EDGE_PANELS].iter().fold(0.0, |m: f64, x| m.max(*x)))
        .collect();
    let residual_grid = GridFunction::from_components(prob.grid, comps)?;
    let start = (0..prob.dim()).map(|c| (u.value(c, 0) - prob.alpha1[c]).abs()).collect();
    let end = (0..prob.dim())
        .map(|c| (u.value(c, len - 1) - prob.alpha2[c]).abs())
        .collect();
    Ok(ResidualReport {
        residual_grid,
        sup_residual,
        boundary_residuals: (start, end),
        includes_delta_offset: include_delta,
        delta,
        m: approx.m,
    })
}

/// CSV with `t`, every iterate, `f(t, u_m)` and `ᶜD^p u_m`.
///
/// Scalar problems use the header `t,u_0,...,u_m,f,caputo`; systems suffix
/// every column with `_<component>`.
pub fn emit_figure_data(prob: &Problem, approx: &ApproxSolution) -> Result<String> {
    let n = prob.dim();
    let u = approx.last();
    let caputo = caputo_derivative(u, prob.order)?;
    let f = rhs_on_grid(prob, u)?;
    let suffixes: Vec<String> = if n == 1 {
        vec![String::new()]
    } else {
        (1..=n).map(|c| format!("_{c}")).collect()
    };
    let mut header = vec!["t".to_string()];
    for k in 0..approx.iterates.len() {
        header.extend(suffixes.iter().map(|s| format!("u_{k}{s}")));
    }
    header.extend(suffixes.iter().map(|s| format!("f{s}")));
    header.extend(suffixes.iter().map(|s| format!("caputo{s}")));

    let mut out = header.join(",");
    out.push('\n');
    for (j, t) in prob.grid.nodes().enumerate() {
        write!(out, "{t:.16e}").expect("string write");
        for it in &approx.iterates {
            for c in 0..n {
                write!(out, ",{:.16e}", it.value(c, j)).expect("string write");
            }
        }
        for fc in &f {
            write!(out, ",{:.16e}", fc[j]).expect("string write");
        }
        for c in 0..n {
            write!(out, ",{:.16e}", caputo.value(c, j)).expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}
