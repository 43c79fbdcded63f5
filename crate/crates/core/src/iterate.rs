//! Parametrized successive approximations for a fixed initial slope `χ₁`.

use log::debug;
use nalgebra::DVector;

use crate::conditions::check_conditions;
use crate::error::{Error, Result};
use crate::fracops::{self, GridFunction};
use crate::problem::{DomainPolicy, Problem};

const DOMAIN_SLACK: f64 = 1e-9;

/// A value of `u'(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint {
    pub chi1: Vec<f64>,
    pub in_omega: bool,
}

impl ParameterPoint {
    pub fn new(prob: &Problem, chi1: &[f64]) -> Result<Self> {
        if chi1.len() != prob.dim() {
            return Err(Error::Size(format!(
                "chi1 has {} component(s), problem has {}",
                chi1.len(),
                prob.dim()
            )));
        }
        if chi1.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid(format!("chi1 = {chi1:?} is not finite")));
        }
        Ok(Self {
            chi1: chi1.to_vec(),
            in_omega: prob.omega.contains(chi1),
        })
    }
}

/// An iterate that left `D` (only recorded under [`DomainPolicy::Record`]).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainExcursion {
    /// Index of the offending iterate.
    pub iterate: usize,
    pub t: f64,
    pub component: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOptions {
    pub m_max: usize,
    /// Componentwise stopping tolerance on `max_t |u_m − u_{m−1}|`;
    /// `None` selects `1e-8 (1 + ‖α₂ − α₁‖)`.
    pub tol: Option<Vec<f64>>,
    /// Iterate even when `r(Q) ≥ 1`.
    pub force: bool,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self {
            m_max: 50,
            tol: None,
            force: false,
        }
    }
}

impl IterationOptions {
    /// Exactly `m` steps unless the sequence becomes stationary earlier.
    pub fn fixed(m: usize) -> Self {
        Self {
            m_max: m,
            tol: Some(Vec::new()),
            force: false,
        }
    }

    pub fn forced(mut self) -> Self {
        self.force = true;
        self
    }

    fn tolerance(&self, prob: &Problem) -> Vec<f64> {
        match &self.tol {
            Some(t) if t.len() == prob.dim() => t.clone(),
            Some(t) if t.len() == 1 => vec![t[0]; prob.dim()],
            Some(_) => vec![0.0; prob.dim()],
            None => vec![default_tol(prob); prob.dim()],
        }
    }
}

pub fn default_tol(prob: &Problem) -> f64 {
    let gap = prob
        .alpha1
        .iter()
        .zip(&prob.alpha2)
        .map(|(a, b)| (b - a).abs())
        .fold(0.0, f64::max);
    1e-8 * (1.0 + gap)
}

/// The iterates `u_0 … u_m` and their diagnostics.
#[derive(Debug, Clone)]
pub struct ApproxSolution {
    pub chi1: ParameterPoint,
    pub iterates: Vec<GridFunction>,
    /// `sup_diffs[k-1] = max_t |u_k − u_{k−1}|`, `k = 1..=m`.
    pub sup_diffs: Vec<Vec<f64>>,
    /// `Q^(k−1) M max α₁`, matching `sup_diffs`.
    pub bounds_used: Vec<Vec<f64>>,
    pub converged: bool,
    pub m: usize,
    pub tol: Vec<f64>,
    pub domain_escapes: Vec<DomainExcursion>,
}

impl ApproxSolution {
    pub fn last(&self) -> &GridFunction {
        self.iterates.last().expect("at least u_0")
    }
}

/// `α₁ + χ₁ t + (α₂ − α₁ − χ₁ T)(t/T)^p` on the problem grid.
pub fn u0(prob: &Problem, chi1: &[f64]) -> Result<GridFunction> {
    let n = prob.dim();
    if chi1.len() != n {
        return Err(Error::Size(format!(
            "chi1 has {} component(s), problem has {n}",
            chi1.len()
        )));
    }
    let horizon = prob.horizon;
    let p = prob.order;
    let mut u = GridFunction::from_fn(prob.grid, n, |t, out| {
        let r = (t / horizon).powf(p);
        for c in 0..n {
            let a1 = prob.alpha1[c];
            let a2 = prob.alpha2[c];
            out[c] = a1 + chi1[c] * t + (a2 - a1 - chi1[c] * horizon) * r;
        }
    })?;
    pin_boundary(prob, &mut u);
    Ok(u)
}

fn pin_boundary(prob: &Problem, u: &mut GridFunction) {
    let last = prob.grid.len() - 1;
    for c in 0..prob.dim() {
        u.set(c, 0, prob.alpha1[c]);
        u.set(c, last, prob.alpha2[c]);
    }
}

/// `f(t_j, u(t_j))` at every node, component-major.
pub fn rhs_on_grid(prob: &Problem, u: &GridFunction) -> Result<Vec<Vec<f64>>> {
    let n = prob.dim();
    let len = prob.grid.len();
    let mut comps = vec![vec![0.0; len]; n];
    let mut point = vec![0.0; n];
    let mut out = vec![0.0; n];
    for (j, t) in prob.grid.nodes().enumerate() {
        for (c, p) in point.iter_mut().enumerate() {
            *p = u.value(c, j);
        }
        prob.rhs.eval_into(t, &point, &mut out)?;
        for c in 0..n {
            comps[c][j] = out[c];
        }
    }
    Ok(comps)
}

fn domain_violations(prob: &Problem, u: &GridFunction) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for c in 0..prob.dim() {
        let (lo, hi) = (prob.domain.lo[c], prob.domain.hi[c]);
        for (j, &v) in u.component(c).iter().enumerate() {
            if v < lo - DOMAIN_SLACK || v > hi + DOMAIN_SLACK {
                out.push((c, j, v));
            }
        }
    }
    out
}

/// One application of the iteration map to `prev`.
pub fn iterate_step(prob: &Problem, prev: &GridFunction, chi1: &[f64]) -> Result<GridFunction> {
    let mut sink = Vec::new();
    step_recording(prob, prev, chi1, 0, &mut sink)
}

fn step_recording(
    prob: &Problem,
    prev: &GridFunction,
    chi1: &[f64],
    index: usize,
    escapes: &mut Vec<DomainExcursion>,
) -> Result<GridFunction> {
    if prev.dim() != prob.dim() || prev.grid() != &prob.grid {
        return Err(Error::Size("iterate is not defined on the problem grid".into()));
    }
    let bad = domain_violations(prob, prev);
    if let Some(&(c, j, v)) = bad.first() {
        match prob.domain_policy {
            DomainPolicy::Strict => {
                return Err(Error::DomainEscape {
                    t: prob.grid.node(j),
                    component: c + 1,
                    value: v,
                    lo: prob.domain.lo[c],
                    hi: prob.domain.hi[c],
                })
            }
            DomainPolicy::Record => {
                debug!(
                    "iterate {index} leaves D at {} node(s), first at t = {}, u{} = {v}",
                    bad.len(),
                    prob.grid.node(j),
                    c + 1
                );
                escapes.extend(bad.into_iter().map(|(c, j, v)| DomainExcursion {
                    iterate: index,
                    t: prob.grid.node(j),
                    component: c + 1,
                    value: v,
                }));
            }
        }
    }
    let g = rhs_on_grid(prob, prev)?;
    let base = u0(prob, chi1)?;
    let weights = prob.weights();
    let comps = g
        .iter()
        .zip(base.components())
        .map(|(gc, bc)| {
            let corr = fracops::corrected_integral(weights, &prob.grid, gc);
            bc.iter().zip(corr).map(|(b, v)| b + v).collect()
        })
        .collect();
    let mut next = GridFunction::from_components(prob.grid, comps)?;
    pin_boundary(prob, &mut next);
    Ok(next)
}

/// Iterates from `u_0` until the componentwise sup-difference drops below
/// the tolerance or `m_max` steps are done.
pub fn run_iteration(prob: &Problem, chi1: &[f64], opts: &IterationOptions) -> Result<ApproxSolution> {
    let report = check_conditions(prob);
    if !report.contraction_ok() && !opts.force {
        return Err(Error::BoundUndefined {
            spectral_radius: report.spectral_radius,
        });
    }
    let point = ParameterPoint::new(prob, chi1)?;
    let tol = opts.tolerance(prob);
    let per_step = &report.m * report.kernel_constant;

    let mut iterates = vec![u0(prob, chi1)?];
    let mut sup_diffs = Vec::new();
    let mut bounds_used = Vec::new();
    let mut escapes = Vec::new();
    let mut converged = false;
    let mut bound = per_step;
    for m in 1..=opts.m_max {
        let prev = iterates.last().expect("non-empty");
        let next = step_recording(prob, prev, chi1, m - 1, &mut escapes)?;
        let diff = next.sup_diff(prev);
        let done = diff.iter().zip(&tol).all(|(d, t)| d <= t);
        sup_diffs.push(diff);
        bounds_used.push(bound.iter().copied().collect());
        bound = &report.q * &bound;
        iterates.push(next);
        if done {
            converged = true;
            break;
        }
    }
    if !escapes.is_empty() {
        debug!(
            "chi1 = {chi1:?}: {} node value(s) outside D across the iteration",
            escapes.len()
        );
    }
    let m = iterates.len() - 1;
    Ok(ApproxSolution {
        chi1: point,
        iterates,
        sup_diffs,
        bounds_used,
        converged,
        m,
        tol,
        domain_escapes: escapes,
    })
}

/// `max_t |u − 𝒯[u]|` where `𝒯` is the iteration map at `χ₁`.
pub fn fixed_point_residual(prob: &Problem, u: &GridFunction, chi1: &[f64]) -> Result<Vec<f64>> {
    let mut sink = Vec::new();
    let image = step_recording(prob, u, chi1, 0, &mut sink)?;
    Ok(image.sup_diff(u))
}

/// Bound `Q^(m−1) M max α₁` as a vector, for external comparison.
pub fn step_bound(prob: &Problem, m: usize) -> DVector<f64> {
    let report = check_conditions(prob);
    let mut b = &report.m * report.kernel_constant;
    for _ in 1..m {
        b = &report.q * b;
    }
    b
}
