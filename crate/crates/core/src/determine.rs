//! The determining function `Δ_m(χ₁)`, its roots, the exclusion sweep over
//! `Ω` and the one-dimensional existence test.

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::conditions::check_conditions;
use crate::error::{Error, Result};
use crate::iterate::{rhs_on_grid, run_iteration, ApproxSolution, IterationOptions};
use crate::problem::{BoxDomain, Problem};

/// `Γ(p+1)/T^p [(α₂ − α₁ − χ₁ T) − I^p f(·, u_m)(T)]` for the last iterate.
pub fn delta_m(prob: &Problem, approx: &ApproxSolution) -> Result<Vec<f64>> {
    let g = rhs_on_grid(prob, approx.last())?;
    let weights = prob.weights();
    let last = prob.grid.len() - 1;
    let scale = prob.gamma_p1() / prob.horizon.powf(prob.order);
    Ok((0..prob.dim())
        .map(|c| {
            let lin = prob.alpha2[c] - prob.alpha1[c] - approx.chi1.chi1[c] * prob.horizon;
            scale * (lin - weights.integral_at(&g[c], last))
        })
        .collect())
}

/// Runs `m` steps from `u_0(·, χ₁)` and evaluates `Δ_m(χ₁)`.
pub fn delta_at(prob: &Problem, chi1: &[f64], m: usize, force: bool) -> Result<(Vec<f64>, ApproxSolution)> {
    let mut opts = IterationOptions::fixed(m);
    opts.force = force;
    let approx = run_iteration(prob, chi1, &opts)?;
    Ok((delta_m(prob, &approx)?, approx))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Bracket width at which Brent stops, relative to `1 + |χ|`.
    pub xtol: f64,
    /// Residual `max |Δ_m|` accepted as a root by the Newton path.
    pub ftol: f64,
    pub max_iter: usize,
    /// Points of the sign scan over `Ω` (scalar case).
    pub scan_probes: usize,
    /// Skip the `r(Q) < 1` precondition.
    pub force: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            xtol: 1e-13,
            ftol: 1e-9,
            max_iter: 200,
            scan_probes: 16,
            force: false,
        }
    }
}

/// A root of `Δ_m` and how it was found.
#[derive(Debug, Clone)]
pub struct DeterminingResult {
    pub chi1_star: Vec<f64>,
    /// `|Δ_m(χ₁*)|`.
    pub residual: Vec<f64>,
    pub iterations_used: usize,
    /// Every `(χ₁, Δ_m(χ₁))` probe in evaluation order.
    pub solver_trace: Vec<(Vec<f64>, Vec<f64>)>,
    pub solution: ApproxSolution,
}

struct Probe<'a> {
    prob: &'a Problem,
    m: usize,
    force: bool,
    trace: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Probe<'_> {
    fn eval(&mut self, chi: &[f64]) -> Result<Vec<f64>> {
        let (d, _) = delta_at(self.prob, chi, self.m, self.force)?;
        self.trace.push((chi.to_vec(), d.clone()));
        Ok(d)
    }

    fn eval_many(&mut self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let (prob, m, force) = (self.prob, self.m, self.force);
        let values: Vec<Vec<f64>> = points
            .par_iter()
            .map(|chi| delta_at(prob, chi, m, force).map(|r| r.0))
            .collect::<Result<_>>()?;
        self.trace
            .extend(points.iter().cloned().zip(values.iter().cloned()));
        Ok(values)
    }
}

/// Solves `Δ_m(χ₁) = 0` over `Ω`.
pub fn solve_determining(prob: &Problem, m: usize, cfg: &SolverConfig) -> Result<DeterminingResult> {
    let report = check_conditions(prob);
    if !report.contraction_ok() && !cfg.force {
        return Err(Error::BoundUndefined {
            spectral_radius: report.spectral_radius,
        });
    }
    let mut probe = Probe {
        prob,
        m,
        force: cfg.force,
        trace: Vec::new(),
    };
    let chi = if prob.dim() == 1 {
        brent(&mut probe, cfg)?
    } else {
        newton_with_fallback(&mut probe, cfg)?
    };
    let (delta, solution) = delta_at(prob, &chi, m, cfg.force)?;
    info!("m = {m}: chi1* = {chi:?}, |Delta| = {delta:?}, {} probes", probe.trace.len());
    Ok(DeterminingResult {
        chi1_star: chi,
        residual: delta.iter().map(|d| d.abs()).collect(),
        iterations_used: m,
        solver_trace: probe.trace,
        solution,
    })
}

/// Roots of `Δ_0, Δ_1, …, Δ_m` in turn.
pub fn solve_sequence(prob: &Problem, m: usize, cfg: &SolverConfig) -> Result<Vec<DeterminingResult>> {
    (0..=m).map(|k| solve_determining(prob, k, cfg)).collect()
}

fn brent(probe: &mut Probe, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let (lo, hi) = (probe.prob.omega.lo[0], probe.prob.omega.hi[0]);
    let count = cfg.scan_probes.max(2);
    let xs: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            if i + 1 == count {
                vec![hi]
            } else {
                vec![lo + (hi - lo) * i as f64 / (count - 1) as f64]
            }
        })
        .collect();
    let fs = probe.eval_many(&xs)?;
    if let Some(i) = fs.iter().position(|f| f[0] == 0.0) {
        return Ok(xs[i].clone());
    }
    let bracket = (0..count - 1)
        .filter(|&i| fs[i][0].signum() != fs[i + 1][0].signum())
        .min_by(|&i, &j| {
            let wi = fs[i][0].abs().min(fs[i + 1][0].abs());
            let wj = fs[j][0].abs().min(fs[j + 1][0].abs());
            wi.total_cmp(&wj)
        })
        .ok_or(Error::NoRootBracket { lo, hi })?;
    let (mut a, mut fa) = (xs[bracket][0], fs[bracket][0]);
    let (mut b, mut fb) = (xs[bracket + 1][0], fs[bracket + 1][0]);
    debug!("bracket [{a}, {b}] with Delta = ({fa}, {fb})");

    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..cfg.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * cfg.xtol * (1.0 + b.abs());
        let half = 0.5 * (c - b);
        if half.abs() <= tol || fb == 0.0 {
            return Ok(vec![b]);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * half * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * half * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * half * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = half;
                e = d;
            }
        } else {
            d = half;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(half) };
        fb = probe.eval(&[b])?[0];
    }
    Err(Error::NonConvergence {
        probes: probe.trace.len(),
        best_residual: fb.abs(),
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn newton_with_fallback(probe: &mut Probe, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let omega = probe.prob.omega.clone();
    let mut x = omega.center();
    let mut fx = probe.eval(&x)?;
    for round in 0..4 {
        match newton(probe, &omega, x.clone(), fx.clone(), cfg)? {
            Ok(root) => return Ok(root),
            Err((bx, bf)) => {
                debug!("Newton stagnated at {bx:?} (|Delta| = {}), refining grid", norm(&bf));
                let (gx, gf) = grid_refine(probe, &omega, &bx, &bf, round)?;
                x = gx;
                fx = gf;
                if norm(&fx) <= cfg.ftol {
                    return Ok(x);
                }
            }
        }
    }
    Err(Error::NonConvergence {
        probes: probe.trace.len(),
        best_residual: norm(&fx),
    })
}

type NewtonOutcome = std::result::Result<Vec<f64>, (Vec<f64>, Vec<f64>)>;

fn newton(
    probe: &mut Probe,
    omega: &BoxDomain,
    mut x: Vec<f64>,
    mut fx: Vec<f64>,
    cfg: &SolverConfig,
) -> Result<NewtonOutcome> {
    let n = x.len();
    for _ in 0..cfg.max_iter {
        if norm(&fx) <= cfg.ftol {
            return Ok(Ok(x));
        }
        let mut jac = DMatrix::zeros(n, n);
        let steps: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut xs = x.clone();
                xs[j] += 1e-6 * (1.0 + x[j].abs());
                xs
            })
            .collect();
        let cols = probe.eval_many(&steps)?;
        for j in 0..n {
            let h = steps[j][j] - x[j];
            for i in 0..n {
                jac[(i, j)] = (cols[j][i] - fx[i]) / h;
            }
        }
        let Some(dx) = jac.lu().solve(&DVector::from_column_slice(&fx)) else {
            return Ok(Err((x, fx)));
        };
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let mut trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a - lambda * d).collect();
            omega.project(&mut trial);
            let ft = probe.eval(&trial)?;
            if norm(&ft) < norm(&fx) {
                accepted = Some((trial, ft));
                break;
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((nx, nf)) => {
                let moved = norm(&nx.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
                x = nx;
                fx = nf;
                if moved <= cfg.xtol * (1.0 + norm(&x)) && norm(&fx) > cfg.ftol {
                    return Ok(Err((x, fx)));
                }
            }
            None => return Ok(Err((x, fx))),
        }
    }
    Ok(Err((x, fx)))
}

fn grid_refine(
    probe: &mut Probe,
    omega: &BoxDomain,
    start: &[f64],
    start_f: &[f64],
    round: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    const POINTS: usize = 9;
    let mut best = (start.to_vec(), start_f.to_vec());
    let mut half = omega.half_widths().iter().map(|h| h / 2f64.powi(round as i32)).collect::<Vec<_>>();
    for _ in 0..6 {
        for axis in 0..best.0.len() {
            let candidates: Vec<Vec<f64>> = (0..POINTS)
                .map(|i| {
                    let mut x = best.0.clone();
                    x[axis] += half[axis] * (2.0 * i as f64 / (POINTS - 1) as f64 - 1.0);
                    omega.project(&mut x);
                    x
                })
                .collect();
            let values = probe.eval_many(&candidates)?;
            for (x, f) in candidates.into_iter().zip(values) {
                if norm(&f) < norm(&best.1) {
                    best = (x, f);
                }
            }
        }
        for h in half.iter_mut() {
            *h *= 0.25;
        }
    }
    Ok(best)
}

/// One sub-box of `Ω` and its verdict.
#[derive(Debug, Clone)]
pub struct BoxVerdict {
    pub domain: BoxDomain,
    pub representative: Vec<f64>,
    pub delta: Vec<f64>,
    /// Right-hand side of the keep test, per component.
    pub threshold: Vec<f64>,
    pub keep: bool,
}

#[derive(Debug, Clone)]
pub struct ExclusionResult {
    pub m: usize,
    pub per_axis: usize,
    pub coefficient: DMatrix<f64>,
    pub tube: DVector<f64>,
    pub subsets: Vec<BoxVerdict>,
}

impl ExclusionResult {
    /// Indices of kept boxes.
    pub fn survivors(&self) -> Vec<usize> {
        (0..self.subsets.len()).filter(|&i| self.subsets[i].keep).collect()
    }

    pub fn excluded(&self) -> usize {
        self.subsets.len() - self.survivors().len()
    }
}

/// Splits `Ω` into `per_axis^n` boxes and keeps `Ω_i` iff
/// `|Δ_m(χ̃ⁱ)| ≤ C |χ − χ̃ⁱ|_max + Q^m (I−Q)^{-1} M` componentwise, with `χ̃ⁱ`
/// the box centre and `C` the exclusion coefficient.
pub fn exclusion_sweep(prob: &Problem, m: usize, per_axis: usize) -> Result<ExclusionResult> {
    if per_axis == 0 {
        return Err(Error::Invalid("subdivision count must be positive".into()));
    }
    let report = check_conditions(prob);
    let coefficient = report.exclusion_coefficient()?;
    let tube = report.delta_gap_bound(m)?;
    let boxes = prob.omega.subdivide(per_axis);
    let subsets = boxes
        .into_par_iter()
        .map(|domain| {
            let center = domain.center();
            let (delta, _) = delta_at(prob, &center, m, false)?;
            let radius = DVector::from_vec(domain.half_widths());
            let rhs = &coefficient * radius + &tube;
            let threshold: Vec<f64> = rhs.iter().copied().collect();
            let keep = delta.iter().zip(&threshold).all(|(d, r)| {
                // floating-point allowance only
                d.abs() <= r + 64.0 * f64::EPSILON * (d.abs() + r)
            });
            Ok(BoxVerdict {
                domain,
                representative: center,
                delta,
                threshold,
                keep,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExclusionResult {
        m,
        per_axis,
        coefficient,
        tube,
        subsets,
    })
}

/// Outcome of the endpoint test on a scalar `Ω = [a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceVerdict {
    pub m: usize,
    pub phi_lo: f64,
    pub phi_hi: f64,
    /// `Q^m M / (1 − Q)`.
    pub tube: f64,
    /// `(sgn Φ(b) − sgn Φ(a)) / 2`.
    pub degree: i32,
    pub certified: bool,
}

pub fn existence_check_scalar(prob: &Problem, m: usize) -> Result<ExistenceVerdict> {
    if prob.dim() != 1 {
        return Err(Error::Unsupported(
            "the endpoint existence test is only available for scalar problems".into(),
        ));
    }
    let report = check_conditions(prob);
    let tube = report.delta_gap_bound(m)?[0];
    let (lo, _) = delta_at(prob, &prob.omega.lo, m, false)?;
    let (hi, _) = delta_at(prob, &prob.omega.hi, m, false)?;
    let (phi_lo, phi_hi) = (lo[0], hi[0]);
    let sign = |x: f64| {
        if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            0
        }
    };
    let clears = phi_lo.abs() > tube && phi_hi.abs() > tube;
    let degree = if clears { (sign(phi_hi) - sign(phi_lo)) / 2 } else { 0 };
    Ok(ExistenceVerdict {
        m,
        phi_lo,
        phi_hi,
        tube,
        degree,
        certified: clears && degree != 0,
    })
}
