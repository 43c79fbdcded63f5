//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fracbvp::conditions::check_conditions;
use fracbvp::determine::{exclusion_sweep, solve_sequence, SolverConfig};
use fracbvp::fracops::{self, Grid, GridFunction, ProductWeights};
use fracbvp::iterate::{run_iteration, IterationOptions};
use fracbvp::problem::{BetaConvention, LoadOptions, Problem, ProblemConfig};
use fracbvp::verify::residuals;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gyre() -> Problem {
    Problem::builtin("acc-gyre", &LoadOptions::default()).expect("builtin loads")
}

fn gyre_constants() -> Outcome {
    let start = Instant::now();
    let prob = gyre();
    let rep = check_conditions(&prob);
    let elapsed = start.elapsed().as_secs_f64();
    let k = prob.bounds.k[(0, 0)];
    let m_sampled = prob.bounds.estimate.as_ref().expect("M estimated").m_sampled[0];
    let q = rep.q[(0, 0)];
    let q_ref = 1.0 / (6.0 * PI.sqrt());
    let m_rel = (m_sampled - 844.11).abs() / 844.11;
    let pass = k == 0.5 && m_rel <= 0.01 && (q - q_ref).abs() <= 1e-6 && elapsed < 5.0;
    outcome(
        pass,
        format!(
            "K = {k}, M = {m_sampled:.4} ({:.3}% from 844.11; inflated {:.4}), Q = {q:.8} (ref {q_ref:.8}), {elapsed:.2} s",
            100.0 * m_rel,
            prob.bounds.m[0]
        ),
    )
}

fn gyre_trace() -> Outcome {
    let start = Instant::now();
    let prob = gyre();
    let roots = match solve_sequence(&prob, 2, &SolverConfig::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("solver error: {e}")),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let expected = [(-320.68, 0.05), (-332.06, 0.15), (-332.30, 0.15)];
    let chis: Vec<f64> = roots.iter().map(|r| r.chi1_star[0]).collect();
    let pass = chis
        .iter()
        .zip(expected)
        .all(|(c, (e, tol))| (c - e).abs() <= tol)
        && elapsed < 60.0;
    outcome(
        pass,
        format!(
            "chi1 = [{:.4}, {:.4}, {:.4}], N = {}, {elapsed:.2} s",
            chis[0],
            chis[1],
            chis[2],
            prob.grid.len()
        ),
    )
}

fn boundary_error(prob: &Problem, u: &GridFunction) -> f64 {
    let last = prob.grid.len() - 1;
    (0..prob.dim())
        .map(|c| {
            (u.value(c, 0) - prob.alpha1[c])
                .abs()
                .max((u.value(c, last) - prob.alpha2[c]).abs())
        })
        .fold(0.0, f64::max)
}

fn dirichlet_exactness() -> Outcome {
    let mut worst = 0.0_f64;
    let mut count = 0;
    for name in ["acc-gyre", "zero-rhs"] {
        let prob = Problem::builtin(name, &LoadOptions::default()).expect("builtin");
        let roots = match solve_sequence(&prob, 2, &SolverConfig::default()) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("{name}: {e}")),
        };
        for r in &roots {
            for u in &r.solution.iterates {
                worst = worst.max(boundary_error(&prob, u));
                count += 1;
            }
        }
    }
    for prob in random_scalar_problems(20, 17) {
        let sol = run_iteration(&prob.0, &[prob.1], &IterationOptions::fixed(5)).expect("iterates");
        for u in &sol.iterates {
            worst = worst.max(boundary_error(&prob.0, u));
            count += 1;
        }
    }
    outcome(worst <= 1e-12, format!("{count} iterates, worst boundary error {worst:.2e}"))
}

/// `f = a sin u + b cos(w t) + c t` with `M = |a| + |b| + |c| T`, `K = |a|`
/// and `r(Q) < 0.5`; returns the problem and a slope `χ₁`.
fn random_scalar_problems(count: usize, seed: u64) -> Vec<(Problem, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let p = rng.random_range(1.05..=2.0);
            let horizon = rng.random_range(0.5..2.0);
            let kernel = fracops::alpha1_max(0.0, horizon, p);
            let a = rng.random_range(-1.0..1.0) * 0.49 / kernel;
            let b = rng.random_range(-3.0..3.0);
            let c = rng.random_range(-3.0..3.0);
            let w = rng.random_range(0.5..6.0);
            let a1 = rng.random_range(-1.0..1.0);
            let a2 = rng.random_range(-1.0..1.0);
            let chi = rng.random_range(-2.0..2.0);
            let mut cfg = ProblemConfig::scalar(
                p,
                horizon,
                (a1, a2),
                (-50.0, 50.0),
                (-5.0, 5.0),
                "a*sin(u1) + b*cos(w*t) + c*t",
            );
            cfg.rhs.constants = BTreeMap::from([
                ("a".to_string(), a),
                ("b".to_string(), b),
                ("c".to_string(), c),
                ("w".to_string(), w),
            ]);
            cfg.bounds.m = Some((a.abs() + b.abs() + c.abs() * horizon).into());
            cfg.bounds.k = Some(a.abs().into());
            (Problem::from_config(cfg, &LoadOptions::default()).expect("valid"), chi)
        })
        .collect()
}

fn step_bound_suite() -> Outcome {
    let mut worst = 0.0_f64;
    let mut failures = 0;
    let problems = random_scalar_problems(20, 4);
    for (prob, chi) in &problems {
        let rep = check_conditions(prob);
        assert!(rep.spectral_radius < 0.5);
        let sol = run_iteration(prob, &[*chi], &IterationOptions::fixed(5)).expect("iterates");
        let q = rep.q[(0, 0)];
        for (k, diff) in sol.sup_diffs.iter().enumerate() {
            let bound = q.powi(k as i32) * rep.m[0] * rep.kernel_constant;
            let ratio = diff[0] / bound;
            worst = worst.max(ratio);
            if diff[0] > 1.05 * bound {
                failures += 1;
            }
        }
    }
    outcome(
        failures == 0,
        format!(
            "{} problems, m = 1..5: {failures} violation(s), worst ratio to bound {worst:.4}",
            problems.len()
        ),
    )
}

fn random_polynomial(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let degree = rng.random_range(0..=5);
    (0..=degree).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn kernel_estimate_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut lines = Vec::new();
    let mut pass = true;
    for p in [1.1, 1.5, 2.0] {
        let grid = Grid::new(1.0, 401).expect("grid");
        let weights = ProductWeights::new(p, &grid).expect("weights");
        let a1: Vec<f64> = grid
            .nodes()
            .map(|t| fracops::alpha1(t, 0.0, 1.0, p).expect("in range"))
            .collect();

        // pointwise estimate of the corrected integral
        let mut eq10_nodes = 0;
        let mut eq10_ratio = 0.0_f64;
        for _ in 0..100 {
            let coeffs = random_polynomial(&mut rng);
            let g: Vec<f64> = grid
                .nodes()
                .map(|t| coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c))
                .collect();
            let gmax = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let corr = fracops::corrected_integral(&weights, &grid, &g);
            for (j, v) in corr.iter().enumerate() {
                let bound = a1[j] * gmax;
                if v.abs() > bound * (1.0 + 1e-9) + 1e-14 {
                    eq10_nodes += 1;
                    eq10_ratio = eq10_ratio.max(v.abs() / bound);
                }
            }
        }

        // iterated kernel estimates against c^m α₁(t)
        let c = fracops::alpha1_max(0.0, 1.0, p);
        let seq = fracops::iterated_kernel_estimates(&grid, p, 6).expect("kernel sequence");
        let mut eq12_nodes = 0;
        let mut eq12_ratio = 0.0_f64;
        let mut uniform_ok = true;
        for m in 1..=5 {
            let scale = c.powi(m as i32);
            for (j, v) in seq[m].iter().enumerate() {
                let bound = scale * a1[j];
                if *v > bound * (1.0 + 1e-9) + 1e-15 {
                    eq12_nodes += 1;
                    eq12_ratio = eq12_ratio.max(v / bound);
                }
            }
            let sup = seq[m].iter().fold(0.0_f64, |a, b| a.max(*b));
            uniform_ok &= sup <= scale * c * (1.0 + 1e-9);
        }
        let ok = eq10_nodes == 0 && eq12_nodes == 0;
        pass &= ok;
        lines.push(format!(
            "p = {p}: corrected-integral estimate violated at {eq10_nodes} node(s) (worst ratio {eq10_ratio:.3}), \
             iterated estimate violated at {eq12_nodes} node(s) (worst ratio {eq12_ratio:.3}), \
             uniform form {}",
            if uniform_ok { "holds" } else { "violated" }
        ));
    }
    outcome(pass, lines.join("\n         "))
}

fn zero_rhs_oracle() -> Outcome {
    let prob = Problem::builtin("zero-rhs", &LoadOptions::default()).expect("builtin");
    let roots = match solve_sequence(&prob, 2, &SolverConfig::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("solver error: {e}")),
    };
    let slope = (prob.alpha2[0] - prob.alpha1[0]) / prob.horizon;
    let mut chi_err = 0.0_f64;
    let mut u_err = 0.0_f64;
    for r in &roots {
        chi_err = chi_err.max((r.chi1_star[0] - slope).abs());
        let u = r.solution.last();
        for (j, t) in prob.grid.nodes().enumerate() {
            u_err = u_err.max((u.value(0, j) - (prob.alpha1[0] + slope * t)).abs());
        }
    }
    outcome(
        chi_err <= 1e-10 && u_err <= 1e-10,
        format!("|chi1 - {slope}| = {chi_err:.2e}, sup |u - line| = {u_err:.2e}"),
    )
}

/// Sup error of the Caputo derivative over nodes `2..=N-3`.
fn caputo_error(p: f64, n: usize, u: impl Fn(f64) -> f64, exact: impl Fn(f64) -> f64) -> f64 {
    let grid = Grid::new(1.0, n).expect("grid");
    let g = GridFunction::from_fn(grid, 1, |t, out| out[0] = u(t)).expect("finite");
    let d = fracops::caputo_derivative(&g, p).expect("caputo");
    (2..n - 2)
        .map(|j| (d.value(0, j) - exact(grid.node(j))).abs())
        .fold(0.0, f64::max)
}

/// `ᶜD^p [t^p e^t] = Σ_k Γ(p+k+1) / (k! Γ(k+1)) t^k`.
fn caputo_tp_exp(p: f64, t: f64) -> f64 {
    let mut sum = 0.0;
    let mut fact = 1.0;
    for k in 0..60 {
        if k > 0 {
            fact *= k as f64;
        }
        let term = fracops::gamma(p + k as f64 + 1.0).expect("positive") / (fact * fact) * t.powi(k);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn calculus_identities() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    let mut worst_integral = 0.0_f64;
    for p in [1.1, 1.5, 1.9, 2.0] {
        let grid = Grid::new(1.0, 401).expect("grid");
        let ones = GridFunction::from_fn(grid, 1, |_, out| out[0] = 1.0).expect("finite");
        let integral = fracops::frac_integral_all(&ones, p).expect("integral");
        let gp1 = fracops::gamma(p + 1.0).expect("positive");
        for (j, t) in grid.nodes().enumerate() {
            worst_integral = worst_integral.max((integral.value(0, j) - t.powf(p) / gp1).abs());
        }
    }
    pass &= worst_integral <= 1e-10;
    lines.push(format!("I^p[1] worst error {worst_integral:.2e}"));

    let sizes = [101, 201, 401, 801];
    for p in [1.1, 1.5, 1.9, 2.0] {
        let gp1 = fracops::gamma(p + 1.0).expect("positive");
        let plain: Vec<f64> = sizes
            .iter()
            .map(|&n| caputo_error(p, n, |t| t.powf(p), |_| gp1))
            .collect();
        let plain_ok = plain.iter().all(|e| *e <= 1e-9 * gp1) || min_order(&plain) >= 1.0;
        let smooth: Vec<f64> = sizes
            .iter()
            .map(|&n| caputo_error(p, n, |t| t.powf(p) * t.exp(), |t| caputo_tp_exp(p, t)))
            .collect();
        let order = min_order(&smooth);
        pass &= plain_ok && order >= 1.0;
        lines.push(format!(
            "p = {p}: t^p errors [{}]; t^p e^t errors [{}], min order {order:.2}",
            sci(&plain),
            sci(&smooth)
        ));
    }
    outcome(pass, lines.join("\n         "))
}

fn min_order(errors: &[f64]) -> f64 {
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min)
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
}

fn exclusion_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut sweeps = 0;
    let mut lost = 0;
    let mut toothless = 0;
    let mut excluded_total = 0;
    for _ in 0..50 {
        let p = rng.random_range(1.05..=2.0);
        let horizon = rng.random_range(0.5..2.0);
        let a1 = rng.random_range(-2.0..2.0);
        let a2 = rng.random_range(-2.0..2.0);
        let root = (a2 - a1) / horizon;
        let lo = root - rng.random_range(0.1..5.0);
        let hi = root + rng.random_range(0.1..5.0);
        let m = rng.random_range(0..=3);
        let mut cfg = ProblemConfig::scalar(p, horizon, (a1, a2), (-10.0, 10.0), (lo, hi), "0");
        cfg.problem.nodes = Some(101);
        let prob = Problem::from_config(cfg, &LoadOptions::default()).expect("valid");
        for per_axis in 1..=32 {
            let res = exclusion_sweep(&prob, m, per_axis).expect("sweep");
            sweeps += 1;
            let root_kept = res
                .subsets
                .iter()
                .any(|b| b.keep && b.domain.lo[0] <= root && root <= b.domain.hi[0]);
            if !root_kept {
                lost += 1;
            }
            let coeff = res.coefficient[(0, 0)];
            let far = res.subsets.iter().map(|b| b.delta[0].abs()).fold(0.0, f64::max);
            let diameter = (hi - lo) / per_axis as f64;
            if diameter < far / coeff && res.excluded() == 0 {
                toothless += 1;
            }
            excluded_total += res.excluded();
        }
    }
    outcome(
        lost == 0 && toothless == 0,
        format!(
            "{sweeps} sweeps: root box lost {lost} time(s), {toothless} sweep(s) without exclusion \
             where one was required, {excluded_total} boxes excluded in total"
        ),
    )
}

fn residual_improvement() -> Outcome {
    let prob = gyre();
    let roots = match solve_sequence(&prob, 2, &SolverConfig::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("solver error: {e}")),
    };
    let res: Vec<f64> = roots
        .iter()
        .map(|r| residuals(&prob, &r.solution, true).expect("residuals").sup_residual[0])
        .collect();
    outcome(
        res[2] <= 0.5 * res[0],
        format!(
            "sup residual m=0: {:.4e}, m=1: {:.4e}, m=2: {:.4e} (ratio {:.2e})",
            res[0],
            res[1],
            res[2],
            res[2] / res[0]
        ),
    )
}

fn beta_display() -> Outcome {
    let prob = gyre();
    let rep = check_conditions(&prob);
    let json = rep.to_json();
    let summary = rep.human_summary();
    let ratio = json["beta_over_M"].as_f64().unwrap_or(f64::NAN);
    let raw = json["beta_raw"][0].as_f64().unwrap_or(f64::NAN);
    let expected_raw = prob.bounds.m[0] * fracops::alpha1_max(0.0, 1.0, 1.5);
    let pass = (ratio - 1.0 / (3.0 * PI.sqrt())).abs() <= 1e-6
        && (raw - expected_raw).abs() <= 1e-9 * expected_raw
        && json["beta_convention"] == "normalized"
        && rep.beta_convention == BetaConvention::Normalized
        && summary.contains("beta (raw)")
        && summary.contains("beta / M")
        && summary.contains("D_beta verdict uses the normalized");
    outcome(
        pass,
        format!(
            "beta raw = {raw:.4}, beta/M = {ratio:.8}, verdict uses {}, D_beta ok = {}",
            json["beta_convention"], rep.dbeta_ok
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gyre constants M, K, Q", gyre_constants),
        ("gyre parameter trace", gyre_trace),
        ("Dirichlet exactness", dirichlet_exactness),
        ("successive-difference bound", step_bound_suite),
        ("kernel estimate inequalities", kernel_estimate_suite),
        ("zero right-hand side oracle", zero_rhs_oracle),
        ("fractional calculus identities", calculus_identities),
        ("exclusion soundness", exclusion_soundness),
        ("residual improvement", residual_improvement),
        ("beta normalisation display", beta_display),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        if !out.pass {
            failed += 1;
        }
        println!(
            "[{tag}] {:>2}. {name} ({:.1} s)\n         {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            out.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
