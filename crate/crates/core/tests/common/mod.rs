#![allow(dead_code)]

use std::collections::BTreeMap;

use fracbvp::fracops;
use fracbvp::problem::{LoadOptions, Problem, ProblemConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `f = a sin u + b cos(w t) + c t` with analytic `M = |a| + |b| + |c| T`,
/// `K = |a|` and `r(Q) < 0.5`, paired with a slope inside `Ω = [-5, 5]`.
pub fn random_scalar(rng: &mut ChaCha8Rng, nodes: usize) -> (Problem, f64) {
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
    cfg.problem.nodes = Some(nodes);
    cfg.rhs.constants = BTreeMap::from([
        ("a".to_string(), a),
        ("b".to_string(), b),
        ("c".to_string(), c),
        ("w".to_string(), w),
    ]);
    cfg.bounds.m = Some((a.abs() + b.abs() + c.abs() * horizon).into());
    cfg.bounds.k = Some(a.abs().into());
    (Problem::from_config(cfg, &LoadOptions::default()).unwrap(), chi)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two-component linear system `u1' = k1 u1 + g`, `u2' = k2 u2 + k12 u1`
/// with supplied bounds.
pub fn coupled_system(k1: f64, k2: f64, k12: f64) -> Problem {
    let src = format!(
        r#"
[problem]
p = 1.6
T = 1.0
alpha1 = [0.0, 1.0]
alpha2 = [1.0, 0.0]
N = 101
[domain]
lo = [-10.0, -10.0]
hi = [10.0, 10.0]
[rhs]
expr = "k1*u1 + cos(t); k2*u2 + k12*u1"
constants = {{ k1 = {k1}, k2 = {k2}, k12 = {k12} }}
[omega_box]
lo = [-5.0, -5.0]
hi = [5.0, 5.0]
[bounds]
M = [{m1}, {m2}]
K = [{a1}, 0.0, {a12}, {a2}]
"#,
        m1 = 10.0 * k1.abs() + 1.0,
        m2 = 10.0 * (k2.abs() + k12.abs()),
        a1 = k1.abs(),
        a12 = k12.abs(),
        a2 = k2.abs(),
    );
    Problem::from_toml_str(&src, &LoadOptions::default()).unwrap()
}
