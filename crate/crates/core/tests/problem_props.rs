use fracbvp::problem::{estimate_bounds, BoundSampling, LoadOptions, Problem, ProblemConfig};
use fracbvp::Error;
use proptest::prelude::*;

const VALID: &str = r#"
[problem]
p = 1.5
T = 1.0
alpha1 = 0.0
alpha2 = 1.0
N = 41
[domain]
lo = -2.0
hi = 2.0
[rhs]
expr = "sin(u1) + t"
[omega_box]
lo = -3.0
hi = 3.0
[bounds]
M = 2.0
K = 1.0
"#;

fn sampling() -> BoundSampling {
    BoundSampling {
        per_axis: 60,
        ..BoundSampling::default()
    }
}

fn convex_problem(lo: f64, hi: f64) -> Problem {
    let cfg = ProblemConfig::scalar(1.5, 1.0, (lo, lo), (lo, hi), (-1.0, 1.0), "u1^2 + exp(u1) + t");
    Problem::from_config(
        cfg,
        &LoadOptions {
            nodes: Some(21),
            sampling: sampling(),
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimates_grow_with_the_domain(lo in 0.0..1.0f64, width in 0.5..2.0f64, extra in 0.0..2.0f64) {
        let small = estimate_bounds(&convex_problem(lo, lo + width), &sampling()).unwrap();
        let large = estimate_bounds(&convex_problem(lo, lo + width + extra), &sampling()).unwrap();
        prop_assert!(large.m[0] >= small.m[0]);
        prop_assert!(large.k[(0, 0)] >= small.k[(0, 0)] * (1.0 - 1e-4));
    }

    #[test]
    fn loading_never_panics(cut in 0usize..VALID.len(), junk in "[\\[\\]=a-zA-Z0-9.\" \n-]{0,20}") {
        let mut text = VALID[..cut].to_string();
        text.push_str(&junk);
        text.push_str(&VALID[cut..]);
        let _ = Problem::from_toml_str(&text, &LoadOptions::default());
    }
}

#[test]
fn estimate_inflates_the_sampled_supremum() {
    let prob = convex_problem(0.0, 1.0);
    let est = prob.bounds.estimate.as_ref().unwrap();
    let exact_m = 1.0 + 1f64.exp() + 1.0;
    assert!((est.m_sampled[0] - exact_m).abs() <= 1e-12);
    assert!((est.m[0] - 1.01 * exact_m).abs() <= 1e-9);
    assert!(est.samples >= 1000);
}

#[test]
fn invariant_violations_are_named() {
    let swap = |from: &str, to: &str| Problem::from_toml_str(&VALID.replace(from, to), &LoadOptions::default());
    assert!(swap("", "").is_ok());
    for (from, to, needle) in [
        ("p = 1.5", "p = 2.5", "p"),
        ("p = 1.5", "p = 1.0", "p"),
        ("T = 1.0", "T = -1.0", "T"),
        ("alpha2 = 1.0", "alpha2 = 7.0", "alpha2"),
        ("K = 1.0", "K = -1.0", "K"),
        ("N = 41", "N = 3", "N"),
        ("lo = -3.0\nhi = 3.0", "lo = 3.0\nhi = -3.0", "lo"),
    ] {
        let err = swap(from, to).unwrap_err();
        assert!(err.to_string().contains(needle), "{from} -> {to}: {err}");
    }
    match swap("[rhs]\nexpr = \"sin(u1) + t\"", "[rhs]") {
        Err(Error::MissingField(f)) => assert_eq!(f, "expr"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(swap("sin(u1)", "sin(u2)"), Err(Error::UnknownIdentifier { .. } | Error::Invalid(_))));
    assert!(matches!(swap("N = 41", "N = 41\nspeed = 3"), Err(Error::Config(_))));
}

#[test]
fn subdivision_covers_the_box() {
    let prob = convex_problem(0.0, 1.0);
    let boxes = prob.omega.subdivide(7);
    assert_eq!(boxes.len(), 7);
    assert_eq!(boxes[0].lo[0], prob.omega.lo[0]);
    assert_eq!(boxes[6].hi[0], prob.omega.hi[0]);
    for w in boxes.windows(2) {
        assert_eq!(w[0].hi[0], w[1].lo[0]);
    }
}
