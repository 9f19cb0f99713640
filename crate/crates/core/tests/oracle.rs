use std::fs;
use std::path::PathBuf;

use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;

use pevalyzer_core::frontend::{load, Program};
use pevalyzer_core::oracle::*;
use pevalyzer_core::poly::{pow_q, q, qf, Q};

fn bench(name: &str) -> Program {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks").join(format!("{}.pw", name));
    load(&fs::read_to_string(path).unwrap()).unwrap()
}

fn exact(p: &Program, entry: &str, args: &[i64], depth: usize) -> Q {
    let args: Vec<Q> = args.iter().map(|&a| q(a)).collect();
    exact_expectation(p, entry, &args, &Memory::new(), depth, &ExactConfig::default()).unwrap()
}

fn mc(p: &Program, entry: &str, args: &[i64], samples: usize, seed: u64) -> McEstimate {
    let args: Vec<Q> = args.iter().map(|&a| q(a)).collect();
    let cfg = McConfig { samples, seed, ..McConfig::default() };
    monte_carlo(p, entry, &args, &Memory::new(), &cfg).unwrap()
}

#[test]
fn balls_three_at_depth_four_is_three_fifths() {
    assert_eq!(exact(&bench("balls"), "balls", &[3], 4), qf(3, 5));
}

#[test]
fn depth_zero_is_zero() {
    for (name, args) in [("balls", vec![5]), ("throws", vec![]), ("hire", vec![4])] {
        assert!(exact(&bench(name), name, &args, 0).is_zero());
    }
}

#[test]
fn throws_at_depth_ten_is_a_geometric_partial_sum() {
    let expected: Q = (1..=10).map(|k| q(k) * qf(1, 5) * pow_q(&qf(4, 5), (k - 1) as u32)).sum();
    let got = exact(&bench("throws"), "throws", &[], 10);
    assert_eq!(got, expected);
    assert!(got < q(5));
    assert!(exact(&bench("throws"), "throws", &[], 11) > got);
}

#[test]
fn hire_is_the_harmonic_number() {
    let h4 = q(1) + qf(1, 2) + qf(1, 3) + qf(1, 4);
    assert_eq!(exact(&bench("hire"), "hire", &[4], 10), h4);
}

#[test]
fn shadowing_local_is_returned() {
    let p = load("def f(x): var x := 1; return x").unwrap();
    for a in [-3, 0, 7] {
        assert_eq!(exact(&p, "f", &[a], 3), q(1));
    }
}

#[test]
fn nondeterminism_takes_the_better_branch() {
    let p = load("def f(): var x := 0; if (*) {x := 1} else {x ~ Bernoulli(1/2); x := 4 * x}; return x").unwrap();
    assert_eq!(exact(&p, "f", &[], 1), q(2));
}

#[test]
fn biased_coin_reaches_three_halves_of_x1() {
    let p = bench("biased_coin");
    assert_eq!(exact(&p, "biased_coin", &[5, 0], 1), qf(15, 2));
    assert_eq!(exact(&p, "biased_coin", &[0, 0], 1), q(0));
}

#[test]
fn every_five_approaches_its_coupon_value() {
    let p = bench("every_5");
    let coupon: Q = (1..=5).map(|k| qf(5, k)).sum();
    let v = exact(&p, "main", &[], 60);
    assert!(v <= coupon);
    assert!(coupon.clone() - v < qf(1, 100));
}

#[test]
fn geo_returns_zero() {
    let p = bench("geo");
    assert!(exact(&p, "geo", &[], 12).is_zero());
    let e = mc(&p, "geo", &[], 1000, 1);
    assert_eq!(e.mean, 0.0);
}

#[test]
fn constant_return_has_no_variance() {
    let p = load("def f(): return 7").unwrap();
    let e = mc(&p, "f", &[], 1000, 3);
    assert_eq!(e.mean, 7.0);
    assert_eq!(e.stderr, 0.0);
    assert_eq!(e.truncated, 0);
}

#[test]
fn balls_sampling_agrees_with_one_fifth_of_n() {
    let e = mc(&bench("balls"), "balls", &[10], 100_000, 11);
    assert!((e.mean - 2.0).abs() <= 4.0 * e.stderr, "{:?}", e);
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let p = bench("rdwalk");
    assert_eq!(mc(&p, "rdwalk", &[5], 5000, 9), mc(&p, "rdwalk", &[5], 5000, 9));
    assert_ne!(mc(&p, "rdwalk", &[5], 5000, 9).mean, mc(&p, "rdwalk", &[5], 5000, 10).mean);
}

#[test]
fn sampling_agrees_with_enumeration() {
    let cases: [(&str, &str, Vec<i64>); 6] = [
        ("balls", "balls", vec![6]),
        ("hire", "hire", vec![6]),
        ("binomial_update", "binomial_update", vec![6]),
        ("rec1", "f", vec![5]),
        ("biased_coin", "biased_coin", vec![3, 1]),
        ("double_recursive", "f", vec![4]),
    ];
    for (file, entry, args) in cases {
        let p = bench(file);
        let x = exact(&p, entry, &args, 12).to_f64().unwrap();
        let e = mc(&p, entry, &args, 20_000, 5);
        assert!((e.mean - x).abs() <= 4.0 * e.stderr + 1e-9, "{}: exact {} vs {:?}", file, x, e);
    }
}

#[test]
fn invalid_probability_is_reported() {
    let p = load("def f(n): var b := Bernoulli(n); return b").unwrap();
    let r = exact_expectation(&p, "f", &[q(2)], &Memory::new(), 1, &ExactConfig::default());
    assert!(matches!(r, Err(OracleError::InvalidDistribution(_))));
}

#[test]
fn unrolling_cap_drops_remaining_mass() {
    let p = load("def f(): var x := 0; while (x < 100) {x := x + 1}; return x").unwrap();
    let cfg = ExactConfig { unroll_cap: 10, ..ExactConfig::default() };
    assert!(exact_expectation(&p, "f", &[], &Memory::new(), 1, &cfg).unwrap().is_zero());
    assert_eq!(exact(&p, "f", &[], 1), q(100));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_is_monotone_in_depth(n in 0i64..8, depth in 0usize..10) {
        for (name, entry) in [("balls", "balls"), ("hire", "hire"), ("rdwalk", "rdwalk"), ("rec1", "f"), ("throws", "throws")] {
            let p = bench(name);
            let args: Vec<i64> = if name == "throws" { vec![] } else { vec![n] };
            prop_assert!(exact(&p, entry, &args, depth) <= exact(&p, entry, &args, depth + 1));
        }
    }

    #[test]
    fn expectation_is_linear_on_loop_free_bodies(
        a in 0i64..5, b in 0i64..5, p1 in 0i64..=4, v1 in 0i64..6, v2 in 0i64..6, lo in 0i64..3, w in 0i64..3,
    ) {
        let src = |ret: &str| format!(
            "def f(): var x := Discrete({}/4: {}, {}/4: {}); var y := Uniform({}, {}); return {}",
            p1, v1, 4 - p1, v2, lo, lo + w, ret
        );
        let ex = |ret: &str| exact(&load(&src(ret)).unwrap(), "f", &[], 1);
        let combined = ex(&format!("{} * x + {} * y", a, b));
        prop_assert_eq!(combined, q(a) * ex("x") + q(b) * ex("y"));
    }
}
