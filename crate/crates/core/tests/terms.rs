use std::collections::HashMap;

use num_traits::{One, Zero};
use proptest::prelude::*;

use pevalyzer_core::frontend::{BExpr, BinOp, CmpOp, Dist, Expr};
use pevalyzer_core::oracle::{eval_bexpr, State};
use pevalyzer_core::poly::{q, qf, Poly, Sym, SymKind, Q};
use pevalyzer_core::terms::{expected_term, Atom, Guard, Lit, Summand, Term};

fn x() -> Sym {
    Sym::prog("x")
}
fn y() -> Sym {
    Sym::prog("y")
}

fn lin(c: i64, a: i64, b: i64) -> Poly {
    &(&Poly::int(c) + &Poly::var(x()).scale(&q(a))) + &Poly::var(y()).scale(&q(b))
}

fn at(vals: &[(&'static str, i64)]) -> impl Fn(&Sym) -> Option<Q> {
    let vals = vals.to_vec();
    move |s: &Sym| vals.iter().find(|(n, _)| *n == s.name).map(|(_, v)| q(*v))
}

fn memory(xv: i64, yv: i64) -> HashMap<Sym, Q> {
    HashMap::from([(x(), q(xv)), (y(), q(yv))])
}

fn eval(t: &Term, m: &HashMap<Sym, Q>) -> Q {
    t.eval(&|s: &Sym| m.get(s).cloned()).unwrap()
}

/// A summand `[atoms]·(c + a·x + b·y + e·x·y)` with rational scaling.
type RawSummand = (Vec<(i64, i64, i64, bool)>, (i64, i64, i64, i64), i64);

fn build(raw: &[RawSummand]) -> Term {
    let mut t = Term::zero();
    for (atoms, (c, a, b, e), den) in raw {
        let lits = atoms.iter().map(|&(c, a, b, strict)| Atom::lit(lin(c, a, b), strict));
        let Some(g) = Guard::from_lits(lits) else { continue };
        let body = &lin(*c, *a, *b) + &(&Poly::var(x()) * &Poly::var(y())).scale(&q(*e));
        t = t.add(&Term::guarded(g, body).scale(&Poly::constant(qf(1, *den))));
    }
    t
}

fn raw_term() -> impl Strategy<Value = Vec<RawSummand>> {
    let atom = (-4i64..=4, -2i64..=2, -2i64..=2, any::<bool>());
    let body = (-3i64..=3, -3i64..=3, -3i64..=3, -1i64..=1);
    prop::collection::vec((prop::collection::vec(atom, 0..3), body, 1i64..=4), 0..4)
}

fn lin_expr(c: i64, a: i64, b: i64) -> Expr {
    let ax = Expr::bin(BinOp::Mul, Expr::int(a), Expr::var("x"));
    let by = Expr::bin(BinOp::Mul, Expr::int(b), Expr::var("y"));
    Expr::bin(BinOp::Add, Expr::bin(BinOp::Add, Expr::int(c), ax), by)
}

fn bexpr() -> impl Strategy<Value = BExpr> {
    let ops = prop::sample::select(vec![CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ne, CmpOp::Gt, CmpOp::Ge]);
    let leaf = prop_oneof![
        1 => Just(BExpr::True),
        1 => Just(BExpr::False),
        8 => (ops, -3i64..=3, -2i64..=2, -2i64..=2, -3i64..=3).prop_map(|(op, c, a, b, k)| {
            BExpr::cmp(op, lin_expr(c, a, b), Expr::int(k))
        }),
    ];
    leaf.prop_recursive(3, 8, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| BExpr::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| BExpr::or(a, b)),
            inner.prop_map(BExpr::not),
        ]
    })
}

fn dist() -> impl Strategy<Value = Dist> {
    let frac = |n: i64, d: i64| Expr::bin(BinOp::Div, Expr::int(n), Expr::int(d));
    prop_oneof![
        (0i64..=6, 1i64..=6).prop_map(move |(n, d)| Dist::Bernoulli(frac(n.min(d), d))),
        (-3i64..=3, 0i64..=3).prop_map(|(lo, w)| Dist::Uniform(Expr::int(lo), Expr::int(lo + w))),
        (0i64..=5, 0i64..=4).prop_map(move |(n, p)| Dist::Binomial(Expr::int(n), frac(p, 4))),
        (0i64..=6, 0i64..=6, 0i64..=6).prop_map(|(big, k, n)| {
            Dist::Hypergeometric(Expr::int(big), Expr::int(k.min(big)), Expr::int(n.min(big)))
        }),
        (0i64..=3, -3i64..=3, -3i64..=3).prop_map(move |(p, a, b)| {
            Dist::Discrete(vec![(frac(p, 3), Expr::int(a)), (frac(3 - p, 3), Expr::int(b))])
        }),
    ]
}

fn choose(n: i64, k: i64) -> Q {
    if k < 0 || k > n {
        return Q::zero();
    }
    (0..k).fold(Q::one(), |acc, i| acc * q(n - i) / q(i + 1))
}

fn pw(p: &Q, e: i64) -> Q {
    (0..e).fold(Q::one(), |acc, _| acc * p)
}

fn konst(e: &Expr) -> Q {
    e.as_const().unwrap()
}

/// Probability table of a constant-parameter distribution, from the textbook formulas.
fn brute_support(d: &Dist) -> Vec<(Q, i64)> {
    let int = |e: &Expr| konst(e).to_integer().try_into().unwrap();
    match d {
        Dist::Bernoulli(p) => vec![(konst(p), 1), (Q::one() - konst(p), 0)],
        Dist::Uniform(lo, hi) => {
            let (lo, hi): (i64, i64) = (int(lo), int(hi));
            (lo..=hi).map(|v| (qf(1, hi - lo + 1), v)).collect()
        }
        Dist::Binomial(n, p) => {
            let (n, p): (i64, Q) = (int(n), konst(p));
            (0..=n).map(|k| (choose(n, k) * pw(&p, k) * pw(&(Q::one() - &p), n - k), k)).collect()
        }
        Dist::Hypergeometric(big, good, n) => {
            let (big, good, n): (i64, i64, i64) = (int(big), int(good), int(n));
            (0..=n).map(|k| (choose(good, k) * choose(big - good, n - k) / choose(big, n), k)).collect()
        }
        Dist::Discrete(rows) => rows.iter().map(|(p, v)| (konst(p), int(v))).collect(),
    }
}

#[test]
fn guard_mul_positive_norm() {
    let n = Sym::prog("n");
    let norm = Term::norm(Poly::var(n.clone()));
    let gt = BExpr::cmp(CmpOp::Gt, Expr::var("n"), Expr::int(0));
    let t = norm.guard_mul_bexpr(&gt).unwrap();
    assert_eq!(t.summands().len(), 1);
    assert_eq!(t.to_string(), "[n ≥ 1]·n");
    for (v, want) in [(-2, 0), (0, 0), (3, 3)] {
        assert_eq!(t.eval(&at(&[("n", v)])).unwrap(), q(want));
    }
}

#[test]
fn guard_mul_by_constants() {
    let t = build(&[(vec![(1, 1, 0, false)], (2, 1, 0, 0), 1)]);
    assert_eq!(t.guard_mul_bexpr(&BExpr::True).unwrap(), t);
    assert!(t.guard_mul_bexpr(&BExpr::False).unwrap().is_zero());
}

#[test]
fn substitution_shifts_a_norm() {
    let b = Sym::prog("b");
    let l = Sym::new(SymKind::Free, "ℓ");
    let t = Term::norm(Poly::var(b.clone())).add(&Term::poly(Poly::var(l.clone())));
    let shifted = t.subst1(&b, &(&Poly::var(b.clone()) + &Poly::one()));
    assert_eq!(shifted.to_string(), "ℓ + ⟨b + 1⟩");
    assert_eq!(t.subst1(&b, &Poly::var(b.clone())), t);
    let inst = &Poly::var(Sym::unknown("d0")) + &(&Poly::var(Sym::unknown("d1")) * &Poly::var(l.clone()));
    let r = Term::norm(Poly::var(Sym::ret())).add(&Term::poly(Poly::var(l.clone())));
    let val = at(&[("ℓr", 2), ("ℓ", 3), ("d0", 1), ("d1", 2)]);
    assert_eq!(r.subst1(&l, &inst).eval(&val).unwrap(), q(2 + 1 + 2 * 3));
}

#[test]
fn scaling_and_addition() {
    let t = build(&[(vec![(0, 1, 0, false)], (0, 1, 0, 0), 1)]);
    assert_eq!(t.add(&Term::zero()), t);
    assert!(t.scale(&Poly::zero()).is_zero());
}

#[test]
fn bernoulli_continuation_of_balls() {
    let (c, b) = (Sym::prog("c"), Sym::prog("b"));
    let hit = BExpr::cmp(CmpOp::Eq, Expr::var("c"), Expr::int(1));
    let bp1 = &Poly::var(b.clone()) + &Poly::one();
    let t = Term::norm(bp1.clone())
        .guard_mul_bexpr(&hit)
        .unwrap()
        .add(&Term::norm(Poly::var(b.clone())).guard_mul_bexpr(&BExpr::not(hit)).unwrap());
    let d = Dist::Bernoulli(Expr::bin(BinOp::Div, Expr::int(1), Expr::int(5)));
    let e = expected_term(&c, &d, &t).unwrap();
    let want = Term::norm(bp1).scale(&Poly::constant(qf(1, 5))).add(&Term::norm(Poly::var(b)).scale(&Poly::constant(qf(4, 5))));
    for v in -3..8 {
        let val = at(&[("b", v)]);
        assert_eq!(e.eval(&val).unwrap(), want.eval(&val).unwrap());
    }
}

#[test]
fn uniform_mean_of_a_norm() {
    let d = Dist::Uniform(Expr::int(0), Expr::int(2));
    let e = expected_term(&x(), &d, &Term::norm(Poly::var(x()))).unwrap();
    assert_eq!(e.eval(&at(&[])).unwrap(), q(1));
}

#[test]
fn sampling_an_absent_variable_is_identity() {
    let t = Term::norm(Poly::var(y()));
    let d = Dist::Bernoulli(Expr::bin(BinOp::Div, Expr::int(1), Expr::int(3)));
    assert_eq!(expected_term(&x(), &d, &t).unwrap(), t);
}

#[test]
fn evaluation_examples() {
    let n = Term::norm(Poly::var(Sym::prog("n"))).scale(&Poly::constant(qf(1, 5)));
    assert_eq!(n.eval(&at(&[("n", 10)])).unwrap(), q(2));
    assert_eq!(Term::norm(Poly::var(x())).eval(&at(&[("x", -3)])).unwrap(), q(0));
    let l = Sym::new(SymKind::Free, "ℓ");
    let k = Term::norm(Poly::var(Sym::ret())).add(&Term::poly(Poly::var(l)));
    assert_eq!(k.eval(&at(&[("ℓr", 2), ("ℓ", 3)])).unwrap(), q(5));
}

#[test]
fn unbound_symbol_is_an_error() {
    assert!(Term::norm(Poly::var(x())).eval(&at(&[])).is_err());
}

#[test]
fn summands_expose_guard_and_fraction() {
    let t = build(&[(vec![(0, 1, 0, true)], (0, 1, 0, 0), 3)]);
    let s: &Summand = &t.summands()[0];
    assert_eq!(s.guard.atoms().len(), 1);
    assert!(matches!(Atom::gt(lin(0, 1, 0)), Lit::Atom(_)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn guard_mul_multiplies_by_the_indicator(raw in raw_term(), b in bexpr(), xv in -6i64..=6, yv in -6i64..=6) {
        let t = build(&raw);
        let m = memory(xv, yv);
        let st = State { locals: [("x".to_string(), q(xv)), ("y".to_string(), q(yv))].into(), ..State::default() };
        let ind = if eval_bexpr(&b, &st).unwrap() { Q::one() } else { Q::zero() };
        let g = t.guard_mul_bexpr(&b).unwrap();
        prop_assert_eq!(eval(&g, &m), ind * eval(&t, &m));
    }

    #[test]
    fn expected_term_matches_enumeration(raw in raw_term(), d in dist(), xv in -6i64..=6, yv in -6i64..=6) {
        let t = build(&raw);
        let m = memory(xv, yv);
        let e = expected_term(&x(), &d, &t).unwrap();
        let brute: Q = brute_support(&d).into_iter().map(|(p, v)| p * eval(&t, &memory(v, yv))).sum();
        prop_assert_eq!(eval(&e, &m), brute);
    }

    #[test]
    fn expected_term_is_linear(
        r1 in raw_term(), r2 in raw_term(), d in dist(), a in 0i64..4, b in 0i64..4, xv in -6i64..=6, yv in -6i64..=6,
    ) {
        let (t1, t2) = (build(&r1), build(&r2));
        let m = memory(xv, yv);
        let (pa, pb) = (Poly::int(a), Poly::int(b));
        let combined = expected_term(&x(), &d, &t1.scale(&pa).add(&t2.scale(&pb))).unwrap();
        let split = expected_term(&x(), &d, &t1).unwrap().scale(&pa).add(&expected_term(&x(), &d, &t2).unwrap().scale(&pb));
        prop_assert_eq!(eval(&combined, &m), eval(&split, &m));
    }

    #[test]
    fn substitution_agrees_with_updated_memory(raw in raw_term(), c in -3i64..=3, a in -2i64..=2, xv in -6i64..=6, yv in -6i64..=6) {
        let t = build(&raw);
        let e = lin(c, a, 1);
        let shifted = t.subst1(&x(), &e);
        let new_x = c + a * xv + yv;
        prop_assert_eq!(eval(&shifted, &memory(xv, yv)), eval(&t, &memory(new_x, yv)));
    }
}
