use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;

use pevalyzer_core::frontend::{load, Command, Program};
use pevalyzer_core::oracle::{exact_expectation, ExactConfig, Memory};
use pevalyzer_core::poly::{q, Poly, Sym, Q};
use pevalyzer_core::templates::TemplateConfig;
use pevalyzer_core::terms::Term;
use pevalyzer_core::transformer::{et_command, generate_constraints, AnalysisState, Rule};

fn bench(name: &str) -> Program {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks").join(format!("{}.pw", name));
    load(&fs::read_to_string(path).unwrap()).unwrap()
}

fn state(p: &Program) -> AnalysisState {
    generate_constraints(p, TemplateConfig::default()).unwrap()
}

fn rendered(st: &AnalysisState) -> Vec<String> {
    st.conditions.iter().map(|c| format!("[{}] {}", c.origin.rule, c)).collect()
}

fn rules(st: &AnalysisState) -> Vec<Rule> {
    st.conditions.iter().map(|c| c.origin.rule).collect()
}

fn val<'a>(vals: &'a [(&'a str, i64)]) -> impl Fn(&Sym) -> Option<Q> + 'a {
    move |s: &Sym| vals.iter().find(|(n, _)| *n == s.name).map(|(_, v)| q(*v))
}

fn ret_norm() -> Term {
    Term::norm(Poly::var(Sym::ret()))
}

/// `ET⟦body⟧ 0` with the return continuation `⟨ℓr⟩`, over the program variables.
fn body_expectation(p: &Program, name: &str) -> Term {
    let f = p.proc(name).unwrap();
    let mut st = state(p);
    et_command(p, f, &f.body, &Term::zero(), &ret_norm(), &mut st).unwrap()
}

#[test]
fn balls_conditions_are_c1_to_c3() {
    let st = state(&bench("balls"));
    assert_eq!(
        rendered(&st),
        [
            "[call-context] ℓa_n ≥ 1 ∧ ℓ_balls ≥ 0 ∧ -b ≥ 0 ∧ b ≥ 0 ⊢ 0 ≤ d0 + d1·ℓ_balls",
            "[call-return] ℓa_n ≥ 1 ∧ ℓ_balls ≥ 0 ⊢ ℓ_balls + 1/5·⟨ℓr + 1⟩ + 4/5·⟨ℓr⟩ ≤ d0 + d1·ℓ_balls + ⟨ℓr⟩",
            "[procedure] ℓ_balls ≥ 0 ⊢ [ℓa_n ≥ 1]·(c0 - c1 + c1·ℓa_n + c2·d0 + c2·d1·ℓ_balls) + [-ℓa_n ≥ 0]·ℓ_balls ≤ c0 + c2·ℓ_balls + c1·⟨ℓa_n⟩",
            "[non-negative] ℓ_balls ≥ 0 ⊢ 0 ≤ c0 + c2·ℓ_balls + c1·⟨ℓa_n⟩",
        ]
    );
}

#[test]
fn hire_conditions_carry_the_positive_argument_premise() {
    let st = state(&bench("hire"));
    assert_eq!(rules(&st), [Rule::CallContext, Rule::CallReturn, Rule::Procedure, Rule::NonNegative]);
    for c in &st.conditions[..2] {
        assert!(c.ctx.to_string().contains("ℓa_n ≥ 1"), "{}", c);
    }
    assert_eq!(
        rendered(&st)[2],
        "[procedure] ℓ_hire ≥ 0 ⊢ [ℓa_n ≥ 1]·(c0 - c1 + c1·ℓa_n + c2·d0 + c2·d1·ℓ_hire) + [-ℓa_n ≥ 0]·ℓ_hire ≤ c0 + c2·ℓ_hire + c1·⟨ℓa_n⟩"
    );
}

#[test]
fn straight_line_procedure_has_one_top_level_condition() {
    let st = state(&load("def f(x): x := x + 1; return x").unwrap());
    assert_eq!(rules(&st), [Rule::Procedure, Rule::NonNegative]);
}

#[test]
fn binomial_update_loop_uses_the_guard_distance() {
    let st = state(&bench("binomial_update"));
    assert_eq!(rules(&st), [Rule::LoopBody, Rule::LoopExit, Rule::Procedure, Rule::NonNegative]);
    let exit = &st.conditions[1];
    assert!(exit.ctx.to_string().contains("-ℓa_N + n ≥ 0"), "{}", exit);
    assert_eq!(exit.lhs.to_string(), "ℓ_binomial_update + ⟨x⟩");
    assert!(exit.rhs.to_string().contains("⟨ℓa_N - n⟩"), "{}", exit);
    assert!(st.conditions[0].ctx.to_string().contains("ℓa_N - n ≥ 1"));
}

#[test]
fn nondeterministic_choice_bounds_both_branches() {
    let st = state(&bench("biased_coin"));
    assert_eq!(rules(&st), [Rule::NonDetLeft, Rule::NonDetRight, Rule::Procedure, Rule::NonNegative]);
    let (l, r) = (&st.conditions[0], &st.conditions[1]);
    assert_eq!(l.rhs, r.rhs);
    assert_eq!(r.lhs.to_string(), "ℓ_biased_coin + ⟨ℓa_x1⟩");
}

#[test]
fn skip_keeps_the_continuation() {
    let p = bench("balls");
    let f = p.proc("balls").unwrap();
    let mut st = state(&p);
    let t = Term::norm(Poly::var(Sym::prog("n")));
    assert_eq!(et_command(&p, f, &Command::Skip, &t, &ret_norm(), &mut st).unwrap(), t);
}

#[test]
fn returning_zero_leaves_the_logical_variable() {
    let p = load("def f(): return 0").unwrap();
    let st = state(&p);
    assert_eq!(st.conditions[0].lhs.to_string(), "ℓ_f");
}

#[test]
fn geo_discards_the_recursive_result() {
    let st = state(&bench("geo"));
    let proc = st.conditions.iter().find(|c| c.origin.rule == Rule::Procedure).unwrap();
    let at_zero = val(&[("ℓ_geo", 0), ("c0", 0), ("c1", 1), ("d0", 0), ("d1", 1)]);
    assert_eq!(proc.lhs.eval(&at_zero).unwrap(), q(0));
}

#[test]
fn generation_is_deterministic() {
    for name in ["balls", "hire", "biased_coin", "binomial_update", "every_5", "rdwalk"] {
        let p = bench(name);
        assert_eq!(rendered(&state(&p)), rendered(&state(&p)), "{}", name);
    }
}

#[test]
fn sampling_shifting_and_joining_track_the_support() {
    let st = state(
        &load(
            "def f(n):
               var z := 0;
               z ~ Uniform(0, 2);
               if (n > 0) {
                 if (*) { z := z + 1 } else { z ~ Binomial(2, 1/2) };
                 n := f(n - 1);
                 return n + z
               } else { return 0 }",
        )
        .unwrap(),
    );
    let ctx = |rule: Rule| st.conditions.iter().find(|c| c.origin.rule == rule).unwrap().ctx.to_string();
    assert_eq!(ctx(Rule::NonDetLeft), "ℓa_n ≥ 1 ∧ -z ≥ -2 ∧ ℓ_f ≥ 0 ∧ z ≥ 0");
    assert_eq!(ctx(Rule::CallContext), "ℓa_n ≥ 1 ∧ -z ≥ -3 ∧ ℓ_f ≥ 0 ∧ z ≥ 0");
    assert_eq!(ctx(Rule::CallReturn), "-z ≥ -3 ∧ ℓ_f ≥ 0 ∧ z ≥ 0");
}

#[test]
fn non_invertible_update_forgets_the_variable() {
    let st = state(&load("def f(n): var z := 1; z := z * z; if (n > 0) { n := f(n - 1) }; return z").unwrap());
    let c = st.conditions.iter().find(|c| c.origin.rule == Rule::CallContext).unwrap();
    assert!(!c.ctx.to_string().contains('z'), "{}", c);
}

#[test]
fn biased_coin_branch_matches_enumeration() {
    let p = load(
        "def f(x1, x2):
           if (Bernoulli(1/2)) {
             x1 := 2 * x1; x2 := 2 * x2;
             if (x2 + 1 <= x1) {x2 := x2 + 1}
             else {
               if (x2 + 1/2 <= x1) {x1 := 1; x2 := 0}
               else {x1 := 0; x2 := 0}}};
           return x1",
    )
    .unwrap();
    let t = body_expectation(&p, "f");
    for a in -3..=6 {
        for b in -3..=6 {
            let exact = exact_expectation(&p, "f", &[q(a), q(b)], &Memory::new(), 1, &ExactConfig::default()).unwrap();
            assert_eq!(t.eval(&val(&[("x1", a), ("x2", b)])).unwrap(), exact, "at ({}, {})", a, b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loop_free_bodies_match_enumeration(
        p in 0i64..=4, lo in -2i64..=2, w in 0i64..=2, k in -3i64..=3, a in -2i64..=2, x in -4i64..=4, y in -4i64..=4,
    ) {
        let src = format!(
            "def f(x, y):
               var z := Uniform({lo}, {hi});
               if (Bernoulli({p}/4)) {{ x := x + z }} else {{ y := y - {a} * z }};
               if (x + y > {k}) {{ return x - y }} else {{ return {a} * x + 1 }}",
            lo = lo, hi = lo + w, p = p, a = a, k = k
        );
        let prog = load(&src).unwrap();
        let t = body_expectation(&prog, "f");
        let exact = exact_expectation(&prog, "f", &[q(x), q(y)], &Memory::new(), 1, &ExactConfig::default()).unwrap();
        prop_assert_eq!(t.eval(&val(&[("x", x), ("y", y)])).unwrap(), exact);
    }
}
