//! From side conditions to coefficient constraints: case analysis over
//! Iverson guards, Handelman linearization, solving and model checking.

pub mod fm;
pub mod smt;

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::poly::{fmt_q, Poly, Sym, SymKind, Q};
use crate::templates::Fresh;
use crate::terms::{Atom, Lit, Summand, Term, TermError};
use crate::transformer::{Origin, SideCondition};

pub use smt::{emit_smt, parse_model, Answer, Assertion, Model, SmtError, SolverConfig};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ConstraintError {
    #[error("unsupported condition ({origin}): {reason}")]
    Unsupported { origin: String, reason: String },
    #[error(transparent)]
    Solver(#[from] SmtError),
    #[error(transparent)]
    Term(#[from] TermError),
}

/// `premises ⟹ goal ≥ 0`, universally quantified over every symbol that is
/// not an unknown coefficient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyInequality {
    pub premises: Vec<Poly>,
    pub goal: Poly,
}

fn is_unknown(s: &Sym) -> bool {
    s.kind == SymKind::Unknown
}

fn unsupported(origin: &Origin, reason: impl Into<String>) -> ConstraintError {
    ConstraintError::Unsupported { origin: origin.to_string(), reason: reason.into() }
}

fn check_atom(a: &Atom, origin: &Origin) -> Result<(), ConstraintError> {
    if a.poly.vars().iter().any(is_unknown) {
        return Err(unsupported(origin, format!("guard `{}` depends on unknown coefficients", a)));
    }
    if a.poly.degree() > 1 {
        return Err(unsupported(origin, format!("non-linear guard `{}`", a)));
    }
    Ok(())
}

fn lit_atom(l: Lit) -> Option<Atom> {
    match l {
        Lit::Atom(a) => Some(a),
        _ => None,
    }
}

/// `Σ num_i/den_i` over the active summands as a single fraction.
fn fraction(summands: &[&Summand], sign: &Q, acc: &mut BTreeMap<Poly, Poly>) {
    for s in summands {
        let e = acc.entry(s.den.clone()).or_default();
        *e = &*e + &s.num.scale(sign);
    }
}

fn active<'a>(t: &'a Term, truth: &BTreeSet<&Atom>) -> Vec<&'a Summand> {
    t.summands().iter().filter(|s| s.guard.atoms().iter().all(|a| truth.contains(a))).collect()
}

/// Splits a side condition into unconditional polynomial inequalities, one per
/// feasible truth assignment of the guard atoms of `lhs` and `rhs`.
pub fn case_split(sc: &SideCondition) -> Result<Vec<PolyInequality>, ConstraintError> {
    for a in sc.ctx.atoms() {
        check_atom(a, &sc.origin)?;
    }
    let fixed: Vec<Atom> = sc.ctx.atoms().to_vec();
    if !fm::feasible(&fixed) {
        return Ok(Vec::new());
    }
    let mut atoms: BTreeSet<Atom> = BTreeSet::new();
    for s in sc.lhs.summands().iter().chain(sc.rhs.summands()) {
        for a in s.guard.atoms() {
            check_atom(a, &sc.origin)?;
            if !fixed.contains(a) {
                atoms.insert(a.clone());
            }
        }
        if s.den.vars().iter().any(is_unknown) {
            return Err(unsupported(&sc.origin, format!("denominator `{}` depends on unknown coefficients", s.den)));
        }
    }
    let atoms: Vec<Atom> = atoms.into_iter().collect();
    let mut out = Vec::new();
    let mut chosen: Vec<(usize, Option<Atom>)> = Vec::new();
    split_rec(sc, &fixed, &atoms, &mut chosen, &mut out)?;
    Ok(out)
}

fn split_rec(
    sc: &SideCondition,
    fixed: &[Atom],
    atoms: &[Atom],
    chosen: &mut Vec<(usize, Option<Atom>)>,
    out: &mut Vec<PolyInequality>,
) -> Result<(), ConstraintError> {
    let premises: Vec<Atom> = fixed.iter().cloned().chain(chosen.iter().filter_map(|(_, a)| a.clone())).collect();
    if chosen.len() == atoms.len() {
        let mut truth: BTreeSet<&Atom> = fixed.iter().collect();
        for (i, a) in chosen.iter() {
            if a.as_ref() == Some(&atoms[*i]) {
                truth.insert(&atoms[*i]);
            }
        }
        out.push(leaf(sc, &premises, &truth)?);
        return Ok(());
    }
    let i = chosen.len();
    let a = &atoms[i];
    let implied = |extra: &Atom| {
        let mut ps = premises.clone();
        ps.push(extra.clone());
        fm::feasible(&ps)
    };
    // the atom itself
    if implied(a) {
        chosen.push((i, Some(a.clone())));
        split_rec(sc, fixed, atoms, chosen, out)?;
        chosen.pop();
    }
    // its negation
    match a.negate() {
        Lit::True => {
            chosen.push((i, None));
            split_rec(sc, fixed, atoms, chosen, out)?;
            chosen.pop();
        }
        Lit::False => {}
        Lit::Atom(n) => {
            if implied(&n) {
                chosen.push((i, Some(n)));
                split_rec(sc, fixed, atoms, chosen, out)?;
                chosen.pop();
            }
        }
    }
    Ok(())
}

fn leaf(sc: &SideCondition, premises: &[Atom], truth: &BTreeSet<&Atom>) -> Result<PolyInequality, ConstraintError> {
    let mut acc: BTreeMap<Poly, Poly> = BTreeMap::new();
    fraction(&active(&sc.rhs, truth), &Q::one(), &mut acc);
    fraction(&active(&sc.lhs, truth), &-Q::one(), &mut acc);
    acc.retain(|_, n| !n.is_zero());
    for den in acc.keys() {
        let positive = match den.as_constant() {
            Some(c) => c.is_positive(),
            None => {
                let mut ps = premises.to_vec();
                ps.extend(lit_atom(Atom::ge(-den)));
                !fm::feasible(&ps)
            }
        };
        if !positive {
            return Err(unsupported(&sc.origin, format!("cannot establish positivity of denominator `{}`", den)));
        }
    }
    let dens: Vec<Poly> = acc.keys().cloned().collect();
    let mut goal = Poly::zero();
    for (i, (_, num)) in acc.iter().enumerate() {
        let mut term = num.clone();
        for (j, d) in dens.iter().enumerate() {
            if i != j {
                term = &term * d;
            }
        }
        goal = &goal + &term;
    }
    let mut seen = BTreeSet::new();
    let premises: Vec<Poly> = premises.iter().map(|a| a.poly.clone()).filter(|p| seen.insert(p.clone())).collect();
    Ok(PolyInequality { premises, goal })
}

/// Products of at most `degree` premises, the empty product first.
pub fn premise_products(premises: &[Poly], degree: u32) -> Vec<Poly> {
    let mut out = vec![Poly::one()];
    let mut frontier: Vec<(usize, Poly)> = vec![(0, Poly::one())];
    for _ in 0..degree {
        let mut next = Vec::new();
        for (start, p) in &frontier {
            for (i, q) in premises.iter().enumerate().skip(*start) {
                let r = p * q;
                out.push(r.clone());
                next.push((i, r));
            }
        }
        frontier = next;
    }
    out
}

/// Coefficient-only equations `goal = Σ_π λ_π·π` with fresh `λ_π ≥ 0`.
#[derive(Clone, Debug, Default)]
pub struct Linearized {
    pub lambdas: Vec<Sym>,
    pub equations: Vec<Poly>,
}

pub fn handelman_linearize(pi: &PolyInequality, degree: u32, fresh: &mut Fresh) -> Linearized {
    let mut lambdas = Vec::new();
    let mut cert = Poly::zero();
    for p in premise_products(&pi.premises, degree) {
        let l = fresh.unknown("lam");
        cert = &cert + &(&p * &Poly::var(l.clone()));
        lambdas.push(l);
    }
    let diff = &pi.goal - &cert;
    let equations = diff.coefficients_over(|s| !is_unknown(s)).into_values().filter(|p| !p.is_zero()).collect();
    Linearized { lambdas, equations }
}

/// All coefficient constraints of a set of side conditions.
#[derive(Clone, Debug, Default)]
pub struct System {
    pub vars: BTreeSet<Sym>,
    pub equations: Vec<Poly>,
    pub cases: usize,
}

pub fn build_system(conds: &[SideCondition], degree: u32, fresh: &mut Fresh) -> Result<System, ConstraintError> {
    let mut sys = System::default();
    for c in conds {
        for v in c.lhs.vars().into_iter().chain(c.rhs.vars()) {
            if is_unknown(&v) {
                sys.vars.insert(v);
            }
        }
        for pi in case_split(c)? {
            sys.cases += 1;
            let lin = handelman_linearize(&pi, degree, fresh);
            sys.vars.extend(lin.lambdas);
            sys.equations.extend(lin.equations);
        }
    }
    let mut seen = BTreeSet::new();
    sys.equations.retain(|e| seen.insert(e.clone()));
    Ok(sys)
}

/// Outcome of an optimizing solve.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Solved {
    Sat(Model),
    Unsat,
    Unknown(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SolveStats {
    pub queries: usize,
    pub cases: usize,
    pub equations: usize,
    pub unknowns: usize,
}

/// The simplest rational (smallest denominator, then numerator) in `[lo, hi]`,
/// for `0 ≤ lo ≤ hi`.
pub fn simplest_between(lo: &Q, hi: &Q) -> Q {
    let fl = lo.floor();
    if fl == *lo {
        return lo.clone();
    }
    if fl.clone() + Q::one() <= *hi {
        return fl + Q::one();
    }
    // same integer part: recurse on reciprocals of the fractional parts
    let (a, b) = (lo - &fl, hi - &fl);
    let inner = simplest_between(&b.recip(), &a.recip());
    fl + inner.recip()
}

fn model_value(p: &Poly, m: &Model) -> Q {
    p.eval(&|s: &Sym| Some(m.get(&s.name).cloned().unwrap_or_else(Q::zero))).unwrap_or_else(|_| Q::zero())
}

fn close_enough(lo: &Q, hi: &Q) -> bool {
    let scale = if hi > &Q::one() { hi.clone() } else { Q::one() };
    (hi - lo) <= scale * Q::new(BigInt::one(), BigInt::from(1_000_000))
}

const MAX_PROBES: usize = 40;

/// Values worth proving optimal with a single strict query.
fn is_simple(v: &Q) -> bool {
    v.denom() <= &BigInt::from(1000) && v.numer().abs() <= BigInt::from(1_000_000_000)
}

fn query(
    sys: &System,
    base: &[Assertion],
    extra: &[Assertion],
    cfg: &SolverConfig,
    stats: &mut SolveStats,
) -> Result<Answer, SmtError> {
    stats.queries += 1;
    let mut all = base.to_vec();
    all.extend_from_slice(extra);
    smt::solve(&sys.vars, &all, None, cfg, &format!("query_{:03}", stats.queries))
}

/// Finds a model, then lexicographically minimizes each objective by
/// repeated satisfiability queries over shrinking upper bounds.
pub fn minimize_lex(
    sys: &System,
    objectives: &[Poly],
    cfg: &SolverConfig,
    stats: &mut SolveStats,
) -> Result<Solved, ConstraintError> {
    stats.cases += sys.cases;
    stats.equations += sys.equations.len();
    stats.unknowns += sys.vars.len();
    let mut base: Vec<Assertion> = sys.equations.iter().cloned().map(Assertion::Eq).collect();
    let mut best = match query(sys, &base, &[], cfg, stats)? {
        Answer::Sat(m) => m,
        Answer::Unsat => return Ok(Solved::Unsat),
        Answer::Unknown(r) => return Ok(Solved::Unknown(r)),
    };
    for obj in objectives {
        let mut hi = model_value(obj, &best);
        let mut lo = Q::zero();
        let mut probes = 0;
        let mut strict_checked: Option<Q> = None;
        while hi > lo && probes < MAX_PROBES {
            let probe = if probes == 0 {
                Assertion::Le(obj - &Poly::constant(lo.clone()))
            } else if is_simple(&hi) && strict_checked.as_ref() != Some(&hi) {
                strict_checked = Some(hi.clone());
                Assertion::Lt(obj - &Poly::constant(hi.clone()))
            } else if close_enough(&lo, &hi) {
                let s = simplest_between(&lo, &hi);
                if s == hi || s == lo {
                    break;
                }
                Assertion::Le(obj - &Poly::constant(s))
            } else {
                let quarter = (&hi - &lo) / Q::from_integer(BigInt::from(4));
                Assertion::Le(obj - &Poly::constant(simplest_between(&(&lo + &quarter), &(&hi - &quarter))))
            };
            probes += 1;
            match query(sys, &base, std::slice::from_ref(&probe), cfg, stats) {
                Ok(Answer::Sat(m)) => {
                    hi = model_value(obj, &m);
                    best = m;
                }
                Ok(Answer::Unsat) => match &probe {
                    Assertion::Le(p) => lo = &obj.constant_term() - &p.constant_term(),
                    _ => break,
                },
                Ok(Answer::Unknown(_)) | Err(SmtError::Timeout(_)) => break,
                Err(e) => return Err(e.into()),
            }
        }
        base.push(Assertion::Le(obj - &Poly::constant(hi.clone())));
    }
    Ok(Solved::Sat(best))
}

/// Evaluates unknowns under a model; missing symbols read as zero.
pub fn model_lookup(m: &Model) -> impl Fn(&Sym) -> Option<Q> + '_ {
    move |s: &Sym| if is_unknown(s) { Some(m.get(&s.name).cloned().unwrap_or_else(Q::zero)) } else { None }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub condition: String,
    pub origin: String,
    pub witness: Vec<(String, String)>,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub trials: usize,
    pub checked: usize,
    pub violation: Option<Violation>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

fn random_value(s: &Sym, rng: &mut ChaCha8Rng) -> Q {
    let int = |n: i64| Q::from_integer(BigInt::from(n));
    match s.kind {
        SymKind::Free => {
            if rng.gen_bool(0.5) {
                int(rng.gen_range(0..=10))
            } else {
                int(rng.gen_range(0..=1_000_000))
            }
        }
        _ => {
            if rng.gen_bool(0.7) {
                int(rng.gen_range(-10..=10))
            } else {
                int(rng.gen_range(-1_000_000..=1_000_000))
            }
        }
    }
}

/// Substitutes the model into every condition and tests `ctx ⟹ lhs ≤ rhs` at
/// random points.
pub fn check_model(conds: &[SideCondition], m: &Model, trials: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lookup = model_lookup(m);
    let mut checked = 0;
    for c in conds {
        let lhs = c.lhs.instantiate(&lookup);
        let rhs = c.rhs.instantiate(&lookup);
        let mut vars: BTreeSet<Sym> = lhs.vars();
        vars.extend(rhs.vars());
        vars.extend(c.ctx.vars());
        for _ in 0..trials {
            let point: BTreeMap<Sym, Q> = vars.iter().map(|v| (v.clone(), random_value(v, &mut rng))).collect();
            let val = |s: &Sym| point.get(s).cloned();
            if !c.ctx.holds(&val).unwrap_or(false) {
                continue;
            }
            let (Ok(l), Ok(r)) = (lhs.eval(&val), rhs.eval(&val)) else { continue };
            checked += 1;
            if l > r {
                return CheckReport {
                    trials,
                    checked,
                    violation: Some(Violation {
                        condition: format!("{} ⊢ {} ≤ {}", c.ctx, lhs, rhs),
                        origin: c.origin.to_string(),
                        witness: point.iter().map(|(k, v)| (k.name.clone(), fmt_q(v))).collect(),
                        lhs: fmt_q(&l),
                        rhs: fmt_q(&r),
                    }),
                };
            }
        }
    }
    CheckReport { trials, checked, violation: None }
}
