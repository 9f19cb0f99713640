//! Guarded sums of polynomial bodies: the symbolic form of expectations.
//!
//! A term is `Σ [g_i]·(p_i / q_i)` where each guard `g_i` is a conjunction of
//! polynomial atoms, `p_i` is a polynomial over program variables, logical
//! variables and unknown coefficients, and `q_i` is a positive denominator
//! (usually `1`; dynamic probabilities such as `1/n` introduce others).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::frontend::{BExpr, BinOp, CmpOp, Dist, Expr};
use crate::poly::{fmt_q, Mono, Poly, Sym, SymKind, Q};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type TResult<T> = Result<T, TermError>;

/// `poly > 0` when strict, `poly >= 0` otherwise.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub poly: Poly,
    pub strict: bool,
}

/// Result of normalizing a comparison.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Lit {
    True,
    False,
    Atom(Atom),
}

fn integral(p: &Poly) -> bool {
    p.vars().iter().all(Sym::is_integer)
}

impl Atom {
    /// Normalizes `poly > 0` / `poly >= 0`: coefficients become coprime
    /// integers, and over integer symbols strict atoms become non-strict
    /// with the constant rounded down.
    pub fn lit(poly: Poly, strict: bool) -> Lit {
        if let Some(c) = poly.as_constant() {
            let holds = if strict { c.is_positive() } else { !c.is_negative() };
            return if holds { Lit::True } else { Lit::False };
        }
        let mut p = poly.primitive();
        let mut strict = strict;
        if integral(&p) {
            if strict {
                p = &p - &Poly::one();
                strict = false;
            }
            let mut g = BigInt::zero();
            for (m, c) in p.terms() {
                if !m.is_one() {
                    g = g.gcd(c.numer());
                }
            }
            if g > BigInt::one() {
                let gq = Q::from_integer(g);
                let c = p.constant_term();
                let mut r = Poly::zero();
                for (m, v) in p.terms() {
                    if !m.is_one() {
                        r.add_term(m.clone(), v / &gq);
                    }
                }
                r.add_term(Mono::one(), (c / gq).floor());
                p = r;
            }
        }
        Lit::Atom(Atom { poly: p, strict })
    }

    pub fn ge(poly: Poly) -> Lit {
        Atom::lit(poly, false)
    }

    pub fn gt(poly: Poly) -> Lit {
        Atom::lit(poly, true)
    }

    pub fn negate(&self) -> Lit {
        Atom::lit(-&self.poly, !self.strict)
    }

    pub fn holds(&self, val: &dyn Fn(&Sym) -> Option<Q>) -> TResult<bool> {
        let v = self.poly.eval(val).map_err(|s| TermError::Unbound(s.name))?;
        Ok(if self.strict { v.is_positive() } else { !v.is_negative() })
    }

    /// Non-constant part scaled to a primitive form, and the matching offset;
    /// atoms with equal keys are parallel half-spaces.
    fn direction(&self) -> (Poly, Q) {
        let c = self.poly.constant_term();
        let lin = &self.poly - &Poly::constant(c.clone());
        let k = lin.primitive_factor();
        (lin.scale(&k), c * k)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.poly.constant_term();
        let lin = &self.poly - &Poly::constant(c.clone());
        let op = if self.strict { ">" } else { "≥" };
        write!(f, "{} {} {}", lin, op, fmt_q(&-c))
    }
}

/// A conjunction of atoms, kept sorted and simplified. The empty guard is `true`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Guard(Vec<Atom>);

impl Guard {
    pub fn tt() -> Guard {
        Guard(Vec::new())
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.0
    }

    pub fn is_true(&self) -> bool {
        self.0.is_empty()
    }

    pub fn from_lits(lits: impl IntoIterator<Item = Lit>) -> Option<Guard> {
        let mut g = Guard::tt();
        for l in lits {
            g = g.and_lit(l)?;
        }
        Some(g)
    }

    /// Conjoins a literal; `None` when the result is syntactically false.
    pub fn and_lit(&self, l: Lit) -> Option<Guard> {
        match l {
            Lit::True => Some(self.clone()),
            Lit::False => None,
            Lit::Atom(a) => self.and_atom(a),
        }
    }

    fn and_atom(&self, a: Atom) -> Option<Guard> {
        let (dir, off) = a.direction();
        let mut atoms = Vec::with_capacity(self.0.len() + 1);
        let mut keep_new = true;
        for b in &self.0 {
            let sum = &a.poly + &b.poly;
            if let Some(c) = sum.as_constant() {
                let empty = if a.strict || b.strict { !c.is_positive() } else { c.is_negative() };
                if empty {
                    return None;
                }
            }
            let (bdir, boff) = b.direction();
            if bdir == dir {
                // parallel: the smaller offset is the tighter constraint
                let a_tighter = off < boff || (off == boff && a.strict && !b.strict);
                if a_tighter {
                    continue;
                }
                keep_new = false;
            }
            atoms.push(b.clone());
        }
        if keep_new {
            atoms.push(a);
        }
        atoms.sort();
        atoms.dedup();
        Some(Guard(atoms))
    }

    pub fn and(&self, other: &Guard) -> Option<Guard> {
        let mut g = self.clone();
        for a in &other.0 {
            g = g.and_atom(a.clone())?;
        }
        Some(g)
    }

    pub fn holds(&self, val: &dyn Fn(&Sym) -> Option<Q>) -> TResult<bool> {
        for a in &self.0 {
            if !a.holds(val)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn subst(&self, map: &HashMap<Sym, Poly>) -> Option<Guard> {
        Guard::from_lits(self.0.iter().map(|a| Atom::lit(a.poly.subst(map), a.strict)))
    }

    pub fn vars(&self) -> BTreeSet<Sym> {
        self.0.iter().flat_map(|a| a.poly.vars()).collect()
    }

    pub fn mentions(&self, s: &Sym) -> bool {
        self.0.iter().any(|a| a.poly.mentions(s))
    }

    /// Keeps the atoms satisfying `keep`.
    pub fn retain(&self, keep: impl Fn(&Atom) -> bool) -> Guard {
        Guard(self.0.iter().filter(|a| keep(a)).cloned().collect())
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("true");
        }
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ∧ ")?;
            }
            write!(f, "{}", a)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Summand {
    pub guard: Guard,
    pub num: Poly,
    pub den: Poly,
}

impl Summand {
    pub fn eval(&self, val: &dyn Fn(&Sym) -> Option<Q>) -> TResult<Q> {
        if !self.guard.holds(val)? {
            return Ok(Q::zero());
        }
        let n = self.num.eval(val).map_err(|s| TermError::Unbound(s.name))?;
        let d = self.den.eval(val).map_err(|s| TermError::Unbound(s.name))?;
        if d.is_zero() {
            return Err(TermError::DivisionByZero);
        }
        Ok(n / d)
    }
}

/// A finite sum of guarded summands; the empty sum is zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    summands: Vec<Summand>,
}

impl Term {
    pub fn zero() -> Term {
        Term::default()
    }

    pub fn constant(c: Q) -> Term {
        Term::poly(Poly::constant(c))
    }

    /// Unguarded polynomial.
    pub fn poly(p: Poly) -> Term {
        Term::guarded(Guard::tt(), p)
    }

    pub fn guarded(guard: Guard, p: Poly) -> Term {
        Term::from_summands(vec![Summand { guard, num: p, den: Poly::one() }])
    }

    /// `⟨p⟩ = [p ≥ 0]·p`.
    pub fn norm(p: Poly) -> Term {
        match Atom::ge(p.clone()) {
            Lit::True => Term::poly(p),
            Lit::False => Term::zero(),
            Lit::Atom(a) => Term::guarded(Guard(vec![a]), p),
        }
    }

    pub fn from_summands(summands: Vec<Summand>) -> Term {
        let mut merged: BTreeMap<(Guard, Poly), Poly> = BTreeMap::new();
        for s in summands {
            let e = merged.entry((s.guard, s.den)).or_default();
            *e = &*e + &s.num;
        }
        let summands = merged
            .into_iter()
            .filter(|(_, n)| !n.is_zero())
            .map(|((guard, den), num)| Summand { guard, num, den })
            .collect();
        Term { summands }
    }

    pub fn summands(&self) -> &[Summand] {
        &self.summands
    }

    pub fn is_zero(&self) -> bool {
        self.summands.is_empty()
    }

    pub fn add(&self, other: &Term) -> Term {
        Term::from_summands(self.summands.iter().chain(other.summands.iter()).cloned().collect())
    }

    pub fn sum(terms: impl IntoIterator<Item = Term>) -> Term {
        Term::from_summands(terms.into_iter().flat_map(|t| t.summands).collect())
    }

    /// Multiplies every summand by a coefficient polynomial.
    pub fn scale(&self, c: &Poly) -> Term {
        self.scale_ratio(c, &Poly::one())
    }

    /// Multiplies by `num / den`; `den` must be positive wherever it matters.
    pub fn scale_ratio(&self, num: &Poly, den: &Poly) -> Term {
        Term::from_summands(
            self.summands
                .iter()
                .map(|s| Summand { guard: s.guard.clone(), num: &s.num * num, den: mul_den(&s.den, den) })
                .collect(),
        )
    }

    pub fn guard_mul(&self, g: &Guard) -> Term {
        Term::from_summands(
            self.summands
                .iter()
                .filter_map(|s| {
                    Some(Summand { guard: s.guard.and(g)?, num: s.num.clone(), den: s.den.clone() })
                })
                .collect(),
        )
    }

    /// `[b]·t`, splitting `b` into disjoint conjunctions.
    pub fn guard_mul_bexpr(&self, b: &BExpr) -> TResult<Term> {
        Ok(Term::sum(dnf(b)?.iter().map(|g| self.guard_mul(g))))
    }

    /// Simultaneous substitution of symbols by polynomials.
    pub fn subst(&self, map: &HashMap<Sym, Poly>) -> Term {
        if map.is_empty() {
            return self.clone();
        }
        Term::from_summands(
            self.summands
                .iter()
                .filter_map(|s| {
                    Some(Summand { guard: s.guard.subst(map)?, num: s.num.subst(map), den: s.den.subst(map) })
                })
                .collect(),
        )
    }

    pub fn subst1(&self, x: &Sym, p: &Poly) -> Term {
        self.subst(&HashMap::from([(x.clone(), p.clone())]))
    }

    pub fn eval(&self, val: &dyn Fn(&Sym) -> Option<Q>) -> TResult<Q> {
        let mut acc = Q::zero();
        for s in &self.summands {
            acc += s.eval(val)?;
        }
        Ok(acc)
    }

    pub fn vars(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        for s in &self.summands {
            out.extend(s.guard.vars());
            out.extend(s.num.vars());
            out.extend(s.den.vars());
        }
        out
    }

    pub fn mentions(&self, x: &Sym) -> bool {
        self.summands.iter().any(|s| s.guard.mentions(x) || s.num.mentions(x) || s.den.mentions(x))
    }

    /// Replaces unknown coefficients by their values.
    pub fn instantiate(&self, model: &dyn Fn(&Sym) -> Option<Q>) -> Term {
        let val = |s: &Sym| if s.kind == SymKind::Unknown { Some(model(s).unwrap_or_else(Q::zero)) } else { None };
        Term::from_summands(
            self.summands
                .iter()
                .map(|s| Summand { guard: s.guard.clone(), num: s.num.partial_eval(&val), den: s.den.clone() })
                .collect(),
        )
    }
}

fn mul_den(a: &Poly, b: &Poly) -> Poly {
    if b.as_constant().is_some_and(|c| c.is_one()) {
        a.clone()
    } else {
        a * b
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.summands.is_empty() {
            return f.write_str("0");
        }
        for (i, s) in self.summands.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            fmt_summand(s, f)?;
        }
        Ok(())
    }
}

fn fmt_summand(s: &Summand, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let den = s.den.as_constant();
    if let (Some(d), [a]) = (&den, s.guard.atoms()) {
        // c·⟨p⟩ when the body is a multiple of the guard polynomial
        if !a.strict {
            if let Some(c) = ratio(&s.num, &a.poly) {
                let c = c.scale(&(Q::one() / d));
                return match c.as_constant() {
                    Some(k) if k.is_one() => write!(f, "⟨{}⟩", a.poly),
                    _ => write!(f, "{}·⟨{}⟩", paren(&c), a.poly),
                };
            }
        }
    }
    let body = match &den {
        Some(d) if d.is_one() => paren(&s.num),
        Some(d) => format!("{}/{}", paren(&s.num), fmt_q(d)),
        None => format!("{}/({})", paren(&s.num), s.den),
    };
    if s.guard.is_true() {
        if den.is_some_and(|d| d.is_one()) {
            return write!(f, "{}", s.num);
        }
        return f.write_str(&body);
    }
    write!(f, "[{}]·{}", s.guard, body)
}

fn paren(p: &Poly) -> String {
    if p.len() > 1 {
        format!("({})", p)
    } else {
        p.to_string()
    }
}

/// `c` over unknowns only, with `p = c·q`.
fn ratio(p: &Poly, q: &Poly) -> Option<Poly> {
    let known = |s: &Sym| s.kind != SymKind::Unknown;
    if q.vars().iter().any(|s| !known(s)) {
        return None;
    }
    let pc = p.coefficients_over(known);
    let (m0, q0) = q.terms().next()?;
    let c = pc.get(m0)?.scale(&(Q::one() / q0));
    if pc.len() != q.len() {
        return None;
    }
    for (m, qm) in q.terms() {
        if pc.get(m) != Some(&c.scale(qm)) {
            return None;
        }
    }
    Some(c)
}

// ---- expressions ----

/// Program expression as a polynomial; division only by non-zero constants.
pub fn expr_poly(e: &Expr) -> TResult<Poly> {
    let (n, d) = expr_ratio(e)?;
    match d.as_constant() {
        Some(c) if !c.is_zero() => Ok(n.scale(&(Q::one() / c))),
        _ => Err(TermError::Unsupported(format!("non-polynomial expression `{}`", crate::frontend::pretty_expr(e)))),
    }
}

/// Program expression as a quotient of polynomials.
pub fn expr_ratio(e: &Expr) -> TResult<(Poly, Poly)> {
    Ok(match e {
        Expr::Num(c) => (Poly::constant(c.clone()), Poly::one()),
        Expr::Var(x) => (Poly::var(Sym::prog(x.clone())), Poly::one()),
        Expr::Neg(a) => {
            let (n, d) = expr_ratio(a)?;
            (-&n, d)
        }
        Expr::Bin(op, a, b) => {
            let (an, ad) = expr_ratio(a)?;
            let (bn, bd) = expr_ratio(b)?;
            match op {
                BinOp::Add | BinOp::Sub => {
                    let sign = if *op == BinOp::Add { Poly::one() } else { Poly::int(-1) };
                    if ad == bd {
                        (&an + &(&sign * &bn), ad)
                    } else {
                        (&(&an * &bd) + &(&sign * &(&bn * &ad)), &ad * &bd)
                    }
                }
                BinOp::Mul => (&an * &bn, mul_den(&ad, &bd)),
                BinOp::Div => {
                    if bn.is_zero() {
                        return Err(TermError::DivisionByZero);
                    }
                    match bn.as_constant() {
                        Some(c) => (an.scale(&(Q::one() / c)), mul_den(&ad, &bd)),
                        None => (&an * &bd, mul_den(&ad, &bn)),
                    }
                }
            }
        }
    })
}

fn cmp_lits(op: CmpOp, a: &Expr, b: &Expr) -> TResult<Vec<Vec<Lit>>> {
    let a = expr_poly(a)?;
    let b = expr_poly(b)?;
    let ab = &a - &b;
    let ba = &b - &a;
    Ok(match op {
        CmpOp::Lt => vec![vec![Atom::gt(ba)]],
        CmpOp::Le => vec![vec![Atom::ge(ba)]],
        CmpOp::Gt => vec![vec![Atom::gt(ab)]],
        CmpOp::Ge => vec![vec![Atom::ge(ab)]],
        CmpOp::Eq => vec![vec![Atom::ge(ab), Atom::ge(ba)]],
        CmpOp::Ne => vec![vec![Atom::gt(ab)], vec![Atom::gt(ba)]],
    })
}

fn negate_op(op: CmpOp) -> CmpOp {
    match op {
        CmpOp::Lt => CmpOp::Ge,
        CmpOp::Le => CmpOp::Gt,
        CmpOp::Gt => CmpOp::Le,
        CmpOp::Ge => CmpOp::Lt,
        CmpOp::Eq => CmpOp::Ne,
        CmpOp::Ne => CmpOp::Eq,
    }
}

/// Pairwise disjoint conjunctions whose union is `b`.
pub fn dnf(b: &BExpr) -> TResult<Vec<Guard>> {
    dnf_pol(b, true)
}

fn product(xs: &[Guard], ys: &[Guard]) -> Vec<Guard> {
    let mut out = Vec::new();
    for x in xs {
        for y in ys {
            if let Some(g) = x.and(y) {
                out.push(g);
            }
        }
    }
    out
}

fn dnf_pol(b: &BExpr, pos: bool) -> TResult<Vec<Guard>> {
    Ok(match b {
        BExpr::True | BExpr::False => {
            if matches!(b, BExpr::True) == pos {
                vec![Guard::tt()]
            } else {
                vec![]
            }
        }
        BExpr::Cmp(op, a, c) => {
            let op = if pos { *op } else { negate_op(*op) };
            cmp_lits(op, a, c)?.into_iter().filter_map(Guard::from_lits).collect()
        }
        BExpr::Not(a) => dnf_pol(a, !pos)?,
        BExpr::And(x, y) if pos => product(&dnf_pol(x, true)?, &dnf_pol(y, true)?),
        BExpr::Or(x, y) if !pos => product(&dnf_pol(x, false)?, &dnf_pol(y, false)?),
        // x ∨ y  =  x ⊎ (¬x ∧ y), and dually for ¬(x ∧ y)
        BExpr::And(x, y) | BExpr::Or(x, y) => {
            let first_pos = matches!(b, BExpr::Or(..));
            let mut out = dnf_pol(x, first_pos)?;
            out.extend(product(&dnf_pol(x, !first_pos)?, &dnf_pol(y, first_pos)?));
            out
        }
    })
}

// ---- expectations under sampling ----

/// Symbolic expectation of `t` over `x` drawn from `d`.
pub fn expected_term(x: &Sym, d: &Dist, t: &Term) -> TResult<Term> {
    if !t.mentions(x) {
        return Ok(t.clone());
    }
    let at = |v: Poly| t.subst1(x, &v);
    match d {
        Dist::Discrete(rows) => {
            let mut parts = Vec::new();
            for (p, v) in rows {
                let (pn, pd) = expr_ratio(p)?;
                parts.push(at(expr_poly(v)?).scale_ratio(&pn, &pd));
            }
            Ok(Term::sum(parts))
        }
        Dist::Bernoulli(p) => {
            let (pn, pd) = expr_ratio(p)?;
            let one = at(Poly::one()).scale_ratio(&pn, &pd);
            let zero = at(Poly::zero()).scale_ratio(&(&pd - &pn), &pd);
            Ok(one.add(&zero))
        }
        Dist::Uniform(lo, hi) => {
            let (lo, hi) = (int_const(lo, "uniform bound")?, int_const(hi, "uniform bound")?);
            if lo > hi {
                return Err(TermError::Unsupported("empty uniform range".into()));
            }
            let w = Poly::constant(Q::new(BigInt::one(), &hi - &lo + 1));
            let mut parts = Vec::new();
            let mut v = lo;
            while v <= hi {
                parts.push(at(Poly::constant(Q::from_integer(v.clone()))).scale(&w));
                v += 1;
            }
            Ok(Term::sum(parts))
        }
        Dist::Binomial(n, p) => {
            if let (Some(n), Some(p)) = (n.as_const(), p.as_const()) {
                if !n.is_integer() || n.is_negative() {
                    return Err(TermError::Unsupported("binomial size must be a natural number".into()));
                }
                let n = n.to_integer();
                let mut parts = Vec::new();
                let mut k = BigInt::zero();
                while k <= n {
                    let w = binom(&n, &k) * pow_big(&p, &k) * pow_big(&(Q::one() - &p), &(&n - &k));
                    parts.push(at(Poly::constant(Q::from_integer(k.clone()))).scale(&Poly::constant(w)));
                    k += 1;
                }
                return Ok(Term::sum(parts));
            }
            let n = expr_poly(n)?;
            let (pn, pd) = expr_ratio(p)?;
            let m1 = (&n * &pn, pd.clone());
            let m2 = (&(&(&n * &pn) * &(&pd - &pn)) + &(&(&n * &n) * &(&pn * &pn)), &pd * &pd);
            by_moments(x, t, m1, m2, true)
        }
        Dist::Hypergeometric(big_n, k, n) => {
            if let (Some(bn), Some(kk), Some(nn)) = (big_n.as_const(), k.as_const(), n.as_const()) {
                let (bn, kk, nn) = (nat(&bn)?, nat(&kk)?, nat(&nn)?);
                if kk > bn || nn > bn {
                    return Err(TermError::Unsupported("hypergeometric parameters out of range".into()));
                }
                let total = binom(&bn, &nn);
                let lo = std::cmp::max(BigInt::zero(), &nn - (&bn - &kk));
                let hi = std::cmp::min(nn.clone(), kk.clone());
                let mut parts = Vec::new();
                let mut j = lo;
                while j <= hi {
                    let w = binom(&kk, &j) * binom(&(&bn - &kk), &(&nn - &j)) / &total;
                    parts.push(at(Poly::constant(Q::from_integer(j.clone()))).scale(&Poly::constant(w)));
                    j += 1;
                }
                return Ok(Term::sum(parts));
            }
            let (bn, kk, nn) = (expr_poly(big_n)?, expr_poly(k)?, expr_poly(n)?);
            let m1 = (&nn * &kk, bn.clone());
            let bn1 = &bn - &Poly::one();
            let var = &(&(&nn * &kk) * &(&bn - &kk)) * &(&bn - &nn);
            let sq = &(&(&nn * &nn) * &(&kk * &kk)) * &bn1;
            let m2 = (&var + &sq, &(&bn * &bn) * &bn1);
            by_moments(x, t, m1, m2, true)
        }
    }
}

fn int_const(e: &Expr, what: &str) -> TResult<BigInt> {
    match e.as_const() {
        Some(c) if c.is_integer() => Ok(c.to_integer()),
        _ => Err(TermError::Unsupported(format!("{} must be an integer constant", what))),
    }
}

fn nat(c: &Q) -> TResult<BigInt> {
    if c.is_integer() && !c.is_negative() {
        Ok(c.to_integer())
    } else {
        Err(TermError::Unsupported("hypergeometric parameters must be natural numbers".into()))
    }
}

fn binom(n: &BigInt, k: &BigInt) -> Q {
    if k.is_negative() || k > n {
        return Q::zero();
    }
    let mut r = Q::one();
    let mut i = BigInt::zero();
    while &i < k {
        r *= Q::new(n - &i, &i + 1);
        i += 1;
    }
    r
}

fn pow_big(x: &Q, e: &BigInt) -> Q {
    crate::poly::pow_q(x, e.to_u32().unwrap_or(u32::MAX))
}

/// Replaces `x` and `x²` by the given moments. Only valid when `x` occurs in
/// bodies with degree at most two and in guards only through atoms implied
/// by `x ≥ 0` (when `nonneg` holds for the distribution).
fn by_moments(x: &Sym, t: &Term, m1: (Poly, Poly), m2: (Poly, Poly), nonneg: bool) -> TResult<Term> {
    let mut out = Vec::new();
    for s in t.summands() {
        let guard = s.guard.retain(|a| !(nonneg && implied_by_nonneg(a, x)));
        if guard.mentions(x) || s.den.mentions(x) {
            return Err(TermError::Unsupported(format!("`{}` from a symbolic distribution occurs in a guard", x)));
        }
        let coeffs = s.num.coefficients_over(|v| v == x);
        let mut c = [Poly::zero(), Poly::zero(), Poly::zero()];
        for (m, p) in coeffs {
            let deg = m.degree() as usize;
            if deg > 2 {
                return Err(TermError::Unsupported(format!("`{}` occurs with degree {} > 2", x, deg)));
            }
            c[deg] = p;
        }
        let (a1, b1) = (&m1.0, &m1.1);
        let (a2, b2) = (&m2.0, &m2.1);
        let b12 = b1 * b2;
        let num = &(&(&c[0] * &b12) + &(&c[1] * &(a1 * b2))) + &(&c[2] * &(a2 * b1));
        out.push(Summand { guard, num, den: mul_den(&s.den, &b12) });
    }
    Ok(Term::from_summands(out))
}

fn implied_by_nonneg(a: &Atom, x: &Sym) -> bool {
    match a.poly.linear_form() {
        Some((lin, c)) => {
            lin.len() == 1
                && lin.get(x).is_some_and(|k| k.is_positive())
                && if a.strict { c.is_positive() } else { !c.is_negative() }
        }
        None => false,
    }
}

/// Exact `Σ_v Pr[v]·f(v)` over a distribution with constant parameters.
pub fn support(d: &Dist) -> Option<Vec<(Q, Q)>> {
    match d {
        Dist::Discrete(rows) => rows.iter().map(|(p, v)| Some((p.as_const()?, v.as_const()?))).collect(),
        Dist::Bernoulli(p) => {
            let p = p.as_const()?;
            Some(vec![(p.clone(), Q::one()), (Q::one() - p, Q::zero())])
        }
        Dist::Uniform(lo, hi) => {
            let (lo, hi) = (lo.as_const()?.to_integer(), hi.as_const()?.to_integer());
            let w = Q::new(BigInt::one(), &hi - &lo + 1);
            let mut out = Vec::new();
            let mut v = lo;
            while v <= hi {
                out.push((w.clone(), Q::from_integer(v.clone())));
                v += 1;
            }
            Some(out)
        }
        Dist::Binomial(n, p) => {
            let (n, p) = (n.as_const()?.to_integer(), p.as_const()?);
            let mut out = Vec::new();
            let mut k = BigInt::zero();
            while k <= n {
                let w = binom(&n, &k) * pow_big(&p, &k) * pow_big(&(Q::one() - &p), &(&n - &k));
                out.push((w, Q::from_integer(k.clone())));
                k += 1;
            }
            Some(out)
        }
        Dist::Hypergeometric(bn, k, n) => {
            let (bn, kk, nn) = (bn.as_const()?.to_integer(), k.as_const()?.to_integer(), n.as_const()?.to_integer());
            let total = binom(&bn, &nn);
            let mut out = Vec::new();
            let mut j = std::cmp::max(BigInt::zero(), &nn - (&bn - &kk));
            while j <= std::cmp::min(nn.clone(), kk.clone()) {
                out.push((binom(&kk, &j) * binom(&(&bn - &kk), &(&nn - &j)) / &total, Q::from_integer(j.clone())));
                j += 1;
            }
            Some(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{q, qf};

    fn n() -> Poly {
        Poly::var(Sym::prog("n"))
    }

    fn at<'a>(vals: &'a [(&'a str, i64)]) -> impl Fn(&Sym) -> Option<Q> + 'a {
        move |s: &Sym| vals.iter().find(|(k, _)| *k == s.name).map(|(_, v)| q(*v))
    }

    #[test]
    fn strict_integer_atoms_are_shifted() {
        assert_eq!(Atom::gt(n()), Atom::ge(&n() - &Poly::one()));
        assert_eq!(Atom::ge(n().scale(&q(2)) + Poly::int(1)), Atom::ge(n()));
    }

    #[test]
    fn contradictory_atoms_empty_the_guard() {
        let g = Guard::from_lits([Atom::gt(n())]).unwrap();
        assert!(g.and_lit(Atom::ge(-&n())).is_none());
        let h = Guard::from_lits([Atom::ge(n()), Atom::ge(&n() - &Poly::int(3))]).unwrap();
        assert_eq!(h.atoms().len(), 1);
    }

    #[test]
    fn disjunction_splits_disjointly() {
        let b = BExpr::or(
            BExpr::cmp(CmpOp::Gt, Expr::var("n"), Expr::int(0)),
            BExpr::cmp(CmpOp::Lt, Expr::var("n"), Expr::int(-2)),
        );
        let gs = dnf(&b).unwrap();
        assert_eq!(gs.len(), 2);
        for v in -5..5 {
            let m = [("n", v)];
            let hits = gs.iter().filter(|g| g.holds(&at(&m)).unwrap()).count();
            assert_eq!(hits, usize::from(!(-2..=0).contains(&v)));
        }
    }

    #[test]
    fn display_uses_norm_brackets() {
        let t = Term::norm(n()).scale(&Poly::constant(qf(1, 5)));
        assert_eq!(t.to_string(), "1/5·⟨n⟩");
        assert_eq!(Term::constant(q(5)).to_string(), "5");
    }
}
