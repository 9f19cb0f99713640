//! Multivariate polynomials with exact rational coefficients.
//!
//! A single polynomial type is shared by program expressions, term bodies and
//! solver constraints. Symbols carry a kind so that unknown coefficients can be
//! separated from the universally quantified variables.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qf(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// What a symbol stands for. The order matters: unknowns sort first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SymKind {
    /// Undetermined coefficient, solved for by the SMT backend.
    Unknown,
    /// Free logical variable; real valued and non-negative under its context.
    Free,
    /// Logical variable standing for a formal parameter.
    Arg,
    /// Logical variable standing for the return value.
    Ret,
    /// Program variable.
    Prog,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Sym {
    pub kind: SymKind,
    pub name: String,
}

impl Sym {
    pub fn new(kind: SymKind, name: impl Into<String>) -> Sym {
        Sym { kind, name: name.into() }
    }
    pub fn prog(name: impl Into<String>) -> Sym {
        Sym::new(SymKind::Prog, name)
    }
    pub fn unknown(name: impl Into<String>) -> Sym {
        Sym::new(SymKind::Unknown, name)
    }
    pub fn ret() -> Sym {
        Sym::new(SymKind::Ret, "ℓr")
    }
    /// Integer-valued symbols admit the strictness rewrite `p > 0 ~> p - 1 >= 0`.
    pub fn is_integer(&self) -> bool {
        matches!(self.kind, SymKind::Arg | SymKind::Ret | SymKind::Prog)
    }
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// A power product, kept sorted by symbol with positive exponents.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mono(pub Vec<(Sym, u32)>);

impl Mono {
    pub fn one() -> Mono {
        Mono(Vec::new())
    }
    pub fn var(s: Sym) -> Mono {
        Mono(vec![(s, 1)])
    }
    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }
    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| *e).sum()
    }
    pub fn mul(&self, other: &Mono) -> Mono {
        let mut m: BTreeMap<Sym, u32> = self.0.iter().cloned().collect();
        for (s, e) in &other.0 {
            *m.entry(s.clone()).or_insert(0) += e;
        }
        Mono(m.into_iter().collect())
    }
    /// Splits into the part over symbols satisfying `keep` and the rest.
    pub fn split(&self, keep: impl Fn(&Sym) -> bool) -> (Mono, Mono) {
        let (a, b): (Vec<_>, Vec<_>) = self.0.iter().cloned().partition(|(s, _)| keep(s));
        (Mono(a), Mono(b))
    }
}

impl fmt::Display for Mono {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (s, e)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("·")?;
            }
            if *e == 1 {
                write!(f, "{}", s)?;
            } else {
                write!(f, "{}^{}", s, e)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Poly {
    terms: BTreeMap<Mono, Q>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }
    pub fn one() -> Poly {
        Poly::constant(Q::one())
    }
    pub fn constant(c: Q) -> Poly {
        let mut p = Poly::zero();
        p.add_term(Mono::one(), c);
        p
    }
    pub fn int(n: i64) -> Poly {
        Poly::constant(q(n))
    }
    pub fn var(s: Sym) -> Poly {
        Poly::monomial(Mono::var(s), Q::one())
    }
    pub fn monomial(m: Mono, c: Q) -> Poly {
        let mut p = Poly::zero();
        p.add_term(m, c);
        p
    }

    pub fn add_term(&mut self, m: Mono, c: Q) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &Q)> {
        self.terms.iter()
    }
    pub fn len(&self) -> usize {
        self.terms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn coeff(&self, m: &Mono) -> Q {
        self.terms.get(m).cloned().unwrap_or_else(Q::zero)
    }
    pub fn constant_term(&self) -> Q {
        self.coeff(&Mono::one())
    }
    pub fn as_constant(&self) -> Option<Q> {
        match self.terms.len() {
            0 => Some(Q::zero()),
            1 if self.terms.contains_key(&Mono::one()) => Some(self.constant_term()),
            _ => None,
        }
    }
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Mono::degree).max().unwrap_or(0)
    }
    /// Degree counting only symbols matching `pred`.
    pub fn degree_in(&self, pred: impl Fn(&Sym) -> bool) -> u32 {
        self.terms
            .keys()
            .map(|m| m.0.iter().filter(|(s, _)| pred(s)).map(|(_, e)| *e).sum())
            .max()
            .unwrap_or(0)
    }
    pub fn vars(&self) -> BTreeSet<Sym> {
        self.terms.keys().flat_map(|m| m.0.iter().map(|(s, _)| s.clone())).collect()
    }
    pub fn mentions(&self, s: &Sym) -> bool {
        self.terms.keys().any(|m| m.0.iter().any(|(t, _)| t == s))
    }

    pub fn scale(&self, c: &Q) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect() }
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut r = Poly::one();
        for _ in 0..e {
            r = &r * self;
        }
        r
    }

    /// Simultaneous substitution of polynomials for symbols.
    pub fn subst(&self, map: &HashMap<Sym, Poly>) -> Poly {
        if map.is_empty() || !self.vars().iter().any(|s| map.contains_key(s)) {
            return self.clone();
        }
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut acc = Poly::constant(c.clone());
            let mut rest = Vec::new();
            for (s, e) in &m.0 {
                match map.get(s) {
                    Some(p) => acc = &acc * &p.pow(*e),
                    None => rest.push((s.clone(), *e)),
                }
            }
            out = &out + &(&acc * &Poly::monomial(Mono(rest), Q::one()));
        }
        out
    }

    pub fn subst1(&self, s: &Sym, p: &Poly) -> Poly {
        let mut map = HashMap::new();
        map.insert(s.clone(), p.clone());
        self.subst(&map)
    }

    pub fn eval(&self, val: &dyn Fn(&Sym) -> Option<Q>) -> Result<Q, Sym> {
        let mut total = Q::zero();
        for (m, c) in &self.terms {
            let mut v = c.clone();
            for (s, e) in &m.0 {
                let x = val(s).ok_or_else(|| s.clone())?;
                v *= pow_q(&x, *e);
            }
            total += v;
        }
        Ok(total)
    }

    /// Partial evaluation: symbols answered by `val` are replaced by constants.
    pub fn partial_eval(&self, val: &dyn Fn(&Sym) -> Option<Q>) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut v = c.clone();
            let mut rest = Vec::new();
            for (s, e) in &m.0 {
                match val(s) {
                    Some(x) => v *= pow_q(&x, *e),
                    None => rest.push((s.clone(), *e)),
                }
            }
            out.add_term(Mono(rest), v);
        }
        out
    }

    /// Groups monomials by their part over symbols matching `outer`;
    /// each group's coefficient is a polynomial over the remaining symbols.
    pub fn coefficients_over(&self, outer: impl Fn(&Sym) -> bool) -> BTreeMap<Mono, Poly> {
        let mut out: BTreeMap<Mono, Poly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let (o, i) = m.split(&outer);
            out.entry(o).or_default().add_term(i, c.clone());
        }
        out.retain(|_, p| !p.is_zero());
        out
    }

    /// For polynomials of degree at most one: coefficients per symbol and constant.
    pub fn linear_form(&self) -> Option<(BTreeMap<Sym, Q>, Q)> {
        let mut lin = BTreeMap::new();
        let mut c = Q::zero();
        for (m, v) in &self.terms {
            match m.0.as_slice() {
                [] => c = v.clone(),
                [(s, 1)] => {
                    lin.insert(s.clone(), v.clone());
                }
                _ => return None,
            }
        }
        Some((lin, c))
    }

    /// Positive factor `k` such that `k * self` has coprime integer coefficients.
    pub fn primitive_factor(&self) -> Q {
        if self.is_zero() {
            return Q::one();
        }
        let mut den_lcm = BigInt::one();
        for v in self.terms.values() {
            den_lcm = den_lcm.lcm(v.denom());
        }
        let mut num_gcd = BigInt::zero();
        for v in self.terms.values() {
            let n = (v * Q::from_integer(den_lcm.clone())).to_integer();
            num_gcd = num_gcd.gcd(&n);
        }
        Q::new(den_lcm, num_gcd.abs())
    }

    pub fn primitive(&self) -> Poly {
        self.scale(&self.primitive_factor())
    }
}

pub fn pow_q(x: &Q, e: u32) -> Q {
    let mut r = Q::one();
    for _ in 0..e {
        r *= x;
    }
    r
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(&-Q::one())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &rhs.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(self, rhs: Poly) -> Poly {
        &self + &rhs
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        &self - &rhs
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        &self * &rhs
    }
}

pub fn fmt_q(c: &Q) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        // constant last reads more naturally: c1·n + 2
        let mut items: Vec<(&Mono, &Q)> = self.terms.iter().filter(|(m, _)| !m.is_one()).collect();
        if let Some((m, c)) = self.terms.get_key_value(&Mono::one()) {
            items.push((m, c));
        }
        for (i, (m, c)) in items.iter().enumerate() {
            let neg = c.is_negative();
            let a = c.abs();
            if i == 0 {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            if m.is_one() {
                f.write_str(&fmt_q(&a))?;
            } else if a.is_one() {
                write!(f, "{}", m)?;
            } else {
                write!(f, "{}·{}", fmt_q(&a), m)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Poly {
        Poly::var(Sym::prog("x"))
    }
    fn y() -> Poly {
        Poly::var(Sym::prog("y"))
    }

    #[test]
    fn arithmetic_cancels() {
        let p = &(&x() + &y()) * &(&x() - &y());
        let r = &(&x() * &x()) - &(&y() * &y());
        assert_eq!(p, r);
        assert!((&p - &r).is_zero());
    }

    #[test]
    fn substitution_is_simultaneous() {
        let mut map = HashMap::new();
        map.insert(Sym::prog("x"), y());
        map.insert(Sym::prog("y"), x());
        let p = &x() - &(&y() * &Poly::int(2));
        assert_eq!(p.subst(&map), &y() - &(&x() * &Poly::int(2)));
    }

    #[test]
    fn primitive_scales_to_coprime_integers() {
        let p = &x().scale(&qf(2, 3)) - &Poly::constant(qf(4, 3));
        assert_eq!(p.primitive(), &x() - &Poly::int(2));
    }

    #[test]
    fn coefficients_split_unknowns() {
        let c = Poly::var(Sym::unknown("c"));
        let p = &(&c * &x()) + &x();
        let groups = p.coefficients_over(|s| s.kind != SymKind::Unknown);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[&Mono::var(Sym::prog("x"))], &c + &Poly::one());
    }
}
