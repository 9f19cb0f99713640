//! Real feasibility of conjunctions of atoms by Fourier-Motzkin elimination.
//!
//! Non-linear monomials are treated as independent variables, which relaxes
//! the problem: a system reported infeasible is infeasible, while a feasible
//! verdict may be spurious.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{Signed, Zero};

use crate::poly::{Mono, Q};
use crate::terms::Atom;

/// Systems growing past this size are conservatively reported feasible.
const MAX_ROWS: usize = 4000;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Row {
    coeffs: BTreeMap<Mono, Q>,
    constant: Q,
    strict: bool,
}

impl Row {
    fn from_atom(a: &Atom) -> Row {
        let mut coeffs = BTreeMap::new();
        let mut constant = Q::zero();
        for (m, c) in a.poly.terms() {
            if m.is_one() {
                constant = c.clone();
            } else {
                coeffs.insert(m.clone(), c.clone());
            }
        }
        Row { coeffs, constant, strict: a.strict }
    }

    /// `Some(true)` if trivially satisfied, `Some(false)` if trivially violated.
    fn trivial(&self) -> Option<bool> {
        if !self.coeffs.is_empty() {
            return None;
        }
        Some(if self.strict { self.constant.is_positive() } else { !self.constant.is_negative() })
    }

    /// Scales so that the largest absolute coefficient is one.
    fn normalized(mut self) -> Row {
        let m = self.coeffs.values().map(|c| c.abs()).max();
        if let Some(m) = m {
            if !m.is_zero() {
                for c in self.coeffs.values_mut() {
                    *c = &*c / &m;
                }
                self.constant = &self.constant / &m;
            }
        }
        self
    }
}

/// `false` only when the conjunction has no real solution.
pub fn feasible(atoms: &[Atom]) -> bool {
    let mut rows: BTreeSet<Row> = BTreeSet::new();
    for a in atoms {
        let r = Row::from_atom(a);
        match r.trivial() {
            Some(true) => {}
            Some(false) => return false,
            None => {
                rows.insert(r.normalized());
            }
        }
    }
    loop {
        let vars: BTreeSet<Mono> = rows.iter().flat_map(|r| r.coeffs.keys().cloned()).collect();
        // eliminate the variable producing the fewest new rows
        let best = vars.into_iter().min_by_key(|v| {
            let pos = rows.iter().filter(|r| r.coeffs.get(v).is_some_and(|c| c.is_positive())).count();
            let neg = rows.iter().filter(|r| r.coeffs.get(v).is_some_and(|c| c.is_negative())).count();
            pos * neg
        });
        let Some(v) = best else { return true };
        let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), BTreeSet::new());
        for r in rows {
            match r.coeffs.get(&v) {
                Some(c) if c.is_positive() => pos.push(r),
                Some(_) => neg.push(r),
                None => {
                    rest.insert(r);
                }
            }
        }
        if pos.len() * neg.len() + rest.len() > MAX_ROWS {
            return true;
        }
        for p in &pos {
            for n in &neg {
                let (a, b) = (p.coeffs[&v].clone(), -n.coeffs[&v].clone());
                let mut coeffs = BTreeMap::new();
                for (m, c) in &p.coeffs {
                    *coeffs.entry(m.clone()).or_insert_with(Q::zero) += c * &b;
                }
                for (m, c) in &n.coeffs {
                    *coeffs.entry(m.clone()).or_insert_with(Q::zero) += c * &a;
                }
                coeffs.retain(|_, c| !c.is_zero());
                let row = Row { coeffs, constant: &p.constant * &b + &n.constant * &a, strict: p.strict || n.strict };
                match row.trivial() {
                    Some(true) => {}
                    Some(false) => return false,
                    None => {
                        rest.insert(row.normalized());
                    }
                }
            }
        }
        rows = rest;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{Poly, Sym, SymKind};
    use crate::terms::Lit;

    fn atom(l: Lit) -> Atom {
        match l {
            Lit::Atom(a) => a,
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn detects_empty_interval() {
        let l = Poly::var(Sym::new(SymKind::Free, "l"));
        let a = atom(Atom::ge(l.clone()));
        let b = atom(Atom::gt(-&l));
        assert!(!feasible(&[a.clone(), b]));
        assert!(feasible(&[a]));
    }

    #[test]
    fn chains_through_two_variables() {
        let x = Poly::var(Sym::new(SymKind::Free, "x"));
        let y = Poly::var(Sym::new(SymKind::Free, "y"));
        let xy = atom(Atom::ge(&x - &y));
        let y1 = atom(Atom::ge(&y - &Poly::int(1)));
        let x0 = atom(Atom::ge(&Poly::zero() - &x));
        assert!(!feasible(&[xy.clone(), y1.clone(), x0]));
        assert!(feasible(&[xy, y1]));
    }
}
