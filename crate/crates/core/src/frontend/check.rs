use std::collections::{BTreeSet, HashMap};

use num_traits::{One, Zero};

use super::ast::*;
use super::{DiagKind, Diagnostic};
use crate::poly::Q;

/// Reports every violation of the program invariants; empty means well formed.
pub fn check_well_formed(p: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut arity: HashMap<&str, usize> = HashMap::new();
    for d in &p.decls {
        if arity.insert(&d.name, d.arity()).is_some() {
            out.push(Diagnostic::new(
                DiagKind::DuplicateProcedure,
                d.span,
                format!("procedure `{}` declared twice", d.name),
            ));
        }
    }
    let mut binders: BTreeSet<String> = BTreeSet::new();
    for g in &p.globals {
        if !binders.insert(g.clone()) {
            out.push(dup(g, Span::default()));
        }
    }
    for d in &p.decls {
        for x in &d.params {
            if !binders.insert(x.clone()) {
                out.push(dup(x, d.span));
            }
        }
        let mut scope: Vec<String> = p.globals.iter().chain(d.params.iter()).cloned().collect();
        let mut cx = Ctx { arity: &arity, binders: &mut binders, out: &mut out, span: d.span };
        cx.command(&d.body, &mut scope);
    }
    out
}

fn dup(x: &str, span: Span) -> Diagnostic {
    Diagnostic::new(DiagKind::DuplicateBinder, span, format!("variable `{}` bound more than once", x))
}

struct Ctx<'a> {
    arity: &'a HashMap<&'a str, usize>,
    binders: &'a mut BTreeSet<String>,
    out: &'a mut Vec<Diagnostic>,
    span: Span,
}

impl Ctx<'_> {
    fn expr(&mut self, e: &Expr, scope: &[String]) {
        let mut vs = BTreeSet::new();
        e.vars(&mut vs);
        self.vars(vs, scope);
    }
    fn bexpr(&mut self, b: &BExpr, scope: &[String]) {
        let mut vs = BTreeSet::new();
        b.vars(&mut vs);
        self.vars(vs, scope);
    }
    fn vars(&mut self, vs: BTreeSet<String>, scope: &[String]) {
        for v in vs {
            if !scope.contains(&v) {
                self.out.push(Diagnostic::new(DiagKind::Unbound, self.span, format!("unbound variable `{}`", v)));
            }
        }
    }
    fn target(&mut self, x: &str, scope: &[String]) {
        if !scope.iter().any(|v| v == x) {
            self.out.push(Diagnostic::new(DiagKind::Unbound, self.span, format!("unbound variable `{}`", x)));
        }
    }

    fn dist(&mut self, d: &Dist, scope: &[String]) {
        for e in d.exprs() {
            self.expr(e, scope);
        }
        let bad = |m: String| Diagnostic::new(DiagKind::BadDistribution, Span::default(), m);
        match d {
            Dist::Uniform(lo, hi) => match (lo.as_const(), hi.as_const()) {
                (Some(a), Some(b)) if !a.is_integer() || !b.is_integer() => {
                    self.out.push(bad("uniform bounds must be integers".into()))
                }
                (Some(a), Some(b)) if a > b => {
                    self.out.push(bad(format!("uniform bounds out of order: {} > {}", a, b)))
                }
                (Some(_), Some(_)) => {}
                _ => self.out.push(bad("uniform bounds must be constants".into())),
            },
            Dist::Bernoulli(p) => {
                if let Some(c) = p.as_const() {
                    if c < Q::zero() || c > Q::one() {
                        self.out.push(bad(format!("probability {} outside [0, 1]", c)));
                    }
                }
            }
            Dist::Discrete(rows) => {
                let ps: Option<Vec<Q>> = rows.iter().map(|(p, _)| p.as_const()).collect();
                if let Some(ps) = ps {
                    let total: Q = ps.iter().cloned().sum();
                    if ps.iter().any(|p| *p < Q::zero()) || !total.is_one() {
                        self.out.push(bad("table probabilities must be non-negative and sum to 1".into()));
                    }
                }
            }
            Dist::Binomial(_, _) | Dist::Hypergeometric(_, _, _) => {}
        }
    }

    fn command(&mut self, c: &Command, scope: &mut Vec<String>) {
        match c {
            Command::Skip => {}
            Command::Sample { var, dist } => {
                self.target(var, scope);
                self.dist(dist, scope);
            }
            Command::Call { var, proc, args, span } => {
                self.target(var, scope);
                for a in args {
                    self.expr(a, scope);
                }
                match self.arity.get(proc.as_str()) {
                    None => self.out.push(Diagnostic::new(
                        DiagKind::UnknownProcedure,
                        *span,
                        format!("unknown procedure `{}`", proc),
                    )),
                    Some(k) if *k != args.len() => self.out.push(Diagnostic::new(
                        DiagKind::Arity,
                        *span,
                        format!("procedure `{}` expects {} argument(s), got {}", proc, k, args.len()),
                    )),
                    _ => {}
                }
            }
            Command::Return(e) => self.expr(e, scope),
            Command::Local { var, init, body } => {
                self.expr(init, scope);
                if !self.binders.insert(var.clone()) {
                    self.out.push(dup(var, self.span));
                }
                scope.push(var.clone());
                self.command(body, scope);
                scope.pop();
            }
            Command::Seq(a, b) => {
                self.command(a, scope);
                self.command(b, scope);
            }
            Command::If { cond, then, els } => {
                self.bexpr(cond, scope);
                self.command(then, scope);
                self.command(els, scope);
            }
            Command::While { cond, body, .. } => {
                self.bexpr(cond, scope);
                self.command(body, scope);
            }
            Command::NonDet { left, right, .. } => {
                self.command(left, scope);
                self.command(right, scope);
            }
        }
    }
}
