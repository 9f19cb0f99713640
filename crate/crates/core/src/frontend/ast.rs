use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use num_traits::{One, Zero};
use serde::Serialize;

use crate::poly::Q;

/// Source position. Spans never take part in equality or hashing, so ASTs
/// obtained from different renderings of the same program compare equal.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}
impl Eq for Span {}
impl Hash for Span {
    fn hash<H: Hasher>(&self, _: &mut H) {}
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Num(Q),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Num(crate::poly::q(n))
    }
    pub fn var(x: &str) -> Expr {
        Expr::Var(x.to_string())
    }
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }
    pub fn vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(x) => {
                out.insert(x.clone());
            }
            Expr::Neg(e) => e.vars(out),
            Expr::Bin(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }
    pub fn rename(&self, from: &str, to: &str) -> Expr {
        match self {
            Expr::Num(_) => self.clone(),
            Expr::Var(x) if x == from => Expr::Var(to.to_string()),
            Expr::Var(_) => self.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(e.rename(from, to))),
            Expr::Bin(op, a, b) => Expr::bin(*op, a.rename(from, to), b.rename(from, to)),
        }
    }
    pub fn as_const(&self) -> Option<Q> {
        match self {
            Expr::Num(c) => Some(c.clone()),
            Expr::Var(_) => None,
            Expr::Neg(e) => e.as_const().map(|c| -c),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.as_const()?, b.as_const()?);
                match op {
                    BinOp::Add => Some(a + b),
                    BinOp::Sub => Some(a - b),
                    BinOp::Mul => Some(a * b),
                    BinOp::Div if !b.is_zero() => Some(a / b),
                    BinOp::Div => None,
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Gt,
    Ge,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BExpr {
    True,
    False,
    Cmp(CmpOp, Expr, Expr),
    And(Box<BExpr>, Box<BExpr>),
    Or(Box<BExpr>, Box<BExpr>),
    Not(Box<BExpr>),
}

impl BExpr {
    pub fn cmp(op: CmpOp, a: Expr, b: Expr) -> BExpr {
        BExpr::Cmp(op, a, b)
    }
    pub fn and(a: BExpr, b: BExpr) -> BExpr {
        BExpr::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: BExpr, b: BExpr) -> BExpr {
        BExpr::Or(Box::new(a), Box::new(b))
    }
    pub fn not(a: BExpr) -> BExpr {
        BExpr::Not(Box::new(a))
    }
    pub fn vars(&self, out: &mut BTreeSet<String>) {
        match self {
            BExpr::True | BExpr::False => {}
            BExpr::Cmp(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            BExpr::And(a, b) | BExpr::Or(a, b) => {
                a.vars(out);
                b.vars(out);
            }
            BExpr::Not(a) => a.vars(out),
        }
    }
    pub fn rename(&self, from: &str, to: &str) -> BExpr {
        match self {
            BExpr::True | BExpr::False => self.clone(),
            BExpr::Cmp(op, a, b) => BExpr::Cmp(*op, a.rename(from, to), b.rename(from, to)),
            BExpr::And(a, b) => BExpr::and(a.rename(from, to), b.rename(from, to)),
            BExpr::Or(a, b) => BExpr::or(a.rename(from, to), b.rename(from, to)),
            BExpr::Not(a) => BExpr::not(a.rename(from, to)),
        }
    }
    /// Visits every comparison in the expression.
    pub fn comparisons<'a>(&'a self, out: &mut Vec<(CmpOp, &'a Expr, &'a Expr)>) {
        match self {
            BExpr::True | BExpr::False => {}
            BExpr::Cmp(op, a, b) => out.push((*op, a, b)),
            BExpr::And(a, b) | BExpr::Or(a, b) => {
                a.comparisons(out);
                b.comparisons(out);
            }
            BExpr::Not(a) => a.comparisons(out),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Dist {
    Bernoulli(Expr),
    Uniform(Expr, Expr),
    Binomial(Expr, Expr),
    Hypergeometric(Expr, Expr, Expr),
    /// Finite table of (probability, value) pairs.
    Discrete(Vec<(Expr, Expr)>),
}

impl Dist {
    /// Point mass; deterministic assignment is sugar for this.
    pub fn dirac(e: Expr) -> Dist {
        Dist::Discrete(vec![(Expr::int(1), e)])
    }
    pub fn as_dirac(&self) -> Option<&Expr> {
        match self {
            Dist::Discrete(t) if t.len() == 1 && t[0].0.as_const().is_some_and(|p| p.is_one()) => {
                Some(&t[0].1)
            }
            _ => None,
        }
    }
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Dist::Bernoulli(p) => vec![p],
            Dist::Uniform(a, b) | Dist::Binomial(a, b) => vec![a, b],
            Dist::Hypergeometric(a, b, c) => vec![a, b, c],
            Dist::Discrete(t) => t.iter().flat_map(|(p, v)| [p, v]).collect(),
        }
    }
    pub fn map_exprs(&self, f: &dyn Fn(&Expr) -> Expr) -> Dist {
        match self {
            Dist::Bernoulli(p) => Dist::Bernoulli(f(p)),
            Dist::Uniform(a, b) => Dist::Uniform(f(a), f(b)),
            Dist::Binomial(a, b) => Dist::Binomial(f(a), f(b)),
            Dist::Hypergeometric(a, b, c) => Dist::Hypergeometric(f(a), f(b), f(c)),
            Dist::Discrete(t) => Dist::Discrete(t.iter().map(|(p, v)| (f(p), f(v))).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    Skip,
    Sample { var: String, dist: Dist },
    Call { var: String, proc: String, args: Vec<Expr>, span: Span },
    Return(Expr),
    Local { var: String, init: Expr, body: Box<Command> },
    Seq(Box<Command>, Box<Command>),
    If { cond: BExpr, then: Box<Command>, els: Box<Command> },
    While { cond: BExpr, body: Box<Command>, span: Span },
    NonDet { left: Box<Command>, right: Box<Command>, span: Span },
}

impl Command {
    /// Sequential composition kept right-nested, with `skip` as unit.
    pub fn seq(a: Command, b: Command) -> Command {
        match (a, b) {
            (Command::Skip, b) => b,
            (a, Command::Skip) => a,
            (Command::Seq(a1, a2), b) => Command::Seq(a1, Box::new(Command::seq(*a2, b))),
            (a, b) => Command::Seq(Box::new(a), Box::new(b)),
        }
    }
    pub fn assign(x: &str, e: Expr) -> Command {
        Command::Sample { var: x.to_string(), dist: Dist::dirac(e) }
    }
    pub fn local(x: &str, init: Expr, body: Command) -> Command {
        Command::Local { var: x.to_string(), init, body: Box::new(body) }
    }
    pub fn ite(cond: BExpr, then: Command, els: Command) -> Command {
        Command::If { cond, then: Box::new(then), els: Box::new(els) }
    }

    pub fn has_nondet(&self) -> bool {
        match self {
            Command::NonDet { .. } => true,
            Command::Local { body, .. } | Command::While { body, .. } => body.has_nondet(),
            Command::Seq(a, b) => a.has_nondet() || b.has_nondet(),
            Command::If { then, els, .. } => then.has_nondet() || els.has_nondet(),
            _ => false,
        }
    }

    /// Variables possibly written by the command (binders of nested locals included).
    pub fn assigned(&self, out: &mut BTreeSet<String>) {
        match self {
            Command::Sample { var, .. } | Command::Call { var, .. } => {
                out.insert(var.clone());
            }
            Command::Local { var, body, .. } => {
                out.insert(var.clone());
                body.assigned(out);
            }
            Command::While { body, .. } => body.assigned(out),
            Command::Seq(a, b) => {
                a.assigned(out);
                b.assigned(out);
            }
            Command::If { then, els, .. } => {
                then.assigned(out);
                els.assigned(out);
            }
            Command::NonDet { left, right, .. } => {
                left.assigned(out);
                right.assigned(out);
            }
            Command::Skip | Command::Return(_) => {}
        }
    }

    pub fn contains_call(&self) -> bool {
        match self {
            Command::Call { .. } => true,
            Command::Local { body, .. } | Command::While { body, .. } => body.contains_call(),
            Command::Seq(a, b) => a.contains_call() || b.contains_call(),
            Command::If { then, els, .. } => then.contains_call() || els.contains_call(),
            Command::NonDet { left, right, .. } => left.contains_call() || right.contains_call(),
            _ => false,
        }
    }

    pub fn callees(&self, out: &mut BTreeSet<String>) {
        match self {
            Command::Call { proc, .. } => {
                out.insert(proc.clone());
            }
            Command::Local { body, .. } | Command::While { body, .. } => body.callees(out),
            Command::Seq(a, b) => {
                a.callees(out);
                b.callees(out);
            }
            Command::If { then, els, .. } => {
                then.callees(out);
                els.callees(out);
            }
            Command::NonDet { left, right, .. } => {
                left.callees(out);
                right.callees(out);
            }
            _ => {}
        }
    }

    /// All comparisons occurring in guards.
    pub fn guards<'a>(&'a self, out: &mut Vec<&'a BExpr>) {
        match self {
            Command::If { cond, then, els } => {
                out.push(cond);
                then.guards(out);
                els.guards(out);
            }
            Command::While { cond, body, .. } => {
                out.push(cond);
                body.guards(out);
            }
            Command::Local { body, .. } => body.guards(out),
            Command::Seq(a, b) => {
                a.guards(out);
                b.guards(out);
            }
            Command::NonDet { left, right, .. } => {
                left.guards(out);
                right.guards(out);
            }
            _ => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProcedureDecl {
    pub name: String,
    pub params: Vec<String>,
    pub body: Command,
    pub span: Span,
}

impl ProcedureDecl {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Program {
    pub globals: Vec<String>,
    pub decls: Vec<ProcedureDecl>,
}

impl Program {
    pub fn proc(&self, name: &str) -> Option<&ProcedureDecl> {
        self.decls.iter().find(|d| d.name == name)
    }
    pub fn is_global(&self, x: &str) -> bool {
        self.globals.iter().any(|g| g == x)
    }
    /// Procedures whose execution may reach a nondeterministic choice.
    pub fn nondet_procs(&self) -> BTreeSet<String> {
        let mut set: BTreeSet<String> =
            self.decls.iter().filter(|d| d.body.has_nondet()).map(|d| d.name.clone()).collect();
        loop {
            let before = set.len();
            for d in &self.decls {
                let mut cs = BTreeSet::new();
                d.body.callees(&mut cs);
                if cs.iter().any(|c| set.contains(c)) {
                    set.insert(d.name.clone());
                }
            }
            if set.len() == before {
                return set;
            }
        }
    }
}
