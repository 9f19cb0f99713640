//! The constraint-emitting expectation transformer.
//!
//! `et_command` maps a command, a continuation `t` and the procedure's
//! post-expectation `s` to a pre-expectation term, recording side conditions
//! for calls, loops and nondeterministic choice. A light forward analysis
//! tracks path premises (branch guards and local initializations) that are
//! added to the context of every emitted condition.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::frontend::{BExpr, Command, Dist, Expr, ProcedureDecl, Program, Span};
use crate::poly::{Poly, Sym, Q};
use crate::templates::{
    collect_bases, make_instantiation, Base, make_procedure_templates, make_template, Fresh, Template, TemplateConfig,
    TemplatePair,
};
use crate::constraints::fm;
use crate::terms::{dnf, expected_term, expr_poly, Atom, Guard, Lit, TResult, Term, TermError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// `Γ_f ⊢ ET⟦f⟧ k_f ≤ h_f`.
    Procedure,
    /// `Γ_f ⊢ 0 ≤ h_f`.
    NonNegative,
    /// Callee context under the instantiation.
    CallContext,
    /// `t[x ↦ ℓr] ≤ k_g[ℓs ↦ τ]`.
    CallReturn,
    LoopBody,
    LoopExit,
    NonDetLeft,
    NonDetRight,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::Procedure => "procedure",
            Rule::NonNegative => "non-negative",
            Rule::CallContext => "call-context",
            Rule::CallReturn => "call-return",
            Rule::LoopBody => "loop-body",
            Rule::LoopExit => "loop-exit",
            Rule::NonDetLeft => "nondet-left",
            Rule::NonDetRight => "nondet-right",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Origin {
    pub rule: Rule,
    pub proc: String,
    pub span: Span,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} in `{}` at {}", self.rule, self.proc, self.span)
    }
}

/// `ctx ⊢ lhs ≤ rhs`, universally quantified over every non-unknown symbol.
#[derive(Clone, Debug)]
pub struct SideCondition {
    pub ctx: Guard,
    pub lhs: Term,
    pub rhs: Term,
    pub origin: Origin,
}

impl fmt::Display for SideCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ⊢ {} ≤ {}", self.ctx, self.lhs, self.rhs)
    }
}

/// Templates and conditions of one whole-program analysis.
#[derive(Clone, Debug)]
pub struct AnalysisState {
    pub config: TemplateConfig,
    pub templates: BTreeMap<String, TemplatePair>,
    pub loops: Vec<Template>,
    pub conditions: Vec<SideCondition>,
    pub fresh: Fresh,
}

impl AnalysisState {
    /// Creates templates for every procedure up front.
    pub fn new(p: &Program, config: TemplateConfig) -> AnalysisState {
        let mut fresh = Fresh::default();
        let mut templates = BTreeMap::new();
        for f in &p.decls {
            templates.insert(f.name.clone(), make_procedure_templates(p, f, &config, &mut fresh));
        }
        AnalysisState { config, templates, loops: Vec::new(), conditions: Vec::new(), fresh }
    }
}

/// Per-procedure traversal context.
struct Ctx<'a> {
    prog: &'a Program,
    proc: &'a ProcedureDecl,
    gamma: Guard,
    logicals: Vec<Sym>,
    scope: Vec<String>,
}

impl Ctx<'_> {
    fn origin(&self, rule: Rule, span: Span) -> Origin {
        Origin { rule, proc: self.proc.name.clone(), span }
    }
    fn premises(&self, pc: &Guard) -> Guard {
        // contradictory premises mark dead code; dropping them only weakens the context
        self.gamma.and(pc).unwrap_or_else(|| self.gamma.clone())
    }
}

fn prog_sym(x: &str) -> Sym {
    Sym::prog(x.to_string())
}

fn kill(pc: &Guard, vars: &BTreeSet<String>) -> Guard {
    pc.retain(|a| !a.poly.vars().iter().any(|s| vars.contains(&s.name)))
}

fn kill_globals(pc: &Guard, prog: &Program) -> Guard {
    kill(pc, &prog.globals.iter().cloned().collect())
}

/// The guard itself when it is a single conjunction.
fn single(b: &BExpr) -> Option<Guard> {
    match dnf(b) {
        Ok(gs) if gs.len() == 1 => gs.into_iter().next(),
        _ => None,
    }
}

fn and_opt(pc: &Guard, g: Option<Guard>) -> Guard {
    match g {
        Some(g) => pc.and(&g).unwrap_or_else(|| pc.clone()),
        None => pc.clone(),
    }
}

fn equal(x: &str, e: &Poly) -> Option<Guard> {
    let d = &Poly::var(prog_sym(x)) - e;
    Guard::from_lits([Atom::ge(d.clone()), Atom::ge(-&d)])
}

/// `lo ≤ x ≤ hi` for the support of `dist`, when both ends are linear and free of `x`.
fn support(x: &str, dist: &Dist) -> Option<Guard> {
    let ends = |lo: &Expr, hi: &Expr| -> Option<(Poly, Poly)> { Some((expr_poly(lo).ok()?, expr_poly(hi).ok()?)) };
    let (lo, hi) = match dist {
        Dist::Bernoulli(_) => (Poly::zero(), Poly::one()),
        Dist::Uniform(a, b) => ends(a, b)?,
        Dist::Binomial(n, _) => ends(&Expr::int(0), n)?,
        Dist::Hypergeometric(_, _, n) => ends(&Expr::int(0), n)?,
        Dist::Discrete(rows) => {
            let vals: Vec<Q> = rows.iter().map(|(_, v)| expr_poly(v).ok()?.as_constant()).collect::<Option<_>>()?;
            (Poly::constant(vals.iter().min()?.clone()), Poly::constant(vals.iter().max()?.clone()))
        }
    };
    let v = Poly::var(prog_sym(x));
    if [&lo, &hi].iter().any(|p| p.degree() > 1 || p.mentions(&prog_sym(x))) {
        return None;
    }
    Guard::from_lits([Atom::ge(&v - &lo), Atom::ge(&hi - &v)])
}

/// Premises after the invertible update `x := k·x + r`, as `pc[x ↦ (x - r)/k]`.
fn shift(pc: &Guard, x: &str, e: &Poly) -> Option<Guard> {
    let v = prog_sym(x);
    let r = e.partial_eval(&|s: &Sym| (*s == v).then(Q::zero));
    let k = (e - &r).partial_eval(&|s: &Sym| (*s == v).then(Q::one)).as_constant()?;
    if k.is_zero() || &r + &Poly::var(v.clone()).scale(&k) != *e {
        return None;
    }
    let inverse = (&Poly::var(v.clone()) - &r).scale(&(Q::one() / k));
    pc.subst(&HashMap::from([(v, inverse)]))
}

fn entails(g: &Guard, a: &Atom) -> bool {
    match a.negate() {
        Lit::True => false,
        Lit::False => true,
        Lit::Atom(n) => !fm::feasible(&[g.atoms(), &[n]].concat()),
    }
}

/// Atoms of either side that the other side entails.
fn join(a: &Guard, b: &Guard) -> Guard {
    let left = a.retain(|x| b.atoms().contains(x) || entails(b, x));
    let right = b.retain(|x| entails(a, x));
    left.and(&right).unwrap_or(left)
}

/// Forward transfer of path premises over a command.
fn flow(c: &Command, pc: &Guard, prog: &Program) -> Guard {
    match c {
        Command::Skip | Command::Return(_) => pc.clone(),
        Command::Sample { var, dist } => {
            let killed = kill(pc, &BTreeSet::from([var.clone()]));
            match dist.as_dirac().map(expr_poly) {
                Some(Ok(e)) if !e.mentions(&prog_sym(var)) => and_opt(&killed, equal(var, &e)),
                Some(Ok(e)) => shift(pc, var, &e).unwrap_or(killed),
                Some(_) => killed,
                None => and_opt(&killed, support(var, dist)),
            }
        }
        Command::Call { var, .. } => kill_globals(&kill(pc, &BTreeSet::from([var.clone()])), prog),
        Command::Local { var, init, body } => {
            let inner = match expr_poly(init) {
                Ok(e) => and_opt(pc, equal(var, &e)),
                Err(_) => pc.clone(),
            };
            kill(&flow(body, &inner, prog), &BTreeSet::from([var.clone()]))
        }
        Command::Seq(a, b) => flow(b, &flow(a, pc, prog), prog),
        Command::If { cond, then, els } => {
            let t = flow(then, &and_opt(pc, single(cond)), prog);
            let e = flow(els, &and_opt(pc, single(&BExpr::not(cond.clone()))), prog);
            join(&t, &e)
        }
        Command::While { cond, body, .. } => {
            let head = loop_head(pc, body, prog);
            and_opt(&head, single(&BExpr::not(cond.clone())))
        }
        Command::NonDet { left, right, .. } => join(&flow(left, pc, prog), &flow(right, pc, prog)),
    }
}

/// Whether every update of `v` in `c` is `v := v + c` with `c ≥ 0` (resp. `c ≤ 0`);
/// `None` when some update is of another shape.
fn drift(c: &Command, v: &str) -> Option<(bool, bool)> {
    let both = |a: Option<(bool, bool)>, b: Option<(bool, bool)>| Some((a?.0 && b?.0, a?.1 && b?.1));
    match c {
        Command::Skip | Command::Return(_) => Some((true, true)),
        Command::Sample { var, dist } if var == v => {
            let e = expr_poly(dist.as_dirac()?).ok()?;
            let step = (&e - &Poly::var(prog_sym(v))).as_constant()?;
            Some((step >= Q::zero(), step <= Q::zero()))
        }
        Command::Sample { .. } => Some((true, true)),
        Command::Call { var, .. } => (var != v).then_some((true, true)),
        Command::Local { var, body, .. } => {
            if var == v {
                Some((true, true))
            } else {
                drift(body, v)
            }
        }
        Command::While { body, .. } => drift(body, v),
        Command::Seq(a, b) => both(drift(a, v), drift(b, v)),
        Command::If { then, els, .. } => both(drift(then, v), drift(els, v)),
        Command::NonDet { left, right, .. } => both(drift(left, v), drift(right, v)),
    }
}

/// A linear premise whose variables only move in the direction that keeps it true.
fn preserved(a: &Atom, body: &Command) -> bool {
    let Some((coeffs, _)) = a.poly.linear_form() else {
        return false;
    };
    coeffs.iter().all(|(x, k)| match drift(body, &x.name) {
        Some((up, down)) => (up || *k < Q::zero()) && (down || *k > Q::zero()),
        None => false,
    })
}

fn loop_head(pc: &Guard, body: &Command, prog: &Program) -> Guard {
    let mut modified = BTreeSet::new();
    body.assigned(&mut modified);
    let head = pc.retain(|a| !a.poly.vars().iter().any(|s| modified.contains(&s.name)) || preserved(a, body));
    if body.contains_call() {
        kill_globals(&head, prog)
    } else {
        head
    }
}

/// Pre-expectation of `c` w.r.t. continuation `t` and procedure post-expectation `s`.
fn et(c: &Command, t: &Term, s: &Term, pc: &Guard, cx: &mut Ctx, st: &mut AnalysisState) -> TResult<Term> {
    match c {
        Command::Skip => Ok(t.clone()),
        Command::Sample { var, dist } => match dist.as_dirac() {
            Some(e) => Ok(t.subst1(&prog_sym(var), &expr_poly(e)?)),
            None => expected_term(&prog_sym(var), dist, t),
        },
        Command::Return(e) => Ok(s.subst1(&Sym::ret(), &expr_poly(e)?)),
        Command::Local { var, init, body } => {
            let e = expr_poly(init)?;
            cx.scope.push(var.clone());
            let inner = and_opt(pc, equal(var, &e));
            let r = et(body, t, s, &inner, cx, st);
            cx.scope.pop();
            Ok(r?.subst1(&prog_sym(var), &e))
        }
        Command::Seq(a, b) => {
            let mid = flow(a, pc, cx.prog);
            let tb = et(b, t, s, &mid, cx, st)?;
            et(a, &tb, s, pc, cx, st)
        }
        Command::If { cond, then, els } => {
            let neg = BExpr::not(cond.clone());
            let tt = et(then, t, s, &and_opt(pc, single(cond)), cx, st)?;
            let te = et(els, t, s, &and_opt(pc, single(&neg)), cx, st)?;
            Ok(tt.guard_mul_bexpr(cond)?.add(&te.guard_mul_bexpr(&neg)?))
        }
        Command::Call { var, proc, args, span } => call(var, proc, args, *span, t, pc, cx, st),
        Command::While { cond, body, span } => {
            let head = loop_head(pc, body, cx.prog);
            let u = fresh_template(c, &head, cx, st);
            let inside = and_opt(&head, single(cond));
            let pre = et(body, &u, s, &inside, cx, st)?;
            for g in dnf(cond)? {
                let ctx = cx.premises(&head).and(&g);
                if let Some(ctx) = ctx {
                    push(st, ctx, pre.clone(), u.clone(), cx.origin(Rule::LoopBody, *span));
                }
            }
            for g in dnf(&BExpr::not(cond.clone()))? {
                if let Some(ctx) = cx.premises(&head).and(&g) {
                    push(st, ctx, t.clone(), u.clone(), cx.origin(Rule::LoopExit, *span));
                }
            }
            Ok(u)
        }
        Command::NonDet { left, right, span } => {
            let u = fresh_template(c, pc, cx, st);
            let l = et(left, t, s, pc, cx, st)?;
            let r = et(right, t, s, pc, cx, st)?;
            let ctx = cx.premises(pc);
            push(st, ctx.clone(), l, u.clone(), cx.origin(Rule::NonDetLeft, *span));
            push(st, ctx, r, u.clone(), cx.origin(Rule::NonDetRight, *span));
            Ok(u)
        }
    }
}

fn push(st: &mut AnalysisState, ctx: Guard, lhs: Term, rhs: Term, origin: Origin) {
    st.conditions.push(SideCondition { ctx, lhs, rhs, origin });
}

/// Fresh template for a loop or choice, over the variables in scope, the
/// guards occurring in `c`, the path premises and the free logical variables.
fn fresh_template(c: &Command, pc: &Guard, cx: &Ctx, st: &mut AnalysisState) -> Term {
    let mut vars: Vec<Sym> = cx.scope.iter().filter(|x| !x.starts_with('_')).map(|x| prog_sym(x)).collect();
    vars.extend(cx.prog.globals.iter().map(|g| prog_sym(g)));
    let mut guards = Vec::new();
    c.guards(&mut guards);
    let mut bases = collect_bases(&vars, &guards, pc);
    if let Command::While { cond, .. } = c {
        // remaining-iteration cost that does not vanish on the last iteration
        if let Some(g) = single(cond).filter(|g| !g.is_true()) {
            bases.push(Base { guard: g, body: Poly::one() });
        }
    }
    let tpl = make_template(&bases, &cx.logicals, st.config.kind, "u", &mut st.fresh);
    let term = tpl.term.clone();
    st.loops.push(tpl);
    term
}

#[allow(clippy::too_many_arguments)]
fn call(
    var: &str,
    proc: &str,
    args: &[Expr],
    span: Span,
    t: &Term,
    pc: &Guard,
    cx: &mut Ctx,
    st: &mut AnalysisState,
) -> TResult<Term> {
    let callee = st
        .templates
        .get(proc)
        .cloned()
        .ok_or_else(|| TermError::Unsupported(format!("call to unknown procedure `{}`", proc)))?;
    let mut scope = cx.logicals.clone();
    if st.config.locals_in_instantiation {
        let x = prog_sym(var);
        scope.extend(cx.scope.iter().filter(|v| !v.starts_with('_')).map(|v| prog_sym(v)).filter(|v| *v != x));
    }
    let tau = make_instantiation(&callee, &scope, &mut st.fresh);
    let mut at_call: HashMap<Sym, Poly> = tau.clone();
    for (a, e) in callee.args.iter().zip(args) {
        at_call.insert(a.clone(), expr_poly(e)?);
    }
    let ctx = cx.premises(pc);
    for a in callee.ctx.atoms() {
        let p = a.poly.subst(&tau);
        push(st, ctx.clone(), Term::zero(), Term::poly(p), cx.origin(Rule::CallContext, span));
    }
    let post = kill_globals(&kill(pc, &BTreeSet::from([var.to_string()])), cx.prog);
    let lhs = t.subst1(&prog_sym(var), &Poly::var(Sym::ret()));
    push(st, cx.premises(&post), lhs, callee.k.subst(&tau), cx.origin(Rule::CallReturn, span));
    Ok(callee.h.term.subst(&at_call))
}

/// `ET⟦f⟧ s` with parameters renamed to their logical variables.
pub fn et_procedure(p: &Program, f: &ProcedureDecl, st: &mut AnalysisState) -> TResult<Term> {
    let pair = st.templates[&f.name].clone();
    let s = pair.k.clone();
    let t0 = s.subst1(&Sym::ret(), &Poly::zero());
    let mut cx = Ctx { prog: p, proc: f, gamma: pair.ctx.clone(), logicals: pair.logicals.clone(), scope: f.params.clone() };
    let first = st.conditions.len();
    let body = et(&f.body, &t0, &s, &Guard::tt(), &mut cx, st)?;
    let rename: HashMap<Sym, Poly> =
        f.params.iter().zip(&pair.args).map(|(x, a)| (prog_sym(x), Poly::var(a.clone()))).collect();
    let emitted: Vec<SideCondition> = st.conditions.drain(first..).collect();
    for c in emitted {
        // a context that became false is vacuously valid
        if let Some(ctx) = c.ctx.subst(&rename) {
            st.conditions.push(SideCondition { ctx, lhs: c.lhs.subst(&rename), rhs: c.rhs.subst(&rename), origin: c.origin });
        }
    }
    Ok(body.subst(&rename))
}

/// All side conditions of a program: per-procedure top-level and
/// non-negativity conditions followed by those emitted inside each body.
pub fn generate_constraints(p: &Program, config: TemplateConfig) -> TResult<AnalysisState> {
    let mut st = AnalysisState::new(p, config);
    for f in &p.decls {
        let pre = et_procedure(p, f, &mut st)?;
        let pair = &st.templates[&f.name];
        let origin = |rule| Origin { rule, proc: f.name.clone(), span: f.span };
        let (ctx, h) = (pair.ctx.clone(), pair.h.term.clone());
        push(&mut st, ctx.clone(), pre, h.clone(), origin(Rule::Procedure));
        push(&mut st, ctx, Term::zero(), h, origin(Rule::NonNegative));
    }
    Ok(st)
}

/// `ET_s⟦c⟧ t` for a command inside procedure `f`, without path premises.
pub fn et_command(p: &Program, f: &ProcedureDecl, c: &Command, t: &Term, s: &Term, st: &mut AnalysisState) -> TResult<Term> {
    let pair = &st.templates[&f.name];
    let mut cx = Ctx { prog: p, proc: f, gamma: pair.ctx.clone(), logicals: pair.logicals.clone(), scope: f.params.clone() };
    et(c, t, s, &Guard::tt(), &mut cx, st)
}
