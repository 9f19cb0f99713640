//! Template synthesis: base functions, coefficient templates, per-procedure
//! pre/post-expectation pairs and logical-variable instantiations.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::frontend::{BExpr, CmpOp, Command, ProcedureDecl, Program};
use crate::poly::{Poly, Sym, SymKind};
use crate::terms::{expr_poly, Atom, Guard, Lit, Term};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateKind {
    #[default]
    Linear,
    SimpleMixed,
}

impl std::fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            TemplateKind::Linear => "linear",
            TemplateKind::SimpleMixed => "simple-mixed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateConfig {
    pub kind: TemplateKind,
    /// Free logical variables per procedure.
    pub logicals: usize,
    /// Let instantiations of logical variables mention program variables in scope.
    pub locals_in_instantiation: bool,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig { kind: TemplateKind::Linear, logicals: 1, locals_in_instantiation: false }
    }
}

/// Fresh-symbol supply for one analysis; names never repeat within it.
#[derive(Clone, Debug, Default)]
pub struct Fresh {
    counts: HashMap<String, usize>,
}

impl Fresh {
    pub fn name(&mut self, prefix: &str) -> String {
        let k = self.counts.entry(prefix.to_string()).or_insert(0);
        let s = format!("{}{}", prefix, k);
        *k += 1;
        s
    }
    pub fn unknown(&mut self, prefix: &str) -> Sym {
        Sym::unknown(self.name(prefix))
    }
}

/// A non-negative building block `[guard]·body`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Base {
    pub guard: Guard,
    pub body: Poly,
}

impl Base {
    pub fn one() -> Base {
        Base { guard: Guard::tt(), body: Poly::one() }
    }
    /// `⟨p⟩`, or `None` when it is identically zero.
    pub fn norm(p: Poly) -> Option<Base> {
        match Atom::ge(p.clone()) {
            Lit::True => Some(Base { guard: Guard::tt(), body: p }),
            Lit::False => None,
            Lit::Atom(a) => Some(Base { guard: Guard::from_lits([Lit::Atom(a)])?, body: p }),
        }
    }
    /// Unguarded body; only for bodies that are non-negative everywhere.
    pub fn plain(p: Poly) -> Base {
        Base { guard: Guard::tt(), body: p }
    }
    pub fn is_one(&self) -> bool {
        self.guard.is_true() && self.body == Poly::one()
    }
    pub fn term(&self) -> Term {
        Term::guarded(self.guard.clone(), self.body.clone())
    }
}

/// `⟨e1 − e2⟩` for every comparison `e2 ≤ e1` (or `e2 < e1`) in the guards.
fn guard_bases(guards: &[&BExpr], out: &mut Vec<Poly>) {
    for g in guards {
        let mut cs = Vec::new();
        g.comparisons(&mut cs);
        for (op, a, b) in cs {
            let (Ok(a), Ok(b)) = (expr_poly(a), expr_poly(b)) else { continue };
            match op {
                CmpOp::Lt | CmpOp::Le => out.push(&b - &a),
                CmpOp::Gt | CmpOp::Ge => out.push(&a - &b),
                CmpOp::Eq | CmpOp::Ne => {}
            }
        }
    }
}

fn is_temporary(x: &str) -> bool {
    x.starts_with('_')
}

/// Variables a procedure binds: parameters and locals, parser temporaries excluded.
pub fn procedure_vars(f: &ProcedureDecl) -> Vec<String> {
    let mut out = f.params.clone();
    let mut assigned = BTreeSet::new();
    f.body.assigned(&mut assigned);
    out.extend(assigned.into_iter().filter(|x| !is_temporary(x) && !f.params.contains(x)));
    out
}

/// Candidate base functions: `1`, `⟨v⟩` per variable, and guard distances.
pub fn collect_bases(vars: &[Sym], guards: &[&BExpr], invariant: &Guard) -> Vec<Base> {
    let mut polys: Vec<Poly> = vars.iter().map(|v| Poly::var(v.clone())).collect();
    guard_bases(guards, &mut polys);
    for a in invariant.atoms() {
        polys.push(a.poly.clone());
    }
    let mut out = vec![Base::one()];
    let mut seen: BTreeSet<Base> = out.iter().cloned().collect();
    for p in polys {
        if p.as_constant().is_some() {
            continue;
        }
        if let Some(b) = Base::norm(p) {
            if seen.insert(b.clone()) {
                out.push(b);
            }
        }
    }
    out
}

/// Base functions of a procedure body: parameters, globals, locals and every guard.
pub fn collect_base_functions(p: &Program, f: &ProcedureDecl, invariant: &Guard) -> Vec<Base> {
    let mut vars: Vec<Sym> = procedure_vars(f).into_iter().map(Sym::prog).collect();
    vars.extend(p.globals.iter().map(|g| Sym::prog(g.clone())));
    let mut guards = Vec::new();
    f.body.guards(&mut guards);
    collect_bases(&vars, &guards, invariant)
}

/// Adds squares and guarded pairwise products of the non-constant bases.
pub fn extend_mixed(bases: &[Base]) -> Vec<Base> {
    let mut out = bases.to_vec();
    let norms: Vec<&Base> = bases.iter().filter(|b| !b.is_one()).collect();
    for b in &norms {
        out.push(Base::plain(&b.body * &b.body));
    }
    for (i, a) in norms.iter().enumerate() {
        for b in &norms[i + 1..] {
            if let Some(g) = a.guard.and(&b.guard) {
                out.push(Base { guard: g, body: &a.body * &b.body });
            }
        }
    }
    let mut seen = BTreeSet::new();
    out.retain(|b| seen.insert(b.clone()));
    out
}

/// A template `Σ c_i·b_i` together with its coefficient/base pairs.
#[derive(Clone, Debug)]
pub struct Template {
    pub term: Term,
    pub coeffs: Vec<(Sym, Base)>,
}

/// `Σ c_i·b_i` over the bases (extended for simple-mixed templates), plus `c·ℓ`
/// for each free logical variable, which stays linear.
pub fn make_template(bases: &[Base], logicals: &[Sym], kind: TemplateKind, prefix: &str, fresh: &mut Fresh) -> Template {
    let bases = match kind {
        TemplateKind::Linear => bases.to_vec(),
        TemplateKind::SimpleMixed => extend_mixed(bases),
    };
    let mut coeffs = Vec::new();
    let mut parts = Vec::new();
    let all = bases.into_iter().chain(logicals.iter().map(|l| Base::plain(Poly::var(l.clone()))));
    for b in all {
        let c = fresh.unknown(prefix);
        parts.push(Term::guarded(b.guard.clone(), &b.body * &Poly::var(c.clone())));
        coeffs.push((c, b));
    }
    Template { term: Term::sum(parts), coeffs }
}

/// `⟨h_f, k_f⟩` with context `Γ_f`.
#[derive(Clone, Debug)]
pub struct TemplatePair {
    pub proc: String,
    /// Logical variables standing for the parameters, in order.
    pub args: Vec<Sym>,
    /// Free logical variables.
    pub logicals: Vec<Sym>,
    pub h: Template,
    pub k: Term,
    pub ctx: Guard,
}

pub fn arg_sym(param: &str) -> Sym {
    Sym::new(SymKind::Arg, format!("ℓa_{}", param))
}

pub fn make_procedure_templates(p: &Program, f: &ProcedureDecl, cfg: &TemplateConfig, fresh: &mut Fresh) -> TemplatePair {
    let args: Vec<Sym> = f.params.iter().map(|x| arg_sym(x)).collect();
    let logicals: Vec<Sym> = (0..cfg.logicals)
        .map(|i| {
            let name = if cfg.logicals == 1 { format!("ℓ_{}", f.name) } else { format!("ℓ{}_{}", i, f.name) };
            Sym::new(SymKind::Free, name)
        })
        .collect();
    let globals: Vec<Sym> = p.globals.iter().map(|g| Sym::prog(g.clone())).collect();
    let vars: Vec<Sym> = args.iter().chain(globals.iter()).cloned().collect();
    let bases = collect_bases(&vars, &[], &Guard::tt());
    let h = make_template(&bases, &logicals, cfg.kind, "c", fresh);
    let mut k = Term::norm(Poly::var(Sym::ret()));
    for g in &globals {
        if let Some(b) = Base::norm(Poly::var(g.clone())) {
            let e = fresh.unknown("e");
            k = k.add(&b.term().scale(&Poly::var(e)));
        }
    }
    for l in &logicals {
        k = k.add(&Term::poly(Poly::var(l.clone())));
    }
    let ctx = Guard::from_lits(logicals.iter().map(|l| Atom::ge(Poly::var(l.clone())))).unwrap_or_default();
    TemplatePair { proc: f.name.clone(), args, logicals, h, k, ctx }
}

/// `ℓ_callee ↦ d_0 + Σ_j d_j·ℓ_j (+ Σ d_k·x_k)` for each callee logical variable.
pub fn make_instantiation(callee: &TemplatePair, scope: &[Sym], fresh: &mut Fresh) -> HashMap<Sym, Poly> {
    let mut out = HashMap::new();
    for l in &callee.logicals {
        let mut tau = Poly::var(fresh.unknown("d"));
        for s in scope {
            tau = &tau + &(&Poly::var(fresh.unknown("d")) * &Poly::var(s.clone()));
        }
        out.insert(l.clone(), tau);
    }
    out
}

/// Variables in scope at every point of a command, for loop templates.
pub fn in_scope_at_loops(c: &Command, scope: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    match c {
        Command::Local { var, body, .. } => {
            scope.push(var.clone());
            in_scope_at_loops(body, scope, out);
            scope.pop();
        }
        Command::Seq(a, b) => {
            in_scope_at_loops(a, scope, out);
            in_scope_at_loops(b, scope, out);
        }
        Command::If { then, els, .. } => {
            in_scope_at_loops(then, scope, out);
            in_scope_at_loops(els, scope, out);
        }
        Command::While { body, .. } => {
            out.push(scope.clone());
            in_scope_at_loops(body, scope, out);
        }
        Command::NonDet { left, right, .. } => {
            out.push(scope.clone());
            in_scope_at_loops(left, scope, out);
            in_scope_at_loops(right, scope, out);
        }
        _ => {}
    }
}
