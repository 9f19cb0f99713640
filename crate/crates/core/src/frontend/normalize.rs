use std::collections::BTreeSet;

use super::ast::*;

/// Renames binders so that globals, parameters and locals are pairwise
/// distinct across the whole program. Programs that already satisfy the
/// convention are returned unchanged.
pub fn normalize(p: &Program) -> Program {
    let mut all = BTreeSet::new();
    for d in &p.decls {
        all.insert(d.name.clone());
        all.extend(d.params.iter().cloned());
        collect_names(&d.body, &mut all);
    }
    all.extend(p.globals.iter().cloned());
    let mut used: BTreeSet<String> = p.globals.iter().cloned().collect();
    let mut decls = Vec::new();
    for d in &p.decls {
        let mut params = Vec::new();
        let mut body = d.body.clone();
        for x in &d.params {
            let y = claim(x, &mut used, &mut all);
            if &y != x {
                body = rename_free(&body, x, &y);
            }
            params.push(y);
        }
        let body = rename_binders(&body, &mut used, &mut all);
        decls.push(ProcedureDecl { name: d.name.clone(), params, body, span: d.span });
    }
    Program { globals: p.globals.clone(), decls }
}

fn claim(x: &str, used: &mut BTreeSet<String>, all: &mut BTreeSet<String>) -> String {
    if used.insert(x.to_string()) {
        return x.to_string();
    }
    let mut k = 1;
    loop {
        let y = format!("{}_{}", x, k);
        if !all.contains(&y) && !used.contains(&y) {
            all.insert(y.clone());
            used.insert(y.clone());
            return y;
        }
        k += 1;
    }
}

fn rename_binders(c: &Command, used: &mut BTreeSet<String>, all: &mut BTreeSet<String>) -> Command {
    match c {
        Command::Local { var, init, body } => {
            let y = claim(var, used, all);
            let body = if &y != var { rename_free(body, var, &y) } else { (**body).clone() };
            let body = rename_binders(&body, used, all);
            Command::Local { var: y, init: init.clone(), body: Box::new(body) }
        }
        Command::Seq(a, b) => {
            let a = rename_binders(a, used, all);
            Command::Seq(Box::new(a), Box::new(rename_binders(b, used, all)))
        }
        Command::If { cond, then, els } => {
            let t = rename_binders(then, used, all);
            Command::ite(cond.clone(), t, rename_binders(els, used, all))
        }
        Command::While { cond, body, span } => {
            Command::While { cond: cond.clone(), body: Box::new(rename_binders(body, used, all)), span: *span }
        }
        Command::NonDet { left, right, span } => {
            let l = rename_binders(left, used, all);
            Command::NonDet { left: Box::new(l), right: Box::new(rename_binders(right, used, all)), span: *span }
        }
        other => other.clone(),
    }
}

/// Capture-avoiding renaming of free occurrences of `from`.
pub(crate) fn rename_free(c: &Command, from: &str, to: &str) -> Command {
    let re = |e: &Expr| e.rename(from, to);
    let rv = |v: &String| if v == from { to.to_string() } else { v.clone() };
    match c {
        Command::Skip => Command::Skip,
        Command::Sample { var, dist } => Command::Sample { var: rv(var), dist: dist.map_exprs(&re) },
        Command::Call { var, proc, args, span } => {
            Command::Call { var: rv(var), proc: proc.clone(), args: args.iter().map(re).collect(), span: *span }
        }
        Command::Return(e) => Command::Return(re(e)),
        Command::Local { var, init, body } => {
            let body = if var == from { (**body).clone() } else { rename_free(body, from, to) };
            Command::Local { var: var.clone(), init: re(init), body: Box::new(body) }
        }
        Command::Seq(a, b) => Command::Seq(Box::new(rename_free(a, from, to)), Box::new(rename_free(b, from, to))),
        Command::If { cond, then, els } => {
            Command::ite(cond.rename(from, to), rename_free(then, from, to), rename_free(els, from, to))
        }
        Command::While { cond, body, span } => {
            Command::While { cond: cond.rename(from, to), body: Box::new(rename_free(body, from, to)), span: *span }
        }
        Command::NonDet { left, right, span } => Command::NonDet {
            left: Box::new(rename_free(left, from, to)),
            right: Box::new(rename_free(right, from, to)),
            span: *span,
        },
    }
}

fn collect_names(c: &Command, out: &mut BTreeSet<String>) {
    match c {
        Command::Skip => {}
        Command::Sample { var, dist } => {
            out.insert(var.clone());
            for e in dist.exprs() {
                e.vars(out);
            }
        }
        Command::Call { var, args, .. } => {
            out.insert(var.clone());
            for e in args {
                e.vars(out);
            }
        }
        Command::Return(e) => e.vars(out),
        Command::Local { var, init, body } => {
            out.insert(var.clone());
            init.vars(out);
            collect_names(body, out);
        }
        Command::Seq(a, b) => {
            collect_names(a, out);
            collect_names(b, out);
        }
        Command::If { cond, then, els } => {
            cond.vars(out);
            collect_names(then, out);
            collect_names(els, out);
        }
        Command::While { cond, body, .. } => {
            cond.vars(out);
            collect_names(body, out);
        }
        Command::NonDet { left, right, .. } => {
            collect_names(left, out);
            collect_names(right, out);
        }
    }
}
