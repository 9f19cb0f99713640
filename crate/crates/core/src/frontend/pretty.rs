//! Renders programs back to concrete syntax that re-parses to the same AST.

use std::fmt::Write;

use num_traits::Signed;

use super::ast::*;
use crate::poly::fmt_q;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, _, _) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, _, _) => 2,
        Expr::Num(c) if !c.is_integer() => 2,
        Expr::Num(c) if c.is_negative() => 3,
        Expr::Neg(_) => 3,
        _ => 4,
    }
}

pub fn pretty_expr(e: &Expr) -> String {
    match e {
        Expr::Num(c) => fmt_q(c),
        Expr::Var(x) => x.clone(),
        Expr::Neg(a) => format!("-{}", paren(a, 4)),
        Expr::Bin(op, a, b) => {
            let (p, s) = match op {
                BinOp::Add => (1, "+"),
                BinOp::Sub => (1, "-"),
                BinOp::Mul => (2, "*"),
                BinOp::Div => (2, "/"),
            };
            format!("{} {} {}", paren(a, p), s, paren(b, p + 1))
        }
    }
}

fn paren(e: &Expr, min: u8) -> String {
    if prec(e) < min {
        format!("({})", pretty_expr(e))
    } else {
        pretty_expr(e)
    }
}

fn bprec(b: &BExpr) -> u8 {
    match b {
        BExpr::Or(_, _) => 1,
        BExpr::And(_, _) => 2,
        BExpr::Not(_) => 3,
        _ => 4,
    }
}

pub fn pretty_bexpr(b: &BExpr) -> String {
    match b {
        BExpr::True => "true".into(),
        BExpr::False => "false".into(),
        BExpr::Cmp(op, a, c) => {
            let s = match op {
                CmpOp::Lt => "<",
                CmpOp::Le => "<=",
                CmpOp::Eq => "=",
                CmpOp::Ne => "!=",
                CmpOp::Gt => ">",
                CmpOp::Ge => ">=",
            };
            format!("{} {} {}", pretty_expr(a), s, pretty_expr(c))
        }
        BExpr::And(a, c) => format!("{} && {}", bparen(a, 2), bparen(c, 3)),
        BExpr::Or(a, c) => format!("{} || {}", bparen(a, 1), bparen(c, 2)),
        BExpr::Not(a) => format!("!({})", pretty_bexpr(a)),
    }
}

fn bparen(b: &BExpr, min: u8) -> String {
    if bprec(b) < min {
        format!("({})", pretty_bexpr(b))
    } else {
        pretty_bexpr(b)
    }
}

fn pretty_dist(d: &Dist) -> String {
    let e = pretty_expr;
    match d {
        Dist::Bernoulli(p) => format!("Bernoulli({})", e(p)),
        Dist::Uniform(a, b) => format!("Uniform({}, {})", e(a), e(b)),
        Dist::Binomial(a, b) => format!("Binomial({}, {})", e(a), e(b)),
        Dist::Hypergeometric(a, b, c) => format!("Hypergeometric({}, {}, {})", e(a), e(b), e(c)),
        Dist::Discrete(rows) => {
            let rows: Vec<String> = rows.iter().map(|(p, v)| format!("{}: {}", e(p), e(v))).collect();
            format!("Discrete({})", rows.join(", "))
        }
    }
}

pub fn pretty_program(p: &Program) -> String {
    let mut out = String::new();
    if !p.globals.is_empty() {
        let _ = writeln!(out, "global {}\n", p.globals.join(", "));
    }
    for (i, d) in p.decls.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "def {}({}) {{", d.name, d.params.join(", "));
        block(&d.body, 1, &mut out);
        out.push_str("}\n");
    }
    out
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

/// Prints a command as the statement list of a block.
fn block(c: &Command, depth: usize, out: &mut String) {
    match c {
        Command::Skip => {}
        Command::Seq(a, b) => {
            // a local in head position scopes only over `a`: keep it in its own block
            if matches!(**a, Command::Local { .. }) {
                indent(depth, out);
                out.push_str("{\n");
                block(a, depth + 1, out);
                indent(depth, out);
                out.push_str("}\n");
            } else {
                stmt(a, depth, out);
            }
            block(b, depth, out);
        }
        Command::Local { var, init, body } => {
            indent(depth, out);
            let _ = writeln!(out, "var {} := {}", var, pretty_expr(init));
            block(body, depth, out);
        }
        other => stmt(other, depth, out),
    }
}

fn braced(c: &Command, depth: usize, out: &mut String) {
    out.push_str("{\n");
    block(c, depth + 1, out);
    indent(depth, out);
    out.push('}');
}

fn stmt(c: &Command, depth: usize, out: &mut String) {
    match c {
        Command::Seq(..) | Command::Local { .. } => {
            indent(depth, out);
            braced(c, depth, out);
            out.push('\n');
        }
        Command::Skip => {
            indent(depth, out);
            out.push_str("skip\n");
        }
        Command::Sample { var, dist } => {
            indent(depth, out);
            match dist.as_dirac() {
                Some(e) => {
                    let _ = writeln!(out, "{} := {}", var, pretty_expr(e));
                }
                None => {
                    let _ = writeln!(out, "{} ~ {}", var, pretty_dist(dist));
                }
            }
        }
        Command::Call { var, proc, args, .. } => {
            indent(depth, out);
            let args: Vec<String> = args.iter().map(pretty_expr).collect();
            let _ = writeln!(out, "{} ~ {}({})", var, proc, args.join(", "));
        }
        Command::Return(e) => {
            indent(depth, out);
            let _ = writeln!(out, "return {}", pretty_expr(e));
        }
        Command::If { cond, then, els } => {
            indent(depth, out);
            let _ = write!(out, "if ({}) ", pretty_bexpr(cond));
            braced(then, depth, out);
            if !matches!(**els, Command::Skip) {
                out.push_str(" else ");
                braced(els, depth, out);
            }
            out.push('\n');
        }
        Command::While { cond, body, .. } => {
            indent(depth, out);
            let _ = write!(out, "while ({}) ", pretty_bexpr(cond));
            braced(body, depth, out);
            out.push('\n');
        }
        Command::NonDet { left, right, .. } => {
            indent(depth, out);
            out.push_str("if (*) ");
            braced(left, depth, out);
            out.push_str(" else ");
            braced(right, depth, out);
            out.push('\n');
        }
    }
}
