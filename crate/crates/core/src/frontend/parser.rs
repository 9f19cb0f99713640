//! Recursive-descent parser with desugaring.
//!
//! Calls and sampling expressions nested inside expressions are hoisted into
//! fresh temporaries, left to right, immediately before the statement that
//! uses them.

use std::collections::{BTreeSet, HashMap};

use num_traits::Zero;

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::{DiagKind, Diagnostic};
use crate::poly::Q;

const DISTS: &[&str] = &["Bernoulli", "Uniform", "unif", "Binomial", "Hypergeometric", "Discrete"];

#[derive(Clone, Debug)]
enum PExpr {
    Num(Q),
    Var(String, Span),
    Neg(Box<PExpr>),
    Bin(BinOp, Box<PExpr>, Box<PExpr>),
    Call(String, Vec<PExpr>, Span),
    Table(Vec<(PExpr, PExpr)>),
}

#[derive(Clone, Debug)]
enum PBExpr {
    True,
    False,
    Cmp(CmpOp, PExpr, PExpr),
    And(Box<PBExpr>, Box<PBExpr>),
    Or(Box<PBExpr>, Box<PBExpr>),
    Not(Box<PBExpr>),
    Bare(PExpr),
}

/// A hoisted sub-computation: the temporary is bound before the statement.
enum Pre {
    Sample(String, Dist),
    Call(String, String, Vec<Expr>, Span),
}

impl Pre {
    fn var(&self) -> &str {
        match self {
            Pre::Sample(v, _) | Pre::Call(v, _, _, _) => v,
        }
    }
    fn command(self) -> Command {
        match self {
            Pre::Sample(var, dist) => Command::Sample { var, dist },
            Pre::Call(var, proc, args, span) => Command::Call { var, proc, args, span },
        }
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    scopes: Vec<Vec<String>>,
    globals: Vec<String>,
    taken: BTreeSet<String>,
    fresh: usize,
    calls: Vec<(String, usize, Span)>,
}

type PResult<T> = Result<T, Diagnostic>;

pub fn parse_program(src: &str) -> PResult<Program> {
    let toks = lex(src)?;
    let taken = toks
        .iter()
        .filter_map(|t| match &t.tok {
            Tok::Ident(s) => Some(s.clone()),
            _ => None,
        })
        .collect();
    let mut p = Parser { toks, pos: 0, scopes: Vec::new(), globals: Vec::new(), taken, fresh: 0, calls: Vec::new() };
    let prog = p.program()?;
    let arity: HashMap<&str, usize> = prog.decls.iter().map(|d| (d.name.as_str(), d.arity())).collect();
    for (name, n, span) in &p.calls {
        match arity.get(name.as_str()) {
            None => {
                return Err(Diagnostic::new(
                    DiagKind::UnknownProcedure,
                    *span,
                    format!("unknown procedure `{}`", name),
                ))
            }
            Some(k) if k != n => {
                return Err(Diagnostic::new(
                    DiagKind::Arity,
                    *span,
                    format!("procedure `{}` expects {} argument(s), got {}", name, k, n),
                ))
            }
            _ => {}
        }
    }
    Ok(prog)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }
    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }
    fn span(&self) -> Span {
        self.toks[self.pos].span
    }
    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }
    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }
    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }
    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(Diagnostic::new(DiagKind::Parse, self.span(), msg.into()))
    }
    fn expect(&mut self, t: Tok, what: &str) -> PResult<()> {
        if self.eat(&t) {
            Ok(())
        } else {
            self.err(format!("expected {}, found {:?}", what, self.peek()))
        }
    }
    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {:?}", other)),
        }
    }

    fn in_scope(&self, x: &str) -> bool {
        self.globals.iter().any(|g| g == x) || self.scopes.iter().any(|s| s.iter().any(|v| v == x))
    }
    fn bind(&mut self, x: &str) {
        self.scopes.last_mut().expect("scope").push(x.to_string());
    }
    fn temp(&mut self) -> String {
        loop {
            self.fresh += 1;
            let name = format!("_t{}", self.fresh);
            if !self.taken.contains(&name) {
                self.taken.insert(name.clone());
                return name;
            }
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut prog = Program::default();
        loop {
            while self.eat(&Tok::Semi) {}
            if self.peek() == &Tok::Eof {
                break;
            }
            if self.is_kw("global") {
                self.bump();
                loop {
                    let g = self.ident()?;
                    if !prog.globals.contains(&g) {
                        prog.globals.push(g.clone());
                    }
                    self.globals.push(g);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                continue;
            }
            if !self.is_kw("def") {
                return self.err("expected `def` or `global`");
            }
            let span = self.span();
            self.bump();
            let name = self.ident()?;
            if prog.decls.iter().any(|d: &ProcedureDecl| d.name == name) {
                return Err(Diagnostic::new(
                    DiagKind::DuplicateProcedure,
                    span,
                    format!("procedure `{}` declared twice", name),
                ));
            }
            self.expect(Tok::LParen, "`(`")?;
            let mut params = Vec::new();
            if !self.eat(&Tok::RParen) {
                loop {
                    params.push(self.ident()?);
                    if self.eat(&Tok::RParen) {
                        break;
                    }
                    self.expect(Tok::Comma, "`,` or `)`")?;
                }
            }
            self.scopes.push(params.clone());
            let body = if self.eat(&Tok::Colon) {
                self.stmts(false)?
            } else {
                self.expect(Tok::LBrace, "`{` or `:`")?;
                let b = self.stmts(true)?;
                self.expect(Tok::RBrace, "`}`")?;
                b
            };
            self.scopes.pop();
            prog.decls.push(ProcedureDecl { name, params, body, span });
        }
        Ok(prog)
    }

    fn at_block_end(&self, braced: bool) -> bool {
        match self.peek() {
            Tok::Eof => true,
            Tok::RBrace => braced,
            Tok::Ident(s) => !braced && (s == "def" || s == "global"),
            _ => false,
        }
    }

    /// Statement list up to the end of the enclosing block. A `var`
    /// declaration scopes over the remainder of the list.
    fn stmts(&mut self, braced: bool) -> PResult<Command> {
        self.scopes.push(Vec::new());
        let mut items = Vec::new();
        let mut tail = Command::Skip;
        loop {
            while self.eat(&Tok::Semi) {}
            if self.at_block_end(braced) {
                break;
            }
            if self.is_kw("var") || self.is_kw("local") {
                self.bump();
                tail = self.decls(braced)?;
                break;
            }
            items.push(self.stmt()?);
        }
        self.scopes.pop();
        Ok(items.into_iter().rev().fold(tail, |acc, c| Command::seq(c, acc)))
    }

    fn decls(&mut self, braced: bool) -> PResult<Command> {
        let mut binders = Vec::new();
        loop {
            let x = self.ident()?;
            let mut pre = Vec::new();
            let init = if self.eat(&Tok::Assign) || self.eat(&Tok::Tilde) {
                let e = self.expr()?;
                self.lower(e, &mut pre)?
            } else {
                Expr::int(0)
            };
            binders.push((x.clone(), init, pre));
            self.bind(&x);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        let rest = self.stmts(braced)?;
        Ok(binders.into_iter().rev().fold(rest, |acc, (x, init, pre)| wrap(pre, Command::local(&x, init, acc))))
    }

    fn block(&mut self) -> PResult<Command> {
        self.expect(Tok::LBrace, "`{`")?;
        let c = self.stmts(true)?;
        self.expect(Tok::RBrace, "`}`")?;
        Ok(c)
    }

    fn stmt(&mut self) -> PResult<Command> {
        let span = self.span();
        match self.peek().clone() {
            Tok::LBrace => self.block(),
            Tok::Ident(k) if k == "skip" => {
                self.bump();
                Ok(Command::Skip)
            }
            Tok::Ident(k) if k == "return" => {
                self.bump();
                let e = self.expr()?;
                let mut pre = Vec::new();
                let e = self.lower(e, &mut pre)?;
                Ok(wrap(pre, Command::Return(e)))
            }
            Tok::Ident(k) if k == "if" => self.if_stmt(),
            Tok::Ident(k) if k == "while" => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let c = self.bexpr()?;
                self.expect(Tok::RParen, "`)`")?;
                let mut pre = Vec::new();
                let cond = self.lower_b(c, &mut pre)?;
                let body = self.block()?;
                if pre.is_empty() {
                    return Ok(Command::While { cond, body: Box::new(body), span });
                }
                // guards that sample are re-evaluated after every iteration
                let temps: Vec<String> = pre.iter().map(|p| p.var().to_string()).collect();
                let redo: Vec<Command> = pre.iter().map(clone_pre).collect();
                let first = pre.into_iter().map(Pre::command).fold(Command::Skip, Command::seq);
                let again = redo.into_iter().fold(Command::Skip, Command::seq);
                let lp = Command::While { cond, body: Box::new(Command::seq(body, again)), span };
                Ok(temps.iter().rev().fold(Command::seq(first, lp), |acc, t| Command::local(t, Expr::int(0), acc)))
            }
            Tok::Ident(x) if !is_keyword(&x) => {
                self.bump();
                if !self.in_scope(&x) {
                    return Err(Diagnostic::new(DiagKind::Unbound, span, format!("unbound variable `{}`", x)));
                }
                if !(self.eat(&Tok::Assign) || self.eat(&Tok::Tilde)) {
                    return self.err("expected `:=` or `~`");
                }
                let rhs = self.expr()?;
                let mut pre = Vec::new();
                let cmd = match rhs {
                    PExpr::Call(f, args, cspan) if !DISTS.contains(&f.as_str()) => {
                        let args = args.into_iter().map(|a| self.lower(a, &mut pre)).collect::<PResult<Vec<_>>>()?;
                        self.calls.push((f.clone(), args.len(), cspan));
                        Command::Call { var: x, proc: f, args, span: cspan }
                    }
                    PExpr::Call(f, args, cspan) => {
                        let dist = self.dist(&f, args, cspan, &mut pre)?;
                        Command::Sample { var: x, dist }
                    }
                    PExpr::Table(rows) => {
                        let dist = self.table(rows, &mut pre)?;
                        Command::Sample { var: x, dist }
                    }
                    e => {
                        let e = self.lower(e, &mut pre)?;
                        Command::assign(&x, e)
                    }
                };
                Ok(wrap(pre, cmd))
            }
            other => self.err(format!("unexpected {:?} at start of statement", other)),
        }
    }

    fn if_stmt(&mut self) -> PResult<Command> {
        let span = self.span();
        self.bump();
        self.expect(Tok::LParen, "`(`")?;
        if self.peek() == &Tok::Star && self.peek_at(1) == &Tok::RParen {
            self.bump();
            self.bump();
            let left = self.block()?;
            let right = self.else_part()?;
            return Ok(Command::NonDet { left: Box::new(left), right: Box::new(right), span });
        }
        let c = self.bexpr()?;
        self.expect(Tok::RParen, "`)`")?;
        let mut pre = Vec::new();
        let cond = self.lower_b(c, &mut pre)?;
        let then = self.block()?;
        let els = self.else_part()?;
        Ok(wrap(pre, Command::ite(cond, then, els)))
    }

    fn else_part(&mut self) -> PResult<Command> {
        while self.peek() == &Tok::Semi && self.peek_at(1) == &Tok::Ident("else".into()) {
            self.bump();
        }
        if !self.is_kw("else") {
            return Ok(Command::Skip);
        }
        self.bump();
        if self.is_kw("if") {
            self.if_stmt()
        } else {
            self.block()
        }
    }

    // ---- expressions ----

    fn expr(&mut self) -> PResult<PExpr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = PExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> PResult<PExpr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = match (op, &lhs, &rhs) {
                (BinOp::Div, PExpr::Num(a), PExpr::Num(b)) if !b.is_zero() => PExpr::Num(a / b),
                _ => PExpr::Bin(op, Box::new(lhs), Box::new(rhs)),
            };
        }
    }

    fn unary(&mut self) -> PResult<PExpr> {
        if self.eat(&Tok::Minus) {
            return Ok(match self.unary()? {
                PExpr::Num(c) => PExpr::Num(-c),
                e => PExpr::Neg(Box::new(e)),
            });
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<PExpr> {
        let span = self.span();
        match self.bump() {
            Tok::Num(n) => Ok(PExpr::Num(Q::from_integer(n))),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(x) if x == "Discrete" => {
                self.expect(Tok::LParen, "`(`")?;
                let mut rows = Vec::new();
                loop {
                    let p = self.expr()?;
                    self.expect(Tok::Colon, "`:`")?;
                    let v = self.expr()?;
                    rows.push((p, v));
                    if self.eat(&Tok::RParen) {
                        break;
                    }
                    self.expect(Tok::Comma, "`,` or `)`")?;
                }
                Ok(PExpr::Table(rows))
            }
            Tok::Ident(x) if !is_keyword(&x) => {
                if self.eat(&Tok::LParen) {
                    let mut args = Vec::new();
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(&Tok::RParen) {
                                break;
                            }
                            self.expect(Tok::Comma, "`,` or `)`")?;
                        }
                    }
                    Ok(PExpr::Call(x, args, span))
                } else {
                    Ok(PExpr::Var(x, span))
                }
            }
            other => Err(Diagnostic::new(DiagKind::Parse, span, format!("unexpected {:?} in expression", other))),
        }
    }

    fn bexpr(&mut self) -> PResult<PBExpr> {
        let mut lhs = self.bconj()?;
        while self.eat(&Tok::OrOr) || self.eat_kw("or") {
            let rhs = self.bconj()?;
            lhs = PBExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn bconj(&mut self) -> PResult<PBExpr> {
        let mut lhs = self.bnot()?;
        while self.eat(&Tok::AndAnd) || self.eat_kw("and") {
            let rhs = self.bnot()?;
            lhs = PBExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn bnot(&mut self) -> PResult<PBExpr> {
        if self.eat(&Tok::Bang) || self.eat_kw("not") {
            return Ok(PBExpr::Not(Box::new(self.bnot()?)));
        }
        if self.eat_kw("true") {
            return Ok(PBExpr::True);
        }
        if self.eat_kw("false") {
            return Ok(PBExpr::False);
        }
        // an arithmetic comparison chain, or a parenthesised boolean
        let save = self.pos;
        if let Ok(b) = self.comparison() {
            return Ok(b);
        }
        let fail = self.pos;
        self.pos = save;
        if self.eat(&Tok::LParen) {
            let b = self.bexpr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(b);
        }
        self.pos = fail;
        self.err("expected a boolean expression")
    }

    fn comparison(&mut self) -> PResult<PBExpr> {
        let first = self.expr()?;
        let mut chain: Vec<(CmpOp, PExpr)> = Vec::new();
        while let Some(op) = cmp_op(self.peek()) {
            self.bump();
            chain.push((op, self.expr()?));
        }
        if chain.is_empty() {
            return match first {
                e @ (PExpr::Call(..) | PExpr::Table(..)) => Ok(PBExpr::Bare(e)),
                _ => self.err("expected a comparison"),
            };
        }
        let mut lhs = first;
        let mut out: Option<PBExpr> = None;
        for (op, rhs) in chain {
            let c = PBExpr::Cmp(op, lhs, rhs.clone());
            out = Some(match out {
                None => c,
                Some(acc) => PBExpr::And(Box::new(acc), Box::new(c)),
            });
            lhs = rhs;
        }
        Ok(out.expect("non-empty chain"))
    }

    // ---- lowering ----

    fn lower(&mut self, e: PExpr, pre: &mut Vec<Pre>) -> PResult<Expr> {
        Ok(match e {
            PExpr::Num(c) => Expr::Num(c),
            PExpr::Var(x, span) => {
                if !self.in_scope(&x) {
                    return Err(Diagnostic::new(DiagKind::Unbound, span, format!("unbound variable `{}`", x)));
                }
                Expr::Var(x)
            }
            PExpr::Neg(e) => Expr::Neg(Box::new(self.lower(*e, pre)?)),
            PExpr::Bin(op, a, b) => {
                let a = self.lower(*a, pre)?;
                let b = self.lower(*b, pre)?;
                Expr::bin(op, a, b)
            }
            PExpr::Call(f, args, span) => {
                let t = self.temp();
                if DISTS.contains(&f.as_str()) {
                    let d = self.dist(&f, args, span, pre)?;
                    pre.push(Pre::Sample(t.clone(), d));
                } else {
                    let args = args.into_iter().map(|a| self.lower(a, pre)).collect::<PResult<Vec<_>>>()?;
                    self.calls.push((f.clone(), args.len(), span));
                    pre.push(Pre::Call(t.clone(), f, args, span));
                }
                Expr::Var(t)
            }
            PExpr::Table(rows) => {
                let t = self.temp();
                let d = self.table(rows, pre)?;
                pre.push(Pre::Sample(t.clone(), d));
                Expr::Var(t)
            }
        })
    }

    fn lower_b(&mut self, b: PBExpr, pre: &mut Vec<Pre>) -> PResult<BExpr> {
        Ok(match b {
            PBExpr::True => BExpr::True,
            PBExpr::False => BExpr::False,
            PBExpr::Cmp(op, a, c) => {
                let a = self.lower(a, pre)?;
                let c = self.lower(c, pre)?;
                BExpr::Cmp(op, a, c)
            }
            PBExpr::And(a, c) => {
                let a = self.lower_b(*a, pre)?;
                BExpr::and(a, self.lower_b(*c, pre)?)
            }
            PBExpr::Or(a, c) => {
                let a = self.lower_b(*a, pre)?;
                BExpr::or(a, self.lower_b(*c, pre)?)
            }
            PBExpr::Not(a) => BExpr::not(self.lower_b(*a, pre)?),
            PBExpr::Bare(e) => {
                let bern = matches!(&e, PExpr::Call(f, _, _) if f == "Bernoulli");
                let v = self.lower(e, pre)?;
                if bern {
                    BExpr::Cmp(CmpOp::Eq, v, Expr::int(1))
                } else {
                    BExpr::Cmp(CmpOp::Ne, v, Expr::int(0))
                }
            }
        })
    }

    fn dist(&mut self, f: &str, args: Vec<PExpr>, span: Span, pre: &mut Vec<Pre>) -> PResult<Dist> {
        let want = match f {
            "Bernoulli" => 1,
            "Uniform" | "unif" | "Binomial" => 2,
            "Hypergeometric" => 3,
            _ => 0,
        };
        if args.len() != want {
            return Err(Diagnostic::new(
                DiagKind::Arity,
                span,
                format!("distribution `{}` expects {} argument(s), got {}", f, want, args.len()),
            ));
        }
        let mut a = args.into_iter().map(|e| self.lower(e, pre)).collect::<PResult<Vec<_>>>()?.into_iter();
        let mut next = || a.next().expect("arity checked");
        Ok(match f {
            "Bernoulli" => Dist::Bernoulli(next()),
            "Uniform" | "unif" => Dist::Uniform(next(), next()),
            "Binomial" => Dist::Binomial(next(), next()),
            _ => Dist::Hypergeometric(next(), next(), next()),
        })
    }

    fn table(&mut self, rows: Vec<(PExpr, PExpr)>, pre: &mut Vec<Pre>) -> PResult<Dist> {
        let mut out = Vec::new();
        for (p, v) in rows {
            let p = self.lower(p, pre)?;
            let v = self.lower(v, pre)?;
            out.push((p, v));
        }
        Ok(Dist::Discrete(out))
    }
}

fn clone_pre(p: &Pre) -> Command {
    match p {
        Pre::Sample(v, d) => Command::Sample { var: v.clone(), dist: d.clone() },
        Pre::Call(v, f, a, s) => Command::Call { var: v.clone(), proc: f.clone(), args: a.clone(), span: *s },
    }
}

fn wrap(pre: Vec<Pre>, cmd: Command) -> Command {
    pre.into_iter().rev().fold(cmd, |acc, p| {
        let t = p.var().to_string();
        Command::local(&t, Expr::int(0), Command::seq(p.command(), acc))
    })
}

fn cmp_op(t: &Tok) -> Option<CmpOp> {
    Some(match t {
        Tok::Lt => CmpOp::Lt,
        Tok::Le => CmpOp::Le,
        Tok::Eq => CmpOp::Eq,
        Tok::Ne => CmpOp::Ne,
        Tok::Gt => CmpOp::Gt,
        Tok::Ge => CmpOp::Ge,
        _ => return None,
    })
}

fn is_keyword(s: &str) -> bool {
    matches!(
        s,
        "def" | "var" | "local" | "if" | "else" | "while" | "return" | "skip" | "true" | "false" | "global" | "and"
            | "or" | "not"
    )
}
