//! SMT-LIB2 script generation, solver invocation and model parsing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::Duration;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::poly::{Poly, Sym, Q};

pub type Model = BTreeMap<String, Q>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Answer {
    Sat(Model),
    Unsat,
    Unknown(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SmtError {
    #[error("cannot run solver `{0}`: {1}")]
    Spawn(String, String),
    #[error("solver timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed solver output: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Where and how to run the external solver.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub path: String,
    pub timeout: Duration,
    pub dump_dir: Option<PathBuf>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let path = std::env::var("PEVAL_SOLVER").unwrap_or_else(|_| "z3".to_string());
        SolverConfig { path, timeout: Duration::from_secs(10), dump_dir: None }
    }
}

/// An assertion `poly ⋈ 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Assertion {
    Eq(Poly),
    Le(Poly),
    Lt(Poly),
}

pub fn smt_q(c: &Q) -> String {
    let body = if c.denom().is_one() {
        format!("{}", c.numer().abs())
    } else {
        format!("(/ {} {})", c.numer().abs(), c.denom())
    };
    if c.is_negative() {
        format!("(- {})", body)
    } else {
        body
    }
}

pub fn smt_poly(p: &Poly) -> String {
    let mut parts = Vec::new();
    for (m, c) in p.terms() {
        let mut factors = Vec::new();
        if !c.is_one() || m.is_one() {
            factors.push(smt_q(c));
        }
        for (s, e) in &m.0 {
            for _ in 0..*e {
                factors.push(s.name.clone());
            }
        }
        parts.push(if factors.len() == 1 { factors.pop().unwrap_or_default() } else { format!("(* {})", factors.join(" ")) });
    }
    match parts.len() {
        0 => "0".to_string(),
        1 => parts.pop().unwrap_or_default(),
        _ => format!("(+ {})", parts.join(" ")),
    }
}

/// A QF_NRA script declaring every symbol as a non-negative real, asserting
/// the constraints, optionally minimizing `objective`, and querying `vars`.
pub fn emit_smt(vars: &BTreeSet<Sym>, assertions: &[Assertion], objective: Option<&Poly>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "(set-logic QF_NRA)");
    let _ = writeln!(s, "(set-option :produce-models true)");
    for v in vars {
        let _ = writeln!(s, "(declare-fun {} () Real)", v.name);
        let _ = writeln!(s, "(assert (>= {} 0))", v.name);
    }
    for a in assertions {
        match a {
            Assertion::Eq(p) => {
                let _ = writeln!(s, "(assert (= {} 0))", smt_poly(p));
            }
            Assertion::Le(p) => {
                let _ = writeln!(s, "(assert (<= {} 0))", smt_poly(p));
            }
            Assertion::Lt(p) => {
                let _ = writeln!(s, "(assert (< {} 0))", smt_poly(p));
            }
        }
    }
    if let Some(o) = objective {
        let _ = writeln!(s, "(minimize {})", smt_poly(o));
    }
    let _ = writeln!(s, "(check-sat)");
    if !vars.is_empty() {
        let names: Vec<&str> = vars.iter().map(|v| v.name.as_str()).collect();
        let _ = writeln!(s, "(get-value ({}))", names.join(" "));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for ch in s.chars() {
        if quoted {
            if ch == '|' {
                quoted = false;
            } else {
                cur.push(ch);
            }
            continue;
        }
        match ch {
            '|' => quoted = true,
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_sexps(toks: &[String]) -> Result<Vec<Sexp>, SmtError> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    for t in toks {
        match t.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack.pop().ok_or_else(|| SmtError::Malformed("unbalanced `)`".into()))?;
                stack.last_mut().ok_or_else(|| SmtError::Malformed("unbalanced `)`".into()))?.push(Sexp::List(done));
            }
            a => stack.last_mut().expect("non-empty stack").push(Sexp::Atom(a.to_string())),
        }
    }
    if stack.len() != 1 {
        return Err(SmtError::Malformed("unbalanced `(`".into()));
    }
    Ok(stack.pop().unwrap_or_default())
}

fn decimal(s: &str) -> Option<Q> {
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int.is_empty() || !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{}{}", int, frac).parse().ok()?;
    let scale = num_traits::pow(BigInt::from(10), frac.len());
    Some(Q::new(digits, scale))
}

fn value(e: &Sexp) -> Result<Q, SmtError> {
    match e {
        Sexp::Atom(a) => decimal(a).ok_or_else(|| SmtError::Malformed(format!("not a number: {}", a))),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(op), x] if op == "-" => Ok(-value(x)?),
            [Sexp::Atom(op), a, b] if op == "/" => {
                let d = value(b)?;
                if d.is_zero() {
                    return Err(SmtError::Malformed("division by zero".into()));
                }
                Ok(value(a)? / d)
            }
            [Sexp::Atom(op), ..] if op == "root-obj" => Err(SmtError::Malformed("irrational model value".into())),
            _ => Err(SmtError::Malformed(format!("unexpected value {:?}", e))),
        },
    }
}

/// Reads `sat`/`unsat`/`unknown` followed by an optional `get-value` answer.
pub fn parse_model(out: &str) -> Result<Answer, SmtError> {
    let sexps = parse_sexps(&tokenize(out))?;
    let mut it = sexps.iter();
    let status = loop {
        match it.next() {
            Some(Sexp::Atom(a)) if a == "sat" || a == "unsat" || a == "unknown" => break a.clone(),
            Some(Sexp::List(items)) if matches!(items.first(), Some(Sexp::Atom(e)) if e == "error") => {
                return Err(SmtError::Malformed(format!("{:?}", items)));
            }
            Some(_) => continue,
            None => return Err(SmtError::Malformed("no check-sat answer".into())),
        }
    };
    match status.as_str() {
        "unsat" => Ok(Answer::Unsat),
        "unknown" => Ok(Answer::Unknown("solver returned unknown".into())),
        _ => {
            let mut model = Model::new();
            for e in it {
                let Sexp::List(pairs) = e else { continue };
                for p in pairs {
                    if let Sexp::List(kv) = p {
                        if let [Sexp::Atom(k), v] = kv.as_slice() {
                            model.insert(k.clone(), value(v)?);
                        }
                    }
                }
            }
            Ok(Answer::Sat(model))
        }
    }
}

/// Runs the solver on a script and returns its standard output.
pub fn run_solver(script: &str, cfg: &SolverConfig, tag: &str) -> Result<String, SmtError> {
    let io = |e: std::io::Error| SmtError::Io(e.to_string());
    if let Some(dir) = &cfg.dump_dir {
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join(format!("{}.smt2", tag)), script).map_err(io)?;
    }
    let mut file = tempfile::Builder::new().suffix(".smt2").tempfile().map_err(io)?;
    file.write_all(script.as_bytes()).map_err(io)?;
    file.flush().map_err(io)?;
    let mut child = Command::new(&cfg.path)
        .arg(file.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| SmtError::Spawn(cfg.path.clone(), e.to_string()))?;
    let mut stdout = child.stdout.take().ok_or_else(|| SmtError::Io("no stdout".into()))?;
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    match child.wait_timeout(cfg.timeout).map_err(io)? {
        Some(_) => reader.join().map_err(|_| SmtError::Io("reader panicked".into())),
        None => {
            let _ = child.kill();
            let _ = child.wait();
            Err(SmtError::Timeout(cfg.timeout))
        }
    }
}

/// Emits, runs and parses one query.
pub fn solve(
    vars: &BTreeSet<Sym>,
    assertions: &[Assertion],
    objective: Option<&Poly>,
    cfg: &SolverConfig,
    tag: &str,
) -> Result<Answer, SmtError> {
    let out = run_solver(&emit_smt(vars, assertions, objective), cfg, tag)?;
    parse_model(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::qf;

    #[test]
    fn parses_fraction_model() {
        assert_eq!(parse_model("sat ((c1 (/ 1 5)))").unwrap(), Answer::Sat(Model::from([("c1".into(), qf(1, 5))])));
    }

    #[test]
    fn parses_unsat_and_unknown() {
        assert_eq!(parse_model("unsat\n(error \"model is not available\")").unwrap(), Answer::Unsat);
        assert!(matches!(parse_model("unknown").unwrap(), Answer::Unknown(_)));
    }

    #[test]
    fn decimals_are_exact() {
        let m = parse_model("sat\n((x 0.5)\n (y (- 2.0))\n (z (/ 1.0 3.0)))").unwrap();
        assert_eq!(
            m,
            Answer::Sat(Model::from([("x".into(), qf(1, 2)), ("y".into(), qf(-2, 1)), ("z".into(), qf(1, 3))]))
        );
    }

    #[test]
    fn renders_rationals_and_products() {
        let c = Sym::unknown("c");
        let d = Sym::unknown("d");
        let p = &Poly::var(c.clone()) * &Poly::var(d.clone());
        let p = &p - &Poly::constant(qf(1, 5));
        assert_eq!(smt_poly(&p), "(+ (- (/ 1 5)) (* c d))");
        let script = emit_smt(&BTreeSet::new(), &[], None);
        assert!(script.contains("(check-sat)"));
    }
}
