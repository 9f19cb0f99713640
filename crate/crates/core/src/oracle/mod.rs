//! Ground truth for expected return values: exact finite-depth enumeration
//! and seeded Monte-Carlo estimation, both resolving `⊓` by the maximum.

mod exact;
mod monte_carlo;

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::frontend::{BExpr, BinOp, CmpOp, Dist, Expr, Program};
use crate::poly::Q;

pub use exact::{exact_expectation, ExactConfig};
pub use monte_carlo::{monte_carlo, McConfig, McEstimate};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("unknown procedure `{0}`")]
    UnknownProcedure(String),
    #[error("procedure `{0}` expects {1} arguments, got {2}")]
    Arity(String, usize, usize),
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("more than {0} distinct states")]
    StateCap(usize),
}

pub type OResult<T> = Result<T, OracleError>;

/// Variable valuation; programs read integers but intermediate values may be rational.
pub type Memory = BTreeMap<String, Q>;

/// Locals of the running procedure and the globals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub locals: Memory,
    pub globals: Memory,
}

impl State {
    pub fn get(&self, x: &str) -> OResult<&Q> {
        self.locals.get(x).or_else(|| self.globals.get(x)).ok_or_else(|| OracleError::Unbound(x.to_string()))
    }
    pub fn set(&mut self, x: &str, v: Q) {
        if self.globals.contains_key(x) && !self.locals.contains_key(x) {
            self.globals.insert(x.to_string(), v);
        } else {
            self.locals.insert(x.to_string(), v);
        }
    }
}

pub fn eval_expr(e: &Expr, st: &State) -> OResult<Q> {
    Ok(match e {
        Expr::Num(c) => c.clone(),
        Expr::Var(x) => st.get(x)?.clone(),
        Expr::Neg(a) => -eval_expr(a, st)?,
        Expr::Bin(op, a, b) => {
            let (a, b) = (eval_expr(a, st)?, eval_expr(b, st)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b.is_zero() {
                        return Err(OracleError::DivisionByZero);
                    }
                    a / b
                }
            }
        }
    })
}

pub fn eval_bexpr(b: &BExpr, st: &State) -> OResult<bool> {
    Ok(match b {
        BExpr::True => true,
        BExpr::False => false,
        BExpr::Cmp(op, x, y) => {
            let (x, y) = (eval_expr(x, st)?, eval_expr(y, st)?);
            match op {
                CmpOp::Lt => x < y,
                CmpOp::Le => x <= y,
                CmpOp::Eq => x == y,
                CmpOp::Ne => x != y,
                CmpOp::Gt => x > y,
                CmpOp::Ge => x >= y,
            }
        }
        BExpr::And(a, c) => eval_bexpr(a, st)? && eval_bexpr(c, st)?,
        BExpr::Or(a, c) => eval_bexpr(a, st)? || eval_bexpr(c, st)?,
        BExpr::Not(a) => !eval_bexpr(a, st)?,
    })
}

fn invalid(msg: impl Into<String>) -> OracleError {
    OracleError::InvalidDistribution(msg.into())
}

fn probability(p: &Q) -> OResult<()> {
    if p.is_negative() || *p > Q::one() {
        return Err(invalid(format!("probability {} outside [0, 1]", p)));
    }
    Ok(())
}

fn natural(v: &Q, what: &str) -> OResult<()> {
    if !v.is_integer() || v.is_negative() {
        return Err(invalid(format!("{} must be a natural number, got {}", what, v)));
    }
    Ok(())
}

/// The exact support of a distribution at a state, as (probability, value) pairs.
pub fn support_at(d: &Dist, st: &State) -> OResult<Vec<(Q, Q)>> {
    for e in d.exprs() {
        eval_expr(e, st)?;
    }
    let concrete = d.map_exprs(&|e| Expr::Num(eval_expr(e, st).unwrap_or_default()));
    let consts: Vec<Q> = concrete.exprs().iter().filter_map(|e| e.as_const()).collect();
    match &concrete {
        Dist::Bernoulli(_) => probability(&consts[0])?,
        Dist::Uniform(..) => {
            if !consts[0].is_integer() || !consts[1].is_integer() || consts[0] > consts[1] {
                return Err(invalid(format!("Uniform({}, {})", consts[0], consts[1])));
            }
        }
        Dist::Binomial(..) => {
            natural(&consts[0], "Binomial trials")?;
            probability(&consts[1])?;
        }
        Dist::Hypergeometric(..) => {
            for (c, w) in consts.iter().zip(["population", "successes", "draws"]) {
                natural(c, w)?;
            }
            if consts[1] > consts[0] || consts[2] > consts[0] {
                return Err(invalid("Hypergeometric parameters exceed the population"));
            }
        }
        Dist::Discrete(rows) => {
            let mut total = Q::zero();
            for (p, _) in rows {
                let p = p.as_const().unwrap_or_else(Q::zero);
                probability(&p)?;
                total += p;
            }
            if total != Q::one() {
                return Err(invalid(format!("probabilities sum to {}", total)));
            }
        }
    }
    crate::terms::support(&concrete).ok_or_else(|| invalid("non-constant parameters"))
}

/// Initial state of a call: parameters bound to the arguments.
pub fn entry_state(p: &Program, proc: &str, args: &[Q], globals: &Memory) -> OResult<State> {
    let f = p.proc(proc).ok_or_else(|| OracleError::UnknownProcedure(proc.to_string()))?;
    if f.params.len() != args.len() {
        return Err(OracleError::Arity(proc.to_string(), f.params.len(), args.len()));
    }
    let mut globals = globals.clone();
    for g in &p.globals {
        globals.entry(g.clone()).or_insert_with(Q::zero);
    }
    Ok(State { locals: f.params.iter().cloned().zip(args.iter().cloned()).collect(), globals })
}

/// `⟨v⟩`, the continuation every oracle query evaluates.
pub fn norm(v: &Q) -> Q {
    if v.is_negative() {
        Q::zero()
    } else {
        v.clone()
    }
}

/// Runs `f` on a thread with a large stack, for deeply recursive evaluation.
pub fn with_big_stack<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(256 << 20)
            .spawn_scoped(s, f)
            .expect("spawn evaluation thread")
            .join()
            .expect("evaluation thread panicked")
    })
}
