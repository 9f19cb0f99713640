//! Seeded sampling of `⟨return value⟩`. A choice `⊓` sub-samples the rest of
//! the run under both branches and keeps the larger mean.

use std::cell::Cell;
use std::collections::BTreeMap;

use num_traits::ToPrimitive;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{entry_state, with_big_stack, Memory, OResult, OracleError};
use crate::frontend::{BExpr, BinOp, CmpOp, Command, Dist, Expr, Program};
use crate::poly::Q;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    /// Call nesting beyond which a run is truncated.
    pub max_depth: usize,
    /// Loop iterations per loop entry beyond which a run is truncated.
    pub max_iterations: usize,
    /// Continuation samples per branch at a nondeterministic choice.
    pub branch_samples: usize,
    /// Samples per independently seeded chunk.
    pub chunk: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { samples: 100_000, seed: 0, max_depth: 10_000, max_iterations: 100_000, branch_samples: 8, chunk: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub truncated: usize,
}

type Mem = BTreeMap<String, f64>;

#[derive(Clone, Debug)]
struct St {
    locals: Mem,
    globals: Mem,
}

impl St {
    fn get(&self, x: &str) -> OResult<f64> {
        self.locals.get(x).or_else(|| self.globals.get(x)).copied().ok_or_else(|| OracleError::Unbound(x.to_string()))
    }
    fn set(&mut self, x: &str, v: f64) {
        if self.globals.contains_key(x) && !self.locals.contains_key(x) {
            self.globals.insert(x.to_string(), v);
        } else {
            self.locals.insert(x.to_string(), v);
        }
    }
}

fn expr(e: &Expr, st: &St) -> OResult<f64> {
    Ok(match e {
        Expr::Num(c) => c.to_f64().unwrap_or(f64::NAN),
        Expr::Var(x) => st.get(x)?,
        Expr::Neg(a) => -expr(a, st)?,
        Expr::Bin(op, a, b) => {
            let (a, b) = (expr(a, st)?, expr(b, st)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(OracleError::DivisionByZero);
                    }
                    a / b
                }
            }
        }
    })
}

fn bexpr(b: &BExpr, st: &St) -> OResult<bool> {
    Ok(match b {
        BExpr::True => true,
        BExpr::False => false,
        BExpr::Cmp(op, x, y) => {
            let (x, y) = (expr(x, st)?, expr(y, st)?);
            match op {
                CmpOp::Lt => x < y,
                CmpOp::Le => x <= y,
                CmpOp::Eq => x == y,
                CmpOp::Ne => x != y,
                CmpOp::Gt => x > y,
                CmpOp::Ge => x >= y,
            }
        }
        BExpr::And(a, c) => bexpr(a, st)? && bexpr(c, st)?,
        BExpr::Or(a, c) => bexpr(a, st)? || bexpr(c, st)?,
        BExpr::Not(a) => !bexpr(a, st)?,
    })
}

fn bad(msg: String) -> OracleError {
    OracleError::InvalidDistribution(msg)
}

fn prob(p: f64) -> OResult<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(bad(format!("probability {} outside [0, 1]", p)))
    }
}

fn count(n: f64, what: &str) -> OResult<u64> {
    if n >= 0.0 && n.fract() == 0.0 {
        Ok(n as u64)
    } else {
        Err(bad(format!("{} must be a natural number, got {}", what, n)))
    }
}

fn draw(d: &Dist, st: &St, rng: &mut ChaCha8Rng) -> OResult<f64> {
    Ok(match d {
        Dist::Bernoulli(p) => f64::from(u8::from(rng.gen_bool(prob(expr(p, st)?)?))),
        Dist::Uniform(a, b) => {
            let (a, b) = (expr(a, st)?, expr(b, st)?);
            if a.fract() != 0.0 || b.fract() != 0.0 || a > b {
                return Err(bad(format!("Uniform({}, {})", a, b)));
            }
            rng.gen_range(a as i64..=b as i64) as f64
        }
        Dist::Binomial(n, p) => {
            let (n, p) = (count(expr(n, st)?, "Binomial trials")?, prob(expr(p, st)?)?);
            (0..n).filter(|_| rng.gen_bool(p)).count() as f64
        }
        Dist::Hypergeometric(total, good, n) => {
            let total = count(expr(total, st)?, "population")?;
            let mut good = count(expr(good, st)?, "successes")?;
            let n = count(expr(n, st)?, "draws")?;
            if good > total || n > total {
                return Err(bad("Hypergeometric parameters exceed the population".into()));
            }
            let mut left = total;
            let mut hits = 0u64;
            for _ in 0..n {
                if rng.gen_range(0..left) < good {
                    hits += 1;
                    good -= 1;
                }
                left -= 1;
            }
            hits as f64
        }
        Dist::Discrete(rows) => {
            let mut u: f64 = rng.gen();
            let mut last = 0.0;
            for (p, v) in rows {
                let p = prob(expr(p, st)?)?;
                last = expr(v, st)?;
                if u < p {
                    return Ok(last);
                }
                u -= p;
            }
            last
        }
    })
}

enum Flow {
    Continue(St),
    Return(f64, Mem),
}

type Cont<'k> = dyn FnMut(&mut Sampler<'_>, Flow) -> OResult<f64> + 'k;

struct Sampler<'a> {
    prog: &'a Program,
    cfg: &'a McConfig,
    rng: ChaCha8Rng,
    truncated: Cell<bool>,
}

impl Sampler<'_> {
    fn truncate(&self) -> OResult<f64> {
        self.truncated.set(true);
        Ok(0.0)
    }

    /// One sample of the continuation's value after running `c`.
    fn run(&mut self, c: &Command, st: St, depth: usize, iters: usize, k: &mut Cont<'_>) -> OResult<f64> {
        match c {
            Command::Skip => k(self, Flow::Continue(st)),
            Command::Sample { var, dist } => {
                let v = draw(dist, &st, &mut self.rng)?;
                let mut st = st;
                st.set(var, v);
                k(self, Flow::Continue(st))
            }
            Command::Call { var, proc, args, .. } => {
                if depth >= self.cfg.max_depth {
                    return self.truncate();
                }
                let f = self.prog.proc(proc).ok_or_else(|| OracleError::UnknownProcedure(proc.clone()))?;
                if f.params.len() != args.len() {
                    return Err(OracleError::Arity(proc.clone(), f.params.len(), args.len()));
                }
                let mut locals = Mem::new();
                for (x, e) in f.params.iter().zip(args) {
                    locals.insert(x.clone(), expr(e, &st)?);
                }
                let init = St { locals, globals: st.globals.clone() };
                let mut on_exit = |me: &mut Sampler<'_>, flow: Flow| {
                    let (v, g) = match flow {
                        Flow::Continue(s) => (0.0, s.globals),
                        Flow::Return(v, g) => (v, g),
                    };
                    let mut s2 = St { locals: st.locals.clone(), globals: g };
                    s2.set(var, v);
                    k(me, Flow::Continue(s2))
                };
                self.run(&f.body, init, depth + 1, 0, &mut on_exit)
            }
            Command::Return(e) => {
                let v = expr(e, &st)?;
                k(self, Flow::Return(v, st.globals))
            }
            Command::Local { var, init, body } => {
                let mut st = st;
                let v = expr(init, &st)?;
                st.locals.insert(var.clone(), v);
                let mut leave = |me: &mut Sampler<'_>, flow: Flow| match flow {
                    Flow::Continue(mut s) => {
                        s.locals.remove(var);
                        k(me, Flow::Continue(s))
                    }
                    r => k(me, r),
                };
                self.run(body, st, depth, iters, &mut leave)
            }
            Command::Seq(a, b) => {
                let mut next = |me: &mut Sampler<'_>, flow: Flow| match flow {
                    Flow::Continue(s) => me.run(b, s, depth, iters, k),
                    r => k(me, r),
                };
                self.run(a, st, depth, iters, &mut next)
            }
            Command::If { cond, then, els } => {
                let branch = if bexpr(cond, &st)? { then } else { els };
                self.run(branch, st, depth, iters, k)
            }
            Command::While { cond, body, .. } => {
                if !bexpr(cond, &st)? {
                    return k(self, Flow::Continue(st));
                }
                if iters >= self.cfg.max_iterations {
                    return self.truncate();
                }
                let mut again = |me: &mut Sampler<'_>, flow: Flow| match flow {
                    Flow::Continue(s) => me.run(c, s, depth, iters + 1, k),
                    r => k(me, r),
                };
                self.run(body, st, depth, 0, &mut again)
            }
            Command::NonDet { left, right, .. } => {
                let n = self.cfg.branch_samples.max(1);
                let mut best = f64::NEG_INFINITY;
                for branch in [left, right] {
                    let mut sum = 0.0;
                    for _ in 0..n {
                        sum += self.run(branch, st.clone(), depth, iters, k)?;
                    }
                    best = best.max(sum / n as f64);
                }
                Ok(best)
            }
        }
    }
}

fn chunk(p: &Program, entry: &str, init: &(Mem, Mem), n: usize, cfg: &McConfig, stream: u64) -> OResult<(f64, f64, usize)> {
    let f = p.proc(entry).ok_or_else(|| OracleError::UnknownProcedure(entry.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let mut s = Sampler { prog: p, cfg, rng, truncated: Cell::new(false) };
    let (mut sum, mut sq, mut truncated) = (0.0, 0.0, 0);
    for _ in 0..n {
        s.truncated.set(false);
        let st = St { locals: init.0.clone(), globals: init.1.clone() };
        let mut done = |_: &mut Sampler<'_>, flow: Flow| {
            Ok(match flow {
                Flow::Continue(_) => 0.0,
                Flow::Return(v, _) => v.max(0.0),
            })
        };
        let v = s.run(&f.body, st, 1, 0, &mut done)?;
        if s.truncated.get() {
            truncated += 1;
        }
        sum += v;
        sq += v * v;
    }
    Ok((sum, sq, truncated))
}

fn to_f64(m: &Memory) -> Mem {
    m.iter().map(|(k, v)| (k.clone(), v.to_f64().unwrap_or(f64::NAN))).collect()
}

/// Mean and standard error of `⟨return value⟩` over seeded runs; chunks run
/// in parallel with one random stream each, so results depend only on the seed.
pub fn monte_carlo(p: &Program, entry: &str, args: &[Q], globals: &Memory, cfg: &McConfig) -> OResult<McEstimate> {
    let st = entry_state(p, entry, args, globals)?;
    let init = (to_f64(&st.locals), to_f64(&st.globals));
    let samples = cfg.samples.max(1);
    let size = cfg.chunk.max(1);
    let chunks: Vec<(u64, usize)> =
        (0..samples.div_ceil(size)).map(|i| (i as u64, size.min(samples - i * size))).collect();
    let results: Vec<OResult<(f64, f64, usize)>> = std::thread::scope(|s| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|&(i, n)| {
                let init = &init;
                s.spawn(move || with_big_stack(|| chunk(p, entry, init, n, cfg, i)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampling thread panicked")).collect()
    });
    let (mut sum, mut sq, mut truncated) = (0.0, 0.0, 0);
    for r in results {
        let (a, b, t) = r?;
        sum += a;
        sq += b;
        truncated += t;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = if samples > 1 { ((sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(McEstimate { mean, stderr: (var / n).sqrt(), samples, truncated })
}
