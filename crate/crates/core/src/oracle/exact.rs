//! The approximations `et^(i)`: calls nested deeper than `i` contribute 0.
//!
//! Procedures that cannot reach `⊓` are summarized as exact distributions over
//! (return value, globals), memoized per (procedure, arguments, globals, level).
//! Procedures that can are evaluated in continuation-passing style, so that
//! every choice maximizes the expectation of the actual continuation.

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use num_traits::{One, Zero};

use super::{entry_state, eval_bexpr, eval_expr, norm, support_at, with_big_stack, Memory, OResult, OracleError, State};
use crate::frontend::{Command, Program};
use crate::poly::Q;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactConfig {
    /// Loop iterations explored per loop entry; mass beyond is dropped.
    pub unroll_cap: usize,
    /// Largest number of distinct states in one intermediate distribution.
    pub state_cap: usize,
}

impl Default for ExactConfig {
    fn default() -> Self {
        ExactConfig { unroll_cap: 1000, state_cap: 200_000 }
    }
}

type Outcome = (Q, Memory);
type Summary = Rc<Vec<(Q, Outcome)>>;

struct Exact<'a> {
    prog: &'a Program,
    cfg: &'a ExactConfig,
    nondet: BTreeSet<String>,
    memo: HashMap<(String, Vec<Q>, Memory, usize), Summary>,
}

/// Weighted states, merged on equality.
struct Distr<T: std::hash::Hash + Eq>(HashMap<T, Q>);

impl<T: std::hash::Hash + Eq> Default for Distr<T> {
    fn default() -> Self {
        Distr(HashMap::new())
    }
}

impl<T: std::hash::Hash + Eq> Distr<T> {
    fn add(&mut self, x: T, w: Q) {
        if w.is_zero() {
            return;
        }
        let e = self.0.entry(x).or_insert_with(Q::zero);
        *e += w;
    }
    fn extend(&mut self, other: Distr<T>) {
        for (x, w) in other.0 {
            self.add(x, w);
        }
    }
}

enum Flow {
    Continue(State),
    Return(Q, Memory),
}

type Cont<'k> = dyn FnMut(&mut Exact<'_>, Flow) -> OResult<Q> + 'k;

impl<'a> Exact<'a> {
    fn check_cap<T: std::hash::Hash + Eq>(&self, d: &Distr<T>) -> OResult<()> {
        if d.0.len() > self.cfg.state_cap {
            return Err(OracleError::StateCap(self.cfg.state_cap));
        }
        Ok(())
    }

    /// Output distribution of a nondeterminism-free procedure at `level`.
    fn summary(&mut self, proc: &str, args: Vec<Q>, globals: Memory, level: usize) -> OResult<Summary> {
        if level == 0 {
            return Ok(Rc::new(Vec::new()));
        }
        let key = (proc.to_string(), args, globals, level);
        if let Some(s) = self.memo.get(&key) {
            return Ok(s.clone());
        }
        let f = self.prog.proc(proc).ok_or_else(|| OracleError::UnknownProcedure(proc.to_string()))?;
        let st = entry_state(self.prog, proc, &key.1, &key.2)?;
        let mut input = Distr::default();
        input.add(st, Q::one());
        let (fall, mut ret) = self.run(&f.body, input, level)?;
        for (st, w) in fall.0 {
            ret.add((Q::zero(), st.globals), w);
        }
        let s: Summary = Rc::new(ret.0.into_iter().map(|(o, w)| (w, o)).collect());
        self.memo.insert(key, s.clone());
        Ok(s)
    }

    /// Distribution transformer for commands without `⊓`: continuing states and returns.
    fn run(&mut self, c: &Command, input: Distr<State>, level: usize) -> OResult<(Distr<State>, Distr<Outcome>)> {
        let mut cont = Distr::default();
        let mut ret = Distr::default();
        match c {
            Command::Skip => cont = input,
            Command::Sample { var, dist } => {
                for (st, w) in input.0 {
                    for (p, v) in support_at(dist, &st)? {
                        let mut s2 = st.clone();
                        s2.set(var, v);
                        cont.add(s2, &w * p);
                    }
                }
            }
            Command::Call { var, proc, args, .. } => {
                for (st, w) in input.0 {
                    let vals = args.iter().map(|e| eval_expr(e, &st)).collect::<OResult<Vec<_>>>()?;
                    let sum = self.summary(proc, vals, st.globals.clone(), level - 1)?;
                    for (p, (v, g)) in sum.iter() {
                        let mut s2 = State { locals: st.locals.clone(), globals: g.clone() };
                        s2.set(var, v.clone());
                        cont.add(s2, &w * p);
                    }
                }
            }
            Command::Return(e) => {
                for (st, w) in input.0 {
                    ret.add((eval_expr(e, &st)?, st.globals), w);
                }
            }
            Command::Local { var, init, body } => {
                let mut inner = Distr::default();
                for (mut st, w) in input.0 {
                    let v = eval_expr(init, &st)?;
                    st.locals.insert(var.clone(), v);
                    inner.add(st, w);
                }
                let (c2, r2) = self.run(body, inner, level)?;
                for (mut st, w) in c2.0 {
                    st.locals.remove(var);
                    cont.add(st, w);
                }
                ret = r2;
            }
            Command::Seq(a, b) => {
                let (c1, r1) = self.run(a, input, level)?;
                let (c2, r2) = self.run(b, c1, level)?;
                cont = c2;
                ret = r1;
                ret.extend(r2);
            }
            Command::If { cond, then, els } => {
                let (mut t, mut e) = (Distr::default(), Distr::default());
                for (st, w) in input.0 {
                    if eval_bexpr(cond, &st)? {
                        t.add(st, w);
                    } else {
                        e.add(st, w);
                    }
                }
                let (c1, r1) = self.run(then, t, level)?;
                let (c2, r2) = self.run(els, e, level)?;
                cont = c1;
                cont.extend(c2);
                ret = r1;
                ret.extend(r2);
            }
            Command::While { cond, body, .. } => {
                let mut current = input;
                for _ in 0..self.cfg.unroll_cap {
                    if current.0.is_empty() {
                        break;
                    }
                    let mut inside = Distr::default();
                    for (st, w) in current.0 {
                        if eval_bexpr(cond, &st)? {
                            inside.add(st, w);
                        } else {
                            cont.add(st, w);
                        }
                    }
                    let (c1, r1) = self.run(body, inside, level)?;
                    ret.extend(r1);
                    current = c1;
                }
            }
            Command::NonDet { .. } => unreachable!("nondeterministic command in distribution mode"),
        }
        self.check_cap(&cont)?;
        self.check_cap(&ret)?;
        Ok((cont, ret))
    }

    /// `et⟦c⟧ k st` in continuation-passing style.
    fn et(&mut self, c: &Command, st: State, level: usize, iters: usize, k: &mut Cont<'_>) -> OResult<Q> {
        match c {
            Command::Skip => k(self, Flow::Continue(st)),
            Command::Sample { var, dist } => {
                let mut total = Q::zero();
                for (p, v) in support_at(dist, &st)? {
                    if p.is_zero() {
                        continue;
                    }
                    let mut s2 = st.clone();
                    s2.set(var, v);
                    total += p * k(self, Flow::Continue(s2))?;
                }
                Ok(total)
            }
            Command::Call { var, proc, args, .. } => {
                let vals = args.iter().map(|e| eval_expr(e, &st)).collect::<OResult<Vec<_>>>()?;
                if level <= 1 {
                    return Ok(Q::zero());
                }
                let mut resume = |me: &mut Exact<'_>, v: Q, g: Memory| {
                    let mut s2 = State { locals: st.locals.clone(), globals: g };
                    s2.set(var, v);
                    k(me, Flow::Continue(s2))
                };
                if self.nondet.contains(proc) {
                    let f = self.prog.proc(proc).ok_or_else(|| OracleError::UnknownProcedure(proc.clone()))?;
                    let init = entry_state(self.prog, proc, &vals, &st.globals)?;
                    let mut on_exit = |me: &mut Exact<'_>, flow: Flow| match flow {
                        Flow::Continue(s) => resume(me, Q::zero(), s.globals),
                        Flow::Return(v, g) => resume(me, v, g),
                    };
                    self.et(&f.body, init, level - 1, 0, &mut on_exit)
                } else {
                    let sum = self.summary(proc, vals, st.globals.clone(), level - 1)?;
                    let mut total = Q::zero();
                    for (p, (v, g)) in sum.iter() {
                        total += p * resume(self, v.clone(), g.clone())?;
                    }
                    Ok(total)
                }
            }
            Command::Return(e) => {
                let v = eval_expr(e, &st)?;
                k(self, Flow::Return(v, st.globals))
            }
            Command::Local { var, init, body } => {
                let mut st = st;
                let v = eval_expr(init, &st)?;
                st.locals.insert(var.clone(), v);
                let mut leave = |me: &mut Exact<'_>, flow: Flow| match flow {
                    Flow::Continue(mut s) => {
                        s.locals.remove(var);
                        k(me, Flow::Continue(s))
                    }
                    r => k(me, r),
                };
                self.et(body, st, level, iters, &mut leave)
            }
            Command::Seq(a, b) => {
                let mut next = |me: &mut Exact<'_>, flow: Flow| match flow {
                    Flow::Continue(s) => me.et(b, s, level, iters, k),
                    r => k(me, r),
                };
                self.et(a, st, level, iters, &mut next)
            }
            Command::If { cond, then, els } => {
                let branch = if eval_bexpr(cond, &st)? { then } else { els };
                self.et(branch, st, level, iters, k)
            }
            Command::While { cond, body, .. } => {
                if !eval_bexpr(cond, &st)? {
                    return k(self, Flow::Continue(st));
                }
                if iters >= self.cfg.unroll_cap {
                    return Ok(Q::zero());
                }
                let mut again = |me: &mut Exact<'_>, flow: Flow| match flow {
                    Flow::Continue(s) => me.et(c, s, level, iters + 1, k),
                    r => k(me, r),
                };
                self.et(body, st, level, 0, &mut again)
            }
            Command::NonDet { left, right, .. } => {
                let l = self.et(left, st.clone(), level, iters, k)?;
                let r = self.et(right, st, level, iters, k)?;
                Ok(if l > r { l } else { r })
            }
        }
    }
}

/// `et^(depth)⟦entry⟧(λv.⟨v⟩)(args, globals)`: a lower bound on the expected
/// return value, non-decreasing in `depth`.
pub fn exact_expectation(
    p: &Program,
    entry: &str,
    args: &[Q],
    globals: &Memory,
    depth: usize,
    cfg: &ExactConfig,
) -> OResult<Q> {
    with_big_stack(|| {
        let mut ex = Exact { prog: p, cfg, nondet: p.nondet_procs(), memo: HashMap::new() };
        let init = entry_state(p, entry, args, globals)?;
        if depth == 0 {
            return Ok(Q::zero());
        }
        if ex.nondet.contains(entry) {
            let f = p.proc(entry).ok_or_else(|| OracleError::UnknownProcedure(entry.to_string()))?;
            let mut done = |_: &mut Exact<'_>, flow: Flow| {
                Ok(match flow {
                    Flow::Continue(_) => Q::zero(),
                    Flow::Return(v, _) => norm(&v),
                })
            };
            ex.et(&f.body, init, depth, 0, &mut done)
        } else {
            let sum = ex.summary(entry, args.to_vec(), init.globals, depth)?;
            Ok(sum.iter().map(|(w, (v, _))| w * norm(v)).fold(Q::zero(), |a, b| a + b))
        }
    })
}
