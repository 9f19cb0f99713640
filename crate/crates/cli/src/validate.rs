//! Empirical soundness check of an inferred bound against the oracles.

use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use pevalyzer_core::frontend::Program;
use pevalyzer_core::oracle::{exact_expectation, monte_carlo, ExactConfig, McConfig, Memory, OracleError};
use pevalyzer_core::poly::{fmt_q, Sym, SymKind, Q};
use pevalyzer_core::terms::Term;

/// Parameter values of the validation grid.
pub const GRID: [i64; 6] = [0, 1, 2, 5, 10, 20];

#[derive(Clone, Debug)]
pub struct ValidateConfig {
    pub samples: usize,
    pub seed: u64,
    pub depth: usize,
    pub grid: Vec<i64>,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig { samples: 100_000, seed: 0, depth: 12, grid: GRID.to_vec() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridPoint {
    pub args: Vec<i64>,
    pub bound: String,
    pub exact: String,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub truncated: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub entry: String,
    pub points: Vec<GridPoint>,
    pub passed: bool,
    pub error: Option<String>,
}

/// All argument vectors over the grid.
pub fn grid_points(arity: usize, grid: &[i64]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..arity {
        out = out.iter().flat_map(|p| grid.iter().map(move |v| [p.clone(), vec![*v]].concat())).collect();
    }
    out
}

/// Evaluates a bound at integer arguments, with globals at zero.
pub fn eval_bound(bound: &Term, params: &[String], args: &[i64]) -> Option<Q> {
    let val = |s: &Sym| match params.iter().position(|p| *p == s.name) {
        Some(i) => Some(Q::from_integer(args[i].into())),
        None => (s.kind == SymKind::Prog).then(Q::zero),
    };
    bound.eval(&val).ok()
}

fn q_to_f64(v: &Q) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Checks `exact(depth) ≤ bound` and `mean − 4·stderr ≤ bound` on every grid point.
pub fn validate(p: &Program, entry: &str, bound: &Term, cfg: &ValidateConfig) -> ValidationReport {
    let params = p.proc(entry).map(|f| f.params.clone()).unwrap_or_default();
    let mut report = ValidationReport { entry: entry.to_string(), points: Vec::new(), passed: true, error: None };
    let run = |args: &[i64]| -> Result<GridPoint, OracleError> {
        let qs: Vec<Q> = args.iter().map(|a| Q::from_integer((*a).into())).collect();
        let b = eval_bound(bound, &params, args).ok_or(OracleError::Unbound("bound".into()))?;
        let exact = exact_expectation(p, entry, &qs, &Memory::new(), cfg.depth, &ExactConfig::default())?;
        let mc = McConfig { samples: cfg.samples, seed: cfg.seed, ..McConfig::default() };
        let est = monte_carlo(p, entry, &qs, &Memory::new(), &mc)?;
        let bf = q_to_f64(&b);
        // sampled maxima of branch means carry floating-point noise
        let passed = exact <= b && est.mean - 4.0 * est.stderr <= bf + 1e-9 * bf.abs().max(1.0);
        Ok(GridPoint {
            args: args.to_vec(),
            bound: fmt_q(&b),
            exact: fmt_q(&exact),
            mc_mean: est.mean,
            mc_stderr: est.stderr,
            truncated: est.truncated,
            passed,
        })
    };
    for args in grid_points(params.len(), &cfg.grid) {
        match run(&args) {
            Ok(pt) => {
                report.passed &= pt.passed;
                report.points.push(pt);
            }
            Err(e) => {
                report.passed = false;
                report.error = Some(format!("at {:?}: {}", args, e));
                break;
            }
        }
    }
    report
}
