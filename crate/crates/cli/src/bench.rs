//! Benchmark corpus runs against a manifest of expected bounds.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use num_traits::{FromPrimitive, One};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use pevalyzer_core::frontend::{load, Command};
use pevalyzer_core::oracle::{eval_bexpr, eval_expr, State};
use pevalyzer_core::poly::{fmt_q, Q};

use crate::analyze::{analyze_path, AnalysisConfig, AnalysisReport, Status};
use crate::validate::eval_bound;

/// Number of argument vectors on which bounds are compared.
pub const GRID_SIZE: usize = 10_000;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read {0}: {1}")]
    Io(PathBuf, String),
    #[error("malformed manifest {0}: {1}")]
    Manifest(PathBuf, String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    ExactEvalEqual,
    /// The inferred bound is at most `factor` times the expected one.
    WithinFactor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkExpectation {
    pub id: String,
    pub file: Option<String>,
    pub entry: Option<String>,
    /// Expression, or procedure body, over the entry parameters.
    pub bound: Option<String>,
    #[serde(default)]
    pub mode: Mode,
    pub factor: Option<f64>,
    #[serde(default = "bounded")]
    pub status: Status,
}

fn bounded() -> Status {
    Status::Bounded
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, rename = "program")]
    pub programs: Vec<BenchmarkExpectation>,
}

impl Manifest {
    pub fn parse(path: &Path, text: &str) -> Result<Manifest, BenchError> {
        let bad = |e: String| BenchError::Manifest(path.to_path_buf(), e);
        let m: Manifest = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(text).map_err(|e| bad(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| bad(e.to_string()))?
        };
        for e in &m.programs {
            if e.factor.is_some_and(|r| r.is_nan() || r < 1.0) {
                return Err(bad(format!("factor of `{}` must be at least 1", e.id)));
            }
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Manifest, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(path.to_path_buf(), e.to_string()))?;
        Manifest::parse(path, &text)
    }
}

/// An expected bound compiled to a deterministic procedure body.
pub struct ExpectedBound {
    params: Vec<String>,
    body: Command,
}

impl ExpectedBound {
    pub fn compile(text: &str, params: &[String]) -> Result<ExpectedBound, String> {
        let body = if text.contains("return") { text.to_string() } else { format!("return ({})", text) };
        let src = format!("def expected({}):\n{}", params.join(", "), body);
        let p = load(&src).map_err(|d| d.to_string())?;
        let f = p.proc("expected").ok_or("missing procedure")?;
        Ok(ExpectedBound { params: params.to_vec(), body: f.body.clone() })
    }

    pub fn eval(&self, args: &[i64]) -> Result<Q, String> {
        let mut st = State::default();
        for (x, a) in self.params.iter().zip(args) {
            st.locals.insert(x.clone(), Q::from_integer((*a).into()));
        }
        run(&self.body, &mut st)?.ok_or_else(|| "expected bound does not return".to_string())
    }
}

fn run(c: &Command, st: &mut State) -> Result<Option<Q>, String> {
    let err = |e: pevalyzer_core::oracle::OracleError| e.to_string();
    match c {
        Command::Skip => Ok(None),
        Command::Return(e) => eval_expr(e, st).map(Some).map_err(err),
        Command::Sample { var, dist } => {
            let e = dist.as_dirac().ok_or("expected bound must be deterministic")?;
            let v = eval_expr(e, st).map_err(err)?;
            st.set(var, v);
            Ok(None)
        }
        Command::Local { var, init, body } => {
            let v = eval_expr(init, st).map_err(err)?;
            let saved = st.locals.insert(var.clone(), v);
            let r = run(body, st);
            match saved {
                Some(v) => st.locals.insert(var.clone(), v),
                None => st.locals.remove(var),
            };
            r
        }
        Command::Seq(a, b) => match run(a, st)? {
            Some(v) => Ok(Some(v)),
            None => run(b, st),
        },
        Command::If { cond, then, els } => {
            if eval_bexpr(cond, st).map_err(err)? {
                run(then, st)
            } else {
                run(els, st)
            }
        }
        _ => Err("expected bound may only use assignments, conditionals and return".into()),
    }
}

/// `GRID_SIZE` non-negative argument vectors: the corner `{0..4}^arity`, then seeded random points.
pub fn comparison_grid(arity: usize, seed: u64) -> Vec<Vec<i64>> {
    if arity == 0 {
        return vec![Vec::new()];
    }
    let mut out: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..arity {
        out = out.iter().flat_map(|p| (0..5).map(move |v| [p.clone(), vec![v]].concat())).collect();
    }
    out.truncate(GRID_SIZE);
    let mut seen: BTreeSet<Vec<i64>> = out.iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < GRID_SIZE {
        let p: Vec<i64> = (0..arity).map(|_| rng.gen_range(0..=100_000)).collect();
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail(String),
    NoExpectation,
}

/// Compares a report with its expectation on the comparison grid.
pub fn compare(report: &AnalysisReport, exp: &BenchmarkExpectation, seed: u64) -> Verdict {
    if report.status != exp.status {
        return Verdict::Fail(format!("status {} instead of {}", report.status, exp.status));
    }
    let (Some(bound), Some(text)) = (&report.bound, &exp.bound) else {
        return Verdict::Pass;
    };
    let expected = match ExpectedBound::compile(text, &report.params) {
        Ok(e) => e,
        Err(e) => return Verdict::Fail(format!("expected bound: {}", e)),
    };
    let factor = match exp.mode {
        Mode::ExactEvalEqual => Q::one(),
        Mode::WithinFactor => match Q::from_f64(exp.factor.unwrap_or(1.0)) {
            Some(r) => r,
            None => return Verdict::Fail("factor is not finite".into()),
        },
    };
    for args in comparison_grid(report.params.len(), seed) {
        let Some(ours) = eval_bound(&bound.term, &report.params, &args) else {
            return Verdict::Fail(format!("bound not evaluable at {:?}", args));
        };
        let theirs = match expected.eval(&args) {
            Ok(v) => v,
            Err(e) => return Verdict::Fail(format!("expected bound at {:?}: {}", args, e)),
        };
        let ok = match exp.mode {
            Mode::ExactEvalEqual => ours == theirs,
            Mode::WithinFactor => ours <= &factor * &theirs,
        };
        if !ok {
            return Verdict::Fail(format!("at {:?}: inferred {} vs expected {}", args, fmt_q(&ours), fmt_q(&theirs)));
        }
    }
    Verdict::Pass
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub id: String,
    pub expected: Option<String>,
    pub verdict: Verdict,
    pub report: AnalysisReport,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CorpusReport {
    pub rows: Vec<BenchRow>,
    pub warnings: Vec<String>,
    pub passed: usize,
    pub failed: usize,
    pub total_ms: u128,
}

impl CorpusReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

/// Analyzes every `.pw` file of `dir` and compares it with the manifest.
pub fn run_benchmarks(dir: &Path, manifest: &Manifest, cfg: &AnalysisConfig) -> Result<CorpusReport, BenchError> {
    let entries = std::fs::read_dir(dir).map_err(|e| BenchError::Io(dir.to_path_buf(), e.to_string()))?;
    let mut files: Vec<PathBuf> =
        entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|e| e == "pw")).collect();
    files.sort();
    let mut out = CorpusReport::default();
    let file_of = |e: &BenchmarkExpectation| e.file.clone().unwrap_or_else(|| format!("{}.pw", e.id));
    for e in &manifest.programs {
        if !dir.join(file_of(e)).is_file() {
            out.warnings.push(format!("manifest entry `{}` has no file {}", e.id, file_of(e)));
        }
    }
    for path in files {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let exp = manifest.programs.iter().find(|e| file_of(e) == name);
        let cfg = AnalysisConfig { entry: exp.and_then(|e| e.entry.clone()).or(cfg.entry.clone()), ..cfg.clone() };
        let report = analyze_path(&path, &cfg);
        out.total_ms += report.wall_ms;
        let verdict = match exp {
            Some(e) => compare(&report, e, cfg.seed),
            None => {
                out.warnings.push(format!("no manifest entry for {}", name));
                Verdict::NoExpectation
            }
        };
        match verdict {
            Verdict::Pass => out.passed += 1,
            Verdict::Fail(_) => out.failed += 1,
            Verdict::NoExpectation => {}
        }
        let id = exp.map(|e| e.id.clone()).unwrap_or_else(|| report.program.clone());
        let expected = exp.map(|e| e.bound.clone().unwrap_or_else(|| e.status.to_string()));
        out.rows.push(BenchRow { id, expected, verdict, report });
    }
    Ok(out)
}
