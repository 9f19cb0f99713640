//! End-to-end analysis of one program.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use pevalyzer_core::constraints::{
    build_system, check_model, minimize_lex, model_lookup, CheckReport, ConstraintError, Model, SmtError, SolveStats,
    Solved, SolverConfig,
};
use pevalyzer_core::frontend::{load, Program};
use pevalyzer_core::poly::{Poly, Sym, SymKind};
use pevalyzer_core::templates::{TemplateConfig, TemplateKind, TemplatePair};
use pevalyzer_core::terms::Term;
use pevalyzer_core::transformer::generate_constraints;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateChoice {
    #[default]
    Auto,
    Linear,
    SimpleMixed,
}

#[derive(Clone, Debug)]
pub struct AnalysisConfig {
    pub entry: Option<String>,
    pub template: TemplateChoice,
    pub solver: SolverConfig,
    pub check_trials: usize,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            entry: None,
            template: TemplateChoice::Auto,
            solver: SolverConfig::default(),
            check_trials: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Bounded,
    UnboundedTemplateFailure,
    SolverTimeout,
    Unsupported,
    InvalidProgram,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Bounded => "bounded",
            Status::UnboundedTemplateFailure => "unbounded-template-failure",
            Status::SolverTimeout => "solver-timeout",
            Status::Unsupported => "unsupported",
            Status::InvalidProgram => "invalid-program",
        };
        f.pad(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SummandJson {
    pub guard: Vec<String>,
    pub numerator: String,
    pub denominator: String,
}

/// A concrete bound, rendered and as structured summands.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Bound {
    pub text: String,
    pub summands: Vec<SummandJson>,
    #[serde(skip)]
    pub term: Term,
}

impl Bound {
    pub fn new(term: Term) -> Bound {
        let summands = term
            .summands()
            .iter()
            .map(|s| SummandJson {
                guard: s.guard.atoms().iter().map(|a| a.to_string()).collect(),
                numerator: s.num.to_string(),
                denominator: s.den.to_string(),
            })
            .collect();
        Bound { text: term.to_string(), summands, term }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Attempt {
    pub template: TemplateKind,
    pub degree: u32,
    /// Call sites may pass local variables to the callee's logical variables.
    pub locals: bool,
    pub outcome: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub program: String,
    pub entry: String,
    pub params: Vec<String>,
    pub status: Status,
    pub bound: Option<Bound>,
    pub template: Option<TemplateKind>,
    pub degree: Option<u32>,
    pub wall_ms: u128,
    pub stats: SolveStats,
    pub attempts: Vec<Attempt>,
    pub check: Option<CheckReport>,
    pub message: Option<String>,
}

/// Attempts in order; instantiations over locals come last.
fn plan(choice: TemplateChoice) -> Vec<(TemplateKind, u32, bool)> {
    let linear = [(TemplateKind::Linear, 1), (TemplateKind::Linear, 2), (TemplateKind::Linear, 3)];
    let mixed = [(TemplateKind::SimpleMixed, 2), (TemplateKind::SimpleMixed, 3)];
    let base: Vec<(TemplateKind, u32)> = match choice {
        TemplateChoice::Auto => linear.into_iter().chain(mixed).collect(),
        TemplateChoice::Linear => linear.to_vec(),
        TemplateChoice::SimpleMixed => mixed.to_vec(),
    };
    [false, true].into_iter().flat_map(|l| base.iter().map(move |&(k, d)| (k, d, l))).collect()
}

/// Coefficients of `h_entry` to minimize: the constant first, then the sum of
/// the coefficients of bases over program arguments and globals.
fn objectives(pair: &TemplatePair) -> Vec<Poly> {
    let mut constant = Poly::zero();
    let mut rest = Poly::zero();
    for (c, b) in &pair.h.coeffs {
        if b.is_one() {
            constant = &constant + &Poly::var(c.clone());
        } else if !b.body.vars().iter().any(|s| s.kind == SymKind::Free) {
            rest = &rest + &Poly::var(c.clone());
        }
    }
    vec![constant, rest]
}

/// `h_entry` under the model, with free logical variables at zero and
/// argument symbols renamed to the parameters.
pub fn entry_bound(p: &Program, pair: &TemplatePair, m: &Model) -> Term {
    let h = pair.h.term.instantiate(&model_lookup(m));
    let mut map: HashMap<Sym, Poly> = pair.logicals.iter().map(|l| (l.clone(), Poly::zero())).collect();
    let params = &p.proc(&pair.proc).map(|f| f.params.clone()).unwrap_or_default();
    for (a, x) in pair.args.iter().zip(params) {
        map.insert(a.clone(), Poly::var(Sym::prog(x.clone())));
    }
    h.subst(&map)
}

pub fn analyze_path(path: &Path, cfg: &AnalysisConfig) -> AnalysisReport {
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match std::fs::read_to_string(path) {
        Ok(src) => analyze_source(&id, &src, cfg),
        Err(e) => failed(&id, Status::InvalidProgram, format!("cannot read {}: {}", path.display(), e), Instant::now()),
    }
}

fn failed(id: &str, status: Status, message: String, start: Instant) -> AnalysisReport {
    AnalysisReport {
        program: id.to_string(),
        entry: String::new(),
        params: Vec::new(),
        status,
        bound: None,
        template: None,
        degree: None,
        wall_ms: start.elapsed().as_millis(),
        stats: SolveStats::default(),
        attempts: Vec::new(),
        check: None,
        message: Some(message),
    }
}

pub fn analyze_source(id: &str, src: &str, cfg: &AnalysisConfig) -> AnalysisReport {
    let start = Instant::now();
    let p = match load(src) {
        Ok(p) => p,
        Err(d) => return failed(id, Status::InvalidProgram, d.to_string(), start),
    };
    let entry = match &cfg.entry {
        Some(e) => e.clone(),
        None => match p.decls.last() {
            Some(f) => f.name.clone(),
            None => return failed(id, Status::InvalidProgram, "no procedures".into(), start),
        },
    };
    let Some(f) = p.proc(&entry) else {
        return failed(id, Status::InvalidProgram, format!("unknown entry procedure `{}`", entry), start);
    };
    let mut report = failed(id, Status::UnboundedTemplateFailure, "no template succeeded".into(), start);
    report.entry = entry.clone();
    report.params = f.params.clone();
    let mut timed_out = false;
    for (kind, degree, locals) in plan(cfg.template) {
        let tcfg = TemplateConfig { kind, locals_in_instantiation: locals, ..TemplateConfig::default() };
        let attempt = |outcome: String, report: &mut AnalysisReport| {
            report.attempts.push(Attempt { template: kind, degree, locals, outcome });
        };
        let mut st = match generate_constraints(&p, tcfg) {
            Ok(st) => st,
            Err(e) => {
                report.status = Status::Unsupported;
                report.message = Some(e.to_string());
                break;
            }
        };
        let sys = match build_system(&st.conditions, degree, &mut st.fresh) {
            Ok(s) => s,
            Err(e) => {
                report.status = Status::Unsupported;
                report.message = Some(e.to_string());
                break;
            }
        };
        let pair = st.templates[&entry].clone();
        let solver = SolverConfig {
            dump_dir: cfg.solver.dump_dir.as_ref().map(|d| d.join(format!("{}_{:?}_{}{}", id, kind, degree, if locals { "_locals" } else { "" }).to_lowercase())),
            ..cfg.solver.clone()
        };
        match minimize_lex(&sys, &objectives(&pair), &solver, &mut report.stats) {
            Ok(Solved::Sat(m)) => {
                let check = check_model(&st.conditions, &m, cfg.check_trials, cfg.seed);
                if check.passed() {
                    attempt("sat".into(), &mut report);
                    report.status = Status::Bounded;
                    report.bound = Some(Bound::new(entry_bound(&p, &pair, &m)));
                    report.template = Some(kind);
                    report.degree = Some(degree);
                    report.check = Some(check);
                    report.message = None;
                    break;
                }
                attempt("model rejected by check".into(), &mut report);
                report.check = Some(check);
            }
            Ok(Solved::Unsat) => attempt("unsat".into(), &mut report),
            Ok(Solved::Unknown(r)) => attempt(format!("unknown: {}", r), &mut report),
            Err(ConstraintError::Solver(SmtError::Timeout(_))) => {
                timed_out = true;
                attempt("timeout".into(), &mut report);
            }
            Err(e @ ConstraintError::Solver(_)) => {
                attempt(e.to_string(), &mut report);
                report.message = Some(e.to_string());
                break;
            }
            Err(e) => {
                report.status = Status::Unsupported;
                report.message = Some(e.to_string());
                break;
            }
        }
    }
    if report.status == Status::UnboundedTemplateFailure && timed_out {
        report.status = Status::SolverTimeout;
    }
    report.wall_ms = start.elapsed().as_millis();
    report
}
