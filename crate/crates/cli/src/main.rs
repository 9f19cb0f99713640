use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pevalyzer::bench::{run_benchmarks, CorpusReport, Manifest, Verdict};
use pevalyzer::validate::{validate, ValidateConfig, ValidationReport};
use pevalyzer::{analyze_path, AnalysisConfig, AnalysisReport, Status, TemplateChoice};
use pevalyzer_core::frontend::load;

const EXIT_ANALYSIS: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_USAGE: u8 = 3;

/// Upper bounds on expected return values of probabilistic recursive programs.
#[derive(Parser)]
#[command(name = "pevalyzer", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Infer a bound for one program.
    Analyze {
        file: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Analyze a directory of programs and compare with expected bounds.
    Bench {
        dir: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
    /// Infer a bound and check it against the oracles.
    Validate {
        file: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Call depth of exact enumeration.
        #[arg(long, default_value_t = 12)]
        depth: usize,
        #[command(flatten)]
        opts: AnalysisOpts,
    },
}

#[derive(Args)]
struct AnalysisOpts {
    /// Entry procedure; defaults to the last one declared.
    #[arg(long)]
    entry: Option<String>,
    #[arg(long, value_enum, default_value_t = TemplateChoice::Auto)]
    template: TemplateChoice,
    /// SMT solver binary.
    #[arg(long)]
    solver: Option<String>,
    /// Per-query solver timeout in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    /// Directory receiving every solver script.
    #[arg(long)]
    smt_dump: Option<PathBuf>,
    /// Machine-readable report destination.
    #[arg(long)]
    json: Option<PathBuf>,
}

impl AnalysisOpts {
    fn config(&self) -> AnalysisConfig {
        let mut cfg = AnalysisConfig { entry: self.entry.clone(), template: self.template, ..AnalysisConfig::default() };
        if let Some(s) = &self.solver {
            cfg.solver.path = s.clone();
        }
        if let Some(t) = self.timeout {
            cfg.solver.timeout = Duration::from_secs(t);
        }
        cfg.solver.dump_dir = self.smt_dump.clone();
        cfg
    }
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {}", msg);
    ExitCode::from(EXIT_USAGE)
}

fn write_json<T: Serialize>(path: &Option<PathBuf>, value: &T) -> Result<(), String> {
    let Some(path) = path else { return Ok(()) };
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    std::fs::write(path, text + "\n").map_err(|e| format!("cannot write {}: {}", path.display(), e))
}

fn readable(path: &Path) -> Result<(), String> {
    std::fs::metadata(path).map(|_| ()).map_err(|e| format!("cannot read {}: {}", path.display(), e))
}

fn print_report(r: &AnalysisReport) {
    let bound = r.bound.as_ref().map_or("-".to_string(), |b| b.text.clone());
    let template = match (r.template, r.degree) {
        (Some(t), Some(d)) => format!("{} (degree {})", t, d),
        _ => "-".into(),
    };
    println!("{:<10} {}", "program", r.program);
    println!("{:<10} {}", "entry", r.entry);
    println!("{:<10} {}", "status", r.status);
    println!("{:<10} {}", "bound", bound);
    println!("{:<10} {}", "template", template);
    println!("{:<10} {} ms", "time", r.wall_ms);
    println!("{:<10} {} queries, {} cases, {} equations, {} unknowns", "solver", r.stats.queries, r.stats.cases, r.stats.equations, r.stats.unknowns);
    if let Some(m) = &r.message {
        println!("{:<10} {}", "message", m);
    }
}

fn print_corpus(c: &CorpusReport) {
    println!("{:<18} {:<28} {:<28} {:<8} {:>8}", "program", "status", "bound", "verdict", "ms");
    for row in &c.rows {
        let bound = row.report.bound.as_ref().map_or("-".to_string(), |b| b.text.clone());
        let verdict = match &row.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail(_) => "FAIL",
            Verdict::NoExpectation => "-",
        };
        println!("{:<18} {:<28} {:<28} {:<8} {:>8}", row.id, row.report.status, bound, verdict, row.report.wall_ms);
        if let Verdict::Fail(why) = &row.verdict {
            println!("    expected {}: {}", row.expected.as_deref().unwrap_or("-"), why);
        }
    }
    for w in &c.warnings {
        println!("warning: {}", w);
    }
    let n = c.rows.len().max(1) as u128;
    println!("{} passed, {} failed, {} ms total, {} ms mean", c.passed, c.failed, c.total_ms, c.total_ms / n);
}

fn print_validation(v: &ValidationReport) {
    println!("{:<16} {:>14} {:>14} {:>14} {:>12} {:>6}", "args", "bound", "exact", "mc mean", "mc stderr", "ok");
    for pt in &v.points {
        println!(
            "{:<16} {:>14} {:>14} {:>14.6} {:>12.6} {:>6}",
            format!("{:?}", pt.args),
            pt.bound,
            pt.exact,
            pt.mc_mean,
            pt.mc_stderr,
            if pt.passed { "yes" } else { "NO" }
        );
    }
    if let Some(e) = &v.error {
        println!("error: {}", e);
    }
    println!("validation {}", if v.passed { "passed" } else { "FAILED" });
}

#[derive(Serialize)]
struct Validated<'a> {
    analysis: &'a AnalysisReport,
    validation: Option<&'a ValidationReport>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match cli.command {
        Cmd::Analyze { file, opts } => {
            if let Err(e) = readable(&file) {
                return usage(e);
            }
            let r = analyze_path(&file, &opts.config());
            print_report(&r);
            if let Err(e) = write_json(&opts.json, &r) {
                return usage(e);
            }
            if r.status == Status::Bounded {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ANALYSIS)
            }
        }
        Cmd::Bench { dir, manifest, opts } => {
            if !dir.is_dir() {
                return usage(format!("{} is not a directory", dir.display()));
            }
            let m = match Manifest::read(&manifest) {
                Ok(m) => m,
                Err(e) => return usage(e),
            };
            let c = match run_benchmarks(&dir, &m, &opts.config()) {
                Ok(c) => c,
                Err(e) => return usage(e),
            };
            print_corpus(&c);
            if let Err(e) = write_json(&opts.json, &c) {
                return usage(e);
            }
            if c.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ANALYSIS)
            }
        }
        Cmd::Validate { file, samples, seed, depth, opts } => {
            let src = match std::fs::read_to_string(&file) {
                Ok(s) => s,
                Err(e) => return usage(format!("cannot read {}: {}", file.display(), e)),
            };
            let cfg = AnalysisConfig { seed, ..opts.config() };
            let r = analyze_path(&file, &cfg);
            print_report(&r);
            let (Some(bound), Ok(p)) = (&r.bound, load(&src)) else {
                let _ = write_json(&opts.json, &Validated { analysis: &r, validation: None });
                return ExitCode::from(EXIT_ANALYSIS);
            };
            let vcfg = ValidateConfig { samples, seed, depth, ..ValidateConfig::default() };
            let v = validate(&p, &r.entry, &bound.term, &vcfg);
            print_validation(&v);
            if let Err(e) = write_json(&opts.json, &Validated { analysis: &r, validation: Some(&v) }) {
                return usage(e);
            }
            if v.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
    }
}
