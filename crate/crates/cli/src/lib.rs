//! Driver for the expected-value bound analyzer.

pub mod analyze;
pub mod bench;
pub mod validate;

pub use analyze::{analyze_path, analyze_source, AnalysisConfig, AnalysisReport, Bound, Status, TemplateChoice};
pub use bench::{run_benchmarks, BenchmarkExpectation, CorpusReport, Manifest, Mode, Verdict};
pub use validate::{validate, ValidateConfig, ValidationReport};
