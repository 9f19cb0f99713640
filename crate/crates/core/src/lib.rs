//! Expected-value analysis for probabilistic recursive programs.
//!
//! The pipeline parses a program, builds a symbolic pre-expectation with
//! template placeholders for procedures and loops, turns the resulting side
//! conditions into polynomial coefficient constraints and hands those to an
//! external SMT solver. An independent oracle computes ground-truth values.

pub mod constraints;
pub mod frontend;
pub mod oracle;
pub mod poly;
pub mod templates;
pub mod terms;
pub mod transformer;

pub use num_rational::BigRational as Q;
