use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pevalyzer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pevalyzer")).args(args).output().unwrap()
}

fn bench(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks").join(name).display().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&pevalyzer(&["--help"])), 0);
    assert_eq!(code(&pevalyzer(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(code(&pevalyzer(&[])), 3);
    assert_eq!(code(&pevalyzer(&["frobnicate"])), 3);
    assert_eq!(code(&pevalyzer(&["analyze", "/nonexistent/x.pw"])), 3);
    assert_eq!(code(&pevalyzer(&["analyze", &bench("balls.pw"), "--template", "cubic"])), 3);
    assert_eq!(code(&pevalyzer(&["bench", "/nonexistent", "--manifest", &bench("manifest.toml")])), 3);
}

#[test]
fn analyze_prints_and_writes_the_bound() {
    let tmp = TempDir::new().unwrap();
    let json = tmp.path().join("r.json").display().to_string();
    let o = pevalyzer(&["analyze", &bench("balls.pw"), "--json", &json]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("1/5·⟨n⟩"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["status"], "bounded");
    assert_eq!(v["entry"], "balls");
    assert_eq!(v["bound"]["text"], "1/5·⟨n⟩");
    assert!(v["bound"]["summands"].is_array());
}

#[test]
fn invalid_program_exits_one() {
    let tmp = TempDir::new().unwrap();
    let f = write(tmp.path(), "bad.pw", "def f(: return");
    let o = pevalyzer(&["analyze", &f]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("invalid"), "{}", stdout(&o));
}

#[test]
fn entry_selects_the_procedure() {
    let tmp = TempDir::new().unwrap();
    let f = write(tmp.path(), "two.pw", "def g(): return 3\ndef h(): return 4");
    assert!(stdout(&pevalyzer(&["analyze", &f])).contains("bound      4"));
    assert!(stdout(&pevalyzer(&["analyze", &f, "--entry", "g"])).contains("bound      3"));
}

#[test]
fn empty_directory_gives_an_empty_report() {
    let tmp = TempDir::new().unwrap();
    let m = write(tmp.path(), "m.toml", "");
    let json = tmp.path().join("c.json").display().to_string();
    let o = pevalyzer(&["bench", &tmp.path().display().to_string(), "--manifest", &m, "--json", &json]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 0);
    assert_eq!(v["passed"], 0);
}

#[test]
fn one_failing_program_signals_partial_failure() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "one.pw", "def one(): return 1");
    write(tmp.path(), "two.pw", "def two(): return 2");
    let m = write(
        tmp.path(),
        "m.toml",
        "[[program]]\nid = \"one\"\nbound = \"1\"\n\n[[program]]\nid = \"two\"\nbound = \"1\"\n\n[[program]]\nid = \"gone\"\nbound = \"0\"\n",
    );
    let o = pevalyzer(&["bench", &tmp.path().display().to_string(), "--manifest", &m]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("1 passed, 1 failed"), "{}", out);
    assert!(out.contains("warning: manifest entry `gone`"), "{}", out);
}

#[test]
fn malformed_manifest_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let m = write(tmp.path(), "m.toml", "[[program]]\nid = \"x\"\nfactor = 0.5\n");
    assert_eq!(code(&pevalyzer(&["bench", &tmp.path().display().to_string(), "--manifest", &m])), 3);
}

#[test]
fn constant_program_validates_with_zero_slack() {
    let tmp = TempDir::new().unwrap();
    let f = write(tmp.path(), "one.pw", "def one(): return 1");
    let json = tmp.path().join("v.json").display().to_string();
    let o = pevalyzer(&["validate", &f, "--samples", "1000", "--seed", "7", "--json", &json]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["analysis"]["bound"]["text"], "1");
    let pt = &v["validation"]["points"][0];
    assert_eq!(pt["bound"], "1");
    assert_eq!(pt["exact"], "1");
    assert_eq!(pt["mc_mean"], 1.0);
}

#[test]
fn unsound_bound_fails_validation() {
    let p = pevalyzer_core::frontend::load("def f(n): return n").unwrap();
    let zero = pevalyzer_core::terms::Term::poly(pevalyzer_core::poly::Poly::int(0));
    let cfg = pevalyzer::ValidateConfig { samples: 100, ..Default::default() };
    let r = pevalyzer::validate(&p, "f", &zero, &cfg);
    assert!(!r.passed);
    assert!(r.points.iter().any(|pt| pt.args == [5] && !pt.passed));
}

#[test]
fn reports_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let read = |name: &str| {
        let json = tmp.path().join(name).display().to_string();
        pevalyzer(&["analyze", &bench("hire.pw"), "--json", &json]);
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
        v["wall_ms"] = 0.into();
        v
    };
    assert_eq!(read("a.json"), read("b.json"));
}

#[test]
fn shipped_corpus_passes_ten_of_twelve() {
    let tmp = TempDir::new().unwrap();
    let json = tmp.path().join("c.json").display().to_string();
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks").display().to_string();
    let o = pevalyzer(&["bench", &dir, "--manifest", &bench("manifest.toml"), "--json", &json]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    let failed: Vec<&str> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["verdict"]["verdict"] == "fail")
        .map(|r| r["id"].as_str().unwrap())
        .collect();
    assert_eq!(v["passed"], 10);
    assert_eq!(failed, ["biased_coin", "every"]);
    assert!(v["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn locals_live_across_calls_escalate_the_instantiation() {
    let src = "def f(n):
      var z := Uniform(0, 2);
      if (n > 0) {
        if (*) { z := z + 1 } else { z ~ Binomial(2, 1/2) };
        if (Bernoulli(1/3)) { return z + f(n - 1) } else { return f(n - 1) }
      } else { return 0 }";
    let r = pevalyzer::analyze_source("f", src, &pevalyzer::AnalysisConfig::default());
    assert_eq!(r.bound.as_ref().map(|b| b.text.as_str()), Some("2/3·⟨n⟩"));
    let last = r.attempts.last().unwrap();
    assert!(last.locals && last.outcome == "sat");
    assert!(r.attempts[..r.attempts.len() - 1].iter().all(|a| a.outcome != "sat"));
    let p = pevalyzer_core::frontend::load(src).unwrap();
    let cfg = pevalyzer_core::oracle::ExactConfig::default();
    for n in 0..=2 {
        let args = [pevalyzer_core::poly::q(n)];
        let exact = pevalyzer_core::oracle::exact_expectation(&p, "f", &args, &Default::default(), 4, &cfg).unwrap();
        assert_eq!(exact, pevalyzer_core::poly::qf(2 * n, 3));
    }
}
