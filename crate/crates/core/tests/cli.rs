//! Command-line behaviour on the checked-in fixtures. Regenerate them with
//! `cargo test -p causal-channels --test cli -- --ignored regenerate`.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use causal_channels::causal::{AggregateWiring, CausalOrder, OpLabel};
use causal_channels::channels::{random_cptp, random_instrument};
use causal_channels::cli::{LoopInput, OneWayInput, ProbeInput};
use causal_channels::composition::CondDist;
use causal_channels::fixtures::{memoryful_fixture, random_protocol, random_sep_map, random_tp_spec};
use causal_channels::io;
use causal_channels::procmat::{embed_diagonal, random_valid_process, ClassicalProcess};
use causal_channels::sep::{nine_state_fixture, NineStateFixture};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causal-channels"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_on(args: &[&str], files: &[&str]) -> (i32, Value) {
    let paths: Vec<String> = files.iter().map(|f| fixture(f).display().to_string()).collect();
    let mut all: Vec<&str> = args.to_vec();
    all.extend(paths.iter().map(String::as_str));
    let out = run(&all);
    let report = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().expect("exit code"), report)
}

#[test]
#[ignore]
fn regenerate() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let save = |name: &str, v: &dyn erased::Save| v.save(&fixture(name));
    std::fs::create_dir_all(fixture("")).unwrap();
    let nine = nine_state_fixture();
    save("nine_state.json", &nine);
    save("loop_pair.json", &LoopInput { alice: nine.alice.clone(), bob: nine.bob.clone() });
    save("sep.json", &random_sep_map(&mut rng, [2, 2, 2, 2], 3).unwrap());
    save("instrument.json", &random_instrument(2, 3, 2, 2, 1, 7).unwrap());
    save(
        "one_way.json",
        &OneWayInput {
            alice: random_instrument(1, 2, 2, 2, 1, 8).unwrap(),
            bob: vec![random_cptp(2, 2, 2, 9).unwrap(), random_cptp(2, 2, 2, 10).unwrap()],
        },
    );
    save("protocol.json", &random_protocol(&mut rng, 2, 1, [2, 2], 2).unwrap());
    save("ccstar.json", &random_tp_spec(&mut rng, 2, 2).unwrap());
    save("loop.json", &ClassicalProcess::loop_process(2).unwrap());
    save("valid_process.json", &random_valid_process(&mut rng, [2, 2, 2, 2]).unwrap());
    save("copy_a_to_b.json", &ClassicalProcess::copy_a_to_b([1, 2, 2, 2]).unwrap());
    let w = random_valid_process(&mut rng, [2, 2, 2, 2]).unwrap();
    save("probe_valid.json", &ProbeInput { dims: [2, 2, 2, 2], w: embed_diagonal(&w) });
    save("wiring_loop.json", &AggregateWiring::new(1, 1, CondDist::loop_wiring(2, 2).unwrap()).unwrap());
    save("order_a_before_b.json", &CausalOrder::new(1, 1, &[(OpLabel::a(1), OpLabel::b(1))]).unwrap());
    save(
        "wiring_one_way.json",
        &AggregateWiring::new(1, 1, CondDist::one_way_wiring(1, 2, 2).unwrap()).unwrap(),
    );
    save("reconstruct_memoryful.json", &memoryful_fixture(&mut rng).unwrap());
}

mod erased {
    use std::path::Path;

    pub trait Save {
        fn save(&self, path: &Path);
    }

    impl<T: serde::Serialize> Save for T {
        fn save(&self, path: &Path) {
            causal_channels::io::save(path, self).unwrap();
        }
    }
}

#[test]
fn nine_state_file_matches_programmatic_fixture() {
    let loaded: NineStateFixture = io::load(fixture("nine_state.json")).unwrap();
    assert_eq!(loaded, nine_state_fixture());
    let text = std::fs::read_to_string(fixture("nine_state.json")).unwrap();
    assert_eq!(io::to_canonical_string(&nine_state_fixture()).unwrap(), text);
}

#[test]
fn discriminate_nine_passes() {
    let (code, report) = run_on(&["discriminate-nine"], &[]);
    assert_eq!(code, 0);
    let distances: Vec<f64> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["name"].as_str().unwrap().ends_with(".distance"))
        .map(|c| c["value"].as_f64().unwrap())
        .collect();
    assert_eq!(distances.len(), 9);
    assert!(distances.iter().all(|&d| d <= 1e-9));
}

#[test]
fn loop_process_fails_with_witness() {
    let (code, report) = run_on(&["check-procmat"], &["loop.json"]);
    assert_eq!(code, 1);
    let w = &report["details"]["witness"];
    assert!(w["f"].is_array() && w["g"].is_array(), "{report}");
    assert!((w["sum"].as_f64().unwrap() - 1.0).abs() >= 1.0);
}

#[test]
fn valid_process_checks_and_decomposes() {
    assert_eq!(run_on(&["check-procmat"], &["valid_process.json"]).0, 0);
    let (code, report) = run_on(&["decompose-procmat"], &["valid_process.json"]);
    assert_eq!(code, 0);
    assert!(report["details"]["decomposition"]["q"].is_number());
    assert_eq!(run_on(&["decompose-procmat"], &["copy_a_to_b.json"]).0, 0);
    let (code, report) = run_on(&["decompose-procmat"], &["loop.json"]);
    assert_eq!(code, 1);
    assert!(report["details"]["error"].is_string());
}

#[test]
fn compose_modes() {
    for (mode, file) in [
        ("one-way", "one_way.json"),
        ("protocol", "protocol.json"),
        ("ccstar", "ccstar.json"),
        ("loop", "loop_pair.json"),
    ] {
        let (code, report) = run_on(&["compose", mode], &[file]);
        assert_eq!(code, 0, "{mode}: {report}");
        assert!(report["details"]["map"]["kraus"].is_array());
    }
}

#[test]
fn instrument_and_sep() {
    assert_eq!(run_on(&["verify-instrument"], &["instrument.json"]).0, 0);
    let (code, report) = run_on(&["compile-sep"], &["sep.json"]);
    assert_eq!(code, 0, "{report}");
    assert!(report["details"]["alice"].is_object());
}

#[test]
fn causal_checks() {
    let (code, report) = run_on(&["check-causal"], &["wiring_loop.json", "order_a_before_b.json"]);
    assert_eq!(code, 1);
    assert!(report["details"]["violation"]["slot"].is_object() || report["details"]["violation"]["slot"].is_string());
    assert_eq!(run_on(&["check-causal"], &["wiring_one_way.json", "order_a_before_b.json"]).0, 0);
    let (code, report) = run_on(&["reconstruct-locc"], &["reconstruct_memoryful.json"]);
    assert_eq!(code, 0, "{report}");
}

#[test]
fn probe_valid_process() {
    let (code, report) = run_on(&["probe-procmat", "--probes", "5"], &["probe_valid.json"]);
    assert_eq!(code, 0, "{report}");
    assert!(report["details"]["probe_report"]["probes"].as_array().unwrap().len() >= 5);
}

#[test]
fn input_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["check-procmat", "/nonexistent.json"]).status.code(), Some(2));
    // a process file where an instrument is expected
    let out = run(&["verify-instrument", fixture("loop.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"i_a":2,"i_b":2,"o_a":2,"o_b":2,"table":[1.0]}"#).unwrap();
    let out = run(&["check-procmat", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("table"));
}

#[test]
fn output_file_text_format_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let a = run(&["selftest", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    assert!(a.stdout.is_empty());
    let first = std::fs::read(&out).unwrap();
    run(&["selftest", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(std::fs::read(&out).unwrap(), first);
    let text = run(&["discriminate-nine", "--format", "text"]);
    assert!(String::from_utf8_lossy(&text.stdout).starts_with("PASS"));
}

#[test]
fn tolerance_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_causal-channels"))
        .args(["discriminate-nine"])
        .env("CAUSAL_CHANNELS_TOL", "1e-30")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let flag = Command::new(env!("CARGO_BIN_EXE_causal-channels"))
        .args(["discriminate-nine", "--tol", "1e-6"])
        .env("CAUSAL_CHANNELS_TOL", "1e-30")
        .output()
        .unwrap();
    assert_eq!(flag.status.code(), Some(0));
}
