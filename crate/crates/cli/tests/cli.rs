use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

use scaul::aes::ByteMask;
use scaul::attack::{dpa_raw, key_rank, CandidateScore, KeySweepResult};
use scaul::sensitivity::LeakageModel;
use scaul::trace::{extract_windows, load_traces, WindowSpec};

fn scaul(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scaul"))
        .current_dir(dir)
        .env_remove("SCAUL_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = scaul(dir, args);
    assert!(
        out.status.success(),
        "scaul {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

const SMALL_AE: &[&str] = &["--hidden", "8", "--epochs", "3", "--ae-traces", "60", "--batch", "32"];
const SMALL_MLP: &[&str] = &["--mlp-hidden", "16,8", "--mlp-max-steps", "60"];

#[test]
fn simulate_writes_a_loadable_deterministic_file() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--traces", "1000", "--leakage", "hw", "--sigma", "1.0", "--seed", "7", "--out"];
    ok(dir.path(), &[&args[..], &["a.sctr"]].concat());
    ok(dir.path(), &[&args[..], &["b.sctr"]].concat());
    let ts = load_traces(dir.path().join("a.sctr")).unwrap();
    assert_eq!(ts.num_traces(), 1000);
    assert_eq!(sha(&dir.path().join("a.sctr")), sha(&dir.path().join("b.sctr")));
    let out = ok(dir.path(), &["--threads", "3", "simulate", "--traces", "1000", "--sigma", "1.0", "--seed", "7", "--out", "c.sctr"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("S=1000"));
    assert_eq!(sha(&dir.path().join("a.sctr")), sha(&dir.path().join("c.sctr")));
}

#[test]
fn invalid_settings_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = scaul(dir.path(), &["simulate", "--sigma", "-1", "--out", "x.sctr"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));
    assert!(!dir.path().join("x.sctr").exists());
    let out = scaul(dir.path(), &["features", "--traces", "missing.sctr", "--model", "m.scnn", "--out", "f.scft"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.sctr"));
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "# simulation\ntraces = 50\nsigma = 3.0\nseed = 11\n").unwrap();
    ok(dir.path(), &["--config", "run.cfg", "simulate", "--sigma", "0.5", "--out", "cfg.sctr"]);
    ok(dir.path(), &["simulate", "--traces", "50", "--sigma", "0.5", "--seed", "11", "--out", "flags.sctr"]);
    assert_eq!(sha(&dir.path().join("cfg.sctr")), sha(&dir.path().join("flags.sctr")));
}

#[test]
fn dpa_raw_attack_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--traces", "400", "--sigma", "1.0", "--seed", "3", "--out", "t.sctr"]);
    ok(dir.path(), &["attack", "--mode", "dpa-raw", "--traces", "t.sctr", "--byte", "2", "--out", "scores.json"]);
    let cli: Vec<CandidateScore> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("scores.json")).unwrap()).unwrap();
    let ts = load_traces(dir.path().join("t.sctr")).unwrap();
    let spec = WindowSpec::for_clocks(100, 125, 125, 0).unwrap();
    let lib = dpa_raw(&extract_windows(&ts, &spec, None).unwrap(), 2).unwrap();
    assert_eq!(cli, lib);
    assert_eq!(key_rank(&lib, ts.known_key().unwrap()[2]), 1);
}

#[test]
fn staged_commands_and_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--traces", "500", "--sigma", "0", "--seed", "5", "--out", "t.sctr"]);

    ok(d, &[&["train-ae", "--traces", "t.sctr", "--out", "ae.scnn"], SMALL_AE].concat());
    ok(d, &["features", "--traces", "t.sctr", "--model", "ae.scnn", "--out", "f.scft"]);
    ok(d, &[&["leakage", "--features", "f.scft", "--candidate", "0x2b", "--out", "m.json"], SMALL_MLP].concat());
    let model = LeakageModel::load(d.join("m.json")).unwrap();
    let singles = (0..8).filter(|b| model.is_selected(ByteMask::new(1 << b).unwrap())).count();
    assert!(singles >= 6, "{singles} single-bit masks selected");

    ok(
        d,
        &[
            &["sweep", "--mode", "scaul", "--features", "f.scft", "--true-key", "0x2b", "--grid-step", "250"],
            SMALL_MLP,
            &["--out", "s.json", "--csv", "s.csv"],
        ]
        .concat(),
    );
    ok(d, &["report", "--sweep", "s.json", "--out", "r.csv"]);
    assert_eq!(std::fs::read(d.join("s.csv")).unwrap(), std::fs::read(d.join("r.csv")).unwrap());
    let out = scaul(d, &["report", "--sweep", "none.json", "--out", "x.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("none.json"));

    ok(
        d,
        &[
            &["pipeline", "--traces", "t.sctr", "--out-dir", "run", "--modes", "scaul", "--grid-step", "250"],
            SMALL_AE,
            SMALL_MLP,
        ]
        .concat(),
    );
    let text = std::fs::read_to_string(d.join("run/sweep-scaul.json")).unwrap();
    assert!(text.contains("min_traces_to_rank1"));
    let sweep = KeySweepResult::from_json(&text).unwrap();
    assert_eq!(sweep.true_key, Some(0x2b));
    for f in ["autoencoder.scnn", "features.scft", "leakage.json", "sweep-scaul.csv"] {
        assert!(d.join("run").join(f).exists(), "{f} missing");
    }
}

#[test]
fn thread_count_does_not_change_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--traces", "200", "--sigma", "0.5", "--seed", "9", "--out", "t.sctr"]);
    for threads in ["1", "8"] {
        let ae = format!("ae{threads}.scnn");
        let ft = format!("f{threads}.scft");
        ok(d, &[&["--threads", threads, "train-ae", "--traces", "t.sctr", "--out", &ae], SMALL_AE].concat());
        ok(d, &["--threads", threads, "features", "--traces", "t.sctr", "--model", &ae, "--out", &ft]);
    }
    assert_eq!(sha(&d.join("ae1.scnn")), sha(&d.join("ae8.scnn")));
    assert_eq!(sha(&d.join("f1.scft")), sha(&d.join("f8.scft")));
}
