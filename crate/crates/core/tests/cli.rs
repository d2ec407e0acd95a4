use std::path::Path;
use std::process::{Command, Output};

use ddtrack::polysys::Controller;

fn ddtrack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddtrack"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn bench(dir: &Path) {
    let o = ddtrack(dir, &["gen-bench", "--seed", "42", "--out", "bench", "--points", "64"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_bench_writes_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    bench(tmp.path());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("bench/manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 9);
    for f in files {
        assert!(tmp.path().join("bench").join(f.as_str().unwrap()).is_file(), "{f}");
    }
    assert_eq!(manifest["cases"].as_array().unwrap().len(), 9);
    assert_eq!(manifest["config"]["seed"], 42);
}

#[test]
fn synth_eval_sim_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    bench(d);
    let o = ddtrack(
        d,
        &[
            "synth", "--config", "bench/design.json", "--plants", "bench/plants.csv", "--out", "K.json", "--report",
            "report.json", "--audit", "audit.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let k = Controller::load(d.join("K.json")).unwrap();
    assert_eq!(k.order(), 8);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["audit_rows"], 2 * 2 * 64 * 9);
    let audit = std::fs::read_to_string(d.join("audit.csv")).unwrap();
    assert_eq!(audit.lines().next(), Some("plant,config,channel,freq_hz,margin"));
    assert_eq!(audit.lines().count(), 1 + 2 * 2 * 64 * 9);

    let o = ddtrack(d, &["eval", "--config", "bench/design.json", "--controller", "K.json", "--out", "eval.json", "--bode", "bode.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ev: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("eval.json")).unwrap()).unwrap();
    assert_eq!(ev["loops"].as_array().unwrap().len(), 18);
    assert_eq!(ev["pass"], true);

    // run from inside the bench directory so the default config path applies
    let b = d.join("bench");
    let sim = |out: &str| {
        let o = ddtrack(
            &b,
            &["sim", "--controller", "../K.json", "--case", "1", "--seed", "7", "--samples", "262144", "--out", out],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(b.join(out)).unwrap()
    };
    let first = sim("m1.json");
    assert_eq!(first, sim("m2.json"));
    let m: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(m[0]["case"], "case1");
    assert!(m[0]["sigma3_e_m"].as_f64().unwrap() > 0.0);
}

#[test]
fn synth_without_plants_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    bench(tmp.path());
    let o = ddtrack(tmp.path(), &["synth", "--config", "bench/design.json", "--out", "K.json"]);
    assert_eq!(code(&o), 2);
    assert!(!tmp.path().join("K.json").exists());
}

#[test]
fn missing_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ddtrack(tmp.path(), &["synth", "--config", "nope.json", "--plants", "p.csv", "--out", "K.json"]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
}

#[test]
fn unachievable_weights_exit_3_with_summary() {
    let tmp = tempfile::tempdir().unwrap();
    bench(tmp.path());
    let o = ddtrack(
        tmp.path(),
        &["synth", "--config", "bench/design.json", "--plants", "bench/plants.csv", "--out", "K.json", "--order", "4"],
    );
    assert_eq!(code(&o), 3);
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("most violated constraint"), "{msg}");
    assert!(!tmp.path().join("K.json").exists());
}

#[test]
fn help_lists_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    for (sub, needle) in [("gen-bench", "[default: 300]"), ("sim", "[default: 262144]"), ("synth", "[default: design.json]")] {
        let o = ddtrack(tmp.path(), &[sub, "--help"]);
        assert_eq!(code(&o), 0);
        let text = String::from_utf8_lossy(&o.stdout);
        assert!(text.contains(needle), "{sub}: {text}");
    }
}
