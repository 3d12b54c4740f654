use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn posearch(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posearch"))
        .args(args)
        .current_dir(cwd)
        .env_remove("POSEARCH_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn rows(o: &Output) -> Vec<Vec<String>> {
    stdout(o)
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with("max"))
        .map(|l| l.split('\t').map(str::to_owned).collect())
        .collect()
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = posearch(&["sim", "run", "--config", "nope.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read scenario"));
    let o = posearch(
        &["sim", "run", "--scenario", "no_such_scenario"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bundled_smoke_scenario_settles_and_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = posearch(
        &["sim", "run", "--scenario", "tsp_smoke", "--out", "run"],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let run = dir.path().join("run");
    for f in ["report.json", "trace.csv", "chain.posc"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let report: Value =
        serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    let jobs = report["jobs"].as_array().unwrap();
    assert_eq!(jobs.len(), 1);
    assert_eq!(jobs[0]["outcome"], "paid");

    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/report.schema.json");
    let schema: Value = serde_json::from_str(&fs::read_to_string(schema_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(&report)
        .map(|e| e.to_string())
        .collect();
    assert!(errors.is_empty(), "{errors:?}");

    let v = posearch(
        &[
            "chain",
            "verify",
            "run/chain.posc",
            "--compact",
            "small.posc",
        ],
        dir.path(),
    );
    assert_eq!(v.status.code(), Some(0));
    let text = stdout(&v);
    assert!(text.starts_with("valid"));
    assert!(text.contains(&format!("tip {}", report["tip"].as_str().unwrap())));
    let again = posearch(&["chain", "verify", "small.posc"], dir.path());
    assert_eq!(again.status.code(), Some(0));
    assert!(
        fs::metadata(dir.path().join("small.posc")).unwrap().len()
            <= fs::metadata(run.join("chain.posc")).unwrap().len()
    );
}

#[test]
fn tampered_chain_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = posearch(
        &[
            "sim",
            "run",
            "--scenario",
            "tsp_smoke",
            "--out",
            "run",
            "--no-trace",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(!dir.path().join("run/trace.csv").exists());
    let path = dir.path().join("run/chain.posc");
    let mut bytes = fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 3);
    fs::write(&path, &bytes).unwrap();
    assert_eq!(
        posearch(&["chain", "verify", "run/chain.posc"], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn blocktime_closed_form_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = posearch(
        &[
            "analyze",
            "blocktime",
            "--n",
            "1",
            "--t",
            "1",
            "--samples",
            "0",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(rows(&o), vec![vec!["1", "1.0000", "0.632121"]]);
}

#[test]
fn fork_series_falls_with_more_miniblocks() {
    let dir = tempfile::tempdir().unwrap();
    let o = posearch(
        &[
            "analyze",
            "fork",
            "--d",
            "0.05:0.2:0.05",
            "--n",
            "1,2,4,8",
            "--samples",
            "0",
            "--out",
            "fork.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("fork.csv")).unwrap();
    assert!(csv.starts_with("n,x,analytic,montecarlo,stderr"));
    let points: Vec<(u32, String, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f[3], "", "zero samples leaves the Monte Carlo column empty");
            (
                f[0].parse().unwrap(),
                f[1].to_owned(),
                f[2].parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(points.len(), 16);
    for a in &points {
        for b in &points {
            if a.1 == b.1 && a.0 < b.0 {
                assert!(b.2 < a.2, "{a:?} {b:?}");
            }
        }
    }
}

#[test]
fn invalid_ranges_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["analyze", "fork", "--d", "1:0:0.1"][..],
        &["analyze", "fork", "--d", "0:1:0"],
        &["analyze", "blocktime", "--n", "0"],
        &["analyze", "blocktime", "--t", "x"],
    ] {
        let o = posearch(args, dir.path());
        assert_ne!(o.status.code(), Some(0), "{args:?}");
        assert!(!o.status.success());
    }
    assert_eq!(
        posearch(&["analyze", "fork", "--d", "1:0:0.1"], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn assembler_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.asm"), "; count down\n  PUSH 3\nloop:\n  DUP\n  JZ done\n  PUSH 1\n  SUB\n  JMP loop\ndone:\n  HALT\n").unwrap();
    let o = posearch(&["asm", "p.asm", "--out", "p.bin"], dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let d = posearch(
        &["asm", "p.bin", "--disassemble", "--out", "q.asm"],
        dir.path(),
    );
    assert_eq!(d.status.code(), Some(0));
    let o2 = posearch(&["asm", "q.asm", "--out", "q.bin"], dir.path());
    assert_eq!(o2.status.code(), Some(0));
    assert_eq!(
        fs::read(dir.path().join("p.bin")).unwrap(),
        fs::read(dir.path().join("q.bin")).unwrap()
    );

    fs::write(dir.path().join("bad.asm"), "FROB 1\n").unwrap();
    assert_eq!(
        posearch(&["asm", "bad.asm"], dir.path()).status.code(),
        Some(1)
    );
}

#[test]
fn tsp_demo_finds_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let o = posearch(&["demo", "tsp", "--cities", "6", "--seed", "2"], dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    let length = |prefix: &str| -> String {
        let line = text
            .lines()
            .find(|l| l.starts_with(prefix))
            .unwrap_or_else(|| panic!("no `{prefix}` in {text}"));
        let word = if prefix == "winning" {
            line.rsplit(' ').next()
        } else {
            line.split_whitespace().nth(2)
        };
        word.unwrap().to_owned()
    };
    assert_eq!(length("winning"), length("brute-force"));
    assert!(text.contains("paid 5000"));

    let small = posearch(
        &["demo", "tsp", "--cities", "3", "--charge", "777"],
        dir.path(),
    );
    assert_eq!(small.status.code(), Some(0));
    assert!(stdout(&small).contains("paid 777"));
    assert_eq!(
        posearch(&["demo", "tsp", "--cities", "13"], dir.path())
            .status
            .code(),
        Some(1)
    );
}
