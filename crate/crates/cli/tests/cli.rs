use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nilsoliton"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

#[test]
fn build_then_certify_non_einstein() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.json");
    let o = run(&["build", "--family", "non-einstein", "--j", "2", "--k", "2", "--n", "1", "-o", path_str(&f)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&f).unwrap()).unwrap();
    assert_eq!((doc["p"].as_u64(), doc["q"].as_u64()), (Some(2), Some(8)));
    assert!(dir.path().join("f.json.meta.json").exists());

    let o = run(&["certify", path_str(&f), "--j", "2", "--k", "2", "--n", "1", "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cert: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(cert["verdict"], "NonDistinguished");

    let o = run(&["certify", path_str(&f), "--j", "2", "--k", "2", "--n", "1"]);
    assert!(stdout(&o).starts_with("verdict: NonDistinguished"));
}

#[test]
fn certify_rejects_mismatched_family() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.json");
    assert!(run(&["build", "--family", "non-einstein", "--j", "2", "--k", "2", "--n", "1", "-o", path_str(&f)]).status.success());
    let o = run(&["certify", path_str(&f), "--j", "3", "--k", "2", "--n", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn moduli_single_and_table() {
    let o = run(&["moduli", "--p", "3", "--q", "6"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "2");
    let o = run(&["moduli", "--p", "4", "--q", "6", "--json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["entry"]["dim"], 9);
    let o = run(&["moduli", "--table", "--qmax", "8"]);
    let text = stdout(&o);
    assert!(text.starts_with("p,q,label,"));
    assert!(text.lines().any(|l| l.starts_with("2,8,ExistsNonEinstein")));
    assert_eq!(run(&["moduli", "--p", "16", "--q", "6"]).status.code(), Some(1));
}

#[test]
fn io_and_contract_exit_codes() {
    assert_eq!(run(&["flow", "missing.json"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"p\": 1, \"q\": 2,\n \"matrices\": [[0, \"x\", 0, 0]]}").unwrap();
    let o = run(&["show", path_str(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn moment_of_block_and_decimal_strings() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("h.json");
    std::fs::write(&f, r#"{"p":1,"q":2,"matrices":[["0","1"," -1","0"]]}"#).unwrap();
    let o = run(&["moment", path_str(&f), "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["report"]["r"].as_f64(), Some(6.0));
    assert_eq!(v["distinguished"], true);
}

#[test]
fn flow_and_scan_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let csv = dir.path().join("h.csv");
    for out in [&a, &b] {
        let o = run(&["scan", "--p", "2", "--q", "5", "--trials", "4", "--seed", "7", "--csv", path_str(&csv), "-o", path_str(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let hist = std::fs::read_to_string(&csv).unwrap();
    assert!(hist.starts_with("lo,hi,count\n"));

    let t = dir.path().join("t.json");
    assert!(run(&["build", "--family", "block", "--block", "JK_pair", "-o", path_str(&t)]).status.success());
    let fin = dir.path().join("fin.json");
    let o = run(&["flow", path_str(&t), "--final-tensor", path_str(&fin), "--json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "DistinguishedFound");
    assert!(fin.exists());
}

#[test]
fn indecomp_search_reports_split() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("sum.json");
    std::fs::write(
        &f,
        r#"{"p":2,"q":4,"matrices":[[0,1,0,0,-1,0,0,0,0,0,0,0,0,0,0,0],[0,0,0,0,0,0,0,0,0,0,0,1,0,0,-1,0]]}"#,
    )
    .unwrap();
    let o = run(&["indecomp", path_str(&f), "--search", "--json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["certificate"]["verdict"], "Inconclusive");
    assert_eq!(v["decomposition"]["v1"].as_array().map(Vec::len), Some(2));

    let s = dir.path().join("s.json");
    assert!(run(&["build", "--family", "soliton", "-o", path_str(&s)]).status.success());
    let o = run(&["indecomp", path_str(&s), "--search", "--json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["certificate"]["verdict"], "Indecomposable");
    assert!(v["decomposition"].is_null());
}
