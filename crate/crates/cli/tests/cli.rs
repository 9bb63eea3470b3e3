use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn clr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clr")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn lemma3(dir: &Path, n: usize) -> std::path::PathBuf {
    let o = clr(&["generate", "--lemma3", &n.to_string(), "--out", p(dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    dir.join(format!("lemma3-{n}.clr"))
}

#[test]
fn ip_lkh_on_lemma3_is_optimal_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let inst = lemma3(dir.path(), 5);
    let sol = dir.path().join("sol.txt");
    let o = clr(&["solve", p(&inst), "--variant", "ip-lkh", "--epsilon", "1", "--out", p(&sol)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("cost 2\n"), "{out}");
    assert!(out.contains("feasible_strict true"), "{out}");
    let v = clr(&["verify", p(&inst), p(&sol)]);
    assert!(v.status.success());
}

#[test]
fn verify_rejects_overloaded_facility() {
    let dir = tempfile::tempdir().unwrap();
    let inst = lemma3(dir.path(), 5);
    let sol = dir.path().join("bad.txt");
    fs::write(&sol, "INSTANCE lemma3-5\nOPEN w1\nTOUR w1 v1:1 v2:1 v3:1 v4:1\nTOUR w1 v5:1\nEND\n").unwrap();
    let strict = clr(&["verify", p(&inst), p(&sol)]);
    assert!(!strict.status.success());
    assert!(String::from_utf8_lossy(&strict.stderr).contains("facility w1 load 5"));
    // 5 <= 4 + 1 * 4
    let relaxed = clr(&["verify", p(&inst), p(&sol), "--epsilon", "1"]);
    assert!(relaxed.status.success());
}

#[test]
fn ls_solutions_verify_at_their_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let gen = clr(&["generate", "--n", "50", "--seed", "3", "--out", p(dir.path())]);
    assert!(gen.status.success());
    let inst = dir.path().join("50-3-sss.clr");
    for eps in ["1", "1/2"] {
        let sol = dir.path().join("sol.txt");
        let o = clr(&["solve", p(&inst), "--epsilon", eps, "--bounds", "skip", "--out", p(&sol)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let v = clr(&["verify", p(&inst), p(&sol), "--epsilon", eps]);
        assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stderr));
    }
}

#[test]
fn bench_is_deterministic_across_worker_counts() {
    let insts = tempfile::tempdir().unwrap();
    for (n, k) in [("50", "3"), ("50", "5"), ("100", "3")] {
        let o = clr(&["generate", "--n", n, "--conglomerates", k, "--seed", "7", "--out", p(insts.path())]);
        assert!(o.status.success());
    }
    let a = clr(&["bench", p(insts.path()), "--workers", "2", "--bounds", "heuristic"]);
    let b = clr(&["bench", p(insts.path()), "--workers", "1", "--bounds", "heuristic"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let csv = stdout(&a);
    assert_eq!(csv, stdout(&b));
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("instance,variant,epsilon,cost,mst_bound,cfl_bound"));

    let report = insts.path().join("report.csv");
    fs::write(&report, &csv).unwrap();
    let plot = clr(&["plotdata", p(&report)]);
    assert!(plot.status.success());
    let plot = stdout(&plot);
    assert!(plot.starts_with("variant,instance,gap_lb,max_excess_load\n"));
    assert_eq!(plot.lines().count(), 4);
}

#[test]
fn oracle_and_bounds_on_lemma3() {
    let dir = tempfile::tempdir().unwrap();
    let inst = lemma3(dir.path(), 4);
    let o = clr(&["oracle", p(&inst)]);
    assert!(stdout(&o).contains("opt 2\n"));
    let b = clr(&["bounds", p(&inst)]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&b)).unwrap();
    assert_eq!(report["mst_bound"], 0.0);
    assert!((report["cfl_bound"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn xl_design_writes_27_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = clr(&["generate", "--xl-design", "--json", "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 27);
}

#[test]
fn bad_input_fails_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.clr");
    fs::write(&bad, "NAME x\nVEHICLE_CAPACITY 4\n").unwrap();
    let o = clr(&["solve", p(&bad)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let o = clr(&["solve", p(&bad), "--no-such-flag"]);
    assert!(!o.status.success());
    let o = clr(&["solve", p(&bad), "--variant", "ls-xyz"]);
    assert!(!o.status.success());
}
