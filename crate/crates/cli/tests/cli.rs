use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mfopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfopt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const NO_BINARY_SOLUTION: &str = "mfopt-instance 1
n_vars 1
kind generic
objective 1
1 0
inequalities 0
equalities 1
constraint 2
1 0
-2
";

#[test]
fn gen_solve_and_oracle_agree_on_a_small_kp() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("kp.txt");
    let out = mfopt(&["gen", "--kind", "kp", "--n", "14", "--seed", "3", "--out", s(&inst)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let report = dir.path().join("report.json");
    let out = mfopt(&["solve", s(&inst), "--seed", "1", "--mode", "both", "--out", s(&report)]);
    assert_eq!(code(&out), 0);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["feasible"], true);
    assert_eq!(r["kind"], "kp");
    let solved = r["best_objective"].as_f64().unwrap();

    let out = mfopt(&["oracle", s(&inst)]);
    assert_eq!(code(&out), 0);
    let o: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(o["method"], "Dp");
    assert!(o["optimal_value"].as_f64().unwrap() <= solved);
}

#[test]
fn generic_route_on_a_generated_qkp() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("qkp.txt");
    assert_eq!(code(&mfopt(&["gen", "--kind", "qkp", "--n", "10", "--density", "0.5", "--out", s(&inst)])), 0);
    let out = mfopt(&["solve", s(&inst), "--kind", "generic", "--max-iters", "30"]);
    assert_eq!(code(&out), 0);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["kind"], "generic");
    assert_eq!(code(&mfopt(&["solve", s(&inst), "--kind", "kp"])), 3);
}

#[test]
fn infeasible_only_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("bad.txt");
    fs::write(&inst, NO_BINARY_SOLUTION).unwrap();
    assert_eq!(code(&mfopt(&["oracle", s(&inst)])), 2);
    assert_eq!(code(&mfopt(&["solve", s(&inst), "--max-iters", "5"])), 2);
}

#[test]
fn input_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    assert_eq!(code(&mfopt(&["solve", s(&missing)])), 3);

    let truncated = dir.path().join("t.txt");
    fs::write(&truncated, "mfopt-instance 1\nn_vars 2\nkind kp\n").unwrap();
    let out = mfopt(&["solve", s(&truncated)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));

    assert_eq!(code(&mfopt(&["gen", "--kind", "tsp", "--n", "3"])), 3);
    assert_eq!(code(&mfopt(&["gen", "--kind", "qkp", "--n", "3", "--density", "0"])), 3);
    assert_eq!(code(&mfopt(&["bench"])), 3);
    assert_eq!(code(&mfopt(&["frobnicate"])), 3);
    assert_eq!(code(&mfopt(&["--help"])), 0);
}

#[test]
fn bench_from_flags_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for tag in ["a", "b"] {
        let out_path = dir.path().join(format!("{tag}.csv"));
        let out = mfopt(&[
            "bench", "--kind", "kp", "--n", "12,16", "--instances", "2", "--runs", "2", "--seed", "5",
            "--workers", "2", "--no-timing", "--out", s(&out_path),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2);
        csvs.push((
            fs::read_to_string(&out_path).unwrap(),
            fs::read_to_string(dir.path().join(format!("{tag}.raw.csv"))).unwrap(),
        ));
    }
    assert_eq!(csvs[0], csvs[1]);
    assert!(csvs[0].0.starts_with("# mfopt-bench v1"));
    assert_eq!(csvs[0].1.lines().count(), 2 + 8);
}

#[test]
fn bench_from_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    let out_path = dir.path().join("q.csv");
    fs::write(
        &cfg,
        format!(
            "kind = \"qkp\"\nsizes = [8]\ninstances = 1\nruns = 2\ndensity = 0.5\nout = \"{}\"\n\n[solver]\nmax_outer_iters = 10\nmode = \"sample\"\n",
            s(&out_path)
        ),
    )
    .unwrap();
    let out = mfopt(&["bench", "--config", s(&cfg), "--runs", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let raw = fs::read_to_string(dir.path().join("q.raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 2 + 3);

    fs::write(&cfg, "kind = \"qkp\"\nsizes = [8]\nrunz = 2\n").unwrap();
    assert_eq!(code(&mfopt(&["bench", "--config", s(&cfg)])), 3);
}
