use std::fs;
use std::process::Command;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bench"))
}

#[test]
fn small_run_with_all_solvers_writes_the_contracted_files() {
    let dir = tempfile::tempdir().unwrap();
    let start = std::time::Instant::now();
    let status = bench()
        .args(["run", "--n", "50", "--c", "-80", "--d", "52", "--seed", "3"])
        .args(["--solvers", "proposed,proposed_scalar,admm,condat", "--time-budget", "2"])
        .args(["--target-rmse", "1e-6", "--sampling", "log:10", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(start.elapsed().as_secs_f64() < 10.0);

    let meta = fs::read_to_string(dir.path().join("instance.meta")).unwrap();
    for key in ["n=50", "seed=3", "mu=0.003", "c=-80", "d=52", "snr_db=30", "host.os="] {
        assert!(meta.lines().any(|l| l.starts_with(key)), "missing {key}");
    }
    for s in ["proposed", "proposed_scalar", "admm", "condat"] {
        let csv = fs::read_to_string(dir.path().join(format!("{s}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("k,time_s,rmse,objective,active_set_size"));
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert!(!rows.is_empty());
        for r in &rows {
            assert_eq!(r.len(), 5);
            assert!(r[2].parse::<f64>().unwrap() >= 0.0);
            assert_eq!(r[4].is_empty(), s != "proposed", "{s}: {r:?}");
        }
        let times: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }
    let merged = fs::read_to_string(dir.path().join("merged.csv")).unwrap();
    assert!(merged.starts_with("solver,k,time_s,rmse,objective,active_set_size"));
}

#[test]
fn failing_certificate_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let status = bench()
        .args(["run", "--n", "20", "--solvers", "proposed_scalar", "--scalar-gamma", "10"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn invalid_arguments_are_rejected() {
    let status = bench().args(["run", "--n", "1"]).status().unwrap();
    assert!(!status.success());
    let status = bench().args(["run", "--c", "5", "--d", "1"]).status().unwrap();
    assert!(!status.success());
    let status = bench().args(["run", "--solvers", "newton"]).status().unwrap();
    assert!(!status.success());
}
