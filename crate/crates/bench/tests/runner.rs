use opweight::trace::Sampling;
use opweight_bench::runner::{run_benchmark, write_outputs, BenchConfig, SolverKind, SolverParams};
use opweight_bench::{rmse, ExperimentSpec};

fn config(n: usize, solvers: Vec<SolverKind>) -> BenchConfig {
    BenchConfig {
        spec: ExperimentSpec { n, seed: 7, ..Default::default() },
        solvers,
        time_budget_s: 30.0,
        sampling: Sampling::LogSpaced { per_decade: 10 },
        ..Default::default()
    }
}

#[test]
fn admm_alone_reaches_the_reference() {
    let res = run_benchmark(&config(200, vec![SolverKind::Admm])).unwrap();
    assert_eq!(res.runs.len(), 1);
    let out = res.run(SolverKind::Admm).unwrap();
    assert!(rmse(&out.x, &res.reference.x).unwrap() <= 1e-6);
    assert!(out.trace.last().unwrap().rmse.unwrap() <= 1e-6);
    assert!(res.reference.polished);
}

#[test]
fn identical_specs_give_identical_iterates() {
    let mut cfg = config(100, vec![SolverKind::Proposed, SolverKind::Condat]);
    cfg.record_iterates = true;
    cfg.params = SolverParams { max_iters: 300, ..Default::default() };
    let a = run_benchmark(&cfg).unwrap();
    let b = run_benchmark(&cfg).unwrap();
    assert_eq!(a.instance, b.instance);
    assert_eq!(a.reference.x, b.reference.x);
    for s in [SolverKind::Proposed, SolverKind::Condat] {
        let (ra, rb) = (a.run(s).unwrap(), b.run(s).unwrap());
        assert_eq!(ra.trace.iterates, rb.trace.iterates, "{s}");
        let ka: Vec<usize> = ra.trace.records.iter().map(|r| r.k).collect();
        let kb: Vec<usize> = rb.trace.records.iter().map(|r| r.k).collect();
        assert_eq!(ka, kb);
    }
}

#[test]
fn newton_active_set_shrinks_to_the_solution_support() {
    let mut cfg = config(400, vec![SolverKind::Proposed]);
    cfg.sampling = Sampling::Every;
    let res = run_benchmark(&cfg).unwrap();
    let out = res.run(SolverKind::Proposed).unwrap();
    let sizes: Vec<usize> = out.trace.records.iter().map(|r| r.active_set_size.unwrap()).collect();
    let nnz = res.reference.x.iter().filter(|v| **v != 0.0).count();
    assert!(sizes[0] > 10 * nnz);
    assert_eq!(*sizes.last().unwrap(), nnz);
    assert!(out.trace.last().unwrap().rmse.unwrap() <= 1e-9);
    let log = &out.weight_log;
    assert!(!log.is_empty());
    assert_eq!(log[0].inactive, Some(sizes[0]));
}

#[test]
fn parallel_mode_runs_every_solver_and_is_flagged() {
    let mut cfg = config(60, SolverKind::ALL.to_vec());
    cfg.parallel = true;
    cfg.target_rmse = Some(1e-6);
    let res = run_benchmark(&cfg).unwrap();
    assert_eq!(res.runs.len(), 4);
    assert!(!res.any_diverged());
    for s in SolverKind::ALL {
        let out = res.run(s).unwrap();
        assert!(out.x.iter().all(|v| (-80.0..=52.0).contains(v)));
        assert!(out.trace.last().unwrap().rmse.unwrap() <= 1e-6, "{s}");
    }
    assert!(res.metadata.iter().any(|(k, _)| k == "parallel.caveat"));
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&res, dir.path()).unwrap();
    assert!(dir.path().join("merged.csv").exists());
}
