//! One line per acceptance criterion. Criterion 7 asks for a final linear-solve
//! dimension of at most twice the true spike count; on the seed-7 instance the
//! optimal solution itself has more nonzeros than that, so the support half
//! cannot hold for any solver that terminates on the optimal support. That
//! criterion is reported as FAIL and checked here for the part that can hold.

use opweight_bench::acceptance::{self, judge_ordering, measure_ordering, Outcome, ORDERING_TITLE};

fn main() {
    let mut outcomes: Vec<Outcome> = vec![
        acceptance::averaged_contraction(),
        acceptance::weighted_convergence(),
        acceptance::scalar_reduction(),
        acceptance::step_certificate(),
        acceptance::ssn_equivalence(),
        acceptance::cross_solver_agreement(),
    ];
    let start = std::time::Instant::now();
    let m = measure_ordering().expect("timing measurement");
    let (passed, detail) = judge_ordering(&m);
    outcomes.push(Outcome {
        id: 7,
        title: ORDERING_TITLE,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    });
    outcomes.push(acceptance::invariant_suites());
    for o in &outcomes {
        println!("{o}");
    }
    println!("{}/{} criteria passed", outcomes.iter().filter(|o| o.passed).count(), outcomes.len());

    for o in outcomes.iter().filter(|o| o.id != 7) {
        assert!(o.passed, "{o}");
    }
    assert!(m.faster(), "ordering violated: {m:?}");
    if !m.support_ok() {
        assert_eq!(
            m.final_inactive, m.reference_nonzeros,
            "final |I| should equal the support of the optimal solution"
        );
        assert!(m.reference_nonzeros > 2 * m.true_support);
    }
}
