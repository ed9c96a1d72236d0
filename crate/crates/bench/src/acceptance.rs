//! The acceptance suite behind `bench verify`: one pass/fail line per
//! criterion, with every tolerance pinned below.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use opweight::fixed_point::{
    check_averaged_contraction, check_weight_sequence, fb_operator, fb_solve, BoundRegime,
    FixedPointConfig, OwkmOperator, WeightSchedule,
};
use opweight::operators::{
    adjoint_check, DenseMap, DiagonalWeight, LinearMap, ScaledIdentity, SpdMetric, Vector,
    WeightOperator,
};
use opweight::primal_dual::{
    certify_steps, default_dual_weights, pd_solve, CertificatePolicy, DualTerm, ErrorSchedule,
    MetricSchedule, PdConfig, PdState, SaddleProblem,
};
use opweight::prox::{
    prox_box, prox_conjugate, prox_l1, BoxIndicator, L1Norm, ProxOracle, QuadraticDataFit,
    SmoothOracle, ZeroFunction, ZeroIndicator,
};
use opweight::ssn::{
    build_ssn_weight, calibrate_closed_form, forward_term, partition_from_forward,
    ssn_oracle_update, ssn_primal_update,
};
use opweight::trace::{Sampling, StopReason, TraceOptions};
use opweight::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::instance::{make_instance, make_integration_operator, ExperimentSpec};
use crate::runner::{BenchConfig, Prepared, SolverKind, SolverParams};

/// Largest tolerated violation of the averaged-operator inequality.
pub const CONTRACTION_TOL: f64 = 1e-10;
pub const CONTRACTION_PAIRS: usize = 1000;
pub const CONTRACTION_SECONDS: f64 = 5.0;
pub const LASSO_1D_TOL: f64 = 1e-10;
pub const LASSO_1D_MAX_ITERS: usize = 500;
pub const REDUCTION_TOL: f64 = 1e-12;
pub const REDUCTION_ITERS: usize = 100;
/// Tolerance on `δ = 4`, `ξ = 2` for `(τ, γ) = (0.1, 0.4)`.
pub const CERTIFICATE_TOL: f64 = 1e-12;
/// Closed form against the prox-based update, relative to `1 + ‖oracle‖_∞`.
pub const SSN_EQUIVALENCE_TOL: f64 = 1e-8;
pub const SSN_INSTANCES: usize = 100;
pub const TARGET_RMSE: f64 = 1e-6;
pub const AGREEMENT_BUDGET_S: f64 = 60.0;
pub const ORDERING_RUNS: usize = 5;
/// Baseline runs are stopped at this multiple of the median Newton-weighted time;
/// a stopped run is slower than the proposed solver by construction.
pub const CENSOR_FACTOR: f64 = 3.0;
pub const SUPPORT_FACTOR: usize = 2;
pub const INVARIANT_SECONDS: f64 = 60.0;
/// Invariant-suite tolerance for identities that hold up to rounding.
pub const INVARIANT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} [{}] {} ({:.2} s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub outcomes: Vec<Outcome>,
}

impl Report {
    pub fn summary(&self) -> String {
        let passed = self.outcomes.iter().filter(|o| o.passed).count();
        format!("{passed}/{} criteria passed", self.outcomes.len())
    }

    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn get(&self, id: u8) -> Option<&Outcome> {
        self.outcomes.iter().find(|o| o.id == id)
    }
}

fn timed(id: u8, title: &'static str, body: impl FnOnce() -> Result<(bool, String)>) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = match body() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Outcome { id, title, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

/// Runs every criterion, handing each outcome to `on_each` as it completes.
pub fn run_all(mut on_each: impl FnMut(&Outcome)) -> Report {
    let criteria: [fn() -> Outcome; 8] = [
        averaged_contraction,
        weighted_convergence,
        scalar_reduction,
        step_certificate,
        ssn_equivalence,
        cross_solver_agreement,
        ordering,
        invariant_suites,
    ];
    let mut report = Report::default();
    for c in criteria {
        let o = c();
        on_each(&o);
        report.outcomes.push(o);
    }
    report
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_diagonal(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(0.05..=0.95))
}

/// Operator-weighted relaxations of nonexpansive maps are `M`-averaged in the
/// `Λ⁻¹` metric with `M = λ_max(Λ)`.
pub fn averaged_contraction() -> Outcome {
    timed(1, "averaged operator inequality", || {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let configs = 20;
        let per = CONTRACTION_PAIRS / configs;
        let mut worst: f64 = f64::NEG_INFINITY;
        let mut pairs = [0usize; 2];
        for t in 0..configs {
            let n = 2 + t % 9;
            let lam = random_diagonal(&mut rng, n);
            let m = lam.max();
            let metric = SpdMetric::diagonal(lam.map(|v| 1.0 / v))?;
            let weight: Arc<dyn WeightOperator> = Arc::new(DiagonalWeight::new(lam)?);

            let h = Arc::new(DenseMap(gaussian_matrix(&mut rng, n + 2, n)));
            let f = QuadraticDataFit::new(h, gaussian(&mut rng, n + 2))?;
            let g = L1Norm::new(rng.random_range(0.01..2.0))?;
            let tau = rng.random_range(0.05..1.95) * f.lipschitz_inv();
            let fb = fb_operator(&f, &g, tau)?;
            let t_fb = OwkmOperator { r: fb, weight: weight.clone() };
            let rep = check_averaged_contraction(&t_fb, &metric, m, per, 200 + t as u64, 5.0)?;
            worst = worst.max(rep.max_violation);
            pairs[0] += rep.pairs;

            let lo = gaussian(&mut rng, n);
            let width = Vector::from_fn(n, |_, _| rng.random_range(0.0..3.0));
            let hi = &lo + width;
            let proj = move |x: &Vector| x.zip_zip_map(&lo, &hi, |v, l, u| v.clamp(l, u));
            let t_box = OwkmOperator { r: proj, weight };
            let rep = check_averaged_contraction(&t_box, &metric, m, per, 300 + t as u64, 5.0)?;
            worst = worst.max(rep.max_violation);
            pairs[1] += rep.pairs;
        }
        Ok((
            worst <= CONTRACTION_TOL,
            format!(
                "{} forward-backward pairs and {} box-projection pairs, max violation {worst:.3e} (tol {CONTRACTION_TOL:e})",
                pairs[0], pairs[1]
            ),
        ))
    })
    .with_deadline(CONTRACTION_SECONDS)
}

impl Outcome {
    fn with_deadline(mut self, seconds: f64) -> Self {
        if self.seconds >= seconds {
            self.passed = false;
            self.detail.push_str(&format!("; exceeded the {seconds} s limit"));
        }
        self
    }
}

/// `‖x − 2‖² + |x|`, minimized at 1.5.
pub fn lasso_1d() -> (QuadraticDataFit, L1Norm) {
    let h = Arc::new(DenseMap(DMatrix::from_element(1, 1, 1.0)));
    (
        QuadraticDataFit::new(h, Vector::from_element(1, 2.0)).expect("valid data"),
        L1Norm::new(1.0).expect("valid weight"),
    )
}

pub fn weighted_convergence() -> Outcome {
    timed(2, "convergence with a varying weight sequence", || {
        let (f, g) = lasso_1d();
        let schedule = WeightSchedule::scalar(1, 0.05, |k| 0.5 - 0.4 * 0.5f64.powi(k.min(1000) as i32))?;
        let horizon = 200;
        let seq = check_weight_sequence(&schedule, horizon)?;
        let cfg = FixedPointConfig {
            max_iters: LASSO_1D_MAX_ITERS,
            residual_tol: 1e-14,
            trace: TraceOptions::default(),
        };
        let (x, trace) = fb_solve(&f, &g, 0.25, &schedule, Vector::zeros(1), &cfg)?;
        let err = (x[0] - 1.5).abs();
        let ok = err <= LASSO_1D_TOL && trace.iterations <= LASSO_1D_MAX_ITERS && seq.passed(BoundRegime::Theorem);
        Ok((
            ok,
            format!(
                "x = {:.15}, |x − 1.5| = {err:.2e} after {} iterations; weight sequence valid over {horizon} steps: {}",
                x[0],
                trace.iterations,
                seq.passed(BoundRegime::Theorem)
            ),
        ))
    })
}

pub fn scalar_reduction() -> Outcome {
    timed(3, "primal-dual reduces to forward-backward", || {
        let n = 20;
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let h = Arc::new(DenseMap(gaussian_matrix(&mut rng, n, n)));
        let smooth = Arc::new(QuadraticDataFit::new(h, gaussian(&mut rng, n))?);
        let l1 = Arc::new(L1Norm::new(0.3)?);
        let problem = SaddleProblem::new(
            smooth.clone(),
            l1.clone(),
            vec![DualTerm::new(
                Arc::new(ZeroFunction),
                Arc::new(ZeroIndicator),
                Arc::new(ScaledIdentity::identity(n)),
            )],
            Vector::zeros(n),
        )?;
        let tau = smooth.lipschitz_inv();
        let metrics = MetricSchedule::scalar(n, tau, &[(n, 0.5)])?;
        let weights = WeightSchedule::constant(n, 0.05, 0.8)?;
        let trace = TraceOptions { record_iterates: true, ..Default::default() };
        let cfg = PdConfig {
            max_iters: REDUCTION_ITERS,
            tol: 0.0,
            certificate: CertificatePolicy::Waive,
            trace: trace.clone(),
            ..Default::default()
        };
        let duals = default_dual_weights(&problem)?;
        let x0 = gaussian(&mut rng, n);
        let init = PdState { x: x0.clone(), u: vec![Vector::zeros(n)] };
        let pd = pd_solve(&problem, &metrics, &weights, &duals, &ErrorSchedule::zero(), init, &cfg)?;
        let fcfg = FixedPointConfig { max_iters: REDUCTION_ITERS, residual_tol: 0.0, trace };
        let (_, fb) = fb_solve(smooth.as_ref(), l1.as_ref(), tau, &weights, x0, &fcfg)?;
        let worst = pd
            .trace
            .iterates
            .iter()
            .zip(&fb.iterates)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        let same_len = pd.trace.iterates.len() == fb.iterates.len() && fb.iterates.len() > REDUCTION_ITERS;
        Ok((
            same_len && worst <= REDUCTION_TOL,
            format!(
                "{} iterates compared, max deviation {worst:.2e} (tol {REDUCTION_TOL:e})",
                fb.iterates.len()
            ),
        ))
    })
}

fn scaled_box_problem(n: usize, h_scale: f64) -> Result<SaddleProblem> {
    let h = Arc::new(ScaledIdentity { dim: n, scale: h_scale });
    SaddleProblem::new(
        Arc::new(QuadraticDataFit::new(h, Vector::zeros(n))?),
        Arc::new(L1Norm::new(1.0)?),
        vec![DualTerm::new(
            Arc::new(BoxIndicator::new(-1.0, 1.0)?),
            Arc::new(ZeroIndicator),
            Arc::new(ScaledIdentity::identity(n)),
        )],
        Vector::zeros(n),
    )
}

pub fn step_certificate() -> Outcome {
    timed(4, "step-size certificate", || {
        let eps = PdConfig::default().eps_fb;
        let cert = |p: &SaddleProblem, tau: f64, gamma: f64| -> Result<_> {
            certify_steps(p, &MetricSchedule::scalar(3, tau, &[(3, gamma)])?, 0, eps)
        };
        let unit = scaled_box_problem(3, 1.0)?;
        let c = cert(&unit, 0.1, 0.4)?;
        let exact = (c.delta - 4.0).abs() <= CERTIFICATE_TOL && (c.xi - 2.0).abs() <= CERTIFICATE_TOL;
        // a nearly flat data term puts μ_c at the cap, so only the sign of δ decides
        let flat = scaled_box_problem(3, 1e-4)?;
        let below = cert(&flat, 0.1, 9.99)?;
        let above = cert(&flat, 0.1, 10.01)?;
        let flips = below.delta > 0.0 && below.pass && above.delta < 0.0 && !above.pass;
        Ok((
            exact && c.pass && flips,
            format!(
                "(0.1, 0.4): δ = {}, ξ = {}, pass = {}; τγ = 0.999: δ = {:.3e}, pass = {}; τγ = 1.001: δ = {:.3e}, pass = {}",
                c.delta, c.xi, c.pass, below.delta, below.pass, above.delta, above.pass
            ),
        ))
    })
}

pub fn ssn_equivalence() -> Outcome {
    timed(5, "closed-form Newton update matches the prox-based update", || {
        let cal = calibrate_closed_form(50, 11)?;
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        let mut worst: f64 = 0.0;
        for t in 0..SSN_INSTANCES {
            let n = 2 + t % 19;
            let mut hm = gaussian_matrix(&mut rng, n, n);
            for mut c in hm.column_iter_mut() {
                let norm = c.norm();
                c /= norm;
            }
            let h: Arc<dyn LinearMap> = Arc::new(DenseMap(hm));
            let b = gaussian(&mut rng, n);
            let x = gaussian(&mut rng, n);
            let u = gaussian(&mut rng, n) * 0.3;
            let tau = rng.random_range(0.1..1.0);
            let mu = rng.random_range(0.05..1.0);
            let (oracle, part) = ssn_oracle_update(&x, tau, mu, h.clone(), &b, &u)?;
            let closed = ssn_primal_update(&x, tau, mu, &h, &b, &u, &part, cal.constants)?;
            worst = worst.max((closed - &oracle).amax() / (1.0 + oracle.amax()));
        }
        let h: Arc<dyn LinearMap> = Arc::new(ScaledIdentity::identity(2));
        let b = Vector::from_row_slice(&[1.0, 0.01]);
        let z = Vector::zeros(2);
        let (two, part) = ssn_oracle_update(&z, 0.5, 0.2, h.clone(), &b, &z)?;
        let closed_two = ssn_primal_update(&z, 0.5, 0.2, &h, &b, &z, &part, cal.constants)?;
        let expected = Vector::from_row_slice(&[0.9, 0.0]);
        let two_ok = (&two - &expected).amax() <= 1e-14 && (&closed_two - &expected).amax() <= 1e-14;
        Ok((
            worst <= SSN_EQUIVALENCE_TOL && two_ok,
            format!(
                "constants {:?} (calibration error {:.1e}); {SSN_INSTANCES} instances, max relative deviation {worst:.2e}; 2-D update [{:.15}, {:.15}]",
                cal.constants, cal.max_error, closed_two[0], closed_two[1]
            ),
        ))
    })
}

fn target_config(spec: ExperimentSpec, solvers: Vec<SolverKind>, budget: f64) -> BenchConfig {
    BenchConfig {
        spec,
        solvers,
        time_budget_s: budget,
        target_rmse: Some(TARGET_RMSE),
        params: SolverParams::default(),
        parallel: false,
        sampling: Sampling::LogSpaced { per_decade: 10 },
        record_iterates: false,
    }
}

/// Time at which the run reached the target RMSE, if it did.
fn time_to_target(prep: &Prepared, solver: SolverKind, cfg: &BenchConfig) -> Result<(Option<f64>, usize, Option<usize>)> {
    let out = prep.run_solver(solver, cfg)?;
    let last = out.trace.last().cloned();
    let reached = last.as_ref().and_then(|r| r.rmse).is_some_and(|e| e <= TARGET_RMSE);
    let t = reached.then(|| out.trace.time_to_rmse(TARGET_RMSE)).flatten();
    Ok((t, out.trace.iterations, last.and_then(|r| r.active_set_size)))
}

pub fn cross_solver_agreement() -> Outcome {
    timed(6, "all solvers agree on the n = 200 instance", || {
        let spec = ExperimentSpec { n: 200, seed: 7, ..Default::default() };
        let prep = Prepared::new(&spec)?;
        let cfg = target_config(spec, SolverKind::ALL.to_vec(), AGREEMENT_BUDGET_S);
        let mut ok = prep.reference.polished;
        let mut parts = vec![format!("reference KKT residual {:.1e}", prep.reference.kkt_residual)];
        for s in SolverKind::ALL {
            let (t, iters, _) = time_to_target(&prep, s, &cfg)?;
            match t {
                Some(t) if t <= AGREEMENT_BUDGET_S => parts.push(format!("{s} {t:.3} s ({iters} it)")),
                _ => {
                    ok = false;
                    parts.push(format!("{s} missed after {iters} it"));
                }
            }
        }
        Ok((ok, parts.join(", ")))
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Result of the timing comparison on the `n = 1000` instance.
#[derive(Debug, Clone)]
pub struct OrderingMeasurement {
    pub ssn_median_s: f64,
    /// `None` for a censored median.
    pub admm_median_s: Option<f64>,
    pub condat_median_s: Option<f64>,
    pub censor_s: f64,
    pub final_inactive: usize,
    pub true_support: usize,
    pub reference_nonzeros: usize,
}

impl OrderingMeasurement {
    pub fn faster(&self) -> bool {
        [self.admm_median_s, self.condat_median_s]
            .iter()
            .all(|t| t.is_none_or(|t| t > self.ssn_median_s))
    }

    pub fn support_ok(&self) -> bool {
        self.final_inactive <= SUPPORT_FACTOR * self.true_support
    }
}

pub fn measure_ordering() -> Result<OrderingMeasurement> {
    let spec = ExperimentSpec { n: 1000, seed: 7, ..Default::default() };
    let prep = Prepared::new(&spec)?;
    let mut cfg = target_config(spec.clone(), vec![], 60.0);
    let mut ssn = Vec::new();
    let mut final_inactive = 0;
    for _ in 0..ORDERING_RUNS {
        let (t, _, active) = time_to_target(&prep, SolverKind::Proposed, &cfg)?;
        ssn.push(t.unwrap_or(f64::INFINITY));
        final_inactive = active.unwrap_or(usize::MAX);
    }
    let ssn_median_s = median(ssn);
    let censor_s = CENSOR_FACTOR * ssn_median_s;
    cfg.time_budget_s = censor_s;
    let baseline = |s| -> Result<Option<f64>> {
        let mut times = Vec::new();
        for _ in 0..ORDERING_RUNS {
            times.push(time_to_target(&prep, s, &cfg)?.0.unwrap_or(f64::INFINITY));
        }
        let m = median(times);
        Ok(m.is_finite().then_some(m))
    };
    let admm_median_s = baseline(SolverKind::Admm)?;
    let condat_median_s = baseline(SolverKind::Condat)?;
    Ok(OrderingMeasurement {
        ssn_median_s,
        admm_median_s,
        condat_median_s,
        censor_s,
        final_inactive,
        true_support: prep.instance.support_size(),
        reference_nonzeros: prep.reference.x.iter().filter(|v| **v != 0.0).count(),
    })
}

/// Verdict and detail line for a timing measurement.
pub fn judge_ordering(m: &OrderingMeasurement) -> (bool, String) {
    let show = |t: Option<f64>| t.map_or(format!("> {:.3} s (censored)", m.censor_s), |t| format!("{t:.3} s"));
    let detail = format!(
        "median times to RMSE {TARGET_RMSE:e}: proposed {:.3} s, admm {}, condat {}; ordering {}; final |I| = {} vs bound {} x {} true spikes ({}); the reference solution has {} nonzeros",
        m.ssn_median_s,
        show(m.admm_median_s),
        show(m.condat_median_s),
        if m.faster() { "holds" } else { "violated" },
        m.final_inactive,
        SUPPORT_FACTOR,
        m.true_support,
        if m.support_ok() { "holds" } else { "violated" },
        m.reference_nonzeros
    );
    (m.faster() && m.support_ok(), detail)
}

pub fn ordering() -> Outcome {
    timed(7, ORDERING_TITLE, || Ok(judge_ordering(&measure_ordering()?)))
}

pub const ORDERING_TITLE: &str = "Newton-weighted solver is fastest on n = 1000";

pub fn invariant_suites() -> Outcome {
    timed(8, "invariant suites", || {
        let mut failures = Vec::new();
        let mut check = |name: &str, ok: bool| {
            if !ok {
                failures.push(name.to_string());
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(808);

        // adjoint consistency
        check("adjoint: integration operator", adjoint_check(&make_integration_operator(1000), 50, 1)?.passed);
        check("adjoint: dense map", adjoint_check(&DenseMap(gaussian_matrix(&mut rng, 30, 20)), 100, 2)?.passed);
        check("adjoint: scaled identity", adjoint_check(&ScaledIdentity { dim: 10, scale: -2.5 }, 100, 3)?.passed);

        // Moreau identity y = prox_{γg*}(y) + γ prox_{g/γ}(y/γ)
        let mut moreau: f64 = 0.0;
        let l1 = L1Norm::new(0.7)?;
        let bx = BoxIndicator::new(-1.5, 0.5)?;
        for _ in 0..1000 {
            let y = gaussian(&mut rng, 8) * 3.0;
            let gamma = rng.random_range(0.1..5.0);
            let a = prox_conjugate(&l1, &y, gamma)? + prox_l1(&(&y / gamma), 0.7 / gamma) * gamma;
            let b = prox_conjugate(&bx, &y, gamma)? + prox_box(&(&y / gamma), -1.5, 0.5)? * gamma;
            let c = prox_conjugate(&l1, &y, gamma)? - y.map(|v| v.clamp(-0.7, 0.7));
            moreau = moreau.max((a - &y).amax()).max((b - &y).amax()).max(c.amax());
        }
        check("Moreau identity", moreau <= INVARIANT_TOL * 10.0);

        // firm nonexpansiveness of the shipped proxes
        let mut firm: f64 = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let x = gaussian(&mut rng, 6) * 2.0;
            let y = gaussian(&mut rng, 6) * 2.0;
            let t = rng.random_range(0.0..2.0);
            for (px, py) in [
                (prox_l1(&x, t), prox_l1(&y, t)),
                (l1.prox_scaled(&x, t)?, l1.prox_scaled(&y, t)?),
                (prox_box(&x, -t, 1.0)?, prox_box(&y, -t, 1.0)?),
            ] {
                let d = &px - &py;
                firm = firm.max(d.norm_squared() - d.dot(&(&x - &y)));
            }
        }
        check("firm nonexpansiveness", firm <= INVARIANT_TOL);

        // partition consistency and block-weight inverse
        let h: Arc<dyn LinearMap> = Arc::new(make_integration_operator(60));
        let b = gaussian(&mut rng, 60);
        let mut partition_ok = true;
        let mut inverse: f64 = 0.0;
        for _ in 0..20 {
            let x = gaussian(&mut rng, 60) * 5.0;
            let u = gaussian(&mut rng, 60);
            let (tau, mu) = (rng.random_range(0.5..50.0), rng.random_range(0.01..0.2));
            let w = forward_term(&x, tau, &h, &b, &u)?;
            let part = partition_from_forward(&w, tau * mu);
            let mut seen = vec![0u8; 60];
            for &i in part.inactive() {
                seen[i] += 1;
                partition_ok &= w[i].abs() > tau * mu;
            }
            for &i in part.active() {
                seen[i] += 1;
                partition_ok &= w[i].abs() <= tau * mu;
            }
            partition_ok &= seen.iter().all(|&s| s == 1);
            let mut perm = part.permutation();
            perm.sort_unstable();
            partition_ok &= perm == (0..60).collect::<Vec<_>>();
            if part.inactive().is_empty() {
                continue;
            }
            let lam = build_ssn_weight(&part, 2.0 * tau, h.clone())?;
            let z = gaussian(&mut rng, 60);
            inverse = inverse.max((lam.forward_apply(&lam.apply(&z)) - &z).norm() / (1.0 + z.norm()));
            inverse = inverse.max((lam.apply(&lam.forward_apply(&z)) - &z).norm() / (1.0 + z.norm()));
            check("adjoint: block weight", adjoint_check(&WeightAsMap(&lam), 20, 4)?.passed);
        }
        check("partition consistency", partition_ok);
        check("block weight inverse", inverse <= 1e-9);

        // benchmark determinism and box feasibility
        let spec = ExperimentSpec { n: 200, seed: 7, ..Default::default() };
        let a = make_instance(&spec)?;
        check("instance determinism", a == make_instance(&spec)?);
        let prep = Prepared::new(&spec)?;
        let cfg = BenchConfig {
            spec: spec.clone(),
            solvers: vec![],
            time_budget_s: 30.0,
            target_rmse: None,
            params: SolverParams { max_iters: 200, ..Default::default() },
            parallel: false,
            sampling: Sampling::Every,
            record_iterates: true,
        };
        for s in SolverKind::ALL {
            let r1 = prep.run_solver(s, &cfg)?;
            let r2 = prep.run_solver(s, &cfg)?;
            check(&format!("{s} determinism"), r1.trace.iterates == r2.trace.iterates && r1.x == r2.x);
            check(
                &format!("{s} box feasibility"),
                r1.x.iter().all(|v| *v >= spec.c - 1e-12 && *v <= spec.d + 1e-12),
            );
            check(
                &format!("{s} trace"),
                r1.trace.records.windows(2).all(|w| w[0].time_s <= w[1].time_s)
                    && r1.trace.records.iter().all(|r| r.rmse.is_some_and(|e| e >= 0.0))
                    && matches!(r1.trace.stop_reason, StopReason::MaxIterations | StopReason::Converged),
            );
        }
        let detail = if failures.is_empty() {
            "adjoint consistency, Moreau identity, firm nonexpansiveness, partition consistency, block-weight inverse, determinism and box feasibility".to_string()
        } else {
            format!("failed: {}", failures.join(", "))
        };
        Ok((failures.is_empty(), detail))
    })
    .with_deadline(INVARIANT_SECONDS)
}

/// A weight operator seen as a linear map, for the adjoint check.
struct WeightAsMap<'a, W: WeightOperator>(&'a W);

impl<W: WeightOperator> LinearMap for WeightAsMap<'_, W> {
    fn rows(&self) -> usize {
        self.0.dim()
    }

    fn cols(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &Vector) -> Vector {
        self.0.apply(x)
    }

    fn adjoint_apply(&self, y: &Vector) -> Vector {
        self.0.adjoint_apply(y)
    }
}
