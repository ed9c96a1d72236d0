//! Runs the solvers on one instance and writes their traces.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use opweight::baselines::{
    admm_solve, condat_solve, objective, reference_solution_with, AdmmConfig, CondatConfig,
    Reference,
};
use opweight::fixed_point::{BoundPolicy, BoundRegime, WeightDiagnostic, WeightSchedule};
use opweight::operators::{LinearMap, ScaledIdentity, Vector};
use opweight::primal_dual::{
    certify_steps, default_dual_weights, pd_solve, CertificatePolicy, DualTerm, ErrorSchedule,
    MetricSchedule, PdConfig, PdState, SaddleProblem, StepCertificate,
};
use opweight::prox::{BoxIndicator, L1Norm, QuadraticDataFit, ZeroIndicator};
use opweight::ssn::ssn_weight_schedule;
use opweight::trace::{Sampling, SolverTrace, TraceOptions};
use opweight::{Error, Result};

use crate::instance::{make_instance, ExperimentSpec, Instance, IntegrationOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverKind {
    /// Primal–dual iteration with semismooth-Newton weights.
    Proposed,
    /// Primal–dual iteration with scalar weights and metrics.
    ProposedScalar,
    Admm,
    Condat,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] =
        [SolverKind::Proposed, SolverKind::ProposedScalar, SolverKind::Admm, SolverKind::Condat];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Proposed => "proposed",
            SolverKind::ProposedScalar => "proposed_scalar",
            SolverKind::Admm => "admm",
            SolverKind::Condat => "condat",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown solver `{s}`")))
    }
}

/// Step sizes and penalties. `None` selects the documented default.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Primal step of the Newton-weighted solver; default `1/(2λ_min(H*H))`.
    pub ssn_tau: Option<f64>,
    /// Dual step is `ssn_gamma_factor/τ`.
    pub ssn_gamma_factor: f64,
    pub ssn_policy: BoundPolicy,
    pub ssn_certificate: CertificatePolicy,
    pub scalar_tau: f64,
    pub scalar_gamma: f64,
    pub scalar_lambda: f64,
    /// ADMM penalty is `admm_rho_scale · ‖H‖²`; default `1/n`.
    pub admm_rho_scale: Option<f64>,
    pub condat_sigma: f64,
    pub condat_relaxation: f64,
    /// Normalized successive-difference tolerance shared by every solver.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            ssn_tau: None,
            ssn_gamma_factor: 0.8,
            ssn_policy: BoundPolicy::Waive,
            ssn_certificate: CertificatePolicy::Waive,
            scalar_tau: 0.5,
            scalar_gamma: 0.05,
            scalar_lambda: 0.99,
            admm_rho_scale: None,
            condat_sigma: 0.01,
            condat_relaxation: 1.0,
            tol: 1e-14,
            max_iters: 1_000_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub spec: ExperimentSpec,
    pub solvers: Vec<SolverKind>,
    pub time_budget_s: f64,
    /// Stop a solver once its RMSE against the reference reaches this level.
    pub target_rmse: Option<f64>,
    pub params: SolverParams,
    pub parallel: bool,
    pub sampling: Sampling,
    pub record_iterates: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            spec: ExperimentSpec::default(),
            solvers: vec![SolverKind::Proposed, SolverKind::Admm, SolverKind::Condat],
            time_budget_s: 60.0,
            target_rmse: None,
            params: SolverParams::default(),
            parallel: false,
            sampling: Sampling::Every,
            record_iterates: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub x: Vector,
    pub trace: SolverTrace,
    pub certificate: Option<StepCertificate>,
    pub weight_log: Vec<WeightDiagnostic>,
}

#[derive(Debug, Clone)]
pub struct SolverRun {
    pub solver: SolverKind,
    pub outcome: std::result::Result<RunOutput, String>,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub instance: Instance,
    pub reference: Reference,
    pub runs: Vec<SolverRun>,
    pub metadata: Vec<(String, String)>,
}

impl BenchResult {
    pub fn run(&self, solver: SolverKind) -> Option<&RunOutput> {
        self.runs.iter().find(|r| r.solver == solver).and_then(|r| r.outcome.as_ref().ok())
    }

    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(|r| r.diverged)
    }
}

/// An instance together with everything the solvers share.
#[derive(Clone)]
pub struct Prepared {
    pub instance: Instance,
    pub reference: Reference,
    h: Arc<IntegrationOperator>,
    norm_sq: f64,
}

impl Prepared {
    pub fn new(spec: &ExperimentSpec) -> Result<Self> {
        let instance = make_instance(spec)?;
        let h = Arc::new(instance.h);
        let norm_sq = h.norm_sq();
        let rho = norm_sq / spec.n as f64;
        let reference = reference_solution_with(
            h.as_ref(),
            &instance.b,
            spec.mu,
            spec.c,
            spec.d,
            Some(rho),
            1_000_000,
        )?;
        Ok(Self { instance, reference, h, norm_sq })
    }

    pub fn n(&self) -> usize {
        self.instance.b.len()
    }

    /// `λ_min(H*H)`-based default primal step of the Newton-weighted solver.
    pub fn default_ssn_tau(&self) -> f64 {
        0.5 / self.h.gram_min_eigenvalue()
    }

    pub fn saddle_problem(&self, spec: &ExperimentSpec) -> Result<SaddleProblem> {
        let n = self.n();
        let h: Arc<dyn LinearMap> = self.h.clone();
        SaddleProblem::new(
            Arc::new(QuadraticDataFit::with_norm_sq(h, self.instance.b.clone(), self.norm_sq)?),
            Arc::new(L1Norm::new(spec.mu)?),
            vec![DualTerm::new(
                Arc::new(BoxIndicator::new(spec.c, spec.d)?),
                Arc::new(ZeroIndicator),
                Arc::new(ScaledIdentity::identity(n)),
            )],
            Vector::zeros(n),
        )
    }

    /// Metrics `(τI, γI)` for either proposed variant.
    pub fn metrics(&self, solver: SolverKind, params: &SolverParams) -> Result<MetricSchedule> {
        let n = self.n();
        let (tau, gamma) = match solver {
            SolverKind::Proposed => {
                let tau = params.ssn_tau.unwrap_or_else(|| self.default_ssn_tau());
                (tau, params.ssn_gamma_factor / tau)
            }
            SolverKind::ProposedScalar => (params.scalar_tau, params.scalar_gamma),
            other => {
                return Err(Error::InvalidParameter(format!("{other} has no variable metric")))
            }
        };
        MetricSchedule::scalar(n, tau, &[(n, gamma)])
    }

    pub fn certificate(
        &self,
        spec: &ExperimentSpec,
        solver: SolverKind,
        params: &SolverParams,
    ) -> Result<StepCertificate> {
        let problem = self.saddle_problem(spec)?;
        certify_steps(&problem, &self.metrics(solver, params)?, 0, PdConfig::default().eps_fb)
    }

    fn trace_options(&self, spec: &ExperimentSpec, cfg: &BenchConfig) -> TraceOptions {
        let (c, d) = (spec.c, spec.d);
        let (h, b, mu) = (self.h.clone(), self.instance.b.clone(), spec.mu);
        TraceOptions {
            record: true,
            record_iterates: cfg.record_iterates,
            sampling: cfg.sampling,
            reference: Some(self.reference.x.clone()),
            objective: Some(Arc::new(move |x: &Vector| objective(h.as_ref(), &b, mu, x))),
            estimate: Some(Arc::new(move |x: &Vector| x.map(|v| v.clamp(c, d)))),
            time_budget: Some(Duration::from_secs_f64(cfg.time_budget_s)),
            target_rmse: cfg.target_rmse,
        }
    }

    /// Runs one solver from `x0 = 0`.
    pub fn run_solver(&self, solver: SolverKind, cfg: &BenchConfig) -> Result<RunOutput> {
        let spec = &cfg.spec;
        let p = &cfg.params;
        let n = self.n();
        let trace = self.trace_options(spec, cfg);
        let (b, mu, c, d) = (&self.instance.b, spec.mu, spec.c, spec.d);
        match solver {
            SolverKind::Proposed | SolverKind::ProposedScalar => {
                let problem = self.saddle_problem(spec)?;
                let metrics = self.metrics(solver, p)?;
                let (primal, certificate): (WeightSchedule, _) = if solver == SolverKind::Proposed {
                    let tau = metrics.primal_at(0).as_scalar().unwrap_or(f64::NAN);
                    let h: Arc<dyn LinearMap> = self.h.clone();
                    (ssn_weight_schedule(h, tau, mu, p.ssn_policy, 1e-6)?, p.ssn_certificate)
                } else {
                    let s = WeightSchedule::constant(n, 1e-6, p.scalar_lambda)?
                        .with_regime(BoundRegime::Corollary);
                    (s, CertificatePolicy::Enforce)
                };
                let duals = default_dual_weights(&problem)?;
                let pd = PdConfig {
                    max_iters: p.max_iters,
                    tol: p.tol,
                    certificate,
                    trace,
                    ..Default::default()
                };
                let init = PdState::zeros(&problem);
                let sol = pd_solve(&problem, &metrics, &primal, &duals, &ErrorSchedule::zero(), init, &pd)?;
                Ok(RunOutput {
                    x: sol.x,
                    trace: sol.trace,
                    certificate: Some(sol.certificate),
                    weight_log: primal.diagnostics(),
                })
            }
            SolverKind::Admm => {
                let rho = p.admm_rho_scale.unwrap_or(1.0 / n as f64) * self.norm_sq;
                let cfg = AdmmConfig { rho, max_iters: p.max_iters, tol: p.tol, trace };
                let (x, trace) = admm_solve(self.h.as_ref(), b, mu, c, d, &cfg, Vector::zeros(n))?;
                Ok(RunOutput { x, trace, certificate: None, weight_log: Vec::new() })
            }
            SolverKind::Condat => {
                let mut cfg = CondatConfig::with_sigma(self.h.as_ref(), p.condat_sigma);
                cfg.relaxation = p.condat_relaxation;
                cfg.max_iters = p.max_iters;
                cfg.tol = p.tol;
                cfg.trace = trace;
                cfg.check(self.norm_sq)?;
                let (x, trace) = condat_solve(self.h.as_ref(), b, mu, c, d, &cfg, Vector::zeros(n))?;
                Ok(RunOutput { x, trace, certificate: None, weight_log: Vec::new() })
            }
        }
    }
}

fn settle(solver: SolverKind, r: Result<RunOutput>) -> Result<SolverRun> {
    match r {
        Ok(out) => Ok(SolverRun { solver, outcome: Ok(out), diverged: false }),
        Err(e @ Error::Divergence { .. }) => {
            log::error!("{solver} diverged: {e}");
            Ok(SolverRun { solver, outcome: Err(e.to_string()), diverged: true })
        }
        Err(e) => Err(e),
    }
}

/// Generates the instance and reference, checks the step-size certificates,
/// then runs every selected solver.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchResult> {
    let spec = &cfg.spec;
    if !(cfg.time_budget_s > 0.0) {
        return Err(Error::InvalidParameter("time budget must be positive".into()));
    }
    if cfg.solvers.is_empty() {
        return Err(Error::InvalidParameter("no solvers selected".into()));
    }
    let prep = Prepared::new(spec)?;
    let mut metadata = metadata(cfg, &prep);
    for &s in &cfg.solvers {
        if !matches!(s, SolverKind::Proposed | SolverKind::ProposedScalar) {
            continue;
        }
        let cert = prep.certificate(spec, s, &cfg.params)?;
        metadata.push((format!("{s}.certificate.delta"), cert.delta.to_string()));
        metadata.push((format!("{s}.certificate.xi"), cert.xi.to_string()));
        metadata.push((format!("{s}.certificate.pass"), cert.pass.to_string()));
        let enforced = s == SolverKind::ProposedScalar
            || cfg.params.ssn_certificate == CertificatePolicy::Enforce;
        if !cert.pass && enforced {
            return Err(Error::Certificate(format!(
                "{s}: {}",
                cert.reason.unwrap_or_default()
            )));
        }
    }
    let runs = if cfg.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = cfg
                .solvers
                .iter()
                .map(|&s| {
                    let prep = &prep;
                    scope.spawn(move || settle(s, prep.run_solver(s, cfg)))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("solver thread panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        cfg.solvers
            .iter()
            .map(|&s| settle(s, prep.run_solver(s, cfg)))
            .collect::<Result<Vec<_>>>()?
    };
    for r in &runs {
        let status = match &r.outcome {
            Ok(out) => format!("{:?} after {} iterations", out.trace.stop_reason, out.trace.iterations),
            Err(e) => format!("failed: {e}"),
        };
        metadata.push((format!("{}.status", r.solver), status));
    }
    Ok(BenchResult { instance: prep.instance, reference: prep.reference, runs, metadata })
}

fn metadata(cfg: &BenchConfig, prep: &Prepared) -> Vec<(String, String)> {
    let s = &cfg.spec;
    let p = &cfg.params;
    let mut m: Vec<(String, String)> = vec![
        ("n".into(), s.n.to_string()),
        ("snr_db".into(), s.snr_db.to_string()),
        ("mu".into(), s.mu.to_string()),
        ("c".into(), s.c.to_string()),
        ("d".into(), s.d.to_string()),
        ("seed".into(), s.seed.to_string()),
        ("spike_fraction".into(), s.spike_fraction.to_string()),
        ("spikes".into(), s.spikes().to_string()),
        ("amplitude_law".into(), format!("uniform[{}, {}]", 0.5 * s.c, 0.5 * s.d)),
        ("snr_convention".into(), "10 log10(|H x_true|^2 / |noise|^2)".into()),
        ("solvers".into(), cfg.solvers.iter().map(|k| k.name()).collect::<Vec<_>>().join(",")),
        ("time_budget_s".into(), cfg.time_budget_s.to_string()),
        ("target_rmse".into(), cfg.target_rmse.map(|t| t.to_string()).unwrap_or_default()),
        ("parallel".into(), cfg.parallel.to_string()),
        ("ssn_tau".into(), p.ssn_tau.unwrap_or_else(|| prep.default_ssn_tau()).to_string()),
        ("ssn_gamma_factor".into(), p.ssn_gamma_factor.to_string()),
        ("ssn_policy".into(), format!("{:?}", p.ssn_policy).to_lowercase()),
        ("ssn_certificate".into(), format!("{:?}", p.ssn_certificate).to_lowercase()),
        ("scalar_tau".into(), p.scalar_tau.to_string()),
        ("scalar_gamma".into(), p.scalar_gamma.to_string()),
        ("scalar_lambda".into(), p.scalar_lambda.to_string()),
        (
            "admm_rho".into(),
            (p.admm_rho_scale.unwrap_or(1.0 / s.n as f64) * prep.norm_sq).to_string(),
        ),
        ("condat_sigma".into(), p.condat_sigma.to_string()),
        ("condat_relaxation".into(), p.condat_relaxation.to_string()),
        ("tol".into(), p.tol.to_string()),
        ("reference.kkt_residual".into(), prep.reference.kkt_residual.to_string()),
        ("reference.polished".into(), prep.reference.polished.to_string()),
        ("reference.admm_iterations".into(), prep.reference.admm_iterations.to_string()),
        ("reference.nonzeros".into(), prep.reference.x.iter().filter(|v| **v != 0.0).count().to_string()),
        ("true_support".into(), prep.instance.support_size().to_string()),
        ("host.os".into(), std::env::consts::OS.into()),
        ("host.arch".into(), std::env::consts::ARCH.into()),
        (
            "host.threads".into(),
            std::thread::available_parallelism().map(|t| t.get()).unwrap_or(1).to_string(),
        ),
    ];
    if cfg.parallel {
        m.push(("parallel.caveat".into(), "solvers shared the machine; timings are not isolated".into()));
    }
    if let Some(w) = &prep.reference.warning {
        m.push(("reference.warning".into(), w.clone()));
    }
    m
}

/// Writes `instance.meta`, one `<solver>.csv` per successful run and `merged.csv`.
pub fn write_outputs(result: &BenchResult, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut meta = BufWriter::new(File::create(dir.join("instance.meta"))?);
    for (k, v) in &result.metadata {
        writeln!(meta, "{k}={v}")?;
    }
    for r in &result.runs {
        if let Err(e) = &r.outcome {
            writeln!(meta, "{}.failure={e}", r.solver)?;
        }
    }
    meta.flush()?;

    let header = ["k", "time_s", "rmse", "objective", "active_set_size"];
    let mut merged = csv::Writer::from_path(dir.join("merged.csv"))?;
    merged.write_record(std::iter::once("solver").chain(header))?;
    for r in &result.runs {
        let Ok(out) = &r.outcome else { continue };
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", r.solver)))?;
        w.write_record(header)?;
        for rec in &out.trace.records {
            let row = [
                rec.k.to_string(),
                format!("{:.9}", rec.time_s),
                rec.rmse.map(|v| format!("{v:e}")).unwrap_or_default(),
                rec.objective.map(|v| format!("{v:e}")).unwrap_or_default(),
                rec.active_set_size.map(|v| v.to_string()).unwrap_or_default(),
            ];
            w.write_record(&row)?;
            merged.write_record(std::iter::once(r.solver.name().to_string()).chain(row))?;
        }
        w.flush()?;
    }
    merged.flush()
}
