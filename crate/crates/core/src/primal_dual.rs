//! Operator-weighted, variable-metric primal–dual splitting for
//!
//! ```text
//! min_x f(x) + Σ_r ω_r (g_r □ ℓ_r)(L_r x − b_r) + h(x) − <x, z>
//! ```
//!
//! with `f`, `g_r` prox-friendly, `h` smooth and `ℓ_r` strongly convex.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::fixed_point::{
    BoundPolicy, BoundRegime, EtaSequence, WeightContext, WeightSchedule,
};
use crate::operators::{
    gaussian_vector, power_iteration_norm_sq, seeded_rng, LinearMap, MatrixFreeMap, SpdMetric,
    Vector, WeightOperator,
};
use crate::prox::{prox_conjugate_in_metric, ProxOracle, SmoothOracle, StronglyConvexConjugateOracle, RHO_CAP};
use crate::trace::{DivergenceGuard, Recorder, SolverTrace, StopReason, TraceOptions};

/// One dual block `ω_r (g_r □ ℓ_r)(L_r · − b_r)`.
#[derive(Clone)]
pub struct DualTerm {
    pub g: Arc<dyn ProxOracle>,
    pub ell: Arc<dyn StronglyConvexConjugateOracle>,
    pub l: Arc<dyn LinearMap>,
    pub omega: f64,
    pub shift: Vector,
}

impl DualTerm {
    /// `ω = 1`, zero shift.
    pub fn new(
        g: Arc<dyn ProxOracle>,
        ell: Arc<dyn StronglyConvexConjugateOracle>,
        l: Arc<dyn LinearMap>,
    ) -> Self {
        let m = l.rows();
        Self { g, ell, l, omega: 1.0, shift: Vector::zeros(m) }
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }
}

/// Problem data. `f` is the prox-friendly primal term and `h` the smooth one.
#[derive(Clone)]
pub struct SaddleProblem {
    pub h: Arc<dyn SmoothOracle>,
    pub f: Arc<dyn ProxOracle>,
    pub duals: Vec<DualTerm>,
    pub z: Vector,
    l_norms_sq: Vec<f64>,
}

impl std::fmt::Debug for SaddleProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SaddleProblem")
            .field("n", &self.n())
            .field("dual_dims", &self.duals.iter().map(DualTerm::dim).collect::<Vec<_>>())
            .field("weights", &self.duals.iter().map(|d| d.omega).collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl SaddleProblem {
    pub fn new(
        h: Arc<dyn SmoothOracle>,
        f: Arc<dyn ProxOracle>,
        duals: Vec<DualTerm>,
        z: Vector,
    ) -> Result<Self> {
        if duals.is_empty() {
            return Err(Error::ContractViolation("at least one dual term is required".into()));
        }
        let n = z.len();
        let mut total = 0.0;
        let mut l_norms_sq = Vec::with_capacity(duals.len());
        for (r, d) in duals.iter().enumerate() {
            check_len(&format!("L_{r} domain"), d.l.cols(), n)?;
            check_len(&format!("shift b_{r}"), d.shift.len(), d.l.rows())?;
            if !(d.omega > 0.0 && d.omega <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "ω_{r} must lie in (0, 1], got {}",
                    d.omega
                )));
            }
            total += d.omega;
            let norm = power_iteration_norm_sq(d.l.as_ref(), 500, 1e-13);
            if !(norm > 0.0) {
                return Err(Error::ContractViolation(format!("L_{r} is the zero map")));
            }
            l_norms_sq.push(norm);
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights ω_r sum to {total}, not 1")));
        }
        Ok(Self { h, f, duals, z, l_norms_sq })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// `‖L_r‖²` as estimated at construction.
    pub fn l_norm_sq(&self, r: usize) -> f64 {
        self.l_norms_sq[r]
    }

    /// `μ_c = min{β, ρ_1, …, ρ_D}`, with each `ρ_r` capped at [`RHO_CAP`].
    pub fn mu_c(&self) -> f64 {
        self.duals
            .iter()
            .map(|d| d.ell.modulus().min(RHO_CAP))
            .fold(self.h.lipschitz_inv(), f64::min)
    }

    /// Primal objective, when every infimal convolution has a closed form.
    pub fn primal_objective(&self, x: &Vector) -> Option<f64> {
        let mut total = self.f.evaluate(x) + self.h.evaluate(x) - x.dot(&self.z);
        for d in &self.duals {
            let y = d.l.apply(x) - &d.shift;
            total += d.omega * d.ell.infimal_value(d.g.as_ref(), &y)?;
        }
        Some(total)
    }
}

pub type MetricFn = Arc<dyn Fn(usize) -> SpdMetric + Send + Sync>;

/// Metrics `V^k` (primal) and `V_r^k` (duals) with common bounds `(ν̲, ν̄)`.
#[derive(Clone)]
pub struct MetricSchedule {
    primal: MetricFn,
    duals: Vec<MetricFn>,
    bounds: (f64, f64),
    constant: bool,
}

impl std::fmt::Debug for MetricSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricSchedule")
            .field("duals", &self.duals.len())
            .field("bounds", &self.bounds)
            .field("constant", &self.constant)
            .finish_non_exhaustive()
    }
}

impl MetricSchedule {
    /// Iteration-dependent metrics; `bounds` must hold for every `k`.
    pub fn new(primal: MetricFn, duals: Vec<MetricFn>, bounds: (f64, f64)) -> Result<Self> {
        if !(bounds.0 > 0.0 && bounds.0 <= bounds.1 && bounds.1.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid metric bounds {bounds:?}")));
        }
        Ok(Self { primal, duals, bounds, constant: false })
    }

    pub fn constant(primal: SpdMetric, duals: Vec<SpdMetric>) -> Self {
        let lo = duals.iter().map(|m| m.eig_bounds().0).fold(primal.eig_bounds().0, f64::min);
        let hi = duals.iter().map(|m| m.eig_bounds().1).fold(primal.eig_bounds().1, f64::max);
        let primal_fn: MetricFn = Arc::new(move |_| primal.clone());
        let duals = duals
            .into_iter()
            .map(|m| Arc::new(move |_| m.clone()) as MetricFn)
            .collect();
        Self { primal: primal_fn, duals, bounds: (lo, hi), constant: true }
    }

    /// `V = τI`, `V_r = γ_r I`.
    pub fn scalar(n: usize, tau: f64, dual_steps: &[(usize, f64)]) -> Result<Self> {
        let duals = dual_steps
            .iter()
            .map(|&(m, g)| SpdMetric::scalar(m, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::constant(SpdMetric::scalar(n, tau)?, duals))
    }

    pub fn primal_at(&self, k: usize) -> SpdMetric {
        (self.primal)(k)
    }

    pub fn dual_at(&self, r: usize, k: usize) -> SpdMetric {
        (self.duals[r])(k)
    }

    /// `(ν̲, ν̄)`.
    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn num_duals(&self) -> usize {
        self.duals.len()
    }
}

/// Summable error sequence `e^k = c_k · direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSequence {
    pub direction: Vector,
    pub coefficients: EtaSequence,
}

impl ErrorSequence {
    pub fn new(direction: Vector, coefficients: EtaSequence) -> Result<Self> {
        coefficients.validate()?;
        Ok(Self { direction, coefficients })
    }

    pub fn at(&self, k: usize) -> Vector {
        &self.direction * self.coefficients.value(k)
    }
}

/// Errors `a₁, a₂` on the primal prox and gradient, `b₁_r, b₂_r` on the duals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorSchedule {
    pub a1: Option<ErrorSequence>,
    pub a2: Option<ErrorSequence>,
    pub b1: Vec<Option<ErrorSequence>>,
    pub b2: Vec<Option<ErrorSequence>>,
}

/// Error vectors of one iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorsAt {
    pub a1: Option<Vector>,
    pub a2: Option<Vector>,
    pub b1: Vec<Option<Vector>>,
    pub b2: Vec<Option<Vector>>,
}

impl ErrorSchedule {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn at(&self, k: usize) -> ErrorsAt {
        let pick = |v: &Vec<Option<ErrorSequence>>| v.iter().map(|e| e.as_ref().map(|e| e.at(k))).collect();
        ErrorsAt {
            a1: self.a1.as_ref().map(|e| e.at(k)),
            a2: self.a2.as_ref().map(|e| e.at(k)),
            b1: pick(&self.b1),
            b2: pick(&self.b2),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a1.is_none()
            && self.a2.is_none()
            && self.b1.iter().all(Option::is_none)
            && self.b2.iter().all(Option::is_none)
    }
}

fn add_opt(v: &mut Vector, e: Option<&Vector>) {
    if let Some(e) = e {
        *v += e;
    }
}

/// Outcome of the step-size check at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCertificate {
    pub delta: f64,
    pub xi: f64,
    pub mu_c: f64,
    pub eps_fb: f64,
    pub pass: bool,
    pub reason: Option<String>,
}

/// `δ = (Σ_r ω_r ‖V_r^{1/2} L_r V^{1/2}‖²)^{−1/2} − 1`, `ξ = δ/((1 + δ)ν̄)`;
/// passes iff `δ > 0` and `ξ ≥ 1/(2μ_c − ε̃)`.
pub fn certify_steps(
    problem: &SaddleProblem,
    metrics: &MetricSchedule,
    k: usize,
    eps_fb: f64,
) -> Result<StepCertificate> {
    if metrics.num_duals() != problem.duals.len() {
        return Err(Error::ContractViolation(format!(
            "{} dual metrics for {} dual terms",
            metrics.num_duals(),
            problem.duals.len()
        )));
    }
    let v = metrics.primal_at(k);
    check_len("primal metric", v.dim(), problem.n())?;
    let mut sum = 0.0;
    for (r, d) in problem.duals.iter().enumerate() {
        let vr = metrics.dual_at(r, k);
        check_len("dual metric", vr.dim(), d.dim())?;
        let norm = match (v.as_scalar(), vr.as_scalar()) {
            (Some(t), Some(g)) => t * g * problem.l_norm_sq(r),
            _ => {
                let (l, v1, v2) = (d.l.clone(), v.clone(), vr.clone());
                let (l2, w1, w2) = (d.l.clone(), v.clone(), vr.clone());
                let composed = MatrixFreeMap::new(
                    d.dim(),
                    problem.n(),
                    move |x| v2.sqrt_apply(&l.apply(&v1.sqrt_apply(x))),
                    move |y| w1.sqrt_apply(&l2.adjoint_apply(&w2.sqrt_apply(y))),
                );
                power_iteration_norm_sq(&composed, 1000, 1e-12)
            }
        };
        sum += d.omega * norm;
    }
    let delta = sum.powf(-0.5) - 1.0;
    let nu_bar = metrics.bounds().1;
    let xi = delta / ((1.0 + delta) * nu_bar);
    let mu_c = problem.mu_c();
    let denom = 2.0 * mu_c - eps_fb;
    let (pass, reason) = if !(delta > 0.0) {
        (false, Some(format!("δ = {delta:e} is not positive; the metrics are too large")))
    } else if !(denom > 0.0) {
        (false, Some(format!("2μ_c − ε̃ = {denom:e} is not positive")))
    } else if xi < 1.0 / denom {
        (false, Some(format!("ξ = {xi:e} is below 1/(2μ_c − ε̃) = {:e}", 1.0 / denom)))
    } else {
        (true, None)
    };
    Ok(StepCertificate { delta, xi, mu_c, eps_fb, pass, reason })
}

/// Primal iterate and one dual iterate per dual term.
#[derive(Debug, Clone, PartialEq)]
pub struct PdState {
    pub x: Vector,
    pub u: Vec<Vector>,
}

impl PdState {
    pub fn zeros(problem: &SaddleProblem) -> Self {
        Self {
            x: Vector::zeros(problem.n()),
            u: problem.duals.iter().map(|d| Vector::zeros(d.dim())).collect(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.x.norm_squared() + self.u.iter().map(Vector::norm_squared).sum::<f64>()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        ((&self.x - &other.x).norm_squared()
            + self.u.iter().zip(&other.u).map(|(a, b)| (a - b).norm_squared()).sum::<f64>())
        .sqrt()
    }
}

/// Intermediate quantities of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PdStep {
    pub state: PdState,
    /// Dual prox outputs `p_r`.
    pub p_duals: Vec<Vector>,
    /// Reflected duals `ū_r = 2p_r − u_r`.
    pub u_bar: Vec<Vector>,
    /// Argument of the primal prox.
    pub forward: Vector,
    /// Primal prox output `p`.
    pub p: Vector,
}

/// `p_r = prox^{V_r⁻¹}_{g_r*}(u_r + V_r(L_r x − ∇ℓ_r*(u_r) − b₂_r − b_r)) + b₁_r`.
fn dual_prox(
    problem: &SaddleProblem,
    state: &PdState,
    dual_metrics: &[SpdMetric],
    errors: &ErrorsAt,
) -> Result<Vec<Vector>> {
    check_len("dual state", state.u.len(), problem.duals.len())?;
    check_len("dual metrics", dual_metrics.len(), problem.duals.len())?;
    let mut out = Vec::with_capacity(problem.duals.len());
    for (r, d) in problem.duals.iter().enumerate() {
        let u = &state.u[r];
        check_len("dual iterate", u.len(), d.dim())?;
        let mut inner = d.l.apply(&state.x) - d.ell.grad_conjugate(u) - &d.shift;
        if let Some(Some(e)) = errors.b2.get(r) {
            inner -= e;
        }
        let arg = u + dual_metrics[r].apply(&inner);
        let mut p = prox_conjugate_in_metric(d.g.as_ref(), &arg, &dual_metrics[r])?;
        add_opt(&mut p, errors.b1.get(r).and_then(Option::as_ref));
        out.push(p);
    }
    Ok(out)
}

/// `x − V(Σ_r ω_r L_r* ū_r + ∇h(x) + a₂ − z)`.
fn primal_forward(
    problem: &SaddleProblem,
    x: &Vector,
    u_bar: &[Vector],
    v: &SpdMetric,
    errors: &ErrorsAt,
) -> Result<Vector> {
    check_len("primal iterate", x.len(), problem.n())?;
    let mut g = problem.h.gradient(x) - &problem.z;
    for (d, ub) in problem.duals.iter().zip(u_bar) {
        g += d.l.adjoint_apply(ub) * d.omega;
    }
    add_opt(&mut g, errors.a2.as_ref());
    Ok(x - v.apply(&g))
}

fn primal_prox(problem: &SaddleProblem, forward: &Vector, v: &SpdMetric, errors: &ErrorsAt) -> Result<Vector> {
    let mut p = problem.f.prox(forward, &v.inverse())?;
    add_opt(&mut p, errors.a1.as_ref());
    Ok(p)
}

fn dual_phase(
    problem: &SaddleProblem,
    state: &PdState,
    dual_metrics: &[SpdMetric],
    dual_weights: &[Arc<dyn WeightOperator>],
    errors: &ErrorsAt,
) -> Result<(Vec<Vector>, Vec<Vector>, Vec<Vector>)> {
    check_len("dual weights", dual_weights.len(), problem.duals.len())?;
    let p = dual_prox(problem, state, dual_metrics, errors)?;
    let mut u_bar = Vec::with_capacity(p.len());
    let mut u_next = Vec::with_capacity(p.len());
    for ((pr, ur), w) in p.iter().zip(&state.u).zip(dual_weights) {
        u_bar.push(pr * 2.0 - ur);
        u_next.push(ur + w.apply(&(pr - ur)));
    }
    Ok((p, u_bar, u_next))
}

/// One iteration: every dual update (in order of `r`), then the primal update.
pub fn pd_iterate(
    problem: &SaddleProblem,
    state: &PdState,
    primal_metric: &SpdMetric,
    dual_metrics: &[SpdMetric],
    primal_weight: &dyn WeightOperator,
    dual_weights: &[Arc<dyn WeightOperator>],
    errors: &ErrorsAt,
) -> Result<PdStep> {
    let (p_duals, u_bar, u) = dual_phase(problem, state, dual_metrics, dual_weights, errors)?;
    let forward = primal_forward(problem, &state.x, &u_bar, primal_metric, errors)?;
    let p = primal_prox(problem, &forward, primal_metric, errors)?;
    check_len("primal weight", primal_weight.dim(), problem.n())?;
    let x = &state.x + primal_weight.apply(&(&p - &state.x));
    Ok(PdStep { state: PdState { x, u }, p_duals, u_bar, forward, p })
}

/// Largest `‖ΛVx − VΛx‖ / ‖x‖` over random samples.
pub fn commutation_defect(w: &dyn WeightOperator, v: &SpdMetric, trials: usize, seed: u64) -> f64 {
    if w.scalar_value().is_some() || v.as_scalar().is_some() {
        return 0.0;
    }
    let mut rng = seeded_rng(seed);
    (0..trials)
        .map(|_| {
            let x = gaussian_vector(&mut rng, w.dim());
            (w.apply(&v.apply(&x)) - v.apply(&w.apply(&x))).norm() / x.norm()
        })
        .fold(0.0, f64::max)
}

/// Whether a failing certificate stops the solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificatePolicy {
    Enforce,
    Waive,
}

#[derive(Debug, Clone)]
pub struct PdConfig {
    pub max_iters: usize,
    /// Threshold on `‖(x⁺, u⁺) − (x, u)‖ / (1 + ‖(x, u)‖)`.
    pub tol: f64,
    pub eps_fb: f64,
    pub certificate: CertificatePolicy,
    pub trace: TraceOptions,
}

impl Default for PdConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-10,
            eps_fb: 1e-3,
            certificate: CertificatePolicy::Enforce,
            trace: TraceOptions::default(),
        }
    }
}

/// Dual weights `Λ_r = (1 − 1e-6)I`.
pub fn default_dual_weights(problem: &SaddleProblem) -> Result<Vec<WeightSchedule>> {
    problem
        .duals
        .iter()
        .map(|d| {
            Ok(WeightSchedule::constant(d.dim(), 1e-6, 1.0 - 1e-6)?
                .with_regime(BoundRegime::Corollary))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PdSolution {
    /// Primal estimate (after the trace's estimate map, if any).
    pub x: Vector,
    pub state: PdState,
    pub trace: SolverTrace,
    pub certificate: StepCertificate,
}

/// Runs [`pd_iterate`] until the normalized successive difference drops below
/// `cfg.tol`.
pub fn pd_solve(
    problem: &SaddleProblem,
    metrics: &MetricSchedule,
    primal_weights: &WeightSchedule,
    dual_weights: &[WeightSchedule],
    errors: &ErrorSchedule,
    init: PdState,
    cfg: &PdConfig,
) -> Result<PdSolution> {
    if cfg.max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }
    check_len("dual weight schedules", dual_weights.len(), problem.duals.len())?;
    check_len("primal weight", primal_weights.dim(), problem.n())?;
    let mut opts = cfg.trace.clone();
    if opts.objective.is_none() {
        let p = problem.clone();
        if p.primal_objective(&init.x).is_some() {
            opts.objective = Some(Arc::new(move |x: &Vector| p.primal_objective(x).unwrap_or(f64::NAN)));
        }
    }
    let mut rec = Recorder::new(opts);
    let certificate = certify_steps(problem, metrics, 0, cfg.eps_fb)?;
    if !certificate.pass {
        let why = certificate.reason.clone().unwrap_or_default();
        match cfg.certificate {
            CertificatePolicy::Enforce => return Err(Error::Certificate(why)),
            CertificatePolicy::Waive => rec.warn(format!("step-size certificate waived: {why}")),
        }
    }
    for s in std::iter::once(primal_weights).chain(dual_weights) {
        if s.policy == BoundPolicy::Waive {
            rec.warn("weight bound enforcement waived");
            break;
        }
    }
    let mut guard = DivergenceGuard::default();
    let mut state = init;
    let mut k = 0;
    let mut checked_commutation = false;
    loop {
        let v = metrics.primal_at(k);
        let vr: Vec<SpdMetric> = (0..problem.duals.len()).map(|r| metrics.dual_at(r, k)).collect();
        if k > 0 && !metrics.is_constant() {
            rec.pause();
            let cert = certify_steps(problem, metrics, k, cfg.eps_fb)?;
            rec.resume();
            if !cert.pass && cfg.certificate == CertificatePolicy::Enforce {
                return Err(Error::Certificate(format!(
                    "iteration {k}: {}",
                    cert.reason.unwrap_or_default()
                )));
            }
        }
        let errs = errors.at(k);
        let mut dw = Vec::with_capacity(dual_weights.len());
        for (r, s) in dual_weights.iter().enumerate() {
            let ctx = WeightContext { k, x: &state.u[r], forward: None };
            dw.push(draw_paused(s, &ctx, &mut rec)?);
        }
        let (_, u_bar, u_next) = dual_phase(problem, &state, &vr, &dw, &errs)?;
        let forward = primal_forward(problem, &state.x, &u_bar, &v, &errs)?;
        let p = primal_prox(problem, &forward, &v, &errs)?;
        let ctx = WeightContext { k, x: &state.x, forward: Some(&forward) };
        let w = draw_paused(primal_weights, &ctx, &mut rec)?;
        if !checked_commutation {
            checked_commutation = true;
            rec.pause();
            let defect = commutation_defect(w.as_ref(), &v, 20, 3);
            rec.resume();
            if defect > 1e-10 {
                rec.warn(format!("primal weight and metric do not commute (defect {defect:e})"));
            }
        }
        let active = w.block_info().map(|b| b.inactive);
        let next = PdState { x: &state.x + w.apply(&(&p - &state.x)), u: u_next };
        let res = next.distance(&state) / (1.0 + state.norm_sq().sqrt());
        if guard.update(res) {
            return Err(Error::Divergence { iteration: k, residual: res });
        }
        let stop = rec.observe(k, &state.x, res, active);
        let reason = if res <= cfg.tol {
            Some(StopReason::Converged)
        } else if k + 1 >= cfg.max_iters {
            Some(StopReason::MaxIterations)
        } else {
            stop
        };
        state = next;
        k += 1;
        if let Some(reason) = reason {
            let x = rec.estimate(&state.x);
            let trace = rec.finish(k, &state.x, res, active, reason);
            return Ok(PdSolution { x, state, trace, certificate });
        }
    }
}

fn draw_paused(
    schedule: &WeightSchedule,
    ctx: &WeightContext<'_>,
    rec: &mut Recorder,
) -> Result<Arc<dyn WeightOperator>> {
    let w = schedule.generate(ctx)?;
    if schedule.policy == BoundPolicy::Waive {
        rec.pause();
        let d = schedule.police(ctx.k, w);
        rec.resume();
        Ok(d?.weight)
    } else {
        Ok(schedule.police(ctx.k, w)?.weight)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_point::{fb_solve, FixedPointConfig};
    use crate::operators::{DenseMap, DiagonalWeight, ScalarWeight, ScaledIdentity};
    use crate::prox::{BoxIndicator, L1Norm, QuadraticDataFit, ZeroFunction, ZeroIndicator};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn lasso_1d(lo: f64, hi: f64) -> SaddleProblem {
        let h = Arc::new(DenseMap(DMatrix::from_element(1, 1, 1.0)));
        SaddleProblem::new(
            Arc::new(QuadraticDataFit::new(h, v(&[2.0])).unwrap()),
            Arc::new(L1Norm::new(1.0).unwrap()),
            vec![DualTerm::new(
                Arc::new(BoxIndicator::new(lo, hi).unwrap()),
                Arc::new(ZeroIndicator),
                Arc::new(ScaledIdentity::identity(1)),
            )],
            Vector::zeros(1),
        )
        .unwrap()
    }

    fn scalar(n: usize, v: f64) -> Arc<dyn WeightOperator> {
        Arc::new(ScalarWeight::new(n, v).unwrap())
    }

    #[test]
    fn certificate_examples() {
        let p = lasso_1d(-10.0, 10.0);
        let m = MetricSchedule::scalar(1, 0.1, &[(1, 0.4)]).unwrap();
        let c = certify_steps(&p, &m, 0, 1e-3).unwrap();
        assert_relative_eq!(c.delta, 4.0, epsilon = 1e-12);
        assert_relative_eq!(c.xi, 2.0, epsilon = 1e-12);
        assert_relative_eq!(c.mu_c, 0.5);
        assert!(c.pass);

        let m = MetricSchedule::scalar(1, 0.5, &[(1, 2.0)]).unwrap();
        let c = certify_steps(&p, &m, 0, 1e-3).unwrap();
        assert_relative_eq!(c.delta, 0.0, epsilon = 1e-15);
        assert!(!c.pass);
        assert!(c.reason.is_some());
    }

    #[test]
    fn certificate_matches_the_composed_norm_for_diagonal_metrics() {
        let p = lasso_1d(-10.0, 10.0);
        let m = MetricSchedule::constant(
            SpdMetric::diagonal(v(&[0.1])).unwrap(),
            vec![SpdMetric::diagonal(v(&[0.4])).unwrap()],
        );
        let c = certify_steps(&p, &m, 0, 1e-3).unwrap();
        assert_relative_eq!(c.delta, 4.0, epsilon = 1e-10);
    }

    #[test]
    fn certificate_is_monotone_in_the_step_sizes() {
        let p = lasso_1d(-10.0, 10.0);
        let mut last = f64::INFINITY;
        for g in [0.1, 0.2, 0.4, 0.8, 1.6] {
            let m = MetricSchedule::scalar(1, 0.1, &[(1, g)]).unwrap();
            let xi = certify_steps(&p, &m, 0, 1e-3).unwrap().xi;
            assert!(xi <= last);
            last = xi;
        }
    }

    #[test]
    fn one_iteration_by_hand() {
        let p = lasso_1d(-1.0, 1.0);
        let vm = SpdMetric::scalar(1, 0.25).unwrap();
        let st = PdState { x: v(&[0.0]), u: vec![v(&[0.0])] };
        let step = pd_iterate(
            &p,
            &st,
            &vm,
            std::slice::from_ref(&vm),
            scalar(1, 0.5).as_ref(),
            &[scalar(1, 1.0)],
            &ErrorsAt::default(),
        )
        .unwrap();
        assert_eq!(step.state.u[0], v(&[0.0]));
        assert_eq!(step.u_bar[0], v(&[0.0]));
        assert_relative_eq!(step.p[0], 0.75);
        assert_relative_eq!(step.state.x[0], 0.375);

        let mut errs = ErrorsAt::default();
        errs.b1 = vec![Some(v(&[0.1]))];
        let perturbed = pd_iterate(
            &p,
            &st,
            &vm,
            std::slice::from_ref(&vm),
            scalar(1, 0.5).as_ref(),
            &[scalar(1, 1.0)],
            &errs,
        )
        .unwrap();
        let gap = perturbed.state.distance(&step.state);
        assert!(gap > 0.0 && gap <= 0.1 * (1.0 + 2.0 * 0.25) + 1e-15);
    }

    #[test]
    fn saddle_point_is_a_fixed_point() {
        let p = lasso_1d(-10.0, 10.0);
        let vm = SpdMetric::scalar(1, 0.25).unwrap();
        let st = PdState { x: v(&[1.5]), u: vec![v(&[0.0])] };
        let step = pd_iterate(
            &p,
            &st,
            &vm,
            std::slice::from_ref(&vm),
            scalar(1, 0.5).as_ref(),
            &[scalar(1, 1.0)],
            &ErrorsAt::default(),
        )
        .unwrap();
        assert_relative_eq!(step.state.x, st.x, epsilon = 1e-15);
        assert_eq!(step.state.u, st.u);
    }

    #[test]
    fn solves_the_one_dimensional_lasso() {
        let p = lasso_1d(-10.0, 10.0);
        let m = MetricSchedule::scalar(1, 0.25, &[(1, 0.25)]).unwrap();
        let pw = WeightSchedule::constant(1, 0.05, 0.5).unwrap();
        let dw = default_dual_weights(&p).unwrap();
        let cfg = PdConfig { tol: 1e-12, ..Default::default() };
        let sol = pd_solve(&p, &m, &pw, &dw, &ErrorSchedule::zero(), PdState::zeros(&p), &cfg).unwrap();
        assert!(sol.trace.converged());
        assert_relative_eq!(sol.x[0], 1.5, epsilon = 1e-10);
        let obj = sol.trace.last().unwrap().objective.unwrap();
        assert_relative_eq!(obj, 0.25 + 1.5, epsilon = 1e-9);

        let init = sol.state.clone();
        let again = pd_solve(&p, &m, &pw, &dw, &ErrorSchedule::zero(), init, &cfg).unwrap();
        assert_eq!(again.trace.iterations, 1);
    }

    #[test]
    fn active_box_is_respected() {
        // minimizer of (x-2)^2 + |x| over [-1, 1] is 1
        let p = lasso_1d(-1.0, 1.0);
        let m = MetricSchedule::scalar(1, 0.25, &[(1, 0.25)]).unwrap();
        let pw = WeightSchedule::constant(1, 0.05, 0.5).unwrap();
        let dw = default_dual_weights(&p).unwrap();
        let cfg = PdConfig { tol: 1e-13, max_iters: 100_000, ..Default::default() };
        let sol = pd_solve(&p, &m, &pw, &dw, &ErrorSchedule::zero(), PdState::zeros(&p), &cfg).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn certificate_failure_is_enforced() {
        let p = lasso_1d(-10.0, 10.0);
        let m = MetricSchedule::scalar(1, 1.0, &[(1, 2.0)]).unwrap();
        let pw = WeightSchedule::constant(1, 0.05, 0.5).unwrap();
        let dw = default_dual_weights(&p).unwrap();
        let err = pd_solve(&p, &m, &pw, &dw, &ErrorSchedule::zero(), PdState::zeros(&p), &PdConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Certificate(_)));
    }

    #[test]
    fn reduces_to_forward_backward() {
        let n = 6;
        let mut rng = seeded_rng(4);
        let hm = DMatrix::from_iterator(n, n, gaussian_vector(&mut rng, n * n).iter().copied());
        let b = gaussian_vector(&mut rng, n);
        let h = Arc::new(DenseMap(hm));
        let smooth = Arc::new(QuadraticDataFit::new(h, b).unwrap());
        let l1 = Arc::new(L1Norm::new(0.3).unwrap());
        let p = SaddleProblem::new(
            smooth.clone(),
            l1.clone(),
            vec![DualTerm::new(Arc::new(ZeroFunction), Arc::new(ZeroIndicator), Arc::new(ScaledIdentity::identity(n)))],
            Vector::zeros(n),
        )
        .unwrap();
        let tau = 0.5 * smooth.lipschitz_inv();
        let m = MetricSchedule::scalar(n, tau, &[(n, 0.1)]).unwrap();
        let trace = TraceOptions { record_iterates: true, ..Default::default() };
        let pw = WeightSchedule::constant(n, 0.05, 0.7).unwrap();
        let cfg = PdConfig { max_iters: 50, tol: 0.0, certificate: CertificatePolicy::Waive, trace: trace.clone(), ..Default::default() };
        let dw = default_dual_weights(&p).unwrap();
        let pd = pd_solve(&p, &m, &pw, &dw, &ErrorSchedule::zero(), PdState::zeros(&p), &cfg).unwrap();
        let fcfg = FixedPointConfig { max_iters: 50, residual_tol: 0.0, trace };
        let (_, fb) = fb_solve(smooth.as_ref(), l1.as_ref(), tau, &pw, Vector::zeros(n), &fcfg).unwrap();
        assert_eq!(pd.trace.iterates.len(), fb.iterates.len());
        for (a, b) in pd.trace.iterates.iter().zip(&fb.iterates) {
            assert!((a - b).amax() <= 1e-12);
        }
    }

    #[test]
    fn dual_updates_precede_the_primal_update() {
        let n = 2;
        let h = Arc::new(DenseMap(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0])));
        let p = SaddleProblem::new(
            Arc::new(QuadraticDataFit::new(h, v(&[1.0, -2.0])).unwrap()),
            Arc::new(L1Norm::new(0.1).unwrap()),
            vec![DualTerm::new(
                Arc::new(BoxIndicator::new(-0.2, 0.3).unwrap()),
                Arc::new(ZeroIndicator),
                Arc::new(DenseMap(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]))),
            )],
            Vector::zeros(n),
        )
        .unwrap();
        let vm = SpdMetric::scalar(n, 0.1).unwrap();
        let st = PdState { x: v(&[0.7, -0.4]), u: vec![v(&[0.2, 0.1])] };
        let w = scalar(n, 0.6);
        let dw = [scalar(n, 0.9)];
        let step = pd_iterate(&p, &st, &vm, std::slice::from_ref(&vm), w.as_ref(), &dw, &ErrorsAt::default()).unwrap();

        // primal first, then duals from the new primal
        let fw = primal_forward(&p, &st.x, &st.u, &vm, &ErrorsAt::default()).unwrap();
        let pp = primal_prox(&p, &fw, &vm, &ErrorsAt::default()).unwrap();
        let x_first = &st.x + w.apply(&(pp - &st.x));
        let swapped = PdState { x: x_first.clone(), u: st.u.clone() };
        let (_, _, u_after) = dual_phase(&p, &swapped, std::slice::from_ref(&vm), &dw, &ErrorsAt::default()).unwrap();
        assert!((x_first - &step.state.x).norm() > 1e-6 || (&u_after[0] - &step.state.u[0]).norm() > 1e-6);
    }

    #[test]
    fn scalar_and_diagonal_weights_commute_with_metrics() {
        let d = DiagonalWeight::new(v(&[0.2, 0.5, 0.9])).unwrap();
        let vm = SpdMetric::diagonal(v(&[1.0, 3.0, 0.5])).unwrap();
        assert_eq!(commutation_defect(&d, &vm, 100, 1), 0.0);
        let s = ScalarWeight::new(3, 0.4).unwrap();
        assert_eq!(commutation_defect(&s, &vm, 100, 1), 0.0);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let h = Arc::new(DenseMap(DMatrix::from_element(1, 1, 1.0)));
        let mut d = DualTerm::new(Arc::new(ZeroFunction), Arc::new(ZeroIndicator), Arc::new(ScaledIdentity::identity(1)));
        d.omega = 0.5;
        let r = SaddleProblem::new(
            Arc::new(QuadraticDataFit::new(h, v(&[1.0])).unwrap()),
            Arc::new(ZeroFunction),
            vec![d],
            Vector::zeros(1),
        );
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
        let zero = DualTerm::new(Arc::new(ZeroFunction), Arc::new(ZeroIndicator), Arc::new(ScaledIdentity { dim: 1, scale: 0.0 }));
        let h = Arc::new(DenseMap(DMatrix::from_element(1, 1, 1.0)));
        let r = SaddleProblem::new(
            Arc::new(QuadraticDataFit::new(h, v(&[1.0])).unwrap()),
            Arc::new(ZeroFunction),
            vec![zero],
            Vector::zeros(1),
        );
        assert!(matches!(r, Err(Error::ContractViolation(_))));
    }
}
