//! Krasnosel'skiĭ–Mann iterations with scalar or operator weights, the relaxed
//! forward–backward solver, and numerical checks of the averagedness and
//! weight-monotonicity hypotheses.

use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::operators::{
    gaussian_vector, seeded_rng, symmetric_extremes, weight_spectral_bounds, ScaledWeight,
    SpdMetric, Vector, WeightOperator, DEFAULT_POWER_ITERATIONS, DENSE_EIGEN_DIM,
};
use crate::prox::{ProxOracle, SmoothOracle};
use crate::trace::{DivergenceGuard, Recorder, SolverTrace, StopReason, TraceOptions};

/// A (possibly fallible) map `R: R^n → R^n`.
pub trait FixedPointOperator: Send + Sync {
    fn apply(&self, x: &Vector) -> Result<Vector>;
}

impl<F> FixedPointOperator for F
where
    F: Fn(&Vector) -> Vector + Send + Sync,
{
    fn apply(&self, x: &Vector) -> Result<Vector> {
        Ok(self(x))
    }
}

fn relaxed(x: &Vector, d: &Vector, lambda: f64) -> Vector {
    x + d.map(|v| lambda * v)
}

/// `x + λ(R(x) − x)`.
pub fn km_step<R: FixedPointOperator + ?Sized>(r: &R, x: &Vector, lambda: f64) -> Result<Vector> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "relaxation must lie in (0, 1), got {lambda}"
        )));
    }
    let rx = r.apply(x)?;
    check_len("R(x)", rx.len(), x.len())?;
    Ok(relaxed(x, &(rx - x), lambda))
}

/// `x + Λ(R(x) − x)`.
pub fn owkm_step<R: FixedPointOperator + ?Sized>(
    r: &R,
    x: &Vector,
    w: &dyn WeightOperator,
) -> Result<Vector> {
    check_len("x", x.len(), w.dim())?;
    let rx = r.apply(x)?;
    check_len("R(x)", rx.len(), x.len())?;
    Ok(x + w.apply(&(rx - x)))
}

/// The averaged map `T = (I − Λ) + ΛR`.
pub struct OwkmOperator<R> {
    pub r: R,
    pub weight: Arc<dyn WeightOperator>,
}

impl<R: FixedPointOperator> FixedPointOperator for OwkmOperator<R> {
    fn apply(&self, x: &Vector) -> Result<Vector> {
        owkm_step(&self.r, x, self.weight.as_ref())
    }
}

/// `x ↦ prox_{τg}(x − τ∇f(x))`.
pub struct ForwardBackward<'a> {
    f: &'a dyn SmoothOracle,
    g: &'a dyn ProxOracle,
    tau: f64,
    warning: Option<String>,
}

impl<'a> ForwardBackward<'a> {
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Set when `τ ≥ 2β`, in which case `R` need not be averaged.
    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }
}

impl FixedPointOperator for ForwardBackward<'_> {
    fn apply(&self, x: &Vector) -> Result<Vector> {
        let grad = self.f.gradient(x);
        check_len("gradient", grad.len(), x.len())?;
        self.g.prox_scaled(&(x - grad * self.tau), self.tau)
    }
}

pub fn fb_operator<'a>(
    f: &'a dyn SmoothOracle,
    g: &'a dyn ProxOracle,
    tau: f64,
) -> Result<ForwardBackward<'a>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step size must be positive, got {tau}"
        )));
    }
    let beta = f.lipschitz_inv();
    let warning = (tau >= 2.0 * beta).then(|| {
        format!("step size {tau:e} is not below 2β = {:e}; R may fail to be averaged", 2.0 * beta)
    });
    Ok(ForwardBackward { f, g, tau, warning })
}

/// Summable nonnegative sequence `η^k`.
#[derive(Debug, Clone, PartialEq)]
pub enum EtaSequence {
    Zero,
    /// `η^k = values[k]`, zero beyond the end.
    Finite(Vec<f64>),
    /// `η^k = scale · ratio^k`.
    Geometric { scale: f64, ratio: f64 },
}

impl EtaSequence {
    pub fn value(&self, k: usize) -> f64 {
        match self {
            EtaSequence::Zero => 0.0,
            EtaSequence::Finite(v) => v.get(k).copied().unwrap_or(0.0),
            EtaSequence::Geometric { scale, ratio } => scale * ratio.powi(k as i32),
        }
    }

    pub fn sum(&self) -> f64 {
        match self {
            EtaSequence::Zero => 0.0,
            EtaSequence::Finite(v) => v.iter().sum(),
            EtaSequence::Geometric { scale, ratio } => scale / (1.0 - ratio),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            EtaSequence::Zero => true,
            EtaSequence::Finite(v) => v.iter().all(|e| e.is_finite() && *e >= 0.0),
            EtaSequence::Geometric { scale, ratio } => {
                scale.is_finite() && *scale >= 0.0 && (0.0..1.0).contains(ratio)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("η sequence is not summable and nonnegative: {self:?}")))
        }
    }
}

/// What to do when a weight's measured bounds leave the admissible interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundPolicy {
    /// Reject the weight.
    Enforce,
    /// Scale the weight down until its upper bound fits.
    Shrink,
    /// Measure and log only.
    Waive,
}

impl std::str::FromStr for BoundPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enforce" => Ok(Self::Enforce),
            "shrink" => Ok(Self::Shrink),
            "waive" => Ok(Self::Waive),
            other => Err(Error::InvalidParameter(format!("unknown bound policy {other:?}"))),
        }
    }
}

/// Admissible interval for the weight bounds: `[ε, 1−ε]` for the single-operator
/// theorem, `[ε, 1]` for the primal–dual corollary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundRegime {
    Theorem,
    Corollary,
}

impl BoundRegime {
    pub fn interval(self, eps: f64) -> (f64, f64) {
        match self {
            BoundRegime::Theorem => (eps, 1.0 - eps),
            BoundRegime::Corollary => (eps, 1.0),
        }
    }
}

/// State available when the weight for iteration `k` is formed.
#[derive(Debug, Clone, Copy)]
pub struct WeightContext<'a> {
    pub k: usize,
    pub x: &'a Vector,
    /// Argument of the primal prox, when the caller has one.
    pub forward: Option<&'a Vector>,
}

pub type WeightGenerator =
    Arc<dyn Fn(&WeightContext<'_>) -> Result<Arc<dyn WeightOperator>> + Send + Sync>;

/// One line of the per-iteration weight log: `k,|I_k|,lambda_min,lambda_max,ridge_used`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDiagnostic {
    pub k: usize,
    pub inactive: Option<usize>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub ridge: f64,
    pub scale: f64,
}

impl WeightDiagnostic {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e}",
            self.k,
            self.inactive.map(|v| v.to_string()).unwrap_or_default(),
            self.lambda_min,
            self.lambda_max,
            self.ridge
        )
    }
}

/// A weight drawn from a schedule after the bound policy was applied.
pub struct WeightDraw {
    pub weight: Arc<dyn WeightOperator>,
    /// Measured `(lower, upper)` of the returned weight, when measured.
    pub bounds: Option<(f64, f64)>,
    pub scale: f64,
}

/// Weight sequence `Λ^k` together with `η^k`, `ε` and an enforcement policy.
#[derive(Clone)]
pub struct WeightSchedule {
    dim: usize,
    generator: WeightGenerator,
    pub eta: EtaSequence,
    pub eps: f64,
    pub policy: BoundPolicy,
    pub regime: BoundRegime,
    /// Measure bounds under [`BoundPolicy::Waive`] as well (for logging).
    pub measure_when_waived: bool,
    pub power_iterations: usize,
    log: Arc<Mutex<Vec<WeightDiagnostic>>>,
}

impl std::fmt::Debug for WeightSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WeightSchedule")
            .field("dim", &self.dim)
            .field("eta", &self.eta)
            .field("eps", &self.eps)
            .field("policy", &self.policy)
            .field("regime", &self.regime)
            .finish_non_exhaustive()
    }
}

impl WeightSchedule {
    pub fn new(dim: usize, eps: f64, generator: WeightGenerator) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidParameter(format!("ε must lie in (0, 1/2), got {eps}")));
        }
        Ok(Self {
            dim,
            generator,
            eta: EtaSequence::Zero,
            eps,
            policy: BoundPolicy::Enforce,
            regime: BoundRegime::Theorem,
            measure_when_waived: false,
            power_iterations: DEFAULT_POWER_ITERATIONS,
            log: Arc::default(),
        })
    }

    /// `Λ^k = λ_k I` for an index-dependent scalar.
    pub fn scalar<F>(dim: usize, eps: f64, lambda: F) -> Result<Self>
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            dim,
            eps,
            Arc::new(move |ctx: &WeightContext<'_>| {
                Ok(Arc::new(crate::operators::ScalarWeight::new(dim, lambda(ctx.k))?)
                    as Arc<dyn WeightOperator>)
            }),
        )
    }

    pub fn constant(dim: usize, eps: f64, lambda: f64) -> Result<Self> {
        Self::scalar(dim, eps, move |_| lambda)
    }

    pub fn with_policy(mut self, policy: BoundPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_regime(mut self, regime: BoundRegime) -> Self {
        self.regime = regime;
        self
    }

    pub fn with_eta(mut self, eta: EtaSequence) -> Result<Self> {
        eta.validate()?;
        self.eta = eta;
        Ok(self)
    }

    pub fn with_logging(mut self, on: bool) -> Self {
        self.measure_when_waived = on;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Raw `Λ^k` before the bound policy.
    pub fn generate(&self, ctx: &WeightContext<'_>) -> Result<Arc<dyn WeightOperator>> {
        let w = (self.generator)(ctx)?;
        check_len("weight", w.dim(), self.dim)?;
        Ok(w)
    }

    /// Measurements are skipped for waived schedules unless logging is on.
    pub fn measures(&self) -> bool {
        self.policy != BoundPolicy::Waive || self.measure_when_waived
    }

    /// `Λ^k` after the bound policy.
    pub fn draw(&self, ctx: &WeightContext<'_>) -> Result<WeightDraw> {
        let w = self.generate(ctx)?;
        self.police(ctx.k, w)
    }

    /// Applies the bound policy to an already generated weight.
    pub fn police(&self, k: usize, w: Arc<dyn WeightOperator>) -> Result<WeightDraw> {
        if !self.measures() {
            return Ok(WeightDraw { weight: w, bounds: None, scale: 1.0 });
        }
        let (lo_t, hi_t) = self.regime.interval(self.eps);
        let measured = weight_spectral_bounds(w.as_ref(), self.power_iterations);
        let draw = match (self.policy, measured) {
            (BoundPolicy::Waive, Ok(b)) => WeightDraw { weight: w, bounds: Some(b), scale: 1.0 },
            (BoundPolicy::Waive, Err(Error::NotPositiveDefinite { rayleigh })) => {
                log::info!("weight at iteration {k} is not positive definite (Rayleigh quotient {rayleigh:e})");
                WeightDraw { weight: w, bounds: Some((rayleigh, f64::NAN)), scale: 1.0 }
            }
            (_, Err(e)) => {
                return Err(Error::WeightBounds { iteration: k, detail: e.to_string() });
            }
            (BoundPolicy::Enforce, Ok((lo, hi))) => {
                if lo < lo_t || hi > hi_t {
                    return Err(Error::WeightBounds {
                        iteration: k,
                        detail: format!(
                            "measured bounds ({lo:e}, {hi:e}) outside [{lo_t}, {hi_t}]; \
                             use the shrink or waive policy"
                        ),
                    });
                }
                WeightDraw { weight: w, bounds: Some((lo, hi)), scale: 1.0 }
            }
            (BoundPolicy::Shrink, Ok((lo, hi))) => {
                let s = if hi > hi_t { hi_t / hi } else { 1.0 };
                if s * lo < lo_t {
                    return Err(Error::WeightBounds {
                        iteration: k,
                        detail: format!(
                            "no scale fits bounds ({lo:e}, {hi:e}) into [{lo_t}, {hi_t}]"
                        ),
                    });
                }
                let weight = if s < 1.0 {
                    Arc::new(ScaledWeight::new(w, s)?) as Arc<dyn WeightOperator>
                } else {
                    w
                };
                WeightDraw { weight, bounds: Some((s * lo, s * hi)), scale: s }
            }
        };
        if let Some((lo, hi)) = draw.bounds {
            let info = draw.weight.block_info();
            let line = WeightDiagnostic {
                k,
                inactive: info.map(|i| i.inactive),
                lambda_min: lo,
                lambda_max: hi,
                ridge: info.map_or(0.0, |i| i.ridge),
                scale: draw.scale,
            };
            log::debug!("weight {}", line.csv_line());
            self.log.lock().expect("weight log poisoned").push(line);
        }
        Ok(draw)
    }

    /// Diagnostics recorded so far, in iteration order.
    pub fn diagnostics(&self) -> Vec<WeightDiagnostic> {
        self.log.lock().expect("weight log poisoned").clone()
    }

    pub fn clear_diagnostics(&self) {
        self.log.lock().expect("weight log poisoned").clear();
    }
}

/// Iteration limits and recording options.
#[derive(Debug, Clone)]
pub struct FixedPointConfig {
    pub max_iters: usize,
    /// Threshold on `‖R(x) − x‖ / (1 + ‖x‖)`.
    pub residual_tol: f64,
    pub trace: TraceOptions,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self { max_iters: 10_000, residual_tol: 1e-10, trace: TraceOptions::default() }
    }
}

impl FixedPointConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.residual_tol >= 0.0) {
            return Err(Error::InvalidParameter("residual_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

fn normalized(d: &Vector, x: &Vector) -> f64 {
    d.norm() / (1.0 + x.norm())
}

/// Generic operator-weighted KM loop on an arbitrary `R`.
pub fn owkm_solve<R: FixedPointOperator + ?Sized>(
    r: &R,
    schedule: &WeightSchedule,
    x0: Vector,
    cfg: &FixedPointConfig,
    warnings: &[String],
) -> Result<(Vector, SolverTrace)> {
    cfg.validate()?;
    check_len("x0", x0.len(), schedule.dim())?;
    let mut rec = Recorder::new(cfg.trace.clone());
    for w in warnings {
        rec.warn(w.clone());
    }
    if schedule.policy == BoundPolicy::Waive {
        rec.warn("weight bound enforcement waived");
    }
    let mut guard = DivergenceGuard::default();
    let mut x = x0;
    let mut k = 0;
    loop {
        let d = r.apply(&x)? - &x;
        let res = normalized(&d, &x);
        if guard.update(res) {
            return Err(Error::Divergence { iteration: k, residual: res });
        }
        let stop = rec.observe(k, &x, res, None);
        if res <= cfg.residual_tol {
            let est = rec.estimate(&x);
            return Ok((est, rec.finish(k, &x, res, None, StopReason::Converged)));
        }
        if let Some(reason) = stop {
            let est = rec.estimate(&x);
            return Ok((est, rec.finish(k, &x, res, None, reason)));
        }
        if k == cfg.max_iters {
            let est = rec.estimate(&x);
            return Ok((est, rec.finish(k, &x, res, None, StopReason::MaxIterations)));
        }
        let w = schedule.generate(&WeightContext { k, x: &x, forward: None })?;
        let paused = schedule.policy == BoundPolicy::Waive;
        if paused {
            rec.pause();
        }
        let draw = schedule.police(k, w)?;
        if paused {
            rec.resume();
        }
        x += draw.weight.apply(&d);
        k += 1;
    }
}

/// Relaxed forward–backward iteration `x^{k+1} = x^k + Λ^k(R(x^k) − x^k)` with
/// `R = prox_{τg}∘(I − τ∇f)`.
pub fn fb_solve(
    f: &dyn SmoothOracle,
    g: &dyn ProxOracle,
    tau: f64,
    schedule: &WeightSchedule,
    x0: Vector,
    cfg: &FixedPointConfig,
) -> Result<(Vector, SolverTrace)> {
    let r = fb_operator(f, g, tau)?;
    let warnings: Vec<String> = r.warning().map(str::to_owned).into_iter().collect();
    owkm_solve(&r, schedule, x0, cfg, &warnings)
}

/// Classical KM loop with scalar relaxations `λ_k`, built on [`km_step`].
pub fn km_solve<R, L>(r: &R, lambda: L, x0: Vector, cfg: &FixedPointConfig) -> Result<(Vector, SolverTrace)>
where
    R: FixedPointOperator + ?Sized,
    L: Fn(usize) -> f64,
{
    cfg.validate()?;
    let mut rec = Recorder::new(cfg.trace.clone());
    let mut x = x0;
    for k in 0..=cfg.max_iters {
        let res = normalized(&(r.apply(&x)? - &x), &x);
        let stop = rec.observe(k, &x, res, None);
        let reason = if res <= cfg.residual_tol {
            Some(StopReason::Converged)
        } else if k == cfg.max_iters {
            Some(StopReason::MaxIterations)
        } else {
            stop
        };
        if let Some(reason) = reason {
            let est = rec.estimate(&x);
            return Ok((est, rec.finish(k, &x, res, None, reason)));
        }
        x = km_step(r, &x, lambda(k))?;
    }
    unreachable!("loop returns at k = max_iters")
}

/// Result of sampling the averagedness inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub pairs: usize,
    /// Largest `(lhs − rhs) / max(1, ‖x − y‖²_metric)` over the samples.
    pub max_violation: f64,
}

impl ContractionReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// Samples `‖Tx − Ty‖² ≤ ‖x − y‖² − ((1 − M)/M)‖(I − T)x − (I − T)y‖²` in the
/// norm induced by `metric` (typically `Λ⁻¹`).
pub fn check_averaged_contraction<T: FixedPointOperator + ?Sized>(
    t: &T,
    metric: &SpdMetric,
    m: f64,
    pairs: usize,
    seed: u64,
    scale: f64,
) -> Result<ContractionReport> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::InvalidParameter(format!("M must lie in (0, 1), got {m}")));
    }
    let n = metric.dim();
    let mut rng = seeded_rng(seed);
    let factor = (1.0 - m) / m;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let x = gaussian_vector(&mut rng, n) * scale;
        let y = gaussian_vector(&mut rng, n) * scale;
        let (tx, ty) = (t.apply(&x)?, t.apply(&y)?);
        let diff = &x - &y;
        let tdiff = &tx - &ty;
        let rdiff = &diff - &tdiff;
        let base = metric.norm_sq(&diff);
        let lhs = metric.norm_sq(&tdiff);
        let rhs = base - factor * metric.norm_sq(&rdiff);
        worst = worst.max((lhs - rhs) / base.max(1.0));
    }
    Ok(ContractionReport { pairs, max_violation: worst })
}

/// Outcome of the checks at one index `k` of a weight sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStepCheck {
    pub k: usize,
    /// Smallest Rayleigh quotient of `(1 + η^k)Λ^{k+1} − Λ^k` found.
    pub min_rayleigh: f64,
    pub monotone: bool,
    /// `(m_k, M_k)` of `Λ^k`.
    pub bounds: (f64, f64),
    pub theorem_bounds: bool,
    pub corollary_bounds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSequenceReport {
    pub steps: Vec<WeightStepCheck>,
}

impl WeightSequenceReport {
    pub fn monotone(&self) -> bool {
        self.steps.iter().all(|s| s.monotone)
    }

    /// Hypotheses with bounds in `[ε, 1 − ε]`.
    pub fn satisfies_theorem(&self) -> bool {
        self.monotone() && self.steps.iter().all(|s| s.theorem_bounds)
    }

    /// Hypotheses with bounds in `[ε, 1]`.
    pub fn satisfies_corollary(&self) -> bool {
        self.monotone() && self.steps.iter().all(|s| s.corollary_bounds)
    }

    /// Passes under the schedule's own regime.
    pub fn passed(&self, regime: BoundRegime) -> bool {
        match regime {
            BoundRegime::Theorem => self.satisfies_theorem(),
            BoundRegime::Corollary => self.satisfies_corollary(),
        }
    }

    pub fn first_failure(&self) -> Option<usize> {
        self.steps
            .iter()
            .find(|s| !(s.monotone && s.corollary_bounds))
            .map(|s| s.k)
    }
}

const RAYLEIGH_SAMPLES: usize = 200;
const PSD_TOLERANCE: f64 = -1e-10;

/// Checks `(1 + η^k)Λ^{k+1} ⪰ Λ^k` and bound membership for `k < horizon`.
/// Weights are generated at the zero iterate.
pub fn check_weight_sequence(schedule: &WeightSchedule, horizon: usize) -> Result<WeightSequenceReport> {
    if horizon < 2 {
        return Err(Error::InvalidParameter("horizon must be at least 2".into()));
    }
    let n = schedule.dim();
    let zero = Vector::zeros(n);
    let at = |k| schedule.generate(&WeightContext { k, x: &zero, forward: None });
    let mut rng = seeded_rng(0x5e9);
    let mut steps = Vec::with_capacity(horizon);
    let mut current = at(0)?;
    for k in 0..horizon {
        let next = at(k + 1)?;
        let eta = schedule.eta.value(k);
        let min_rayleigh = difference_min_rayleigh(current.as_ref(), next.as_ref(), eta, &mut rng)?;
        let bounds = weight_spectral_bounds(current.as_ref(), schedule.power_iterations)
            .unwrap_or_else(|e| match e {
                Error::NotPositiveDefinite { rayleigh } => (rayleigh, f64::NAN),
                _ => (f64::NAN, f64::NAN),
            });
        let within = |(lo, hi): (f64, f64)| bounds.0 >= lo && bounds.1 <= hi;
        steps.push(WeightStepCheck {
            k,
            min_rayleigh,
            monotone: min_rayleigh >= PSD_TOLERANCE,
            bounds,
            theorem_bounds: within(BoundRegime::Theorem.interval(schedule.eps)),
            corollary_bounds: within(BoundRegime::Corollary.interval(schedule.eps)),
        });
        current = next;
    }
    Ok(WeightSequenceReport { steps })
}

fn difference_min_rayleigh(
    cur: &dyn WeightOperator,
    next: &dyn WeightOperator,
    eta: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<f64> {
    if let (Some(a), Some(b)) = (cur.scalar_value(), next.scalar_value()) {
        return Ok((1.0 + eta) * b - a);
    }
    if let (Some(a), Some(b)) = (cur.diagonal(), next.diagonal()) {
        return Ok((b * (1.0 + eta) - a).min());
    }
    let n = cur.dim();
    let diff = |x: &Vector| next.apply(x) * (1.0 + eta) - cur.apply(x);
    let mut lo = f64::INFINITY;
    for _ in 0..RAYLEIGH_SAMPLES {
        let x = gaussian_vector(rng, n);
        lo = lo.min(x.dot(&diff(&x)) / x.norm_squared());
    }
    if n <= DENSE_EIGEN_DIM {
        let m: DMatrix<f64> = next.to_dense()? * (1.0 + eta) - cur.to_dense()?;
        lo = lo.min(symmetric_extremes((&m + m.transpose()) * 0.5).0);
    }
    Ok(lo)
}
