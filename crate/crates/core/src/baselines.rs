//! Reference solvers for `min ‖b − Hx‖² + μ‖x‖₁ s.t. x ∈ [c, d]ⁿ`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{check_len, Error, Result};
use crate::operators::{power_iteration_norm_sq, LinearMap, Vector};
use crate::prox::{prox_l1, quadratic_gradient};
use crate::trace::{DivergenceGuard, Recorder, SolverTrace, StopReason, TraceOptions};

fn check_instance<M: LinearMap + ?Sized>(h: &M, b: &Vector, mu: f64, c: f64, d: f64) -> Result<()> {
    check_len("data", b.len(), h.rows())?;
    if c > d {
        return Err(Error::InvalidBox { lower: c, upper: d });
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("μ must be nonnegative, got {mu}")));
    }
    Ok(())
}

fn clamp(x: &Vector, c: f64, d: f64) -> Vector {
    x.map(|v| v.clamp(c, d))
}

/// `‖b − Hx‖² + μ‖x‖₁` (the box is not checked).
pub fn objective<M: LinearMap + ?Sized>(h: &M, b: &Vector, mu: f64, x: &Vector) -> f64 {
    (b - h.apply(x)).norm_squared() + mu * x.lp_norm(1)
}

/// Natural residual `‖x − clamp(soft(x − ∇f(x), μ), c, d)‖`; zero exactly at the minimizer.
pub fn kkt_residual<M: LinearMap + ?Sized>(
    h: &M,
    b: &Vector,
    mu: f64,
    c: f64,
    d: f64,
    x: &Vector,
) -> Result<f64> {
    let g = quadratic_gradient(h, b, x)?;
    let step = clamp(&prox_l1(&(x - g), mu), c, d);
    Ok((x - step).norm())
}

#[derive(Debug, Clone)]
pub struct AdmmConfig {
    pub rho: f64,
    pub max_iters: usize,
    /// Threshold on `max(‖r‖, ‖s‖) / (1 + ‖x‖)` (primal and dual residuals).
    pub tol: f64,
    pub trace: TraceOptions,
}

impl AdmmConfig {
    /// `ρ = scale · ‖H‖²`.
    pub fn scaled<M: LinearMap + ?Sized>(h: &M, scale: f64) -> Self {
        Self { rho: scale * power_iteration_norm_sq(h, 500, 1e-10), ..Default::default() }
    }
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self { rho: 1.0, max_iters: 100_000, tol: 1e-10, trace: TraceOptions::default() }
    }
}

struct AdmmState {
    x: Vector,
    z1: Vector,
    z2: Vector,
    y1: Vector,
    y2: Vector,
}

struct Admm {
    htb2: Vector,
    chol: Cholesky<f64, Dyn>,
    rho: f64,
    mu: f64,
    c: f64,
    d: f64,
}

impl Admm {
    fn new<M: LinearMap + ?Sized>(h: &M, b: &Vector, mu: f64, c: f64, d: f64, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("ADMM penalty must be positive, got {rho}")));
        }
        let dense = h.to_dense()?;
        let n = dense.ncols();
        let system: DMatrix<f64> = dense.tr_mul(&dense) * 2.0 + DMatrix::identity(n, n) * (2.0 * rho);
        let chol = Cholesky::new(system)
            .ok_or_else(|| Error::Factorization("2H*H + 2ρI is not positive definite".into()))?;
        Ok(Self { htb2: h.adjoint_apply(b) * 2.0, chol, rho, mu, c, d })
    }

    fn start(&self, x0: Vector) -> AdmmState {
        let n = x0.len();
        AdmmState { z1: x0.clone(), z2: x0.clone(), x: x0, y1: Vector::zeros(n), y2: Vector::zeros(n) }
    }

    /// One sweep; returns the combined residual.
    fn step(&self, s: &mut AdmmState) -> f64 {
        let rhs = &self.htb2 + (&s.z1 - &s.y1 + &s.z2 - &s.y2) * self.rho;
        s.x = self.chol.solve(&rhs);
        let z1 = prox_l1(&(&s.x + &s.y1), self.mu / self.rho);
        let z2 = clamp(&(&s.x + &s.y2), self.c, self.d);
        let r1 = &s.x - &z1;
        let r2 = &s.x - &z2;
        let dual = ((&z1 - &s.z1) + (&z2 - &s.z2)).norm() * self.rho;
        s.y1 += &r1;
        s.y2 += &r2;
        s.z1 = z1;
        s.z2 = z2;
        let primal = (r1.norm_squared() + r2.norm_squared()).sqrt();
        primal.max(dual) / (1.0 + s.x.norm())
    }

    fn estimate(&self, s: &AdmmState) -> Vector {
        clamp(&s.z1, self.c, self.d)
    }
}

/// Consensus ADMM: `x` carries the data term, `z₁` the `ℓ₁` term and `z₂` the
/// box. The `x`-update uses a one-time dense Cholesky factor of `2H*H + 2ρI`.
/// Returns `clamp(z₁)`.
#[allow(clippy::too_many_arguments)]
pub fn admm_solve<M: LinearMap + ?Sized>(
    h: &M,
    b: &Vector,
    mu: f64,
    c: f64,
    d: f64,
    cfg: &AdmmConfig,
    x0: Vector,
) -> Result<(Vector, SolverTrace)> {
    check_instance(h, b, mu, c, d)?;
    check_len("x0", x0.len(), h.cols())?;
    let mut rec = Recorder::new(cfg.trace.clone());
    let admm = Admm::new(h, b, mu, c, d, cfg.rho)?;
    let mut s = admm.start(x0);
    let mut guard = DivergenceGuard::default();
    for k in 0..cfg.max_iters.max(1) {
        let res = admm.step(&mut s);
        if guard.update(res) {
            return Err(Error::Divergence { iteration: k, residual: res });
        }
        let est = admm.estimate(&s);
        let stop = rec.observe(k + 1, &est, res, None);
        let reason = if res <= cfg.tol {
            Some(StopReason::Converged)
        } else if k + 1 == cfg.max_iters {
            Some(StopReason::MaxIterations)
        } else {
            stop
        };
        if let Some(reason) = reason {
            return Ok((est.clone(), rec.finish(k + 1, &est, res, None, reason)));
        }
    }
    unreachable!("loop returns at max_iters")
}

#[derive(Debug, Clone)]
pub struct CondatConfig {
    pub sigma: f64,
    pub tau: f64,
    /// Relaxation `ρ ∈ (0, 2)`.
    pub relaxation: f64,
    pub max_iters: usize,
    /// Threshold on `‖(x⁺, y⁺) − (x, y)‖ / (1 + ‖(x, y)‖)`.
    pub tol: f64,
    pub trace: TraceOptions,
    /// Initial dual iterate (zero when absent).
    pub y0: Option<Vector>,
}

impl CondatConfig {
    /// `σ = τ` with `τ(σ + ‖H‖²) = 0.9`.
    pub fn saturating<M: LinearMap + ?Sized>(h: &M) -> Self {
        let half_lf = power_iteration_norm_sq(h, 500, 1e-10);
        let tau = 0.5 * (-half_lf + (half_lf * half_lf + 3.6).sqrt());
        Self { sigma: tau, tau, ..Default::default() }
    }

    /// Given `σ`, the `τ` with `τ(σ + ‖H‖²) = 0.9`.
    pub fn with_sigma<M: LinearMap + ?Sized>(h: &M, sigma: f64) -> Self {
        let half_lf = power_iteration_norm_sq(h, 500, 1e-10);
        Self { sigma, tau: 0.9 / (sigma + half_lf), ..Default::default() }
    }

    /// Checks `τ(σ‖L‖² + L_f/2) < 1` with `L = I`, `L_f = 2‖H‖²`, and the
    /// relaxation bound `ρ < 2 − (L_f/2)(1/τ − σ)⁻¹`.
    pub fn check(&self, h_norm_sq: f64) -> Result<()> {
        if !(self.sigma > 0.0 && self.tau > 0.0) {
            return Err(Error::InvalidParameter("Condat step sizes must be positive".into()));
        }
        let lhs = self.tau * (self.sigma + h_norm_sq);
        if lhs >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "τ(σ‖L‖² + 1/(2β)) = {lhs} must be below 1"
            )));
        }
        let bound = 2.0 - h_norm_sq / (1.0 / self.tau - self.sigma);
        if !(self.relaxation > 0.0 && self.relaxation < bound) {
            return Err(Error::InvalidParameter(format!(
                "relaxation {} must lie in (0, {bound})",
                self.relaxation
            )));
        }
        Ok(())
    }
}

impl Default for CondatConfig {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            tau: 0.1,
            relaxation: 1.0,
            max_iters: 1_000_000,
            tol: 1e-10,
            trace: TraceOptions::default(),
            y0: None,
        }
    }
}

/// Relaxed Condat iteration for `f + g + h∘L`, `f = ‖b − H·‖²`, `g = μ‖·‖₁`,
/// `h` the box indicator, `L = I`. Returns `clamp(x)`.
#[allow(clippy::too_many_arguments)]
pub fn condat_solve<M: LinearMap + ?Sized>(
    h: &M,
    b: &Vector,
    mu: f64,
    c: f64,
    d: f64,
    cfg: &CondatConfig,
    x0: Vector,
) -> Result<(Vector, SolverTrace)> {
    check_instance(h, b, mu, c, d)?;
    check_len("x0", x0.len(), h.cols())?;
    cfg.check(power_iteration_norm_sq(h, 500, 1e-10))?;
    let mut rec = Recorder::new(cfg.trace.clone());
    let n = x0.len();
    let mut x = x0;
    let mut y = cfg.y0.clone().unwrap_or_else(|| Vector::zeros(n));
    check_len("y0", y.len(), n)?;
    let (tau, sigma, rho) = (cfg.tau, cfg.sigma, cfg.relaxation);
    let mut guard = DivergenceGuard::default();
    for k in 0..cfg.max_iters.max(1) {
        let g = quadratic_gradient(h, b, &x)?;
        let xt = prox_l1(&(&x - (g + &y) * tau), tau * mu);
        // prox_{σh*}(v) = v − σ·clamp(v/σ)
        let v = &y + (&xt * 2.0 - &x) * sigma;
        let yt = &v - clamp(&(&v / sigma), c, d) * sigma;
        let dx = (xt - &x) * rho;
        let dy = (yt - &y) * rho;
        let scale = 1.0 + (x.norm_squared() + y.norm_squared()).sqrt();
        let res = (dx.norm_squared() + dy.norm_squared()).sqrt() / scale;
        x += dx;
        y += dy;
        if guard.update(res) {
            return Err(Error::Divergence { iteration: k, residual: res });
        }
        let est = clamp(&x, c, d);
        let stop = rec.observe(k + 1, &est, res, None);
        let reason = if res <= cfg.tol {
            Some(StopReason::Converged)
        } else if k + 1 == cfg.max_iters {
            Some(StopReason::MaxIterations)
        } else {
            stop
        };
        if let Some(reason) = reason {
            return Ok((est.clone(), rec.finish(k + 1, &est, res, None, reason)));
        }
    }
    unreachable!("loop returns at max_iters")
}

/// High-accuracy solution together with how it was certified.
#[derive(Debug, Clone)]
pub struct Reference {
    pub x: Vector,
    pub kkt_residual: f64,
    pub polished: bool,
    pub admm_iterations: usize,
    pub warning: Option<String>,
}

/// Tolerance on [`kkt_residual`] for a polished reference.
pub const REFERENCE_KKT_TOL: f64 = 1e-10;

/// Solves the KKT system on the free support of `x` (nonzero and strictly
/// inside the box) with signs frozen and box-active coordinates at their bound.
pub fn polish<M: LinearMap + ?Sized>(
    h: &M,
    b: &Vector,
    mu: f64,
    c: f64,
    d: f64,
    x: &Vector,
) -> Result<Vector> {
    let n = x.len();
    let bound_tol = 1e-9 * (1.0 + c.abs().max(d.abs()));
    let mut out = Vector::zeros(n);
    let mut free = Vec::new();
    for i in 0..n {
        if x[i] == 0.0 {
            continue;
        }
        if (x[i] - c).abs() <= bound_tol && c != 0.0 {
            out[i] = c;
        } else if (x[i] - d).abs() <= bound_tol && d != 0.0 {
            out[i] = d;
        } else {
            free.push(i);
        }
    }
    if free.is_empty() {
        return Ok(out);
    }
    let cols = h.columns(&free);
    let resid = b - h.apply(&out);
    let mut rhs = cols.tr_mul(&resid);
    for (k, &i) in free.iter().enumerate() {
        rhs[k] -= 0.5 * mu * x[i].signum();
    }
    let gram = cols.tr_mul(&cols);
    let sol = Cholesky::new(gram)
        .map(|ch| ch.solve(&rhs))
        .or_else(|| gram_lu_solve(&cols, &rhs))
        .ok_or_else(|| Error::Factorization("support Gram is singular".into()))?;
    for (k, &i) in free.iter().enumerate() {
        out[i] = sol[k];
    }
    Ok(out)
}

fn gram_lu_solve(cols: &DMatrix<f64>, rhs: &Vector) -> Option<Vector> {
    cols.tr_mul(cols).lu().solve(rhs)
}

/// ADMM at tightening tolerances, attempting a support polish after each stage.
/// Falls back to the last ADMM iterate, with a warning, if no polish certifies.
pub fn reference_solution<M: LinearMap + ?Sized>(
    h: &M,
    b: &Vector,
    mu: f64,
    c: f64,
    d: f64,
) -> Result<Reference> {
    reference_solution_with(h, b, mu, c, d, None, 1_000_000)
}

/// [`reference_solution`] with an explicit ADMM penalty and iteration budget.
#[allow(clippy::too_many_arguments)]
pub fn reference_solution_with<M: LinearMap + ?Sized>(
    h: &M,
    b: &Vector,
    mu: f64,
    c: f64,
    d: f64,
    rho: Option<f64>,
    max_iters: usize,
) -> Result<Reference> {
    check_instance(h, b, mu, c, d)?;
    let n = h.cols();
    let norm_sq = power_iteration_norm_sq(h, 500, 1e-10);
    let rho = rho.unwrap_or(norm_sq / n as f64);
    let admm = Admm::new(h, b, mu, c, d, rho)?;
    let mut s = admm.start(Vector::zeros(n));
    let mut iterations = 0;
    let mut last = f64::INFINITY;
    for stage_tol in [1e-4, 1e-6, 1e-8, 1e-10, 1e-12, 1e-13] {
        while iterations < max_iters {
            last = admm.step(&mut s);
            iterations += 1;
            if last <= stage_tol {
                break;
            }
        }
        let raw = admm.estimate(&s);
        if let Ok(p) = polish(h, b, mu, c, d, &raw) {
            let r = kkt_residual(h, b, mu, c, d, &p)?;
            if r <= REFERENCE_KKT_TOL {
                return Ok(Reference { x: p, kkt_residual: r, polished: true, admm_iterations: iterations, warning: None });
            }
        }
        if iterations >= max_iters {
            break;
        }
    }
    let x = admm.estimate(&s);
    let r = kkt_residual(h, b, mu, c, d, &x)?;
    let warning = format!(
        "reference polish did not certify; using ADMM output (residual {last:e}, KKT residual {r:e})"
    );
    log::warn!("{warning}");
    Ok(Reference { x, kkt_residual: r, polished: false, admm_iterations: iterations, warning: Some(warning) })
}
