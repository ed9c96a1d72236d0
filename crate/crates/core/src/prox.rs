//! Proximal, gradient and conjugate-gradient oracles.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::operators::{power_iteration_norm_sq, LinearMap, SpdMetric, Vector};

/// Modulus reported for `δ_{0}`, whose strong-convexity modulus is unbounded.
pub const RHO_CAP: f64 = 1e6;

/// A proper lsc convex function reachable through its proximal operator.
pub trait ProxOracle: Send + Sync {
    /// `g(x)`, possibly `+∞`.
    fn evaluate(&self, x: &Vector) -> f64;

    /// `argmin_u g(u) + ½‖x − u‖²_metric`.
    fn prox(&self, x: &Vector, metric: &SpdMetric) -> Result<Vector>;

    /// `prox_{τg}(x)`, i.e. the prox under the metric `(1/τ)·I`.
    fn prox_scaled(&self, x: &Vector, tau: f64) -> Result<Vector> {
        self.prox(x, &SpdMetric::scalar(x.len(), 1.0 / tau)?)
    }
}

/// Per-coordinate thresholds for a separable prox under a scalar or diagonal
/// metric; dense metrics couple the coordinates and are rejected.
fn separable_scales(metric: &SpdMetric, n: usize, what: &str) -> Result<Vector> {
    check_len("prox argument", n, metric.dim())?;
    match metric {
        SpdMetric::Scalar { value, .. } => Ok(Vector::from_element(n, *value)),
        SpdMetric::Diagonal(d) => Ok(d.clone()),
        SpdMetric::Dense(_) => Err(Error::UnsupportedMetric(format!(
            "{what} prox is only available under scalar or diagonal metrics"
        ))),
    }
}

/// Soft threshold `max(|x_i| − t, 0)·sgn(x_i)`; `|x_i| = t` maps to zero.
pub fn prox_l1(x: &Vector, threshold: f64) -> Vector {
    assert!(threshold >= 0.0, "soft threshold must be nonnegative");
    x.map(|v| soft_threshold(v, threshold))
}

#[inline]
pub(crate) fn soft_threshold(v: f64, t: f64) -> f64 {
    (v.abs() - t).max(0.0) * v.signum()
}

/// Coordinate-wise projection onto `[c, d]`.
pub fn prox_box(x: &Vector, c: f64, d: f64) -> Result<Vector> {
    if c > d {
        return Err(Error::InvalidBox { lower: c, upper: d });
    }
    Ok(x.map(|v| v.clamp(c, d)))
}

/// `g = μ‖·‖₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Norm {
    pub weight: f64,
}

impl L1Norm {
    pub fn new(weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "l1 weight must be nonnegative, got {weight}"
            )));
        }
        Ok(Self { weight })
    }
}

impl ProxOracle for L1Norm {
    fn evaluate(&self, x: &Vector) -> f64 {
        self.weight * x.lp_norm(1)
    }

    fn prox(&self, x: &Vector, metric: &SpdMetric) -> Result<Vector> {
        if let Some(v) = metric.as_scalar() {
            check_len("prox argument", x.len(), metric.dim())?;
            return Ok(prox_l1(x, self.weight / v));
        }
        let d = separable_scales(metric, x.len(), "l1")?;
        Ok(Vector::from_fn(x.len(), |i, _| {
            soft_threshold(x[i], self.weight / d[i])
        }))
    }
}

/// Indicator of the box `[lower, upper]^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxIndicator {
    lower: f64,
    upper: f64,
}

impl BoxIndicator {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower > upper {
            return Err(Error::InvalidBox { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }
}

impl ProxOracle for BoxIndicator {
    fn evaluate(&self, x: &Vector) -> f64 {
        if x.iter().all(|v| (self.lower..=self.upper).contains(v)) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, x: &Vector, metric: &SpdMetric) -> Result<Vector> {
        separable_scales(metric, x.len(), "box")?;
        prox_box(x, self.lower, self.upper)
    }
}

/// `g ≡ 0`; its prox is the identity under every metric.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroFunction;

impl ProxOracle for ZeroFunction {
    fn evaluate(&self, _x: &Vector) -> f64 {
        0.0
    }

    fn prox(&self, x: &Vector, metric: &SpdMetric) -> Result<Vector> {
        check_len("prox argument", x.len(), metric.dim())?;
        Ok(x.clone())
    }
}

/// `prox_{γ g*}(y)` through the Moreau decomposition
/// `prox_{γg*}(y) = y − γ·prox_{g/γ}(y/γ)`.
pub fn prox_conjugate(g: &dyn ProxOracle, y: &Vector, gamma: f64) -> Result<Vector> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "conjugate prox step must be positive, got {gamma}"
        )));
    }
    let inner = g.prox(&(y / gamma), &SpdMetric::scalar(y.len(), gamma)?)?;
    Ok(y - inner * gamma)
}

/// `prox^{V⁻¹}_{g*}(y)` for `V = γ·I`. Other metrics are not supported.
pub fn prox_conjugate_in_metric(
    g: &dyn ProxOracle,
    y: &Vector,
    metric: &SpdMetric,
) -> Result<Vector> {
    match metric.as_scalar() {
        Some(gamma) => {
            check_len("conjugate prox argument", y.len(), metric.dim())?;
            prox_conjugate(g, y, gamma)
        }
        None => Err(Error::UnsupportedMetric(
            "conjugate proxes are only evaluated under scalar metrics".into(),
        )),
    }
}

/// A convex differentiable function with a `1/β`-Lipschitz gradient.
pub trait SmoothOracle: Send + Sync {
    fn evaluate(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    /// `β` such that `∇f` is `(1/β)`-Lipschitz.
    fn lipschitz_inv(&self) -> f64;
}

/// `2H*(Hx − b)`, the gradient of `‖b − Hx‖²`.
pub fn quadratic_gradient<M: LinearMap + ?Sized>(h: &M, b: &Vector, x: &Vector) -> Result<Vector> {
    check_len("x", x.len(), h.cols())?;
    check_len("b", b.len(), h.rows())?;
    let r = h.apply(x) - b;
    Ok(h.adjoint_apply(&r) * 2.0)
}

/// `f(x) = ‖b − Hx‖²` with `β = 1/(2‖H‖²)`.
#[derive(Clone)]
pub struct QuadraticDataFit {
    h: Arc<dyn LinearMap>,
    b: Vector,
    norm_sq: f64,
}

impl QuadraticDataFit {
    /// Estimates `‖H‖²` by power iteration.
    pub fn new(h: Arc<dyn LinearMap>, b: Vector) -> Result<Self> {
        let norm_sq = power_iteration_norm_sq(&h, 10_000, 1e-13);
        Self::with_norm_sq(h, b, norm_sq)
    }

    pub fn with_norm_sq(h: Arc<dyn LinearMap>, b: Vector, norm_sq: f64) -> Result<Self> {
        check_len("b", b.len(), h.rows())?;
        if !(norm_sq > 0.0) {
            return Err(Error::InvalidParameter("data operator must be nonzero".into()));
        }
        Ok(Self { h, b, norm_sq })
    }

    pub fn operator(&self) -> &Arc<dyn LinearMap> {
        &self.h
    }

    pub fn data(&self) -> &Vector {
        &self.b
    }

    pub fn operator_norm_sq(&self) -> f64 {
        self.norm_sq
    }
}

impl std::fmt::Debug for QuadraticDataFit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuadraticDataFit")
            .field("rows", &self.h.rows())
            .field("cols", &self.h.cols())
            .field("norm_sq", &self.norm_sq)
            .finish()
    }
}

impl SmoothOracle for QuadraticDataFit {
    fn evaluate(&self, x: &Vector) -> f64 {
        (&self.b - self.h.apply(x)).norm_squared()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let r = self.h.apply(x) - &self.b;
        self.h.adjoint_apply(&r) * 2.0
    }

    fn lipschitz_inv(&self) -> f64 {
        1.0 / (2.0 * self.norm_sq)
    }
}

/// Gradient access to the conjugate `ℓ*` of a `ρ`-strongly convex `ℓ`.
pub trait StronglyConvexConjugateOracle: Send + Sync {
    fn grad_conjugate(&self, u: &Vector) -> Vector;
    fn modulus(&self) -> f64;

    /// `(g □ ℓ)(y)` when it has a closed form.
    fn infimal_value(&self, _g: &dyn ProxOracle, _y: &Vector) -> Option<f64> {
        None
    }
}

/// `ℓ = δ_{0}`: `ℓ* ≡ 0`, `g □ ℓ = g`, modulus capped at [`RHO_CAP`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroIndicator;

impl StronglyConvexConjugateOracle for ZeroIndicator {
    fn grad_conjugate(&self, u: &Vector) -> Vector {
        Vector::zeros(u.len())
    }

    fn modulus(&self) -> f64 {
        RHO_CAP
    }

    fn infimal_value(&self, g: &dyn ProxOracle, y: &Vector) -> Option<f64> {
        Some(g.evaluate(y))
    }
}

/// `ℓ = (ρ/2)‖·‖²`, so `∇ℓ*(u) = u/ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPenalty {
    rho: f64,
}

impl QuadraticPenalty {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "strong convexity modulus must be positive, got {rho}"
            )));
        }
        Ok(Self { rho })
    }
}

impl StronglyConvexConjugateOracle for QuadraticPenalty {
    fn grad_conjugate(&self, u: &Vector) -> Vector {
        u / self.rho
    }

    fn modulus(&self) -> f64 {
        self.rho
    }

    fn infimal_value(&self, g: &dyn ProxOracle, y: &Vector) -> Option<f64> {
        // Moreau envelope: min_v g(v) + (ρ/2)‖y − v‖², attained at prox_{g/ρ}(y).
        let p = g.prox(y, &SpdMetric::scalar(y.len(), self.rho).ok()?).ok()?;
        Some(g.evaluate(&p) + 0.5 * self.rho * (y - p).norm_squared())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{gaussian_vector, seeded_rng, DenseMap, ScaledIdentity};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn integration3() -> DenseMap {
        DenseMap(DMatrix::from_fn(3, 3, |i, j| if j <= i { 1.0 / 3.0 } else { 0.0 }))
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(prox_l1(&v(&[3.0, -0.5, 1.0]), 1.0), v(&[2.0, 0.0, 0.0]));
        assert_eq!(prox_l1(&Vector::zeros(4), 0.3), Vector::zeros(4));
    }

    #[test]
    fn soft_threshold_matches_grid_search() {
        // argmin 0.7|u| + ½(u + 2.5)² over u in [-4, 4] with step 1e-7
        let obj = |u: f64| 0.7 * u.abs() + 0.5 * (u + 2.5).powi(2);
        let steps = 80_000_000_u64;
        let (mut best_u, mut best) = (-4.0, obj(-4.0));
        for k in 0..=steps {
            let u = -4.0 + k as f64 * 1e-7;
            let val = obj(u);
            if val < best {
                best = val;
                best_u = u;
            }
        }
        let p = prox_l1(&v(&[-2.5]), 0.7)[0];
        assert_relative_eq!(p, -1.8, epsilon = 1e-12);
        assert!((p - best_u).abs() <= 1e-6);
    }

    #[test]
    fn box_projection_examples() {
        assert_eq!(
            prox_box(&v(&[-100.0, 10.0, 60.0]), -80.0, 52.0).unwrap(),
            v(&[-80.0, 10.0, 52.0])
        );
        let inside = v(&[-3.0, 0.0, 51.9]);
        assert_eq!(prox_box(&inside, -80.0, 52.0).unwrap(), inside);
        assert_eq!(prox_box(&v(&[52.0001]), -80.0, 52.0).unwrap(), v(&[52.0]));
        assert!(matches!(
            prox_box(&inside, 1.0, 0.0),
            Err(Error::InvalidBox { .. })
        ));
    }

    #[test]
    fn conjugate_prox_examples() {
        let unit_box = BoxIndicator::new(-1.0, 1.0).unwrap();
        assert_eq!(prox_conjugate(&unit_box, &v(&[100.0]), 1.0).unwrap(), v(&[99.0]));
        assert_eq!(
            prox_conjugate(&L1Norm::new(0.4).unwrap(), &v(&[0.0]), 1.0).unwrap(),
            v(&[0.0])
        );
        let exp_box = BoxIndicator::new(-80.0, 52.0).unwrap();
        assert_eq!(prox_conjugate(&exp_box, &v(&[104.0]), 2.0).unwrap(), v(&[0.0]));
    }

    #[test]
    fn conjugate_of_l1_is_projection_onto_linf_ball() {
        // (μ‖·‖₁)* is the indicator of [−μ, μ]^n, whose prox is a clamp for any γ.
        let g = L1Norm::new(0.3).unwrap();
        let mut rng = seeded_rng(5);
        for gamma in [0.1, 1.0, 7.5] {
            let y = gaussian_vector(&mut rng, 20);
            let p = prox_conjugate(&g, &y, gamma).unwrap();
            let oracle = y.map(|t| t.clamp(-0.3, 0.3));
            assert!((p - oracle).amax() <= 1e-14);
        }
    }

    #[test]
    fn conjugate_prox_rejects_nonscalar_metrics() {
        let g = L1Norm::new(1.0).unwrap();
        let m = SpdMetric::diagonal(v(&[1.0, 2.0])).unwrap();
        assert!(matches!(
            prox_conjugate_in_metric(&g, &v(&[1.0, 1.0]), &m),
            Err(Error::UnsupportedMetric(_))
        ));
        let s = SpdMetric::scalar(2, 2.0).unwrap();
        assert_eq!(
            prox_conjugate_in_metric(&g, &v(&[3.0, 0.5]), &s).unwrap(),
            v(&[1.0, 0.5])
        );
    }

    #[test]
    fn moreau_identity_at_unit_step() {
        let oracles: [Box<dyn ProxOracle>; 2] = [
            Box::new(L1Norm::new(0.8).unwrap()),
            Box::new(BoxIndicator::new(-0.5, 1.5).unwrap()),
        ];
        let mut rng = seeded_rng(77);
        let unit = SpdMetric::identity(8).unwrap();
        for g in &oracles {
            for _ in 0..1000 {
                let y = gaussian_vector(&mut rng, 8) * 3.0;
                let sum = g.prox(&y, &unit).unwrap() + prox_conjugate(g.as_ref(), &y, 1.0).unwrap();
                assert!((sum - &y).amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn scaled_metric_reduction_is_exact() {
        let mut rng = seeded_rng(8);
        let g = L1Norm::new(0.6).unwrap();
        let bx = BoxIndicator::new(-1.0, 2.0).unwrap();
        for tau in [0.25, 0.5, 2.0] {
            let x = gaussian_vector(&mut rng, 10) * 2.0;
            let m = SpdMetric::scalar(10, 1.0 / tau).unwrap();
            assert_eq!(g.prox(&x, &m).unwrap(), prox_l1(&x, tau * 0.6));
            assert_eq!(bx.prox(&x, &m).unwrap(), prox_box(&x, -1.0, 2.0).unwrap());
            assert_eq!(ZeroFunction.prox(&x, &m).unwrap(), x);
        }
    }

    #[test]
    fn l1_prox_satisfies_optimality_under_diagonal_metric() {
        let g = L1Norm::new(0.5).unwrap();
        let d = v(&[0.5, 1.0, 4.0, 2.0]);
        let m = SpdMetric::diagonal(d.clone()).unwrap();
        let x = v(&[1.2, -0.1, 0.2, -3.0]);
        let p = g.prox(&x, &m).unwrap();
        // d_i (x_i − p_i) ∈ 0.5·∂|p_i|
        for i in 0..4 {
            let s = d[i] * (x[i] - p[i]);
            if p[i] == 0.0 {
                assert!(s.abs() <= 0.5 + 1e-15);
            } else {
                assert_relative_eq!(s, 0.5 * p[i].signum(), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn quadratic_gradient_examples() {
        let id = ScaledIdentity::identity(2);
        assert_eq!(
            quadratic_gradient(&id, &Vector::zeros(2), &v(&[1.0, -2.0])).unwrap(),
            v(&[2.0, -4.0])
        );
        let h = integration3();
        let x = v(&[0.3, -1.0, 2.0]);
        let b = h.apply(&x);
        assert!(quadratic_gradient(&h, &b, &x).unwrap().amax() < 1e-15);
        assert!(quadratic_gradient(&h, &Vector::zeros(2), &x).is_err());
    }

    #[test]
    fn quadratic_gradient_matches_central_differences() {
        let h = integration3();
        let b = Vector::zeros(3);
        let f = |x: &Vector| (&b - h.apply(x)).norm_squared();
        let x = v(&[1.0, 0.0, 0.0]);
        let g = quadratic_gradient(&h, &b, &x).unwrap();
        let step = 1e-6;
        for i in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += step;
            xm[i] -= step;
            let fd = (f(&xp) - f(&xm)) / (2.0 * step);
            assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()));
        }
    }

    #[test]
    fn data_fit_lipschitz_constant() {
        let h: Arc<dyn LinearMap> = Arc::new(integration3());
        let f = QuadraticDataFit::new(h.clone(), v(&[1.0, 2.0, 0.0])).unwrap();
        let oracle = h.to_dense().unwrap().svd(false, false).singular_values.max().powi(2);
        assert_relative_eq!(f.lipschitz_inv(), 1.0 / (2.0 * oracle), max_relative = 1e-10);
        let mut rng = seeded_rng(3);
        for _ in 0..200 {
            let x = gaussian_vector(&mut rng, 3);
            let y = gaussian_vector(&mut rng, 3);
            let lhs = (f.gradient(&x) - f.gradient(&y)).norm();
            assert!(lhs <= (x - y).norm() / f.lipschitz_inv() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn conjugate_gradient_oracles() {
        let z = ZeroIndicator;
        assert_eq!(z.grad_conjugate(&v(&[1.0, 2.0])), Vector::zeros(2));
        assert_eq!(z.modulus(), RHO_CAP);
        let q = QuadraticPenalty::new(4.0).unwrap();
        let a = v(&[1.0, -1.0]);
        let b = v(&[0.0, 3.0]);
        let lhs = (q.grad_conjugate(&a) - q.grad_conjugate(&b)).norm();
        assert!(lhs <= (a - b).norm() / q.modulus() + 1e-15);
        // g = |·| with ℓ = 2‖·‖²: Huber-type envelope at y = 3 is |p| + 2(3 − p)² with p = 2.75.
        let g = L1Norm::new(1.0).unwrap();
        let val = q.infimal_value(&g, &v(&[3.0])).unwrap();
        assert_relative_eq!(val, 2.75 + 2.0 * 0.25_f64.powi(2), epsilon = 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn l1_and_box_proxes_are_firmly_nonexpansive(
            xs in proptest::collection::vec(-10.0..10.0f64, 6),
            ys in proptest::collection::vec(-10.0..10.0f64, 6),
            t in 0.0..3.0f64,
        ) {
            let x = Vector::from_vec(xs);
            let y = Vector::from_vec(ys);
            for (px, py) in [
                (prox_l1(&x, t), prox_l1(&y, t)),
                (prox_box(&x, -t, 2.0).unwrap(), prox_box(&y, -t, 2.0).unwrap()),
            ] {
                let d = &px - &py;
                prop_assert!(d.norm_squared() <= d.dot(&(&x - &y)) + 1e-12);
            }
        }
    }
}
