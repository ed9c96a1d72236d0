//! Semismooth-Newton weights for `ℓ₁`-regularized least squares.
//!
//! At iterate `x` with prox argument `w`, indices split into the inactive set
//! `I = {i : |wᵢ| > τμ}` and the active set `A`. The weight is the inverse of
//! the block-triangular matrix `P⁻¹[[κH_I*H_I, κH_I*H_A], [0, I]]P`, which
//! turns the weighted step `x + Λ(p − x)` into a Newton step on the inactive
//! coordinates.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{check_len, Error, Result};
use crate::fixed_point::{BoundPolicy, BoundRegime, WeightContext, WeightSchedule};
use crate::operators::{
    gaussian_vector, seeded_rng, symmetric_extremes, BlockInfo, DenseMap, LinearMap, Vector,
    WeightKind, WeightOperator,
};
use crate::prox::{prox_l1, quadratic_gradient};

/// Condition-number estimate above which the inactive Gram is regularized.
pub const MAX_CONDITION: f64 = 1e12;
/// Ridge added to an ill-conditioned Gram, relative to its mean diagonal.
pub const RIDGE_SCALE: f64 = 1e-10;

/// Diagonal of the B-differential element of `prox_{μ|·|}` at `x`: `1` where
/// `|xᵢ| > μ`, else `0`.
pub fn b_diff_prox_l1(x: &Vector, mu: f64) -> Vector {
    x.map(|v| if v.abs() > mu { 1.0 } else { 0.0 })
}

/// Inactive indices first, active ones last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivePartition {
    n: usize,
    inactive: Vec<usize>,
    active: Vec<usize>,
}

impl ActivePartition {
    pub fn new(n: usize, inactive: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in &inactive {
            if i >= n || seen[i] {
                return Err(Error::ContractViolation(format!(
                    "invalid inactive index {i} for dimension {n}"
                )));
            }
            seen[i] = true;
        }
        let active = (0..n).filter(|&i| !seen[i]).collect();
        Ok(Self { n, inactive, active })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn inactive(&self) -> &[usize] {
        &self.inactive
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// `perm[j]` is the original index placed at position `j`.
    pub fn permutation(&self) -> Vec<usize> {
        self.inactive.iter().chain(&self.active).copied().collect()
    }

    pub fn is_inactive_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n];
        for &i in &self.inactive {
            m[i] = true;
        }
        m
    }
}

/// Partition of the prox argument `w` at threshold `τμ`; ties are active.
pub fn partition_from_forward(w: &Vector, threshold: f64) -> ActivePartition {
    let inactive = (0..w.len()).filter(|&i| w[i].abs() > threshold).collect();
    ActivePartition::new(w.len(), inactive).expect("indices are distinct and in range")
}

/// `w = x − τ(ū + 2H*(Hx − b))`, the argument of the primal prox.
pub fn forward_term<M: LinearMap + ?Sized>(
    x: &Vector,
    tau: f64,
    h: &M,
    b: &Vector,
    u_bar: &Vector,
) -> Result<Vector> {
    check_len("dual", u_bar.len(), x.len())?;
    let grad = quadratic_gradient(h, b, x)?;
    Ok(x - (u_bar + grad) * tau)
}

/// Active/inactive split at `x`, from the same forward term the primal prox uses.
pub fn partition<M: LinearMap + ?Sized>(
    x: &Vector,
    tau: f64,
    mu: f64,
    h: &M,
    b: &Vector,
    u_bar: &Vector,
) -> Result<ActivePartition> {
    if !(tau > 0.0 && mu >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "partition needs τ > 0 and μ ≥ 0, got τ = {tau}, μ = {mu}"
        )));
    }
    Ok(partition_from_forward(&forward_term(x, tau, h, b, u_bar)?, tau * mu))
}

/// Cholesky factor of the (possibly ridged) inactive Gram.
struct GramFactor {
    chol: Option<Cholesky<f64, Dyn>>,
    ridge: f64,
}

fn factor_gram(mut g: DMatrix<f64>) -> Result<GramFactor> {
    let m = g.nrows();
    if m == 0 {
        return Ok(GramFactor { chol: None, ridge: 0.0 });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("inactive Gram has non-finite entries".into()));
    }
    if let Some(c) = Cholesky::new(g.clone()) {
        let d = c.l_dirty().diagonal();
        let cond = (d.max() / d.min()).powi(2);
        if cond.is_finite() && cond <= MAX_CONDITION {
            return Ok(GramFactor { chol: Some(c), ridge: 0.0 });
        }
    }
    let ridge = RIDGE_SCALE * g.trace() / m as f64;
    log::warn!("inactive Gram of size {m} is ill-conditioned; adding ridge {ridge:e}");
    for i in 0..m {
        g[(i, i)] += ridge;
    }
    let chol = Cholesky::new(g)
        .ok_or_else(|| Error::Factorization("ridge-regularized Gram is not positive definite".into()))?;
    Ok(GramFactor { chol: Some(chol), ridge })
}

/// `Λ = (P⁻¹[[κH_I*H_I, κH_I*H_A], [0, I]]P)⁻¹`, applied by block back-substitution.
pub struct SsnWeight {
    partition: ActivePartition,
    kappa: f64,
    h: Arc<dyn LinearMap>,
    factor: GramFactor,
}

impl std::fmt::Debug for SsnWeight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SsnWeight")
            .field("inactive", &self.partition.inactive.len())
            .field("kappa", &self.kappa)
            .field("ridge", &self.factor.ridge)
            .finish_non_exhaustive()
    }
}

/// Builds the block weight with scale `kappa` in front of the `H*H` blocks.
pub fn build_ssn_weight(
    partition: &ActivePartition,
    kappa: f64,
    h: Arc<dyn LinearMap>,
) -> Result<SsnWeight> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("weight scale must be positive, got {kappa}")));
    }
    check_len("partition", partition.dim(), h.cols())?;
    let gram = h.gram(&partition.inactive) * kappa;
    let factor = factor_gram(gram)?;
    Ok(SsnWeight { partition: partition.clone(), kappa, h, factor })
}

impl SsnWeight {
    pub fn partition(&self) -> &ActivePartition {
        &self.partition
    }

    pub fn ridge(&self) -> f64 {
        self.factor.ridge
    }

    fn gather(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.partition.inactive.len(), self.partition.inactive.iter().map(|&i| x[i]))
    }

    fn solve(&self, rhs: Vector) -> Vector {
        match &self.factor.chol {
            Some(c) => c.solve(&rhs),
            None => rhs,
        }
    }

    /// The forward block matrix `P⁻¹[[κH_I*H_I, κH_I*H_A], [0, I]]P` applied to `y`.
    pub fn forward_apply(&self, y: &Vector) -> Vector {
        let mut out = y.clone();
        if self.partition.inactive.is_empty() {
            return out;
        }
        let hty = self.h.adjoint_apply(&self.h.apply(y)) * self.kappa;
        for &i in &self.partition.inactive {
            out[i] = hty[i];
        }
        out
    }
}

impl WeightOperator for SsnWeight {
    fn dim(&self) -> usize {
        self.partition.n
    }

    fn kind(&self) -> WeightKind {
        WeightKind::SsnBlock
    }

    fn apply(&self, x: &Vector) -> Vector {
        let mut y = x.clone();
        if self.partition.inactive.is_empty() {
            return y;
        }
        let mut active_part = x.clone();
        for &i in &self.partition.inactive {
            active_part[i] = 0.0;
        }
        let coupling = self.h.adjoint_apply(&self.h.apply(&active_part)) * self.kappa;
        let rhs = self.gather(x) - self.gather(&coupling);
        let yi = self.solve(rhs);
        for (k, &i) in self.partition.inactive.iter().enumerate() {
            y[i] = yi[k];
        }
        y
    }

    fn adjoint_apply(&self, x: &Vector) -> Vector {
        let mut z = x.clone();
        if self.partition.inactive.is_empty() {
            return z;
        }
        let zi = self.solve(self.gather(x));
        let mut padded = Vector::zeros(self.partition.n);
        for (k, &i) in self.partition.inactive.iter().enumerate() {
            padded[i] = zi[k];
        }
        let back = self.h.adjoint_apply(&self.h.apply(&padded)) * self.kappa;
        for &i in &self.partition.active {
            z[i] -= back[i];
        }
        for (k, &i) in self.partition.inactive.iter().enumerate() {
            z[i] = zi[k];
        }
        z
    }

    fn block_info(&self) -> Option<BlockInfo> {
        Some(BlockInfo { inactive: self.partition.inactive.len(), ridge: self.factor.ridge })
    }
}

/// Constant multiplying `sgn(w)` in the closed-form update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConstant {
    PlusTau,
    MinusTau,
    PlusTauMu,
    MinusTauMu,
    PlusHalfMu,
    MinusHalfMu,
}

impl SignConstant {
    pub const ALL: [SignConstant; 6] = [
        SignConstant::PlusTau,
        SignConstant::MinusTau,
        SignConstant::PlusTauMu,
        SignConstant::MinusTauMu,
        SignConstant::PlusHalfMu,
        SignConstant::MinusHalfMu,
    ];

    pub fn value(self, tau: f64, mu: f64) -> f64 {
        match self {
            SignConstant::PlusTau => tau,
            SignConstant::MinusTau => -tau,
            SignConstant::PlusTauMu => tau * mu,
            SignConstant::MinusTauMu => -tau * mu,
            SignConstant::PlusHalfMu => 0.5 * mu,
            SignConstant::MinusHalfMu => -0.5 * mu,
        }
    }
}

/// Constants of `x⁺_I = (H_I*H_I)⁻¹[H*b + c_u·ū + c_s·sgn(w)]_I`, `x⁺_A = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormConstants {
    pub dual_coeff: f64,
    pub sign: SignConstant,
}

impl ClosedFormConstants {
    /// The constants selected by [`calibrate_closed_form`].
    pub const CALIBRATED: Self = Self { dual_coeff: -0.5, sign: SignConstant::MinusHalfMu };
    pub const DUAL_CANDIDATES: [f64; 3] = [-1.0, -0.5, -2.0];
}

impl Default for ClosedFormConstants {
    fn default() -> Self {
        Self::CALIBRATED
    }
}

/// Closed-form active-set update. Touches only the `|I|` inactive columns of `H`
/// plus one adjoint application.
#[allow(clippy::too_many_arguments)]
pub fn ssn_primal_update<M: LinearMap + ?Sized>(
    x: &Vector,
    tau: f64,
    mu: f64,
    h: &M,
    b: &Vector,
    u_bar: &Vector,
    partition: &ActivePartition,
    constants: ClosedFormConstants,
) -> Result<Vector> {
    check_len("x", x.len(), partition.dim())?;
    check_len("dual", u_bar.len(), partition.dim())?;
    check_len("data", b.len(), h.rows())?;
    let mut out = Vector::zeros(x.len());
    let idx = partition.inactive();
    if idx.is_empty() {
        return Ok(out);
    }
    let cols = h.columns(idx);
    let factor = factor_gram(cols.tr_mul(&cols))?;
    // the sign of w on I equals the sign of x - τ(ū + ∇) computed from the same data
    let w = forward_term(x, tau, h, b, u_bar)?;
    let htb = cols.tr_mul(b);
    let c_s = constants.sign.value(tau, mu);
    let rhs = Vector::from_iterator(
        idx.len(),
        idx.iter()
            .enumerate()
            .map(|(k, &i)| htb[k] + constants.dual_coeff * u_bar[i] + c_s * w[i].signum()),
    );
    let sol = factor.chol.as_ref().map_or(rhs.clone(), |c| c.solve(&rhs));
    for (k, &i) in idx.iter().enumerate() {
        out[i] = sol[k];
    }
    Ok(out)
}

/// `x + Λ(p − x)` with `p = prox_{τμ|·|}(w)` and `Λ` the block weight with `κ = 2τ`.
pub fn ssn_oracle_update(
    x: &Vector,
    tau: f64,
    mu: f64,
    h: Arc<dyn LinearMap>,
    b: &Vector,
    u_bar: &Vector,
) -> Result<(Vector, ActivePartition)> {
    let w = forward_term(x, tau, &h, b, u_bar)?;
    let part = partition_from_forward(&w, tau * mu);
    let p = prox_l1(&w, tau * mu);
    let lam = build_ssn_weight(&part, 2.0 * tau, h)?;
    Ok((x + lam.apply(&(p - x)), part))
}

/// Report from the calibration sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub constants: ClosedFormConstants,
    /// Largest deviation from the prox-based update for the chosen constants.
    pub max_error: f64,
    pub instances: usize,
}

/// Picks the closed-form constants that reproduce the prox-based update on
/// random small instances with nonzero duals.
pub fn calibrate_closed_form(instances: usize, seed: u64) -> Result<Calibration> {
    let mut rng = seeded_rng(seed);
    let mut cases = Vec::with_capacity(instances);
    for t in 0..instances {
        let n = 3 + t % 6;
        let h = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 0.0 })
            + DMatrix::from_iterator(n, n, gaussian_vector(&mut rng, n * n).iter().map(|v| 0.3 * v));
        let b = gaussian_vector(&mut rng, n);
        let x = gaussian_vector(&mut rng, n);
        let u = gaussian_vector(&mut rng, n) * 0.3;
        cases.push((Arc::new(DenseMap(h)) as Arc<dyn LinearMap>, b, x, u));
    }
    let (tau, mu) = (0.7, 0.4);
    let mut oracles = Vec::with_capacity(instances);
    for (h, b, x, u) in &cases {
        oracles.push(ssn_oracle_update(x, tau, mu, h.clone(), b, u)?);
    }
    let mut best: Option<Calibration> = None;
    for &dual_coeff in &ClosedFormConstants::DUAL_CANDIDATES {
        for sign in SignConstant::ALL {
            let constants = ClosedFormConstants { dual_coeff, sign };
            let mut err = 0.0_f64;
            for ((h, b, x, u), (oracle, part)) in cases.iter().zip(&oracles) {
                let got = ssn_primal_update(x, tau, mu, h, b, u, part, constants)?;
                err = err.max((got - oracle).amax() / (1.0 + oracle.amax()));
            }
            if best.as_ref().is_none_or(|c| err < c.max_error) {
                best = Some(Calibration { constants, max_error: err, instances });
            }
        }
    }
    let best = best.expect("candidate list is nonempty");
    if best.max_error > 1e-8 {
        return Err(Error::ContractViolation(format!(
            "no closed-form constants match the prox-based update (best error {:e})",
            best.max_error
        )));
    }
    Ok(best)
}

/// Primal weight schedule that rebuilds the block weight from the prox
/// argument at every iteration. The forward term must be supplied in the
/// weight context.
pub fn ssn_weight_schedule(
    h: Arc<dyn LinearMap>,
    tau: f64,
    mu: f64,
    policy: BoundPolicy,
    eps: f64,
) -> Result<WeightSchedule> {
    if !(tau > 0.0 && mu > 0.0) {
        return Err(Error::InvalidParameter(format!("need τ > 0 and μ > 0, got {tau}, {mu}")));
    }
    let n = h.cols();
    let schedule = WeightSchedule::new(
        n,
        eps,
        Arc::new(move |ctx: &WeightContext<'_>| {
            let w = ctx.forward.ok_or_else(|| {
                Error::ContractViolation("semismooth Newton weights need the prox argument".into())
            })?;
            let part = partition_from_forward(w, tau * mu);
            Ok(Arc::new(build_ssn_weight(&part, 2.0 * tau, h.clone())?) as Arc<dyn WeightOperator>)
        }),
    )?;
    Ok(schedule
        .with_policy(policy)
        .with_regime(BoundRegime::Corollary)
        .with_logging(true))
}

/// `1/(2λ_min(H*H))`, the largest primal step for which the block weight of a
/// fully inactive partition stays below the identity. Uses a dense Gram.
pub fn default_ssn_step<M: LinearMap + ?Sized>(h: &M) -> Result<f64> {
    let dense = h.to_dense()?;
    let gram = dense.tr_mul(&dense);
    let lo = smallest_eigenvalue(&gram)?;
    Ok(0.5 / lo)
}

fn smallest_eigenvalue(gram: &DMatrix<f64>) -> Result<f64> {
    let n = gram.nrows();
    if n <= 64 {
        let (lo, _) = symmetric_extremes(gram.clone());
        return if lo > 0.0 { Ok(lo) } else { Err(Error::NotPositiveDefinite { rayleigh: lo }) };
    }
    let chol = Cholesky::new(gram.clone())
        .ok_or(Error::NotPositiveDefinite { rayleigh: 0.0 })?;
    let mut rng = seeded_rng(0x55);
    let mut v = gaussian_vector(&mut rng, n);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..500 {
        let w = chol.solve(&v);
        let next = v.dot(&w);
        let norm = w.norm();
        v = w / norm;
        if (next - est).abs() <= 1e-12 * next {
            est = next;
            break;
        }
        est = next;
    }
    Ok(1.0 / est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{weight_spectral_bounds, CountingMap, ScaledIdentity};
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn identity(n: usize) -> Arc<dyn LinearMap> {
        Arc::new(ScaledIdentity::identity(n))
    }

    #[test]
    fn b_differential_examples() {
        assert_eq!(b_diff_prox_l1(&v(&[2.0, -0.3, 1.0]), 1.0), v(&[1.0, 0.0, 0.0]));
        assert_eq!(b_diff_prox_l1(&Vector::zeros(3), 0.5), Vector::zeros(3));
        assert_eq!(b_diff_prox_l1(&v(&[-5.0]), 1e-9), v(&[1.0]));
    }

    #[test]
    fn partition_examples() {
        let p = partition_from_forward(&v(&[0.4, -0.7, 0.5]), 0.5);
        assert_eq!(p.active(), &[0, 2]);
        assert_eq!(p.inactive(), &[1]);
        assert_eq!(p.permutation(), vec![1, 0, 2]);

        let h = identity(3);
        let z = Vector::zeros(3);
        let p = partition(&z, 0.5, 0.2, &h, &z, &z).unwrap();
        assert!(p.inactive().is_empty());

        let p = partition_from_forward(&v(&[0.1, -2.0, 3.0]), 0.0);
        assert_eq!(p.inactive(), &[0, 1, 2]);
        assert!(ActivePartition::new(2, vec![0, 0]).is_err());
    }

    #[test]
    fn two_by_two_weight() {
        let part = ActivePartition::new(2, vec![0]).unwrap();
        let w = build_ssn_weight(&part, 0.5, identity(2)).unwrap();
        assert_relative_eq!(w.apply(&v(&[1.0, 1.0])), v(&[2.0, 1.0]), epsilon = 1e-14);
        let dense = w.to_dense().unwrap();
        let oracle = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]).try_inverse().unwrap();
        assert_relative_eq!(dense, oracle, epsilon = 1e-14);
        let (lo, hi) = weight_spectral_bounds(&w, 50).unwrap();
        let (elo, ehi) = symmetric_extremes(oracle);
        assert_relative_eq!(lo, elo, epsilon = 1e-8);
        assert_relative_eq!(hi, ehi, epsilon = 1e-8);

        let empty = ActivePartition::new(2, vec![]).unwrap();
        let w = build_ssn_weight(&empty, 0.5, identity(2)).unwrap();
        assert_eq!(w.apply(&v(&[3.0, -1.0])), v(&[3.0, -1.0]));
    }

    fn random_instance(seed: u64, n: usize) -> (Arc<dyn LinearMap>, Vector, Vector) {
        let mut rng = seeded_rng(seed);
        let mut h = DMatrix::from_iterator(n, n, gaussian_vector(&mut rng, n * n).iter().copied());
        for mut c in h.column_iter_mut() {
            let norm = c.norm();
            c /= norm;
        }
        let b = gaussian_vector(&mut rng, n);
        let x = gaussian_vector(&mut rng, n);
        (Arc::new(DenseMap(h)), b, x)
    }

    #[test]
    fn block_weight_inverts_the_forward_matrix() {
        for seed in 0..20 {
            let (h, _, x) = random_instance(seed, 9);
            let part = partition_from_forward(&x, 0.6);
            let w = build_ssn_weight(&part, 0.8, h).unwrap();
            let y = w.apply(&x);
            assert!((w.forward_apply(&y) - &x).norm() <= 1e-10 * (1.0 + x.norm()));
            let dense = w.to_dense().unwrap();
            assert_relative_eq!(w.adjoint_apply(&x), dense.transpose() * &x, epsilon = 1e-10);
            for &i in part.active() {
                assert_eq!(y[i], x[i]);
            }
        }
    }

    #[test]
    fn closed_form_matches_the_prox_based_update() {
        let h = identity(2);
        let (b, z) = (v(&[1.0, 0.01]), Vector::zeros(2));
        let (oracle, part) = ssn_oracle_update(&z, 0.5, 0.2, h.clone(), &b, &z).unwrap();
        assert_eq!(part.inactive(), &[0]);
        assert_relative_eq!(oracle, v(&[0.9, 0.0]), epsilon = 1e-14);
        let closed = ssn_primal_update(&z, 0.5, 0.2, &h, &b, &z, &part, Default::default()).unwrap();
        assert_relative_eq!(closed, v(&[0.9, 0.0]), epsilon = 1e-14);

        let (again, _) = ssn_oracle_update(&closed, 0.5, 0.2, h, &b, &z).unwrap();
        assert_relative_eq!(again, closed, epsilon = 1e-10);

        for seed in 0..100 {
            let n = 2 + (seed as usize % 19);
            let (h, b, x) = random_instance(1000 + seed, n);
            let u = Vector::zeros(n);
            let (oracle, part) = ssn_oracle_update(&x, 0.3, 0.5, h.clone(), &b, &u).unwrap();
            let closed = ssn_primal_update(&x, 0.3, 0.5, &h, &b, &u, &part, Default::default()).unwrap();
            assert!((closed - &oracle).amax() <= 1e-8 * (1.0 + oracle.amax()), "seed {seed}");
        }
    }

    #[test]
    fn all_active_update_is_zero() {
        let h = identity(3);
        let part = ActivePartition::new(3, vec![]).unwrap();
        let x = v(&[0.1, 0.2, 0.3]);
        let z = Vector::zeros(3);
        assert_eq!(ssn_primal_update(&x, 1.0, 1.0, &h, &x, &z, &part, Default::default()).unwrap(), z);
    }

    #[test]
    fn calibration_selects_the_frozen_constants() {
        let cal = calibrate_closed_form(30, 11).unwrap();
        assert_eq!(cal.constants, ClosedFormConstants::CALIBRATED);
        assert!(cal.max_error <= 1e-10);
    }

    #[test]
    fn closed_form_touches_only_inactive_columns() {
        let (h, b, x) = random_instance(5, 12);
        let dense = h.to_dense().unwrap();
        let counting = CountingMap::new(DenseMap(dense));
        let u = Vector::zeros(12);
        let part = partition_from_forward(&forward_term(&x, 0.3, &counting, &b, &u).unwrap(), 0.15);
        assert!(!part.inactive().is_empty() && !part.active().is_empty());
        counting.reset();
        ssn_primal_update(&x, 0.3, 0.5, &counting, &b, &u, &part, Default::default()).unwrap();
        // |I| column extractions plus one forward and one adjoint for the sign term
        assert_eq!(counting.forward_calls(), part.inactive().len() + 1);
        assert_eq!(counting.adjoint_calls(), 1);
    }

    #[test]
    fn ill_conditioned_gram_gets_a_ridge() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-9]);
        let part = ActivePartition::new(2, vec![0, 1]).unwrap();
        let w = build_ssn_weight(&part, 1.0, Arc::new(DenseMap(h))).unwrap();
        assert!(w.ridge() > 0.0);
        assert_eq!(w.block_info().unwrap().inactive, 2);
    }

    #[test]
    fn schedule_needs_the_forward_term() {
        let sched = ssn_weight_schedule(identity(2), 0.5, 0.2, BoundPolicy::Waive, 0.1).unwrap();
        let x = Vector::zeros(2);
        assert!(sched.generate(&WeightContext { k: 0, x: &x, forward: None }).is_err());
        let w = v(&[1.0, 0.0]);
        let draw = sched.draw(&WeightContext { k: 0, x: &x, forward: Some(&w) }).unwrap();
        assert_eq!(draw.bounds, Some((1.0, 1.0)));
        assert_eq!(sched.diagnostics()[0].csv_line(), "0,1,1e0,1e0,0e0");

        let all_active = v(&[0.0, 0.0]);
        let w = sched.generate(&WeightContext { k: 1, x: &x, forward: Some(&all_active) }).unwrap();
        assert_eq!(w.apply(&v(&[2.0, 3.0])), v(&[2.0, 3.0]));
    }

    #[test]
    fn shrink_on_the_two_by_two_weight() {
        let part = ActivePartition::new(2, vec![0]).unwrap();
        let w: Arc<dyn WeightOperator> = Arc::new(build_ssn_weight(&part, 0.5, identity(2)).unwrap());
        let sched = WeightSchedule::new(2, 0.1, Arc::new(move |_: &WeightContext<'_>| Ok(w.clone())))
            .unwrap()
            .with_policy(BoundPolicy::Shrink);
        let x = Vector::zeros(2);
        let draw = sched.draw(&WeightContext { k: 0, x: &x, forward: None }).unwrap();
        assert_relative_eq!(draw.scale, 0.45, epsilon = 1e-12);
        let (lo, hi) = draw.bounds.unwrap();
        assert_relative_eq!(lo, 0.45, epsilon = 1e-12);
        assert_relative_eq!(hi, 0.9, epsilon = 1e-12);
    }

    #[test]
    fn default_step_for_identity() {
        assert_relative_eq!(default_ssn_step(&ScaledIdentity { dim: 3, scale: 2.0 }).unwrap(), 0.125);
    }
}
