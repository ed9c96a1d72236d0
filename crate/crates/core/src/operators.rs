//! Vectors, matrix-free linear maps, symmetric positive-definite metrics and
//! positive-definite weight operators.
//!
//! Everything in the crate is expressed in terms of these four shapes. Linear
//! maps are matrix-free: they only promise `apply` and `adjoint_apply`. Dense
//! materialization is available for dimensions up to [`MAX_DENSE_DIM`], which
//! is what the semismooth-Newton block solves and the validators rely on.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};

pub type Vector = DVector<f64>;

/// Largest dimension for which operators are materialized densely.
pub const MAX_DENSE_DIM: usize = 2000;

/// Dimension up to which spectral questions are answered with a dense
/// eigendecomposition instead of power iteration.
pub const DENSE_EIGEN_DIM: usize = 512;

/// Default number of power iterations for spectral bound estimates.
pub const DEFAULT_POWER_ITERATIONS: usize = 50;

/// Tolerance of [`adjoint_check`].
pub const ADJOINT_TOLERANCE: f64 = 1e-10;

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn unit_vector(n: usize, i: usize) -> Vector {
    let mut e = Vector::zeros(n);
    e[i] = 1.0;
    e
}

/// Real coordinates split into consecutive blocks: one primal block followed
/// by the dual blocks of a primal–dual state.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBlock {
    data: Vector,
    block_sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl VectorBlock {
    pub fn new(data: Vector, block_sizes: Vec<usize>) -> Result<Self> {
        if block_sizes.is_empty() || block_sizes.contains(&0) {
            return Err(Error::ContractViolation(
                "block sizes must be a nonempty list of positive integers".into(),
            ));
        }
        check_len("block data", data.len(), block_sizes.iter().sum())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::ContractViolation(format!(
                "coordinate {i} is not finite ({})",
                data[i]
            )));
        }
        let mut offsets = Vec::with_capacity(block_sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for s in &block_sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(Self {
            data,
            block_sizes,
            offsets,
        })
    }

    pub fn from_blocks(blocks: &[Vector]) -> Result<Self> {
        let sizes: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
        let data = Vector::from_iterator(
            sizes.iter().sum(),
            blocks.iter().flat_map(|b| b.iter().copied()),
        );
        Self::new(data, sizes)
    }

    pub fn zeros(block_sizes: Vec<usize>) -> Result<Self> {
        let n = block_sizes.iter().sum();
        Self::new(Vector::zeros(n), block_sizes)
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn num_blocks(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn block(&self, i: usize) -> Vector {
        self.data
            .rows(self.offsets[i], self.block_sizes[i])
            .into_owned()
    }

    pub fn blocks(&self) -> Vec<Vector> {
        (0..self.num_blocks()).map(|i| self.block(i)).collect()
    }

    pub fn data(&self) -> &Vector {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn into_inner(self) -> Vector {
        self.data
    }
}

/// A linear operator `M: R^cols -> R^rows` known only through its action and
/// the action of its adjoint.
pub trait LinearMap: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &Vector) -> Vector;
    fn adjoint_apply(&self, y: &Vector) -> Vector;

    /// Dense copy of the operator, built column by column.
    fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.rows() > MAX_DENSE_DIM || self.cols() > MAX_DENSE_DIM {
            return Err(Error::ContractViolation(format!(
                "refusing to materialize a {}x{} operator (limit {MAX_DENSE_DIM})",
                self.rows(),
                self.cols()
            )));
        }
        let idx: Vec<usize> = (0..self.cols()).collect();
        Ok(self.columns(&idx))
    }

    /// The selected columns `[M]_{:j}`, one `apply` per column.
    fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows(), idx.len());
        for (k, &j) in idx.iter().enumerate() {
            out.set_column(k, &self.apply(&unit_vector(self.cols(), j)));
        }
        out
    }

    /// `[M]_{:I}* [M]_{:I}` for the selected columns.
    fn gram(&self, idx: &[usize]) -> DMatrix<f64> {
        let c = self.columns(idx);
        c.tr_mul(&c)
    }
}

impl<T: LinearMap + ?Sized> LinearMap for Arc<T> {
    fn rows(&self) -> usize {
        (**self).rows()
    }
    fn cols(&self) -> usize {
        (**self).cols()
    }
    fn apply(&self, x: &Vector) -> Vector {
        (**self).apply(x)
    }
    fn adjoint_apply(&self, y: &Vector) -> Vector {
        (**self).adjoint_apply(y)
    }
    fn to_dense(&self) -> Result<DMatrix<f64>> {
        (**self).to_dense()
    }
    fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        (**self).columns(idx)
    }
    fn gram(&self, idx: &[usize]) -> DMatrix<f64> {
        (**self).gram(idx)
    }
}

impl<T: LinearMap + ?Sized> LinearMap for &T {
    fn rows(&self) -> usize {
        (**self).rows()
    }
    fn cols(&self) -> usize {
        (**self).cols()
    }
    fn apply(&self, x: &Vector) -> Vector {
        (**self).apply(x)
    }
    fn adjoint_apply(&self, y: &Vector) -> Vector {
        (**self).adjoint_apply(y)
    }
    fn to_dense(&self) -> Result<DMatrix<f64>> {
        (**self).to_dense()
    }
    fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        (**self).columns(idx)
    }
    fn gram(&self, idx: &[usize]) -> DMatrix<f64> {
        (**self).gram(idx)
    }
}

/// `x ↦ s·x` on `R^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledIdentity {
    pub dim: usize,
    pub scale: f64,
}

impl ScaledIdentity {
    pub fn identity(dim: usize) -> Self {
        Self { dim, scale: 1.0 }
    }
}

impl LinearMap for ScaledIdentity {
    fn rows(&self) -> usize {
        self.dim
    }
    fn cols(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &Vector) -> Vector {
        x * self.scale
    }
    fn adjoint_apply(&self, y: &Vector) -> Vector {
        y * self.scale
    }
}

/// A linear map backed by an explicit matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMap(pub DMatrix<f64>);

impl LinearMap for DenseMap {
    fn rows(&self) -> usize {
        self.0.nrows()
    }
    fn cols(&self) -> usize {
        self.0.ncols()
    }
    fn apply(&self, x: &Vector) -> Vector {
        &self.0 * x
    }
    fn adjoint_apply(&self, y: &Vector) -> Vector {
        self.0.tr_mul(y)
    }
    fn to_dense(&self) -> Result<DMatrix<f64>> {
        Ok(self.0.clone())
    }
    fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        self.0.select_columns(idx)
    }
}

type Action = Box<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// A linear map given by a pair of closures for the forward and adjoint action.
pub struct MatrixFreeMap {
    rows: usize,
    cols: usize,
    forward: Action,
    adjoint: Action,
}

impl MatrixFreeMap {
    pub fn new<F, G>(rows: usize, cols: usize, forward: F, adjoint: G) -> Self
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
        G: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        Self {
            rows,
            cols,
            forward: Box::new(forward),
            adjoint: Box::new(adjoint),
        }
    }
}

impl std::fmt::Debug for MatrixFreeMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MatrixFreeMap")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish_non_exhaustive()
    }
}

impl LinearMap for MatrixFreeMap {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &Vector) -> Vector {
        (self.forward)(x)
    }
    fn adjoint_apply(&self, y: &Vector) -> Vector {
        (self.adjoint)(y)
    }
}

/// Wraps a map and counts forward and adjoint applications.
#[derive(Debug, Default)]
pub struct CountingMap<M> {
    inner: M,
    forward_calls: AtomicUsize,
    adjoint_calls: AtomicUsize,
}

impl<M: LinearMap> CountingMap<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            forward_calls: AtomicUsize::new(0),
            adjoint_calls: AtomicUsize::new(0),
        }
    }

    pub fn forward_calls(&self) -> usize {
        self.forward_calls.load(Ordering::Relaxed)
    }

    pub fn adjoint_calls(&self) -> usize {
        self.adjoint_calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.forward_calls.store(0, Ordering::Relaxed);
        self.adjoint_calls.store(0, Ordering::Relaxed);
    }
}

impl<M: LinearMap> LinearMap for CountingMap<M> {
    fn rows(&self) -> usize {
        self.inner.rows()
    }
    fn cols(&self) -> usize {
        self.inner.cols()
    }
    fn apply(&self, x: &Vector) -> Vector {
        self.forward_calls.fetch_add(1, Ordering::Relaxed);
        self.inner.apply(x)
    }
    fn adjoint_apply(&self, y: &Vector) -> Vector {
        self.adjoint_calls.fetch_add(1, Ordering::Relaxed);
        self.inner.adjoint_apply(y)
    }
}

/// Outcome of [`adjoint_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointReport {
    pub passed: bool,
    pub max_discrepancy: f64,
}

/// Tests `<Mx, y> = <x, M*y>` on `trials` random Gaussian pairs.
///
/// The discrepancy of one pair is `|<Mx,y> - <x,M*y>| / (1 + |<Mx,y>|)`; the
/// check passes when the largest one is at most [`ADJOINT_TOLERANCE`].
pub fn adjoint_check<M: LinearMap + ?Sized>(
    map: &M,
    trials: usize,
    seed: u64,
) -> Result<AdjointReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("adjoint_check needs trials >= 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let x = gaussian_vector(&mut rng, map.cols());
        let y = gaussian_vector(&mut rng, map.rows());
        let mx = map.apply(&x);
        check_len("forward image", mx.len(), map.rows())?;
        let mty = map.adjoint_apply(&y);
        check_len("adjoint image", mty.len(), map.cols())?;
        let lhs = mx.dot(&y);
        let rhs = x.dot(&mty);
        worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }
    Ok(AdjointReport {
        passed: worst <= ADJOINT_TOLERANCE,
        max_discrepancy: worst,
    })
}

/// Power-iteration estimate of `‖M‖²`, the largest eigenvalue of `M*M`.
///
/// The estimate after `i` iterations is the Rayleigh quotient of `M*M` at the
/// `i`-th power iterate, so it never decreases with `iterations`. The zero map
/// returns `0`.
pub fn operator_norm_sq<M: LinearMap + ?Sized>(map: &M, iterations: usize) -> Result<f64> {
    if iterations == 0 {
        return Err(Error::InvalidParameter(
            "operator_norm_sq needs iterations >= 1".into(),
        ));
    }
    Ok(power_iteration_norm_sq(map, iterations, 0.0))
}

/// Like [`operator_norm_sq`] but stops early once the relative change of the
/// estimate falls below `rtol`.
pub fn power_iteration_norm_sq<M: LinearMap + ?Sized>(
    map: &M,
    max_iterations: usize,
    rtol: f64,
) -> f64 {
    let mut rng = seeded_rng(0x5eed_0f_1a7);
    let mut v = gaussian_vector(&mut rng, map.cols());
    v /= v.norm();
    let mut estimate = 0.0_f64;
    for _ in 0..max_iterations {
        let w = map.adjoint_apply(&map.apply(&v));
        let next = v.dot(&w).max(estimate);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        let done = (next - estimate).abs() <= rtol * next;
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// Largest and smallest eigenvalue of a dense symmetric matrix.
pub(crate) fn symmetric_extremes(sym: DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(sym);
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Symmetric positive-definite operator `V` with access to `V⁻¹` and `V^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpdMetric {
    /// `value · I` on `R^dim`.
    Scalar { dim: usize, value: f64 },
    Diagonal(Vector),
    Dense(DenseSpd),
}

/// Dense SPD matrix with a cached eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSpd {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    bounds: (f64, f64),
}

impl SpdMetric {
    pub fn scalar(dim: usize, value: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("metric dimension must be positive".into()));
        }
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::NotPositiveDefinite { rayleigh: value });
        }
        Ok(Self::Scalar { dim, value })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::scalar(dim, 1.0)
    }

    pub fn diagonal(entries: Vector) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("metric dimension must be positive".into()));
        }
        if let Some(bad) = entries.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::NotPositiveDefinite { rayleigh: *bad });
        }
        Ok(Self::Diagonal(entries))
    }

    /// Dense metric; `matrix` must be symmetric to relative precision 1e-12.
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::ContractViolation("metric matrix must be square".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        if (&matrix - matrix.transpose()).amax() > 1e-12 * scale {
            return Err(Error::ContractViolation("metric matrix is not symmetric".into()));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let lo = eig.eigenvalues.min();
        let hi = eig.eigenvalues.max();
        if !(lo > 0.0) {
            return Err(Error::NotPositiveDefinite { rayleigh: lo });
        }
        let q = &eig.eigenvectors;
        let spectral = |f: &dyn Fn(f64) -> f64| {
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
            q * d * q.transpose()
        };
        Ok(Self::Dense(DenseSpd {
            inverse: spectral(&|l| 1.0 / l),
            sqrt: spectral(&f64::sqrt),
            matrix: sym,
            bounds: (lo, hi),
        }))
    }

    /// The metric `V⁻¹`.
    pub fn inverse(&self) -> Self {
        match self {
            Self::Scalar { dim, value } => Self::Scalar { dim: *dim, value: 1.0 / value },
            Self::Diagonal(d) => Self::Diagonal(d.map(|v| 1.0 / v)),
            Self::Dense(m) => {
                let (lo, hi) = m.bounds;
                Self::Dense(DenseSpd {
                    matrix: m.inverse.clone(),
                    inverse: m.matrix.clone(),
                    sqrt: m.sqrt.clone().try_inverse().expect("SPD square root is invertible"),
                    bounds: (1.0 / hi, 1.0 / lo),
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Scalar { dim, .. } => *dim,
            Self::Diagonal(d) => d.len(),
            Self::Dense(m) => m.matrix.nrows(),
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Self::Scalar { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        match self {
            Self::Scalar { value, .. } => x * *value,
            Self::Diagonal(d) => x.component_mul(d),
            Self::Dense(m) => &m.matrix * x,
        }
    }

    pub fn inv_apply(&self, x: &Vector) -> Vector {
        match self {
            Self::Scalar { value, .. } => x / *value,
            Self::Diagonal(d) => x.component_div(d),
            Self::Dense(m) => &m.inverse * x,
        }
    }

    pub fn sqrt_apply(&self, x: &Vector) -> Vector {
        match self {
            Self::Scalar { value, .. } => x * value.sqrt(),
            Self::Diagonal(d) => x.component_mul(&d.map(f64::sqrt)),
            Self::Dense(m) => &m.sqrt * x,
        }
    }

    /// `(μ_V, M_V)` with `M_V·I ⪰ V ⪰ μ_V·I`.
    pub fn eig_bounds(&self) -> (f64, f64) {
        match self {
            Self::Scalar { value, .. } => (*value, *value),
            Self::Diagonal(d) => (d.min(), d.max()),
            Self::Dense(m) => m.bounds,
        }
    }

    /// `‖x‖²_V = <Vx, x>`.
    pub fn norm_sq(&self, x: &Vector) -> f64 {
        self.apply(x).dot(x)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Self::Scalar { dim, value } => DMatrix::identity(*dim, *dim) * *value,
            Self::Diagonal(d) => DMatrix::from_diagonal(d),
            Self::Dense(m) => m.matrix.clone(),
        }
    }
}

/// Structural family of a weight operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Scalar,
    Diagonal,
    SsnBlock,
    Dense,
}

/// Size of the dense inner solve behind a block weight and the ridge added to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockInfo {
    pub inactive: usize,
    pub ridge: f64,
}

/// A positive-definite (not necessarily symmetric) linear weight `Λ` used in
/// the operator-weighted step `x + Λ(R(x) - x)`.
pub trait WeightOperator: Send + Sync {
    fn dim(&self) -> usize;
    fn kind(&self) -> WeightKind;
    fn apply(&self, x: &Vector) -> Vector;
    fn adjoint_apply(&self, x: &Vector) -> Vector;

    /// `Some(λ)` when the operator is `λ·I`.
    fn scalar_value(&self) -> Option<f64> {
        None
    }

    /// Diagonal entries when the operator is diagonal.
    fn diagonal(&self) -> Option<Vector> {
        self.scalar_value()
            .map(|v| Vector::from_element(self.dim(), v))
    }

    fn block_info(&self) -> Option<BlockInfo> {
        None
    }

    fn to_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if n > MAX_DENSE_DIM {
            return Err(Error::ContractViolation(format!(
                "refusing to materialize a weight of dimension {n}"
            )));
        }
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            out.set_column(j, &self.apply(&unit_vector(n, j)));
        }
        Ok(out)
    }
}

/// `λ·I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarWeight {
    dim: usize,
    value: f64,
}

impl ScalarWeight {
    pub fn new(dim: usize, value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::NotPositiveDefinite { rayleigh: value });
        }
        Ok(Self { dim, value })
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

impl WeightOperator for ScalarWeight {
    fn dim(&self) -> usize {
        self.dim
    }
    fn kind(&self) -> WeightKind {
        WeightKind::Scalar
    }
    fn apply(&self, x: &Vector) -> Vector {
        x.map(|v| self.value * v)
    }
    fn adjoint_apply(&self, x: &Vector) -> Vector {
        self.apply(x)
    }
    fn scalar_value(&self) -> Option<f64> {
        Some(self.value)
    }
}

/// `diag(λ_1, …, λ_n)` with positive entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalWeight(Vector);

impl DiagonalWeight {
    pub fn new(entries: Vector) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::NotPositiveDefinite { rayleigh: *bad });
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &Vector {
        &self.0
    }
}

impl WeightOperator for DiagonalWeight {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn kind(&self) -> WeightKind {
        WeightKind::Diagonal
    }
    fn apply(&self, x: &Vector) -> Vector {
        x.component_mul(&self.0)
    }
    fn adjoint_apply(&self, x: &Vector) -> Vector {
        self.apply(x)
    }
    fn diagonal(&self) -> Option<Vector> {
        Some(self.0.clone())
    }
}

/// An explicit weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseWeight(pub DMatrix<f64>);

impl WeightOperator for DenseWeight {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn kind(&self) -> WeightKind {
        WeightKind::Dense
    }
    fn apply(&self, x: &Vector) -> Vector {
        &self.0 * x
    }
    fn adjoint_apply(&self, x: &Vector) -> Vector {
        self.0.tr_mul(x)
    }
    fn to_dense(&self) -> Result<DMatrix<f64>> {
        Ok(self.0.clone())
    }
}

/// `s·Λ` for a positive factor `s`; used by the `shrink` safeguard.
pub struct ScaledWeight {
    inner: Arc<dyn WeightOperator>,
    factor: f64,
}

impl ScaledWeight {
    pub fn new(inner: Arc<dyn WeightOperator>, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weight scale factor must be positive, got {factor}"
            )));
        }
        Ok(Self { inner, factor })
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }
}

impl WeightOperator for ScaledWeight {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn kind(&self) -> WeightKind {
        self.inner.kind()
    }
    fn apply(&self, x: &Vector) -> Vector {
        self.inner.apply(x) * self.factor
    }
    fn adjoint_apply(&self, x: &Vector) -> Vector {
        self.inner.adjoint_apply(x) * self.factor
    }
    fn scalar_value(&self) -> Option<f64> {
        self.inner.scalar_value().map(|v| v * self.factor)
    }
    fn diagonal(&self) -> Option<Vector> {
        self.inner.diagonal().map(|d| d * self.factor)
    }
    fn block_info(&self) -> Option<BlockInfo> {
        self.inner.block_info()
    }
}

/// Extreme Rayleigh quotients `(lower, upper)` of the symmetric part of `Λ`.
///
/// Scalar and diagonal weights are read off directly. Other weights use a
/// dense eigendecomposition of `(Λ + Λ*)/2` up to [`DENSE_EIGEN_DIM`] and
/// `iterations` steps of (shifted) power iteration beyond that.
pub fn weight_spectral_bounds(w: &dyn WeightOperator, iterations: usize) -> Result<(f64, f64)> {
    let (lo, hi) = if let Some(v) = w.scalar_value() {
        (v, v)
    } else if let Some(d) = w.diagonal() {
        (d.min(), d.max())
    } else if w.dim() <= DENSE_EIGEN_DIM {
        let m = w.to_dense()?;
        symmetric_extremes((&m + m.transpose()) * 0.5)
    } else {
        power_bounds_of_symmetric_part(w, iterations.max(1))
    };
    if !(lo > 0.0) {
        return Err(Error::NotPositiveDefinite { rayleigh: lo });
    }
    Ok((lo, hi))
}

fn power_bounds_of_symmetric_part(w: &dyn WeightOperator, iterations: usize) -> (f64, f64) {
    let sym = |x: &Vector| (w.apply(x) + w.adjoint_apply(x)) * 0.5;
    let mut rng = seeded_rng(0xb0_u64);
    let mut v = gaussian_vector(&mut rng, w.dim());
    v /= v.norm();
    let mut upper = f64::NEG_INFINITY;
    for _ in 0..iterations {
        let sv = sym(&v);
        upper = upper.max(v.dot(&sv));
        let n = sv.norm();
        if n == 0.0 {
            break;
        }
        v = sv / n;
    }
    // λ_min(S) = upper - λ_max(upper·I - S)
    let mut v = gaussian_vector(&mut rng, w.dim());
    v /= v.norm();
    let mut gap = 0.0_f64;
    for _ in 0..iterations {
        let sv = &v * upper - sym(&v);
        gap = gap.max(v.dot(&sv));
        let n = sv.norm();
        if n == 0.0 {
            break;
        }
        v = sv / n;
    }
    (upper - gap, upper)
}
