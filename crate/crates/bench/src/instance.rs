//! The inverse-integration test problem.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use opweight::operators::{LinearMap, Vector};
use opweight::{Error, Result};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `H = Ĥ/n` with `Ĥ` the lower-triangular matrix of ones: a scaled
/// cumulative sum. The adjoint is the reversed cumulative sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntegrationOperator {
    n: usize,
}

pub fn make_integration_operator(n: usize) -> IntegrationOperator {
    assert!(n >= 1, "integration operator needs n >= 1");
    IntegrationOperator { n }
}

impl IntegrationOperator {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Singular values of `Ĥ` are `1/(2 sin((2k−1)π/(2(2n+1))))`, `k = 1..n`.
    fn singular_value(&self, k: usize) -> f64 {
        let n = self.n as f64;
        let s = 0.5 / (((2 * k - 1) as f64) * PI / (2.0 * (2.0 * n + 1.0))).sin();
        s / n
    }

    /// `‖H‖²`.
    pub fn norm_sq(&self) -> f64 {
        self.singular_value(1).powi(2)
    }

    /// `λ_min(H*H)`.
    pub fn gram_min_eigenvalue(&self) -> f64 {
        self.singular_value(self.n).powi(2)
    }
}

impl LinearMap for IntegrationOperator {
    fn rows(&self) -> usize {
        self.n
    }

    fn cols(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &Vector) -> Vector {
        let inv = 1.0 / self.n as f64;
        let mut acc = 0.0;
        x.map(|v| {
            acc += v;
            acc * inv
        })
    }

    fn adjoint_apply(&self, y: &Vector) -> Vector {
        let inv = 1.0 / self.n as f64;
        let mut out = Vector::zeros(self.n);
        let mut acc = 0.0;
        for i in (0..self.n).rev() {
            acc += y[i];
            out[i] = acc * inv;
        }
        out
    }

    fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        let inv = 1.0 / self.n as f64;
        DMatrix::from_fn(self.n, idx.len(), |i, k| if i >= idx[k] { inv } else { 0.0 })
    }

    fn gram(&self, idx: &[usize]) -> DMatrix<f64> {
        let n = self.n as f64;
        let inv2 = 1.0 / (n * n);
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| (n - idx[a].max(idx[b]) as f64) * inv2)
    }
}

/// Parameters of one benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub n: usize,
    /// `f64::INFINITY` means noiseless data.
    pub snr_db: f64,
    pub mu: f64,
    pub c: f64,
    pub d: f64,
    pub seed: u64,
    /// Fraction of nonzero entries in the ground truth (rounded up).
    pub spike_fraction: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self { n: 1000, snr_db: 30.0, mu: 3e-3, c: -80.0, d: 52.0, seed: 7, spike_fraction: 0.02 }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("n must be at least 2, got {}", self.n)));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidParameter(format!("invalid SNR {}", self.snr_db)));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!("μ must be positive, got {}", self.mu)));
        }
        if self.c > self.d {
            return Err(Error::InvalidBox { lower: self.c, upper: self.d });
        }
        if !(self.spike_fraction > 0.0 && self.spike_fraction <= 1.0) {
            return Err(Error::InvalidParameter("spike fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn spikes(&self) -> usize {
        ((self.spike_fraction * self.n as f64).ceil() as usize).clamp(1, self.n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub h: IntegrationOperator,
    pub b: Vector,
    pub x_true: Vector,
}

impl Instance {
    pub fn support_size(&self) -> usize {
        self.x_true.iter().filter(|v| **v != 0.0).count()
    }
}

/// Sparse spikes at uniform positions with amplitudes uniform in `[c/2, d/2]`,
/// observed through `H` with Gaussian noise at the requested SNR
/// (`10 log₁₀(‖Hx‖²/‖e‖²)`).
pub fn make_instance(spec: &ExperimentSpec) -> Result<Instance> {
    spec.validate()?;
    let h = make_integration_operator(spec.n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = (0.5 * spec.c, 0.5 * spec.d);
    let x_true = loop {
        let mut x = Vector::zeros(spec.n);
        for i in sample(&mut rng, spec.n, spec.spikes()) {
            x[i] = if lo < hi { rng.random_range(lo..hi) } else { lo };
        }
        if x.iter().any(|v| *v != 0.0) {
            break x;
        }
        log::warn!("ground truth drew all zeros; redrawing");
        if lo == 0.0 && hi == 0.0 {
            return Err(Error::InvalidParameter("amplitude range [c/2, d/2] is {0}".into()));
        }
    };
    let clean = h.apply(&x_true);
    let b = if spec.snr_db.is_infinite() {
        clean
    } else {
        let noise = Vector::from_fn(spec.n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let target = clean.norm_squared() / 10f64.powf(spec.snr_db / 10.0);
        let scale = (target / noise.norm_squared()).sqrt();
        &clean + noise * scale
    };
    Ok(Instance { h, b, x_true })
}

/// `10 log₁₀(‖Hx_true‖² / ‖b − Hx_true‖²)`.
pub fn measured_snr_db(inst: &Instance) -> f64 {
    let clean = inst.h.apply(&inst.x_true);
    10.0 * (clean.norm_squared() / (&inst.b - clean).norm_squared()).log10()
}

/// `‖a − b‖/√n`.
pub fn rmse(a: &Vector, b: &Vector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ContractViolation(format!(
            "rmse of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok((a - b).norm() / (a.len() as f64).sqrt())
}
