//! Operator-weighted fixed-point iterations and a variable-metric primal–dual
//! solver with semismooth-Newton weights.
//!
//! ```
//! use opweight::fixed_point::{fb_solve, FixedPointConfig, WeightSchedule};
//! use opweight::operators::{DenseMap, Vector};
//! use opweight::prox::{L1Norm, QuadraticDataFit};
//! use std::sync::Arc;
//!
//! // (x - 2)^2 + |x| is minimized at 1.5
//! let h = Arc::new(DenseMap(nalgebra::DMatrix::from_element(1, 1, 1.0)));
//! let f = QuadraticDataFit::new(h, Vector::from_element(1, 2.0)).unwrap();
//! let g = L1Norm::new(1.0).unwrap();
//! let schedule = WeightSchedule::constant(1, 0.05, 0.9).unwrap();
//! let cfg = FixedPointConfig { residual_tol: 1e-14, ..Default::default() };
//! let (x, _) = fb_solve(&f, &g, 0.25, &schedule, Vector::zeros(1), &cfg).unwrap();
//! assert!((x[0] - 1.5).abs() < 1e-12);
//! ```

pub mod baselines;
pub mod error;
pub mod fixed_point;
pub mod operators;
pub mod primal_dual;
pub mod prox;
pub mod ssn;
pub mod trace;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/prox.md")]
    mod prox {}
    #[doc = include_str!("../../../book/src/fixed_point.md")]
    mod fixed_point {}
    #[doc = include_str!("../../../book/src/primal_dual.md")]
    mod primal_dual {}
    #[doc = include_str!("../../../book/src/ssn.md")]
    mod ssn {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/benchmark.md")]
    mod benchmark {}
}
