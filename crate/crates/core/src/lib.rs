//! Dynamics of the random reflection map `x ↦ |x − θ|` on the half-line.
//!
//! Modules follow the analysis from pointwise orbits to measure dynamics:
//! [`measures`] (representations), [`orbits`] (trajectories, lattices),
//! [`drift`] (the averaged map `U`), [`transfer`] (pushforwards),
//! [`metric`] (Wasserstein contraction) and [`selfmap`] (fixed points of
//! `μ ↦ T*_μ μ`).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod drift;
pub mod error;
pub mod measures;
pub mod metric;
pub mod orbits;
mod par;
pub mod selfmap;

pub use error::{Error, Result};
pub use measures::{AtomicMeasure, EmpiricalMeasure, GridMeasure, Measure, Measure1D, MomentProfile};
pub mod transfer;

pub use par::kahan_sum;
