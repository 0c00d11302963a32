//! Safety filters built on truncated-Taylor control barrier functions.
//!
//! A barrier `h(x, t) >= 0` of relative degree `r` is predicted `r` sampling
//! periods ahead with an order-`r` Taylor expansion. The expansion is affine in
//! the current input, so the prediction plus a worst-case remainder estimate
//! yields one linear row per barrier. Rows from every barrier, soft CLF rows and
//! the input box form a small convex QP that is solved at each control step.
//!
//! Layout:
//!
//! * [`barrier`] - affine systems, derivative chains, class-K functions.
//! * [`taylor`] - TTCBF / aTTCBF rows and the remainder estimator.
//! * [`hocbf`] - continuous-time HOCBF baseline rows with linear gains.
//! * [`qp`] - problem assembly and a dense dual active-set solver.
//! * [`scenarios`] - spring-mass and corridor experiments, simulation, metrics.

pub mod barrier;
pub mod error;
pub mod hocbf;
pub mod qp;
pub mod scenarios;
pub mod taylor;

pub use error::{Error, Result};
