//! Truncated-Taylor barrier rows.
//!
//! For a barrier of relative degree `r` sampled every `dt`, the value `r`
//! steps ahead is expanded about the current state with step `dT = r dt`:
//!
//! ```text
//! h(t + dT) ~ h + sum_{i=1}^{r-1} dT^i / i! h^(i) + dT^r / r! h^(r)(u) + R
//! ```
//!
//! The controller demands `h(t + dT) - h + alpha(h) >= 0`, with the remainder
//! `R` replaced by a worst case built from a backward difference of `h^(r)`.
//! The result is one linear inequality in `(u, eta)`.

use nalgebra::{DVector, RowDVector};

use crate::barrier::{ClassK, ClassKKind, DerivativeChain, InputBox};
use crate::error::{Error, Result};

/// Sampling period, relative degree and the derived Taylor step `r * dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorConfig {
    dt: f64,
    r: usize,
    step: f64,
}

impl TaylorConfig {
    pub fn new(dt: f64, r: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive, got {dt}"),
            });
        }
        if r == 0 {
            return Err(Error::InvalidParameter {
                name: "relative degree",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Self {
            dt,
            r,
            step: taylor_step(r, dt),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn relative_degree(&self) -> usize {
        self.r
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `step^i / i!` for `i = 0..=r+1`.
    fn coefficients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.r + 2);
        let mut c = 1.0;
        out.push(c);
        for i in 1..=self.r + 1 {
            c *= self.step / i as f64;
            out.push(c);
        }
        out
    }
}

pub fn taylor_step(r: usize, dt: f64) -> f64 {
    r as f64 * dt
}

/// Per-barrier memory of the realised top derivative at the previous step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RemainderState {
    pub prev_top: Option<f64>,
}

impl RemainderState {
    /// Store `h^(r)` under the input that was actually applied.
    pub fn record(&mut self, chain: &DerivativeChain, applied: &DVector<f64>) {
        self.prev_top = Some(chain.top(applied));
    }
}

/// Minimum of `h^(r)` over the input box.
pub fn worst_case_top(chain: &DerivativeChain, bounds: &InputBox) -> f64 {
    chain
        .top_input
        .iter()
        .enumerate()
        .fold(chain.top_drift, |acc, (j, &coeff)| {
            let u = if coeff < 0.0 {
                bounds.upper()[j]
            } else {
                bounds.lower()[j]
            };
            acc + coeff * u
        })
}

/// Worst-case Lagrange remainder estimate
/// `dT^(r+1) / ((r+1)! dt) * (h^(r)_min - h^(r)_prev)`; zero on the first step.
pub fn worst_case_remainder(
    cfg: &TaylorConfig,
    chain: &DerivativeChain,
    mem: &RemainderState,
    bounds: &InputBox,
) -> f64 {
    debug_assert_eq!(cfg.relative_degree(), chain.relative_degree());
    match mem.prev_top {
        None => 0.0,
        Some(prev) => {
            let coeff = cfg.coefficients()[cfg.r + 1] / cfg.dt;
            coeff * (worst_case_top(chain, bounds) - prev)
        }
    }
}

/// Linear inequality `coeff_u . u + coeff_eta * eta >= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraintRow {
    pub coeff_u: RowDVector<f64>,
    pub coeff_eta: f64,
    pub rhs: f64,
}

impl LinearConstraintRow {
    /// Signed slack of the row; nonnegative when satisfied.
    pub fn margin(&self, u: &DVector<f64>, eta: f64) -> f64 {
        (&self.coeff_u * u)[0] + self.coeff_eta * eta - self.rhs
    }
}

/// Input-free part of the Taylor prediction and the coefficient of `u`.
fn taylor_terms(cfg: &TaylorConfig, chain: &DerivativeChain, remainder: f64) -> (f64, RowDVector<f64>) {
    debug_assert_eq!(cfg.relative_degree(), chain.relative_degree());
    let c = cfg.coefficients();
    let r = cfg.r;
    let lower: f64 = chain
        .derivs
        .iter()
        .enumerate()
        .map(|(i, d)| c[i + 1] * d)
        .sum();
    let known = lower + c[r] * chain.top_drift + remainder;
    (known, &chain.top_input * c[r])
}

/// TTCBF row with a fixed class-K function.
pub fn build_ttcbf_row(
    cfg: &TaylorConfig,
    chain: &DerivativeChain,
    classk: &ClassK,
    remainder: f64,
) -> LinearConstraintRow {
    let (known, coeff_u) = taylor_terms(cfg, chain, remainder);
    LinearConstraintRow {
        coeff_u,
        coeff_eta: 0.0,
        rhs: -(known + classk.eval(chain.h)),
    }
}

/// aTTCBF row: the coefficient-free class-K value multiplies the gain `eta`.
pub fn build_attcbf_row(
    cfg: &TaylorConfig,
    chain: &DerivativeChain,
    kind: ClassKKind,
    remainder: f64,
) -> LinearConstraintRow {
    let (known, coeff_u) = taylor_terms(cfg, chain, remainder);
    LinearConstraintRow {
        coeff_u,
        coeff_eta: kind.unit(chain.h),
        rhs: -known,
    }
}

/// `h_{k+r} - h_k + alpha(h_k)`.
pub fn r_step_margin(h_k: f64, h_k_plus_r: f64, classk: &ClassK) -> f64 {
    h_k_plus_r - h_k + classk.eval(h_k)
}

/// Whether the realised `r`-step decrease is admissible.
pub fn r_step_condition(h_k: f64, h_k_plus_r: f64, classk: &ClassK) -> bool {
    r_step_margin(h_k, h_k_plus_r, classk) >= 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Wall barrier `h = 5 - p` on a double integrator at `x = [1, 2]`.
    fn wall_chain() -> DerivativeChain {
        DerivativeChain {
            h: 4.0,
            derivs: vec![-2.0],
            top_drift: 0.0,
            top_input: RowDVector::from_row_slice(&[-1.0]),
        }
    }

    fn unit_box(dim: usize) -> InputBox {
        InputBox::symmetric(&vec![1.0; dim]).unwrap()
    }

    #[test]
    fn taylor_step_examples() {
        assert_abs_diff_eq!(taylor_step(6, 0.01), 0.06, epsilon = 1e-15);
        assert_abs_diff_eq!(taylor_step(2, 0.05), 0.10, epsilon = 1e-15);
        assert_eq!(taylor_step(1, 0.05), 0.05);
        assert!(TaylorConfig::new(0.0, 2).is_err());
        assert!(TaylorConfig::new(0.1, 0).is_err());
    }

    #[test]
    fn worst_case_top_examples() {
        let chain = DerivativeChain {
            h: 0.0,
            derivs: vec![],
            top_drift: 1.0,
            top_input: RowDVector::from_row_slice(&[2.0, -3.0]),
        };
        // vertices: (-1,-1)->2, (-1,1)->-4, (1,-1)->6, (1,1)->0
        assert_eq!(worst_case_top(&chain, &unit_box(2)), -4.0);

        let flat = DerivativeChain {
            top_input: RowDVector::zeros(2),
            ..chain
        };
        assert_eq!(worst_case_top(&flat, &unit_box(2)), 1.0);

        assert_eq!(worst_case_top(&wall_chain(), &unit_box(1)), -1.0);
    }

    #[test]
    fn remainder_examples() {
        let cfg = TaylorConfig::new(0.05, 2).unwrap();
        let chain = wall_chain();
        let bounds = unit_box(1);
        let mem = RemainderState { prev_top: Some(0.0) };
        let rem = worst_case_remainder(&cfg, &chain, &mem, &bounds);
        assert_abs_diff_eq!(rem, -0.1f64.powi(3) / (6.0 * 0.05), epsilon = 1e-15);
        assert_abs_diff_eq!(rem, -0.003_333_333_333_333_333, epsilon = 1e-15);

        let same = RemainderState { prev_top: Some(-1.0) };
        assert_eq!(worst_case_remainder(&cfg, &chain, &same, &bounds), 0.0);

        let first = RemainderState::default();
        assert_eq!(worst_case_remainder(&cfg, &chain, &first, &bounds), 0.0);
    }

    #[test]
    fn record_uses_applied_input() {
        let mut mem = RemainderState::default();
        mem.record(&wall_chain(), &DVector::from_vec(vec![0.25]));
        assert_eq!(mem.prev_top, Some(-0.25));
    }

    #[test]
    fn ttcbf_row_double_integrator() {
        let cfg = TaylorConfig::new(0.05, 2).unwrap();
        let row = build_ttcbf_row(&cfg, &wall_chain(), &ClassK::linear(0.95), 0.0);
        assert_abs_diff_eq!(row.coeff_u[0], -0.005, epsilon = 1e-15);
        assert_eq!(row.coeff_eta, 0.0);
        assert_abs_diff_eq!(row.rhs, -3.6, epsilon = 1e-12);
    }

    #[test]
    fn ttcbf_row_inactive_far_from_boundary() {
        let cfg = TaylorConfig::new(0.05, 2).unwrap();
        let chain = DerivativeChain {
            h: 1.0e3,
            derivs: vec![0.0],
            top_drift: 0.0,
            top_input: RowDVector::from_row_slice(&[-1.0]),
        };
        let row = build_ttcbf_row(&cfg, &chain, &ClassK::linear(0.5), 0.0);
        assert!(row.rhs < -100.0);
        assert!(row.margin(&DVector::from_vec(vec![1.0]), 0.0) > 0.0);
    }

    #[test]
    fn ttcbf_row_relative_degree_one() {
        let cfg = TaylorConfig::new(0.05, 1).unwrap();
        let chain = DerivativeChain {
            h: 2.0,
            derivs: vec![],
            top_drift: 0.7,
            top_input: RowDVector::from_row_slice(&[1.5, -0.5]),
        };
        let k = ClassK::linear(0.3);
        let row = build_ttcbf_row(&cfg, &chain, &k, 0.01);
        let u = DVector::from_vec(vec![0.2, -0.4]);
        let expected = 0.05 * chain.top(&u) + k.eval(2.0) + 0.01;
        assert_abs_diff_eq!(row.margin(&u, 0.0), expected, epsilon = 1e-15);
    }

    #[test]
    fn attcbf_row_double_integrator() {
        let cfg = TaylorConfig::new(0.05, 2).unwrap();
        let row = build_attcbf_row(&cfg, &wall_chain(), ClassKKind::Linear, 0.0);
        assert_abs_diff_eq!(row.coeff_eta, 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(row.rhs, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(row.coeff_u[0], -0.005, epsilon = 1e-15);

        let boundary = DerivativeChain {
            h: 0.0,
            ..wall_chain()
        };
        let row = build_attcbf_row(&cfg, &boundary, ClassKKind::Rational, 0.0);
        assert_eq!(row.coeff_eta, 0.0);
    }

    #[test]
    fn r_step_examples() {
        let k = ClassK::linear(0.5);
        assert!(r_step_condition(1.0, 0.9, &k));
        assert!(!r_step_condition(1.0, 0.4, &k));
        assert!(r_step_condition(0.0, 0.0, &k));
        assert!(!r_step_condition(0.0, -1e-9, &k));
    }
}
