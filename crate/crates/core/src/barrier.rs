//! Affine systems, barrier derivative chains and class-K functions.

use std::fmt;

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Componentwise input bounds `lower <= u <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl InputBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                context: "input box",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if let Some(j) = (0..lower.len()).find(|&j| !(lower[j] <= upper[j])) {
            return Err(Error::InvalidBounds(j));
        }
        Ok(Self { lower, upper })
    }

    /// Box `[-limit_j, limit_j]` in every component.
    pub fn symmetric(limits: &[f64]) -> Result<Self> {
        let upper = DVector::from_column_slice(limits);
        Self::new(-upper.clone(), upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn clamp(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |j, _| u[j].clamp(self.lower[j], self.upper[j]))
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }

    /// Largest admissible magnitude per channel, used to normalise effort.
    pub fn magnitude_limits(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |j, _| self.lower[j].abs().max(self.upper[j].abs()))
    }
}

/// Input-affine dynamics `dx/dt = f(x) + g(x) u` with box-bounded input.
pub trait AffineSystem: Send + Sync {
    fn dim_x(&self) -> usize;

    fn dim_u(&self) -> usize;

    /// Drift `f(x)`.
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Input matrix `g(x)`, `dim_x x dim_u`.
    fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn input_box(&self) -> &InputBox;

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.drift(x) + self.input_matrix(x) * u
    }
}

/// Linear time-invariant plant `dx/dt = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    bounds: InputBox,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, bounds: InputBox) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                context: "A must be square",
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        if b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch {
                context: "rows of B",
                expected: a.nrows(),
                got: b.nrows(),
            });
        }
        if bounds.dim() != b.ncols() {
            return Err(Error::DimensionMismatch {
                context: "input box vs columns of B",
                expected: b.ncols(),
                got: bounds.dim(),
            });
        }
        Ok(Self { a, b, bounds })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

impl AffineSystem for LtiSystem {
    fn dim_x(&self) -> usize {
        self.a.nrows()
    }

    fn dim_u(&self) -> usize {
        self.b.ncols()
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }

    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.b.clone()
    }

    fn input_box(&self) -> &InputBox {
        &self.bounds
    }
}

/// Time derivatives of a barrier at one state.
///
/// `derivs` holds `h^(1) .. h^(r-1)`; the top derivative is affine in the
/// input: `h^(r) = top_drift + top_input . u`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeChain {
    pub h: f64,
    pub derivs: Vec<f64>,
    pub top_drift: f64,
    pub top_input: RowDVector<f64>,
}

impl DerivativeChain {
    pub fn relative_degree(&self) -> usize {
        self.derivs.len() + 1
    }

    /// `h^(i)` for `0 <= i < r`.
    pub fn derivative(&self, i: usize) -> f64 {
        if i == 0 {
            self.h
        } else {
            self.derivs[i - 1]
        }
    }

    /// `h^(r)` under input `u`.
    pub fn top(&self, u: &DVector<f64>) -> f64 {
        self.top_drift + (&self.top_input * u)[0]
    }
}

pub const EXPONENTIAL_POWER: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKKind {
    Linear,
    Exponential,
    Rational,
}

impl ClassKKind {
    pub const ALL: [ClassKKind; 3] = [Self::Linear, Self::Exponential, Self::Rational];

    /// Coefficient-free shape: `h`, `h^1.1` or `h^2 / (1 + h)`.
    ///
    /// Negative arguments use the odd extension `sign(h) * shape(|h|)`.
    pub fn unit(self, h: f64) -> f64 {
        match self {
            Self::Linear => h,
            Self::Exponential => h.signum() * h.abs().powf(EXPONENTIAL_POWER),
            Self::Rational => {
                let a = h.abs();
                h.signum() * a * a / (1.0 + a)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Exponential => "exponential",
            Self::Rational => "rational",
        }
    }
}

impl fmt::Display for ClassKKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ClassKKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "lin" => Ok(Self::Linear),
            "exponential" | "exp" => Ok(Self::Exponential),
            "rational" | "rat" => Ok(Self::Rational),
            other => Err(format!("unknown class-K kind `{other}`")),
        }
    }
}

/// Scaled class-K function `gain * shape(h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassK {
    pub kind: ClassKKind,
    pub gain: f64,
}

impl ClassK {
    pub fn new(kind: ClassKKind, gain: f64) -> Result<Self> {
        if !(gain >= 0.0 && gain.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "class-K gain",
                reason: format!("must be finite and nonnegative, got {gain}"),
            });
        }
        Ok(Self { kind, gain })
    }

    pub fn linear(gain: f64) -> Self {
        Self {
            kind: ClassKKind::Linear,
            gain,
        }
    }

    pub fn eval(&self, h: f64) -> f64 {
        eval_classk(self, self.gain, h)
    }
}

/// Evaluate `kind` with an externally supplied gain.
pub fn eval_classk(k: &ClassK, gain: f64, h: f64) -> f64 {
    gain * k.kind.unit(h)
}

/// Supplies the derivative chain of one barrier along the dynamics.
pub trait ChainProvider: Send + Sync {
    fn relative_degree(&self) -> usize;

    fn chain(&self, x: &DVector<f64>, t: f64) -> DerivativeChain;

    fn value(&self, x: &DVector<f64>, t: f64) -> f64 {
        self.chain(x, t).h
    }
}

/// A barrier together with its class-K function.
pub struct BarrierSpec {
    pub name: String,
    pub provider: Box<dyn ChainProvider>,
    pub classk: ClassK,
}

impl fmt::Debug for BarrierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BarrierSpec")
            .field("name", &self.name)
            .field("relative_degree", &self.provider.relative_degree())
            .field("classk", &self.classk)
            .finish()
    }
}

fn check_output_dims(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &RowDVector<f64>) -> Result<()> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "A must be square",
            expected: n,
            got: a.ncols(),
        });
    }
    if b.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "rows of B",
            expected: n,
            got: b.nrows(),
        });
    }
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            context: "length of c",
            expected: n,
            got: c.len(),
        });
    }
    Ok(())
}

/// Smallest `r` with `c A^(r-1) B != 0`.
///
/// Entries count as nonzero above `1e-12 * |c| |A|^(r-1) |B|` (Frobenius norms
/// bound the spectral norms).
pub fn relative_degree_lti(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &RowDVector<f64>,
) -> Result<usize> {
    check_output_dims(a, b, c)?;
    let n = a.nrows();
    let (na, nb) = (a.norm(), b.norm());
    let mut row = c.clone();
    let mut scale = c.norm() * nb;
    for r in 1..=n {
        let coupling = &row * b;
        let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
        if coupling.iter().any(|v| v.abs() > tol) {
            return Ok(r);
        }
        row = &row * a;
        scale *= na;
    }
    Err(Error::NoRelativeDegree(n))
}

/// Derivative chain of the output `c x` for an LTI plant.
pub fn lie_chain_lti(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &RowDVector<f64>,
    x: &DVector<f64>,
    r: usize,
) -> Result<DerivativeChain> {
    check_output_dims(a, b, c)?;
    if x.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            context: "state length",
            expected: a.nrows(),
            got: x.len(),
        });
    }
    if r == 0 {
        return Err(Error::InvalidParameter {
            name: "relative degree",
            reason: "must be at least 1".into(),
        });
    }
    // row_i = c A^i
    let mut row = c.clone();
    let h = (&row * x)[0];
    let mut derivs = Vec::with_capacity(r - 1);
    for _ in 1..r {
        row = &row * a;
        derivs.push((&row * x)[0]);
    }
    let top_input = &row * b;
    let top_drift = (&row * a * x)[0];
    Ok(DerivativeChain {
        h,
        derivs,
        top_drift,
        top_input,
    })
}

/// Barrier `h(x) = c x + offset` on an LTI plant.
#[derive(Debug, Clone)]
pub struct LtiBarrier {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: RowDVector<f64>,
    offset: f64,
    r: usize,
}

impl LtiBarrier {
    pub fn new(system: &LtiSystem, c: RowDVector<f64>, offset: f64) -> Result<Self> {
        let r = relative_degree_lti(system.a(), system.b(), &c)?;
        Ok(Self {
            a: system.a().clone(),
            b: system.b().clone(),
            c,
            offset,
            r,
        })
    }
}

impl ChainProvider for LtiBarrier {
    fn relative_degree(&self) -> usize {
        self.r
    }

    fn chain(&self, x: &DVector<f64>, _t: f64) -> DerivativeChain {
        let mut chain = lie_chain_lti(&self.a, &self.b, &self.c, x, self.r)
            .expect("dimensions validated at construction");
        chain.h += self.offset;
        chain
    }

    fn value(&self, x: &DVector<f64>, _t: f64) -> f64 {
        (&self.c * x)[0] + self.offset
    }
}
