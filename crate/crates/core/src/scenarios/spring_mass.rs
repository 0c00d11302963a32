//! Three masses in a chain of springs, pushed at the first mass; the third
//! mass must stay below a wall.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::barrier::{AffineSystem, BarrierSpec, ClassK, InputBox, LtiBarrier, LtiSystem};
use crate::error::{Error, Result};
use crate::scenarios::sim::Tracker;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpringMassParams {
    pub masses: [f64; 3],
    pub stiffness: f64,
    pub u_max: f64,
    pub dt: f64,
    /// `[x1, x2, x3, v1, v2, v3]`.
    pub x0: [f64; 6],
    pub x3_des: f64,
    pub x3_safe: f64,
    /// Repeated closed-loop pole of the tracking controller.
    pub pole: f64,
    pub classk_gain: f64,
    pub weight_eta: f64,
    pub hocbf_gains: Vec<f64>,
    pub duration: f64,
}

impl Default for SpringMassParams {
    fn default() -> Self {
        Self {
            masses: [1.0; 3],
            stiffness: 5.0,
            u_max: 5.0,
            dt: 0.01,
            x0: [0.0, 1.0, 2.0, 2.0, 1.0, 0.0],
            x3_des: 3.0,
            x3_safe: 3.5,
            pole: 2.0,
            classk_gain: 0.95,
            weight_eta: 500.0,
            hocbf_gains: vec![1.0; 6],
            duration: 10.0,
        }
    }
}

impl SpringMassParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                })
            }
        };
        for &m in &self.masses {
            positive("masses", m)?;
        }
        positive("stiffness", self.stiffness)?;
        positive("u_max", self.u_max)?;
        positive("dt", self.dt)?;
        positive("pole", self.pole)?;
        if !(self.duration >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "duration",
                reason: format!("must be nonnegative, got {}", self.duration),
            });
        }
        Ok(())
    }

    pub fn x0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }
}

pub fn spring_mass_system(p: &SpringMassParams) -> Result<LtiSystem> {
    p.validate()?;
    let [m1, m2, m3] = p.masses;
    let k = p.stiffness;
    let stiff = DMatrix::from_row_slice(
        3,
        3,
        &[
            -k / m1,
            k / m1,
            0.0,
            k / m2,
            -2.0 * k / m2,
            k / m2,
            0.0,
            k / m3,
            -k / m3,
        ],
    );
    let mut a = DMatrix::zeros(6, 6);
    a.view_mut((0, 3), (3, 3)).copy_from(&DMatrix::identity(3, 3));
    a.view_mut((3, 0), (3, 3)).copy_from(&stiff);
    let mut b = DMatrix::zeros(6, 1);
    b[(3, 0)] = 1.0 / m1;
    LtiSystem::new(a, b, InputBox::symmetric(&[p.u_max])?)
}

/// Tracked output `y = x3`.
pub fn output_row() -> RowDVector<f64> {
    RowDVector::from_row_slice(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
}

/// `h = x3_safe - x3`.
pub fn spring_mass_barrier(p: &SpringMassParams, system: &LtiSystem, classk: ClassK) -> Result<BarrierSpec> {
    let provider = LtiBarrier::new(system, -output_row(), p.x3_safe)?;
    Ok(BarrierSpec {
        name: "wall".into(),
        provider: Box::new(provider),
        classk,
    })
}

/// Coefficients `a_0..a_{n-1}` of `(s + pole)^n`, constant term first.
pub fn pole_coefficients(pole: f64, n: usize) -> Vec<f64> {
    let mut poly = vec![1.0];
    for _ in 0..n {
        let mut next = vec![0.0; poly.len() + 1];
        for (i, &c) in poly.iter().enumerate() {
            next[i] += pole * c;
            next[i + 1] += c;
        }
        poly = next;
    }
    poly.truncate(n);
    poly
}

/// Input-output linearising tracker for `x3 -> x3_des`.
#[derive(Debug, Clone)]
pub struct SpringMassTracker {
    /// `C A^i` for `i = 0..=n`.
    rows: Vec<RowDVector<f64>>,
    gain: f64,
    coeffs: Vec<f64>,
    reference: f64,
    bounds: InputBox,
}

impl SpringMassTracker {
    pub fn new(p: &SpringMassParams, system: &LtiSystem) -> Self {
        let n = system.a().nrows();
        let mut rows = vec![output_row()];
        for i in 0..n {
            let next = &rows[i] * system.a();
            rows.push(next);
        }
        let gain = (&rows[n - 1] * system.b())[0];
        Self {
            rows,
            gain,
            coeffs: pole_coefficients(p.pole, n),
            reference: p.x3_des,
            bounds: system.input_box().clone(),
        }
    }

    /// Unclamped linearising input.
    pub fn raw(&self, x: &DVector<f64>) -> f64 {
        let n = self.coeffs.len();
        let target: f64 = (0..n)
            .map(|i| {
                let reference = if i == 0 { self.reference } else { 0.0 };
                -self.coeffs[i] * ((&self.rows[i] * x)[0] - reference)
            })
            .sum();
        (target - (&self.rows[n] * x)[0]) / self.gain
    }
}

impl Tracker for SpringMassTracker {
    fn nominal(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        self.bounds.clamp(&DVector::from_element(1, self.raw(x)))
    }
}

/// Clamped nominal input at `x`.
pub fn spring_mass_nominal(p: &SpringMassParams, x: &DVector<f64>) -> Result<f64> {
    let system = spring_mass_system(p)?;
    Ok(SpringMassTracker::new(p, &system).nominal(x, 0.0)[0])
}
