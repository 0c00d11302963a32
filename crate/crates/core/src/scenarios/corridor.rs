//! Unicycle driving laps in an annular corridor lined with round obstacles.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::barrier::{AffineSystem, BarrierSpec, ChainProvider, ClassK, DerivativeChain, InputBox};
use crate::error::{Error, Result};
use crate::qp::ClfRow;
use crate::scenarios::sim::Tracker;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorridorParams {
    pub center: [f64; 2],
    pub r_center: f64,
    pub r_inner: f64,
    pub r_outer: f64,
    pub r_robot: f64,
    pub n_obstacles: usize,
    pub r_obstacle: f64,
    pub v_des: f64,
    pub dt: f64,
    pub u1_max: f64,
    pub u2_max: f64,
    pub lookahead_deg: f64,
    pub clf_rate: f64,
    pub k_theta: f64,
    pub k_v: f64,
    pub weight_dev: f64,
    pub weight_slack: f64,
    pub weight_eta: f64,
    pub duration: f64,
    /// Radii of the inner and outer obstacle rings used by the generated layout.
    pub ring_radii: [f64; 2],
    /// Angular offset of each ring, as a fraction of the ring spacing.
    pub ring_phases: [f64; 2],
    /// Explicit obstacle centers; replaces the generated rings when set.
    pub obstacles: Option<Vec<[f64; 2]>>,
    /// `[x, y, theta, v]`; defaults to the centerline at polar angle 0,
    /// heading counterclockwise, at rest.
    pub x0: Option<[f64; 4]>,
    pub hocbf_gains: Vec<f64>,
}

impl Default for CorridorParams {
    fn default() -> Self {
        Self {
            center: [0.0, 0.0],
            r_center: 40.0,
            r_inner: 35.0,
            r_outer: 45.0,
            r_robot: 2.0,
            n_obstacles: 16,
            r_obstacle: 4.0,
            v_des: 10.0,
            dt: 0.05,
            u1_max: 2.0,
            u2_max: 2.0,
            lookahead_deg: 5.0,
            clf_rate: 4.0,
            k_theta: 1.0,
            k_v: 1.0,
            weight_dev: 1.0,
            weight_slack: 100.0,
            weight_eta: 500.0,
            duration: 8.0,
            ring_radii: [34.5, 46.75],
            ring_phases: [0.5, 1.0],
            obstacles: None,
            x0: None,
            hocbf_gains: vec![1.0, 1.0],
        }
    }
}

impl CorridorParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r_robot", self.r_robot),
            ("r_obstacle", self.r_obstacle),
            ("dt", self.dt),
            ("u1_max", self.u1_max),
            ("u2_max", self.u2_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
        }
        if !(self.r_inner + self.r_robot < self.r_center && self.r_center < self.r_outer - self.r_robot) {
            return Err(Error::InvalidParameter {
                name: "r_center",
                reason: format!(
                    "need r_inner + r_robot < r_center < r_outer - r_robot, got {} < {} < {}",
                    self.r_inner + self.r_robot,
                    self.r_center,
                    self.r_outer - self.r_robot
                ),
            });
        }
        if !(self.duration >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "duration",
                reason: format!("must be nonnegative, got {}", self.duration),
            });
        }
        Ok(())
    }

    /// Obstacle centers: the explicit list if given, otherwise two rings of
    /// `n_obstacles / 2` evenly spaced centers.
    pub fn layout(&self) -> Vec<[f64; 2]> {
        if let Some(obs) = &self.obstacles {
            return obs.clone();
        }
        let inner = self.n_obstacles / 2;
        let counts = [inner, self.n_obstacles - inner];
        let mut out = Vec::with_capacity(self.n_obstacles);
        for ring in 0..2 {
            let n = counts[ring];
            for k in 0..n {
                let phi = (k as f64 + self.ring_phases[ring]) * TAU / n as f64;
                out.push([
                    self.center[0] + self.ring_radii[ring] * phi.cos(),
                    self.center[1] + self.ring_radii[ring] * phi.sin(),
                ]);
            }
        }
        out
    }

    pub fn x0(&self) -> DVector<f64> {
        let x0 = self
            .x0
            .unwrap_or([self.center[0] + self.r_center, self.center[1], FRAC_PI_2, 0.0]);
        DVector::from_column_slice(&x0)
    }

    pub fn input_box(&self) -> Result<InputBox> {
        InputBox::symmetric(&[self.u1_max, self.u2_max])
    }

    pub fn weight_u(&self) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * self.weight_dev
    }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Unicycle with state `[x, y, theta, v]` and input `[turn rate, acceleration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Unicycle {
    bounds: InputBox,
}

impl Unicycle {
    pub fn new(bounds: InputBox) -> Result<Self> {
        if bounds.dim() != 2 {
            return Err(Error::DimensionMismatch {
                context: "unicycle input box",
                expected: 2,
                got: bounds.dim(),
            });
        }
        Ok(Self { bounds })
    }
}

impl AffineSystem for Unicycle {
    fn dim_x(&self) -> usize {
        4
    }

    fn dim_u(&self) -> usize {
        2
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[3] * x[2].cos(), x[3] * x[2].sin(), 0.0, 0.0])
    }

    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(4, 2);
        g[(2, 0)] = 1.0;
        g[(3, 1)] = 1.0;
        g
    }

    fn input_box(&self) -> &InputBox {
        &self.bounds
    }
}

/// `h = |p - c|^2 - R^2` (keep out) or its negation (keep in).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleBarrier {
    pub center: [f64; 2],
    pub radius: f64,
    pub keep_out: bool,
}

impl ChainProvider for CircleBarrier {
    fn relative_degree(&self) -> usize {
        2
    }

    fn chain(&self, x: &DVector<f64>, _t: f64) -> DerivativeChain {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        let (s, c) = x[2].sin_cos();
        let v = x[3];
        let sign = if self.keep_out { 1.0 } else { -1.0 };
        let radial = dx * c + dy * s;
        DerivativeChain {
            h: sign * (dx * dx + dy * dy - self.radius * self.radius),
            derivs: vec![sign * 2.0 * v * radial],
            top_drift: sign * 2.0 * v * v,
            top_input: RowDVector::from_row_slice(&[
                sign * 2.0 * v * (dy * c - dx * s),
                sign * 2.0 * radial,
            ]),
        }
    }
}

/// Inner wall, outer wall, then one barrier per obstacle.
pub fn corridor_barriers(p: &CorridorParams, classk: ClassK) -> Vec<BarrierSpec> {
    let mut out = vec![
        BarrierSpec {
            name: "inner".into(),
            provider: Box::new(CircleBarrier {
                center: p.center,
                radius: p.r_inner + p.r_robot,
                keep_out: true,
            }),
            classk,
        },
        BarrierSpec {
            name: "outer".into(),
            provider: Box::new(CircleBarrier {
                center: p.center,
                radius: p.r_outer - p.r_robot,
                keep_out: false,
            }),
            classk,
        },
    ];
    for (i, c) in p.layout().into_iter().enumerate() {
        out.push(BarrierSpec {
            name: format!("obs{i}"),
            provider: Box::new(CircleBarrier {
                center: c,
                radius: p.r_obstacle + p.r_robot,
                keep_out: true,
            }),
            classk,
        });
    }
    out
}

/// Heading toward the centerline point `lookahead` ahead of the robot.
pub fn desired_heading(p: &CorridorParams, x: &DVector<f64>) -> Result<f64> {
    let (dx, dy) = (x[0] - p.center[0], x[1] - p.center[1]);
    if dx.hypot(dy) < 1e-9 {
        return Err(Error::DegenerateGeometry("robot at the corridor center"));
    }
    let phi = dy.atan2(dx) + p.lookahead_deg.to_radians();
    let tx = p.center[0] + p.r_center * phi.cos();
    let ty = p.center[1] + p.r_center * phi.sin();
    Ok((ty - x[1]).atan2(tx - x[0]))
}

/// `(e_theta, e_v)` with `e_theta = wrap(theta - theta_des)`, `e_v = v - v_des`.
fn errors(p: &CorridorParams, x: &DVector<f64>) -> Result<(f64, f64)> {
    Ok((wrap_angle(x[2] - desired_heading(p, x)?), x[3] - p.v_des))
}

/// Heading and speed CLF rows `dV/dt + rate * V <= zeta`.
pub fn corridor_clf_rows(p: &CorridorParams, x: &DVector<f64>) -> Result<[ClfRow; 2]> {
    let (e_theta, e_v) = errors(p, x)?;
    Ok([
        ClfRow {
            grad_u: RowDVector::from_row_slice(&[2.0 * e_theta, 0.0]),
            drift: 0.0,
            decay: p.clf_rate * e_theta * e_theta,
            slack_index: 0,
        },
        ClfRow {
            grad_u: RowDVector::from_row_slice(&[0.0, 2.0 * e_v]),
            drift: 0.0,
            decay: p.clf_rate * e_v * e_v,
            slack_index: 1,
        },
    ])
}

/// Proportional law driving both errors to zero, clamped to the box.
pub fn corridor_nominal(p: &CorridorParams, x: &DVector<f64>) -> Result<DVector<f64>> {
    let (e_theta, e_v) = errors(p, x)?;
    let u = DVector::from_vec(vec![-p.k_theta * e_theta, -p.k_v * e_v]);
    Ok(p.input_box()?.clamp(&u))
}

#[derive(Debug, Clone)]
pub struct CorridorTracker {
    params: CorridorParams,
}

impl CorridorTracker {
    pub fn new(params: CorridorParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl Tracker for CorridorTracker {
    fn nominal(&self, x: &DVector<f64>, _t: f64) -> DVector<f64> {
        corridor_nominal(&self.params, x).unwrap_or_else(|_| DVector::zeros(2))
    }

    fn n_clf(&self) -> usize {
        2
    }

    fn clf_rows(&self, x: &DVector<f64>, _t: f64) -> Result<Vec<ClfRow>> {
        Ok(corridor_clf_rows(&self.params, x)?.to_vec())
    }
}
