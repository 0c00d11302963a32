//! The two benchmark experiments and the machinery to run them.

pub mod corridor;
pub mod metrics;
pub mod sim;
pub mod spring_mass;

use serde::{Deserialize, Serialize};

use crate::barrier::{AffineSystem, ClassK};
use crate::error::Result;
use corridor::{corridor_barriers, CorridorParams, CorridorTracker, Unicycle};
use metrics::{base_metrics, count_design_parameters, state_mean, state_peak, DesignMethod, Metrics};
use sim::{simulate, Method, SimConfig, Trajectory};
use spring_mass::{spring_mass_barrier, spring_mass_system, SpringMassParams, SpringMassTracker};

/// RK4 substeps per control period.
pub const SUBSTEPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum Scenario {
    SpringMass(SpringMassParams),
    Corridor(CorridorParams),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SpringMass(_) => "spring_mass",
            Self::Corridor(_) => "corridor",
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            Self::SpringMass(p) => p.duration,
            Self::Corridor(p) => p.duration,
        }
    }

    pub fn set_duration(&mut self, duration: f64) {
        match self {
            Self::SpringMass(p) => p.duration = duration,
            Self::Corridor(p) => p.duration = duration,
        }
    }

    pub fn default_classk(&self) -> ClassK {
        match self {
            Self::SpringMass(p) => ClassK::linear(p.classk_gain),
            Self::Corridor(_) => ClassK::linear(0.2),
        }
    }

    pub fn state_names(&self) -> Vec<&'static str> {
        match self {
            Self::SpringMass(_) => vec!["x1", "x2", "x3", "v1", "v2", "v3"],
            Self::Corridor(_) => vec!["x", "y", "theta", "v"],
        }
    }

    pub fn input_names(&self) -> Vec<&'static str> {
        match self {
            Self::SpringMass(_) => vec!["u"],
            Self::Corridor(_) => vec!["u1", "u2"],
        }
    }

    /// Simulate with `method`; `classk` applies to every barrier.
    pub fn run(&self, method: Method, classk: ClassK) -> Result<Trajectory> {
        match self {
            Self::SpringMass(p) => {
                let system = spring_mass_system(p)?;
                let barriers = vec![spring_mass_barrier(p, &system, classk)?];
                let tracker = SpringMassTracker::new(p, &system);
                let cfg = SimConfig {
                    method,
                    dt: p.dt,
                    duration: p.duration,
                    substeps: SUBSTEPS,
                    weight_u: nalgebra::DMatrix::identity(1, 1),
                    slack_weight: 1.0,
                    gain_weight: p.weight_eta,
                    hocbf_gains: p.hocbf_gains.clone(),
                };
                simulate(&system, &barriers, &tracker, p.x0(), &cfg)
            }
            Self::Corridor(p) => {
                let system = Unicycle::new(p.input_box()?)?;
                let barriers = corridor_barriers(p, classk);
                let tracker = CorridorTracker::new(p.clone())?;
                let cfg = SimConfig {
                    method,
                    dt: p.dt,
                    duration: p.duration,
                    substeps: SUBSTEPS,
                    weight_u: p.weight_u(),
                    slack_weight: p.weight_slack,
                    gain_weight: p.weight_eta,
                    hocbf_gains: p.hocbf_gains.clone(),
                };
                simulate(&system, &barriers, &tracker, p.x0(), &cfg)
            }
        }
    }

    pub fn metrics(&self, tr: &Trajectory) -> Result<Metrics> {
        match self {
            Self::SpringMass(p) => {
                let system = spring_mass_system(p)?;
                let mut m = base_metrics(tr, system.input_box());
                let (peak, at) = state_peak(tr, 2);
                m.peak_output = Some(peak);
                m.peak_time = Some(at);
                Ok(m)
            }
            Self::Corridor(p) => {
                let mut m = base_metrics(tr, &p.input_box()?);
                m.avg_speed = Some(state_mean(tr, |x| x[3]));
                m.mean_path_error = Some(state_mean(tr, |x| {
                    ((x[0] - p.center[0]).hypot(x[1] - p.center[1]) - p.r_center).abs()
                }));
                if tr.method == Method::Attcbf {
                    m.design_parameters = Some(count_design_parameters(
                        DesignMethod::Attcbf,
                        tr.barrier_names.len(),
                        2,
                    ));
                }
                Ok(m)
            }
        }
    }
}
