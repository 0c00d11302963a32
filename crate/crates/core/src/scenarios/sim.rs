//! Closed-loop simulation: filter at the sampling rate, RK4 integration of
//! the continuous plant under zero-order hold in between.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::barrier::{AffineSystem, BarrierSpec};
use crate::error::{Error, Result};
use crate::hocbf::{build_hocbf_row, hocbf_psi_values, HocbfChainSpec};
use crate::qp::{fallback_max_safety, ActiveSetSolver, ClfRow, ProblemParts, SafetyFilterProblem, SafetyRow};
use crate::taylor::{build_attcbf_row, build_ttcbf_row, worst_case_remainder, RemainderState, TaylorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nominal,
    Ttcbf,
    Attcbf,
    Hocbf,
}

impl Method {
    pub const ALL: [Method; 4] = [Self::Nominal, Self::Ttcbf, Self::Attcbf, Self::Hocbf];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nominal => "nominal",
            Self::Ttcbf => "ttcbf",
            Self::Attcbf => "attcbf",
            Self::Hocbf => "hocbf",
        }
    }

    pub fn is_adaptive(self) -> bool {
        self == Self::Attcbf
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Nominal controller and CLF rows of a tracking task.
pub trait Tracker: Send + Sync {
    /// Nominal input, already clamped to the input box.
    fn nominal(&self, x: &DVector<f64>, t: f64) -> DVector<f64>;

    fn n_clf(&self) -> usize {
        0
    }

    fn clf_rows(&self, _x: &DVector<f64>, _t: f64) -> Result<Vec<ClfRow>> {
        Ok(Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub method: Method,
    pub dt: f64,
    pub duration: f64,
    pub substeps: usize,
    pub weight_u: DMatrix<f64>,
    pub slack_weight: f64,
    pub gain_weight: f64,
    /// Linear gains `a_1..a_r` for the HOCBF baseline.
    pub hocbf_gains: Vec<f64>,
}

impl SimConfig {
    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round().max(0.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepStatus {
    /// Nominal input applied without a filter.
    Nominal,
    Optimal,
    /// QP failed; the max-safety input was applied.
    Fallback,
}

impl StepStatus {
    pub fn name(self) -> &'static str {
        match self {
            Self::Nominal => "nominal",
            Self::Optimal => "optimal",
            Self::Fallback => "fallback",
        }
    }
}

impl std::str::FromStr for StepStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "nominal" => Ok(Self::Nominal),
            "optimal" => Ok(Self::Optimal),
            "fallback" => Ok(Self::Fallback),
            other => Err(format!("unknown step status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub u_nom: DVector<f64>,
    pub h: Vec<f64>,
    pub eta: Vec<f64>,
    pub zeta: Vec<f64>,
    /// HOCBF runs only: `psi_1..psi_{r-1}` of every barrier, concatenated.
    pub psi: Vec<f64>,
    pub status: StepStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub method: Method,
    pub dt: f64,
    pub barrier_names: Vec<String>,
    pub samples: Vec<Sample>,
    pub initial_condition_ok: bool,
    pub qp_solves: usize,
    pub qp_seconds: f64,
}

impl Trajectory {
    pub fn fallback_count(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.status == StepStatus::Fallback)
            .count()
    }

    pub fn min_barrier(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.h.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_barrier(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.h.iter().map(|h| h.abs()))
            .fold(0.0, f64::max)
    }
}

fn rk4_step(system: &dyn AffineSystem, x: &DVector<f64>, u: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = system.dynamics(x, u);
    let k2 = system.dynamics(&(x + &k1 * (h / 2.0)), u);
    let k3 = system.dynamics(&(x + &k2 * (h / 2.0)), u);
    let k4 = system.dynamics(&(x + &k3 * h), u);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrate `dt` under constant input with `substeps` RK4 steps.
pub fn integrate_zoh(
    system: &dyn AffineSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    substeps: usize,
) -> DVector<f64> {
    let n = substeps.max(1);
    let h = dt / n as f64;
    (0..n).fold(x.clone(), |x, _| rk4_step(system, &x, u, h))
}

/// Run one closed loop from `x0`.
pub fn simulate(
    system: &dyn AffineSystem,
    barriers: &[BarrierSpec],
    tracker: &dyn Tracker,
    x0: DVector<f64>,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    if x0.len() != system.dim_x() {
        return Err(Error::DimensionMismatch {
            context: "initial state",
            expected: system.dim_x(),
            got: x0.len(),
        });
    }
    let bounds = system.input_box().clone();
    let n_barriers = barriers.len();
    let taylor: Vec<TaylorConfig> = barriers
        .iter()
        .map(|b| TaylorConfig::new(cfg.dt, b.provider.relative_degree()))
        .collect::<Result<_>>()?;
    let hocbf: Vec<HocbfChainSpec> = if cfg.method == Method::Hocbf {
        barriers
            .iter()
            .map(|b| {
                let r = b.provider.relative_degree();
                if cfg.hocbf_gains.len() != r {
                    return Err(Error::DimensionMismatch {
                        context: "hocbf gains vs relative degree",
                        expected: r,
                        got: cfg.hocbf_gains.len(),
                    });
                }
                HocbfChainSpec::new(cfg.hocbf_gains.clone())
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let n_gains = if cfg.method.is_adaptive() { n_barriers } else { 0 };
    let n_slacks = tracker.n_clf();

    let mut memory = vec![RemainderState::default(); n_barriers];
    let mut solver = ActiveSetSolver::new();
    let mut samples = Vec::with_capacity(cfg.n_steps() + 1);
    let mut qp_solves = 0;
    let mut qp_seconds = 0.0;
    let mut x = x0;

    for k in 0..=cfg.n_steps() {
        let t = k as f64 * cfg.dt;
        let chains: Vec<_> = barriers.iter().map(|b| b.provider.chain(&x, t)).collect();
        let h: Vec<f64> = chains.iter().map(|c| c.h).collect();
        let u_nom = tracker.nominal(&x, t);

        let mut psi = Vec::new();
        let (u, zeta, eta, status) = if cfg.method == Method::Nominal {
            (u_nom.clone(), vec![], vec![], StepStatus::Nominal)
        } else {
            let mut safety_rows = Vec::with_capacity(n_barriers);
            for (i, (b, chain)) in barriers.iter().zip(&chains).enumerate() {
                let row = match cfg.method {
                    Method::Ttcbf | Method::Attcbf => {
                        let rem = worst_case_remainder(&taylor[i], chain, &memory[i], &bounds);
                        if cfg.method == Method::Ttcbf {
                            SafetyRow {
                                row: build_ttcbf_row(&taylor[i], chain, &b.classk, rem),
                                eta_index: None,
                            }
                        } else {
                            SafetyRow {
                                row: build_attcbf_row(&taylor[i], chain, b.classk.kind, rem),
                                eta_index: Some(i),
                            }
                        }
                    }
                    Method::Hocbf => {
                        psi.extend(hocbf_psi_values(&hocbf[i], chain)?.into_iter().skip(1));
                        SafetyRow {
                            row: build_hocbf_row(&hocbf[i], chain)?,
                            eta_index: None,
                        }
                    }
                    Method::Nominal => unreachable!(),
                };
                safety_rows.push(row);
            }
            let clf_rows = tracker.clf_rows(&x, t).unwrap_or_else(|err| {
                log::warn!("t={t}: dropping CLF rows ({err})");
                Vec::new()
            });
            let problem = SafetyFilterProblem::assemble(ProblemParts {
                u_nom: u_nom.clone(),
                weight_u: cfg.weight_u.clone(),
                slack_weights: vec![cfg.slack_weight; n_slacks],
                gain_weights: vec![cfg.gain_weight; n_gains],
                safety_rows,
                clf_rows,
                bounds: bounds.clone(),
            })?;
            let started = Instant::now();
            let solved = solver.solve_filter(&problem);
            qp_seconds += started.elapsed().as_secs_f64();
            qp_solves += 1;
            match solved {
                Ok(sol) => (
                    sol.u,
                    sol.zetas.iter().copied().collect(),
                    sol.etas.iter().copied().collect(),
                    StepStatus::Optimal,
                ),
                Err(err) => {
                    log::info!("t={t:.3}: filter QP failed ({err}), applying max-safety input");
                    let u = fallback_max_safety(&problem);
                    let eta = problem
                        .parts()
                        .safety_rows
                        .iter()
                        .filter(|s| s.eta_index.is_some())
                        .map(|s| if s.row.coeff_eta > 0.0 { 1.0 } else { 0.0 })
                        .collect();
                    (u, vec![0.0; n_slacks], eta, StepStatus::Fallback)
                }
            }
        };

        for (mem, chain) in memory.iter_mut().zip(&chains) {
            mem.record(chain, &u);
        }
        let next = (k < cfg.n_steps()).then(|| integrate_zoh(system, &x, &u, cfg.dt, cfg.substeps));
        samples.push(Sample {
            t,
            x,
            u,
            u_nom,
            h,
            eta,
            zeta,
            psi,
            status,
        });
        match next {
            Some(nx) => x = nx,
            None => break,
        }
    }

    let initial_condition_ok = barriers.iter().enumerate().all(|(i, b)| {
        samples
            .iter()
            .take(b.provider.relative_degree())
            .all(|s| s.h[i] >= 0.0)
    });
    if !initial_condition_ok && matches!(cfg.method, Method::Ttcbf | Method::Attcbf) {
        log::warn!("initial barrier values are negative within the first r steps");
    }

    Ok(Trajectory {
        method: cfg.method,
        dt: cfg.dt,
        barrier_names: barriers.iter().map(|b| b.name.clone()).collect(),
        samples,
        initial_condition_ok,
        qp_solves,
        qp_seconds,
    })
}
