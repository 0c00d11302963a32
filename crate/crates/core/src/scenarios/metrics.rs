use serde::{Deserialize, Serialize};

use crate::barrier::InputBox;
use crate::scenarios::sim::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMethod {
    Attcbf,
    Pacbf,
    Racbf,
}

/// Parameters a designer must tune: weights plus class-K gains.
pub fn count_design_parameters(method: DesignMethod, n_safe: usize, r: usize) -> usize {
    let r1 = r.saturating_sub(1);
    match method {
        DesignMethod::Attcbf => n_safe,
        DesignMethod::Pacbf => 2 * n_safe * r1 + 2 * n_safe * r1,
        DesignMethod::Racbf => 2 * n_safe + n_safe * (2 * r + 1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub samples: usize,
    pub avg_speed: Option<f64>,
    /// Mean `|u_j| / u_j,max` per channel.
    pub normalized_effort: Vec<f64>,
    pub total_effort: f64,
    pub mean_path_error: Option<f64>,
    pub min_barrier: f64,
    pub infeasible_steps: usize,
    pub design_parameters: Option<usize>,
    pub peak_output: Option<f64>,
    pub peak_time: Option<f64>,
    pub initial_condition_ok: bool,
    pub mean_qp_ms: Option<f64>,
}

/// Scenario-independent part of the metrics.
pub fn base_metrics(tr: &Trajectory, bounds: &InputBox) -> Metrics {
    let n = tr.samples.len().max(1) as f64;
    let limits = bounds.magnitude_limits();
    let normalized_effort: Vec<f64> = (0..limits.len())
        .map(|j| {
            tr.samples
                .iter()
                .map(|s| (s.u[j].abs() / limits[j]).min(1.0))
                .sum::<f64>()
                / n
        })
        .collect();
    Metrics {
        samples: tr.samples.len(),
        avg_speed: None,
        total_effort: normalized_effort.iter().sum(),
        normalized_effort,
        mean_path_error: None,
        min_barrier: tr.min_barrier(),
        infeasible_steps: tr.fallback_count(),
        design_parameters: None,
        peak_output: None,
        peak_time: None,
        initial_condition_ok: tr.initial_condition_ok,
        mean_qp_ms: (tr.qp_solves > 0).then(|| 1e3 * tr.qp_seconds / tr.qp_solves as f64),
    }
}

/// Mean of `f(x)` over the samples.
pub fn state_mean(tr: &Trajectory, f: impl Fn(&nalgebra::DVector<f64>) -> f64) -> f64 {
    tr.samples.iter().map(|s| f(&s.x)).sum::<f64>() / tr.samples.len().max(1) as f64
}

/// Largest value of state component `i` and the first time it is attained.
pub fn state_peak(tr: &Trajectory, i: usize) -> (f64, f64) {
    tr.samples
        .iter()
        .fold((f64::NEG_INFINITY, 0.0), |(best, at), s| {
            if s.x[i] > best {
                (s.x[i], s.t)
            } else {
                (best, at)
            }
        })
}
