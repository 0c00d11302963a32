//! Trajectory CSV, metrics JSON and text summaries.

use std::io::{Read, Write};

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DVector;
use serde::Serialize;
use ttcbf::barrier::ClassK;
use ttcbf::scenarios::metrics::Metrics;
use ttcbf::scenarios::sim::{Method, Sample, StepStatus, Trajectory};
use ttcbf::scenarios::Scenario;

/// Column layout of a trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub n_barriers: usize,
    pub n_eta: usize,
    pub n_zeta: usize,
    pub n_psi: usize,
}

impl Columns {
    pub fn of(scenario: &Scenario, tr: &Trajectory) -> Self {
        let first = tr.samples.first();
        let count = |f: fn(&Sample) -> usize| first.map_or(0, f);
        Self {
            states: scenario.state_names().iter().map(|s| s.to_string()).collect(),
            inputs: scenario.input_names().iter().map(|s| s.to_string()).collect(),
            n_barriers: tr.barrier_names.len(),
            n_eta: count(|s| s.eta.len()),
            n_zeta: count(|s| s.zeta.len()),
            n_psi: count(|s| s.psi.len()),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(self.states.iter().cloned());
        h.extend(self.inputs.iter().cloned());
        h.extend((0..self.n_barriers).map(|i| format!("h_{i}")));
        h.extend((0..self.n_eta).map(|i| format!("eta_{i}")));
        h.extend((0..self.n_zeta).map(|i| format!("zeta_{i}")));
        h.extend((0..self.n_psi).map(|i| format!("psi_{i}")));
        h.push("status".into());
        h
    }

    /// Recover the layout from a header line.
    pub fn parse(header: &[String], inputs: usize) -> Result<Self> {
        if header.first().map(String::as_str) != Some("t") || header.last().map(String::as_str) != Some("status") {
            bail!("trajectory header must start with `t` and end with `status`");
        }
        let body = &header[1..header.len() - 1];
        let count = |prefix: &str| body.iter().filter(|c| c.starts_with(prefix)).count();
        let tagged = ["h_", "eta_", "zeta_", "psi_"];
        let plain: Vec<String> = body
            .iter()
            .filter(|c| !tagged.iter().any(|p| c.starts_with(p)))
            .cloned()
            .collect();
        if plain.len() < inputs {
            bail!("header has {} untagged columns, need at least {inputs}", plain.len());
        }
        let split = plain.len() - inputs;
        Ok(Self {
            states: plain[..split].to_vec(),
            inputs: plain[split..].to_vec(),
            n_barriers: count("h_"),
            n_eta: count("eta_"),
            n_zeta: count("zeta_"),
            n_psi: count("psi_"),
        })
    }
}

/// Shortest decimal that reads back to the same `f64`.
fn fmt_f64(v: f64) -> String {
    v.to_string()
}

pub fn write_trajectory<W: Write>(w: W, columns: &Columns, tr: &Trajectory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(columns.header())?;
    for s in &tr.samples {
        let mut rec = vec![fmt_f64(s.t)];
        rec.extend(s.x.iter().chain(s.u.iter()).map(|v| fmt_f64(*v)));
        rec.extend(s.h.iter().chain(&s.eta).chain(&s.zeta).chain(&s.psi).map(|v| fmt_f64(*v)));
        rec.push(s.status.name().into());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// One parsed row of a trajectory file; `u_nom` is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: f64,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub h: Vec<f64>,
    pub eta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub psi: Vec<f64>,
    pub status: StepStatus,
}

impl Row {
    pub fn matches(&self, s: &Sample) -> bool {
        self.t == s.t
            && self.x == s.x
            && self.u == s.u
            && self.h == s.h
            && self.eta == s.eta
            && self.zeta == s.zeta
            && self.psi == s.psi
            && self.status == s.status
    }
}

pub fn read_trajectory<R: Read>(r: R, inputs: usize) -> Result<(Columns, Vec<Row>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let cols = Columns::parse(&header, inputs)?;
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut fields = rec.iter();
        let mut take = |n: usize| -> Result<Vec<f64>> {
            (0..n)
                .map(|_| {
                    let f = fields.next().ok_or_else(|| anyhow!("row {}: too few fields", line + 1))?;
                    f.parse::<f64>().with_context(|| format!("row {}: bad number `{f}`", line + 1))
                })
                .collect()
        };
        let t = take(1)?[0];
        let x = DVector::from_vec(take(cols.states.len())?);
        let u = DVector::from_vec(take(cols.inputs.len())?);
        let h = take(cols.n_barriers)?;
        let eta = take(cols.n_eta)?;
        let zeta = take(cols.n_zeta)?;
        let psi = take(cols.n_psi)?;
        let status = rec
            .get(rec.len() - 1)
            .unwrap_or_default()
            .parse::<StepStatus>()
            .map_err(|e| anyhow!("row {}: {e}", line + 1))?;
        rows.push(Row {
            t,
            x,
            u,
            h,
            eta,
            zeta,
            psi,
            status,
        });
    }
    Ok((cols, rows))
}

#[derive(Debug, Serialize)]
pub struct RunRecord<'a> {
    pub method: Method,
    pub classk: ClassK,
    pub seed: u64,
    /// The effective scenario parameters, tagged with the scenario name.
    pub config: &'a Scenario,
    /// Obstacle centers actually simulated (corridor only).
    pub layout: Option<Vec<[f64; 2]>>,
    pub barriers: &'a [String],
    pub metrics: &'a Metrics,
}

pub fn layout(scenario: &Scenario) -> Option<Vec<[f64; 2]>> {
    match scenario {
        Scenario::Corridor(p) => Some(p.layout()),
        Scenario::SpringMass(_) => None,
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or("-".into(), |v| format!("{v:.digits$}"))
}

pub fn summary(label: &str, m: &Metrics) -> String {
    let mut s = String::new();
    let efforts: Vec<String> = m
        .normalized_effort
        .iter()
        .map(|e| format!("{:.1}%", 100.0 * e))
        .collect();
    s.push_str(&format!("{:<24} {label}\n", "run"));
    s.push_str(&format!("{:<24} {}\n", "samples", m.samples));
    s.push_str(&format!("{:<24} {}\n", "avg speed [m/s]", opt(m.avg_speed, 3)));
    s.push_str(&format!("{:<24} {}\n", "normalized effort", efforts.join(" ")));
    s.push_str(&format!("{:<24} {:.3}\n", "total effort", m.total_effort));
    s.push_str(&format!("{:<24} {}\n", "mean path error [m]", opt(m.mean_path_error, 3)));
    s.push_str(&format!("{:<24} {:.6}\n", "min barrier", m.min_barrier));
    s.push_str(&format!("{:<24} {}\n", "fallback steps", m.infeasible_steps));
    s.push_str(&format!(
        "{:<24} {}\n",
        "design parameters",
        m.design_parameters.map_or("-".into(), |n| n.to_string())
    ));
    s.push_str(&format!(
        "{:<24} {} at {} s\n",
        "peak output",
        opt(m.peak_output, 4),
        opt(m.peak_time, 2)
    ));
    s.push_str(&format!("{:<24} {}\n", "mean QP time [ms]", opt(m.mean_qp_ms, 4)));
    s
}

pub const COMPARISON_HEADER: [&str; 15] = [
    "cell",
    "method",
    "kind",
    "gain",
    "avg_speed",
    "effort_u1",
    "effort_u2",
    "total_effort",
    "mean_path_error",
    "min_barrier",
    "fallback_steps",
    "design_parameters",
    "peak_output",
    "mean_qp_ms",
    "exit",
];

pub fn comparison_row(label: &str, method: Method, classk: ClassK, gain_used: bool, m: &Metrics, exit: u8) -> Vec<String> {
    let o = |v: Option<f64>| v.map_or(String::new(), fmt_f64);
    vec![
        label.into(),
        method.to_string(),
        classk.kind.to_string(),
        if gain_used { fmt_f64(classk.gain) } else { String::new() },
        o(m.avg_speed),
        o(m.normalized_effort.first().copied()),
        o(m.normalized_effort.get(1).copied()),
        fmt_f64(m.total_effort),
        o(m.mean_path_error),
        fmt_f64(m.min_barrier),
        m.infeasible_steps.to_string(),
        m.design_parameters.map_or(String::new(), |n| n.to_string()),
        o(m.peak_output),
        o(m.mean_qp_ms),
        exit.to_string(),
    ]
}
