//! Runs the benchmark scenarios and writes their artifacts.

pub mod config;
pub mod output;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use ttcbf::barrier::ClassK;
use ttcbf::scenarios::metrics::Metrics;
use ttcbf::scenarios::sim::Method;
use ttcbf::scenarios::Scenario;

use config::{Cell, Settings};
use output::{Columns, RunRecord};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_UNSAFE: u8 = 3;

/// Barrier values below this count as a safety violation.
pub const VIOLATION_TOLERANCE: f64 = 1e-6;

/// Environment variable holding the sweep worker count.
pub const WORKERS_ENV: &str = "TTCBF_WORKERS";

#[derive(Debug, Clone)]
pub struct Outcome {
    pub metrics: Metrics,
    pub exit: u8,
}

/// Simulate one configuration and write `trajectory.csv`, `metrics.json`
/// and `summary.txt` into `dir`.
pub fn run_one(scenario: &Scenario, method: Method, classk: ClassK, seed: u64, dir: &Path) -> Result<Outcome> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tr = scenario.run(method, classk)?;
    let metrics = scenario.metrics(&tr)?;

    let columns = Columns::of(scenario, &tr);
    let csv_path = dir.join("trajectory.csv");
    output::write_trajectory(
        BufWriter::new(File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?),
        &columns,
        &tr,
    )?;

    let record = RunRecord {
        method,
        classk,
        seed,
        config: scenario,
        layout: output::layout(scenario),
        barriers: &tr.barrier_names,
        metrics: &metrics,
    };
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&record)?)?;
    let label = format!("{} {} {}", scenario.name(), method, classk.kind);
    fs::write(dir.join("summary.txt"), output::summary(&label, &metrics))?;

    let exit = if metrics.min_barrier < -VIOLATION_TOLERANCE {
        log::warn!("{label}: safety violated, min barrier {:e}", metrics.min_barrier);
        EXIT_UNSAFE
    } else {
        EXIT_OK
    };
    Ok(Outcome { metrics, exit })
}

pub fn run(settings: &Settings) -> Result<Outcome> {
    run_one(
        &settings.scenario,
        settings.method,
        settings.classk,
        settings.seed,
        &settings.out,
    )
}

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Run every grid cell into its own subdirectory and write `comparison.csv`.
/// Returns the worst exit code over the cells.
pub fn sweep(settings: &Settings, workers: Option<usize>) -> Result<u8> {
    let cells = settings.grid.cells(settings.classk.gain);
    if cells.is_empty() {
        log::error!("sweep grid is empty");
        return Ok(EXIT_CONFIG);
    }
    fs::create_dir_all(&settings.out)?;
    let run_cell = |cell: &Cell| {
        let dir = settings.out.join(cell.label());
        match run_one(&settings.scenario, cell.method, cell.classk, settings.seed, &dir) {
            Ok(o) => {
                log::info!("{}: done", cell.label());
                Some(o)
            }
            Err(err) => {
                log::error!("{}: {err:#}", cell.label());
                None
            }
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    let results: Vec<Option<Outcome>> = pool.install(|| cells.par_iter().map(run_cell).collect());

    let mut table = csv::Writer::from_path(settings.out.join("comparison.csv"))?;
    table.write_record(output::COMPARISON_HEADER)?;
    let mut worst = EXIT_OK;
    for (cell, result) in cells.iter().zip(&results) {
        match result {
            Some(o) => {
                worst = worst.max(o.exit);
                table.write_record(output::comparison_row(
                    &cell.label(),
                    cell.method,
                    cell.classk,
                    cell.gain_used,
                    &o.metrics,
                    o.exit,
                ))?;
            }
            None => {
                worst = worst.max(EXIT_FAILURE);
                let mut row = vec![String::new(); output::COMPARISON_HEADER.len()];
                row[0] = cell.label();
                row[1] = cell.method.to_string();
                row[2] = cell.classk.kind.to_string();
                row[output::COMPARISON_HEADER.len() - 1] = EXIT_FAILURE.to_string();
                table.write_record(row)?;
            }
        }
    }
    table.flush()?;
    Ok(worst)
}
