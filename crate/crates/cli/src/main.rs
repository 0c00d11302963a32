use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ttcbf::barrier::ClassKKind;
use ttcbf::scenarios::sim::Method;
use ttcbf_cli::config::{self, FileConfig, Overrides, ScenarioKind};
use ttcbf_cli::{EXIT_CONFIG, EXIT_FAILURE};

#[derive(Parser)]
#[command(name = "ttcbf", version, about = "Run truncated-Taylor CBF safety-filter scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration.
    Run(Common),
    /// Simulate every cell of the method x kind x gain grid.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// spring-mass or corridor.
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    /// nominal, ttcbf, attcbf or hocbf.
    #[arg(long)]
    method: Option<Method>,
    /// linear, exponential or rational.
    #[arg(long)]
    classk: Option<ClassKKind>,
    #[arg(long)]
    gain: Option<f64>,
    /// Simulated time in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            scenario: self.scenario,
            method: self.method,
            kind: self.classk,
            gain: self.gain,
            duration: self.duration,
            out: self.out.clone(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, is_sweep) = match &cli.command {
        Command::Run(c) => (c, false),
        Command::Sweep(c) => (c, true),
    };

    let file = match &common.config {
        Some(path) => match config::load(path) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => FileConfig::default(),
    };
    let settings = match config::resolve(file, &common.overrides()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let result = if is_sweep {
        ttcbf_cli::sweep(&settings, ttcbf_cli::workers_from_env())
    } else {
        ttcbf_cli::run(&settings).map(|o| {
            print!("{}", ttcbf_cli::output::summary(&settings.scenario.name().to_string(), &o.metrics));
            o.exit
        })
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
