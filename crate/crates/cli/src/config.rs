//! File configuration and flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use ttcbf::barrier::{ClassK, ClassKKind};
use ttcbf::scenarios::corridor::CorridorParams;
use ttcbf::scenarios::sim::Method;
use ttcbf::scenarios::spring_mass::SpringMassParams;
use ttcbf::scenarios::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[serde(alias = "spring-mass")]
    SpringMass,
    Corridor,
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "spring_mass" => Ok(Self::SpringMass),
            "corridor" => Ok(Self::Corridor),
            other => Err(format!("unknown scenario `{other}` (expected spring-mass or corridor)")),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SpringMass => "spring_mass",
            Self::Corridor => "corridor",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassKSection {
    pub kind: Option<ClassKKind>,
    pub gain: Option<f64>,
}

/// Cells of a sweep: every method crossed with every kind; fixed-gain
/// methods are also crossed with every gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub methods: Vec<Method>,
    pub kinds: Vec<ClassKKind>,
    pub gains: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            methods: vec![Method::Ttcbf, Method::Attcbf],
            kinds: ClassKKind::ALL.to_vec(),
            gains: vec![0.2, 0.3, 0.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub method: Method,
    pub classk: ClassK,
    /// False when the gain is replaced by adaptive gains and only the kind matters.
    pub gain_used: bool,
}

impl Cell {
    pub fn label(&self) -> String {
        if self.gain_used {
            format!("{}_{}_{}", self.method, self.classk.kind, self.classk.gain)
        } else {
            format!("{}_{}", self.method, self.classk.kind)
        }
    }
}

fn gain_used(method: Method) -> bool {
    matches!(method, Method::Ttcbf)
}

impl SweepGrid {
    pub fn cells(&self, default_gain: f64) -> Vec<Cell> {
        let mut out = Vec::new();
        for &method in &self.methods {
            for &kind in &self.kinds {
                if gain_used(method) {
                    for &gain in &self.gains {
                        out.push(Cell {
                            method,
                            classk: ClassK { kind, gain },
                            gain_used: true,
                        });
                    }
                } else {
                    out.push(Cell {
                        method,
                        classk: ClassK {
                            kind,
                            gain: default_gain,
                        },
                        gain_used: false,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: Option<ScenarioKind>,
    pub method: Option<Method>,
    pub classk: ClassKSection,
    pub duration: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub spring_mass: SpringMassParams,
    pub corridor: CorridorParams,
    pub sweep: SweepGrid,
}

/// Read a config file; errors carry the path and the parser's line/field context.
pub fn load(path: &Path) -> Result<FileConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn parse(text: &str) -> Result<FileConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<ScenarioKind>,
    pub method: Option<Method>,
    pub kind: Option<ClassKKind>,
    pub gain: Option<f64>,
    pub duration: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Everything needed for one run, after defaults and overrides.
#[derive(Debug, Clone)]
pub struct Settings {
    pub scenario: Scenario,
    pub method: Method,
    pub classk: ClassK,
    pub seed: u64,
    pub out: PathBuf,
    pub grid: SweepGrid,
}

pub fn resolve(file: FileConfig, flags: &Overrides) -> Result<Settings, String> {
    let kind = flags
        .scenario
        .or(file.scenario)
        .ok_or("no scenario given (use --scenario or `scenario = ...`)")?;
    let mut scenario = match kind {
        ScenarioKind::SpringMass => Scenario::SpringMass(file.spring_mass),
        ScenarioKind::Corridor => Scenario::Corridor(file.corridor),
    };
    if let Some(d) = flags.duration.or(file.duration) {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(format!("duration: must be nonnegative, got {d}"));
        }
        scenario.set_duration(d);
    }
    match &scenario {
        Scenario::SpringMass(p) => p.validate(),
        Scenario::Corridor(p) => p.validate(),
    }
    .map_err(|e| format!("{kind}: {e}"))?;

    let default = scenario.default_classk();
    let classk = ClassK::new(
        flags.kind.or(file.classk.kind).unwrap_or(default.kind),
        flags.gain.or(file.classk.gain).unwrap_or(default.gain),
    )
    .map_err(|e| format!("classk: {e}"))?;

    Ok(Settings {
        scenario,
        method: flags.method.or(file.method).unwrap_or(Method::Ttcbf),
        classk,
        seed: file.seed.unwrap_or(0),
        out: flags
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("out")),
        grid: file.sweep,
    })
}
