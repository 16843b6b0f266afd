//! Run configuration: strict TOML with every problem reported at once.

use std::fmt;
use std::path::{Path, PathBuf};

use critfield::experiments::ExperimentConfig;
use critfield::spectrum::{DensitySpec, Family, SpectralDensity};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Problems with the configuration or the command line (exit code 2).
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Spectrum,
    Field,
    Count,
    Randmat,
    Chaos,
    Clt,
    Crosscheck,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Spectrum => "spectrum",
            Command::Field => "field",
            Command::Count => "count",
            Command::Randmat => "randmat",
            Command::Chaos => "chaos",
            Command::Clt => "clt",
            Command::Crosscheck => "crosscheck",
        })
    }
}

impl Command {
    fn needs_density(self) -> bool {
        self != Command::Randmat
    }

    fn needs_experiment(self) -> bool {
        matches!(
            self,
            Command::Field | Command::Count | Command::Clt | Command::Crosscheck
        )
    }
}

/// `density = "gaussian"` or a `[density]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DensityEntry {
    Name(String),
    Block(DensityBlock),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DensityBlock {
    #[serde(default)]
    pub family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleBlock {
    #[serde(default = "one")]
    pub u: f64,
    #[serde(default = "one")]
    pub v: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Shifts for the shifted-determinant identity.
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Matrix size for the eigenvalue histogram.
    #[serde(default = "default_matrix_size")]
    pub matrix_size: usize,
    #[serde(default = "default_matrices")]
    pub matrices: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl Default for EnsembleBlock {
    fn default() -> Self {
        EnsembleBlock {
            u: 1.0,
            v: 1.0,
            samples: default_samples(),
            lambdas: default_lambdas(),
            matrix_size: default_matrix_size(),
            matrices: default_matrices(),
            bins: default_bins(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentBlock {
    #[serde(default)]
    pub half_widths: Vec<f64>,
    #[serde(default)]
    pub realizations: usize,
    #[serde(default = "default_ppu")]
    pub points_per_unit: usize,
    #[serde(default = "default_padding")]
    pub padding: f64,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Write the realization of the `field` command as a binary dump.
    #[serde(default)]
    pub dump: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetBlock {
    #[serde(default = "default_max_samples")]
    pub max_samples: usize,
    #[serde(default = "default_max_grid_points")]
    pub max_grid_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_wall_seconds: Option<f64>,
}

impl Default for BudgetBlock {
    fn default() -> Self {
        BudgetBlock {
            max_samples: default_max_samples(),
            max_grid_points: default_max_grid_points(),
            max_wall_seconds: None,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_samples() -> usize {
    1_000_000
}
fn default_lambdas() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0]
}
fn default_matrix_size() -> usize {
    200
}
fn default_matrices() -> usize {
    100
}
fn default_bins() -> usize {
    36
}
fn default_ppu() -> usize {
    8
}
fn default_padding() -> f64 {
    2.0
}
fn default_epsilons() -> Vec<f64> {
    vec![0.2, 0.0125]
}
fn default_max_samples() -> usize {
    100_000_000
}
fn default_max_grid_points() -> usize {
    critfield::field::DEFAULT_MAX_POINTS
}

/// A validated run description. `seed` is always explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentBlock>,
    pub budget: BudgetBlock,
}

/// The file as written, before defaults and validation.
#[derive(Debug, Deserialize)]
struct RawConfig {
    command: Option<Command>,
    seed: Option<u64>,
    m: Option<usize>,
    out: Option<PathBuf>,
    density: Option<DensityEntry>,
    ensemble: Option<EnsembleBlock>,
    experiment: Option<ExperimentBlock>,
    budget: Option<BudgetBlock>,
}

const TOP_KEYS: &[&str] = &[
    "command",
    "seed",
    "m",
    "out",
    "density",
    "ensemble",
    "experiment",
    "budget",
];
const DENSITY_KEYS: &[&str] = &[
    "family", "params", "sigma", "radius", "power", "radii", "values",
];
const ENSEMBLE_KEYS: &[&str] = &[
    "u",
    "v",
    "samples",
    "lambdas",
    "matrix_size",
    "matrices",
    "bins",
];
const EXPERIMENT_KEYS: &[&str] = &[
    "half_widths",
    "realizations",
    "points_per_unit",
    "padding",
    "epsilons",
    "dump",
];
const BUDGET_KEYS: &[&str] = &["max_samples", "max_grid_points", "max_wall_seconds"];

fn suggest<'a>(key: &str, known: &[&'a str]) -> Option<&'a str> {
    known
        .iter()
        .map(|k| (strsim::jaro_winkler(key, k), *k))
        .filter(|(score, _)| *score >= 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k)
}

fn check_keys(table: &toml::Table, known: &[&str], at: &str, problems: &mut Vec<String>) {
    for key in table.keys() {
        if !known.contains(&key.as_str()) {
            let mut msg = format!("unknown key `{key}` {at}");
            if let Some(s) = suggest(key, known) {
                msg.push_str(&format!("; did you mean `{s}`?"));
            }
            problems.push(msg);
        }
    }
}

/// Unknown keys anywhere in the document, with nearest-key suggestions.
fn unknown_keys(doc: &toml::Table) -> Vec<String> {
    let mut problems = Vec::new();
    check_keys(doc, TOP_KEYS, "at the top level", &mut problems);
    let nested = [
        ("density", DENSITY_KEYS),
        ("ensemble", ENSEMBLE_KEYS),
        ("experiment", EXPERIMENT_KEYS),
        ("budget", BUDGET_KEYS),
    ];
    for (name, keys) in nested {
        if let Some(toml::Value::Table(t)) = doc.get(name) {
            check_keys(t, keys, &format!("in [{name}]"), &mut problems);
        }
    }
    problems
}

/// Parses and validates `text`. `command` and `seed` come from the command
/// line when given; the file's `command`, if present, must agree.
pub fn parse_config(
    text: &str,
    command: Command,
    seed: Option<u64>,
) -> Result<RunConfig, ConfigError> {
    let doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse(format!("TOML error: {e}")))?;
    let mut problems = unknown_keys(&doc);
    let raw: RawConfig = match toml::from_str(text) {
        Ok(r) => r,
        Err(e) if problems.is_empty() => {
            return Err(ConfigError::Parse(format!("TOML error: {e}")))
        }
        Err(e) => {
            problems.push(e.message().to_string());
            return Err(ConfigError::Invalid(problems));
        }
    };
    if let Some(c) = raw.command {
        if c != command {
            problems.push(format!("file is for `{c}` but `{command}` was requested"));
        }
    }
    let seed = seed.or(raw.seed);
    if seed.is_none() {
        problems.push("missing field `seed` (set it in the file or pass --seed)".into());
    }
    match raw.m {
        None => problems.push("missing field `m`".into()),
        Some(m) if command == Command::Randmat && m == 0 => {
            problems.push("`m` must be at least 1".into())
        }
        Some(m) if command != Command::Randmat && !(2..=3).contains(&m) => {
            problems.push(format!("`m` must be 2 or 3 for `{command}`, got {m}"))
        }
        _ => {}
    }
    if command.needs_density() && raw.density.is_none() {
        problems.push(format!("`{command}` needs a `density`"));
    }
    if let Some(d) = &raw.density {
        if let Err(e) = density_spec(d) {
            problems.push(e);
        }
    }
    if command.needs_experiment() && raw.experiment.is_none() {
        problems.push(format!("`{command}` needs an [experiment] block"));
    }
    if let Some(e) = &raw.experiment {
        experiment_problems(e, command, &mut problems);
    }
    let ensemble = match (command, raw.ensemble) {
        (Command::Randmat | Command::Chaos | Command::Clt, None) => Some(EnsembleBlock::default()),
        (_, e) => e,
    };
    if let Some(e) = &ensemble {
        if !(e.u >= 0.0 && e.v > 0.0) {
            problems.push(format!(
                "ensemble needs u >= 0 and v > 0, got u={}, v={}",
                e.u, e.v
            ));
        }
        if e.samples < critfield::randmat::MIN_SAMPLES {
            problems.push(format!(
                "ensemble.samples must be at least {}",
                critfield::randmat::MIN_SAMPLES
            ));
        }
        if e.matrix_size == 0 || e.matrices == 0 || e.bins == 0 {
            problems.push("matrix_size, matrices and bins must be positive".into());
        }
    }
    let budget = raw.budget.unwrap_or_default();
    if let Some(w) = budget.max_wall_seconds {
        if !(w > 0.0) {
            problems.push("budget.max_wall_seconds must be positive".into());
        }
    }
    if !problems.is_empty() {
        return Err(ConfigError::Invalid(problems));
    }
    Ok(RunConfig {
        command,
        seed: seed.expect("checked"),
        m: raw.m.expect("checked"),
        out: raw.out,
        density: raw.density,
        ensemble,
        experiment: raw.experiment,
        budget,
    })
}

fn experiment_problems(e: &ExperimentBlock, command: Command, problems: &mut Vec<String>) {
    if e.half_widths.is_empty() {
        problems.push("experiment.half_widths is empty".into());
    }
    if e.half_widths.iter().any(|n| !(*n > 0.0)) {
        problems.push("experiment.half_widths must be positive".into());
    }
    if e.half_widths.windows(2).any(|w| w[1] <= w[0]) {
        problems.push("experiment.half_widths must be increasing".into());
    }
    if e.realizations == 0 {
        problems.push("experiment.realizations must be positive".into());
    }
    if e.points_per_unit == 0 {
        problems.push("experiment.points_per_unit must be positive".into());
    }
    if !(e.padding >= 2.0) {
        problems.push("experiment.padding must be at least 2".into());
    }
    if e.epsilons.iter().any(|x| !(*x > 0.0)) {
        problems.push("experiment.epsilons must be positive".into());
    }
    if command == Command::Crosscheck {
        if e.epsilons.is_empty() {
            problems.push("crosscheck needs experiment.epsilons".into());
        }
        if e.half_widths.first().is_some_and(|n| *n > 5.0) {
            problems.push("crosscheck runs on half-widths up to 5".into());
        }
    }
}

/// Resolves a density entry to a family and flat parameter list.
pub fn density_spec(d: &DensityEntry) -> Result<DensitySpec, String> {
    let block = match d {
        DensityEntry::Name(name) => DensityBlock {
            family: name.clone(),
            ..Default::default()
        },
        DensityEntry::Block(b) => b.clone(),
    };
    if block.family.is_empty() {
        return Err("[density] needs `family`".into());
    }
    let family: Family = block
        .family
        .parse()
        .map_err(|_| format!("unknown density family `{}`", block.family))?;
    let params = if let Some(p) = block.params {
        p
    } else {
        match family {
            Family::Gaussian => vec![block.sigma.unwrap_or(1.0)],
            Family::CompactBump => vec![block.radius.unwrap_or(1.0), block.power.unwrap_or(3.0)],
            Family::UserTable => {
                let (Some(r), Some(v)) = (block.radii, block.values) else {
                    return Err("user-table needs `radii` and `values`".into());
                };
                if r.len() != v.len() {
                    return Err("user-table `radii` and `values` differ in length".into());
                }
                r.iter().zip(&v).flat_map(|(a, b)| [*a, *b]).collect()
            }
        }
    };
    let spec = DensitySpec { family, params };
    spec.build(2).map_err(|e| e.to_string())?;
    Ok(spec)
}

impl RunConfig {
    pub fn density_spec(&self) -> Option<DensitySpec> {
        self.density
            .as_ref()
            .map(|d| density_spec(d).expect("validated"))
    }

    pub fn density(&self) -> SpectralDensity {
        self.density_spec()
            .expect("command has a density")
            .build(self.m)
            .expect("validated")
    }

    pub fn ensemble(&self) -> EnsembleBlock {
        self.ensemble.clone().unwrap_or_default()
    }

    pub fn experiment(&self) -> &ExperimentBlock {
        self.experiment
            .as_ref()
            .expect("command has an experiment block")
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        let e = self.experiment();
        ExperimentConfig {
            density: self.density_spec().expect("command has a density"),
            m: self.m,
            half_widths: e.half_widths.clone(),
            realizations: e.realizations,
            points_per_unit: e.points_per_unit,
            padding: e.padding,
            master_seed: self.seed,
            epsilons: e.epsilons.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn read_config(
    path: &Path,
    command: Command,
    seed: Option<u64>,
) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, command, seed)
}
