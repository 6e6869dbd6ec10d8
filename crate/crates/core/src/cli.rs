//! JSON-configured experiment runner behind the `impulse-qvi` binary.
//!
//! A run reads one [`ExperimentConfig`], solves the selected problem in `f64`,
//! runs the requested probes and writes `solution.csv`, `report.json` and
//! `manifest.json` (plus per-probe sample CSVs and, for sweeps, `decay.csv`)
//! to the output directory. Exit codes: 0 converged, 2 solver did not
//! converge (outputs still written), 1 config or IO error.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::elliptic::{ObstacleSide, OperatorError, OperatorKind, OperatorSpec, SymMat};
use crate::grid::{Grid, GridError, GridFunction, NodeSet};
use crate::intervention::{
    default_contact_tol, intervention_operator, separation_delta, CostFunction, InterventionError,
};
use crate::obstacle::{solve_obstacle, ObstacleProblem, SolveError, SolverOptions};
use crate::penalty::{
    epsilon_sweep, interior_subbox, max_abs_penalty, solve_penalized, PenaltyError, PenaltyFamily,
    PenaltyKind, SweepSetup,
};
use crate::probe::{
    contact_oscillation, extract_contact_set, growth_constant, holder_seminorm,
    semiconcavity_modulus, HessianField, ModulusFamily, ProbeError, ProbeReport,
};
use crate::qvi::{check_qvi, solve_qvi, QviError, QviOptions, QviProblem};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown preset `{name}`; available: {}", PRESETS.join(", "))]
    UnknownPreset { name: String },
    #[error("cannot read field CSV {path}: {message}")]
    FieldCsv { path: PathBuf, message: String },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Intervention(#[from] InterventionError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Qvi(#[from] QviError),
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

pub const PRESETS: &[&str] = &["classical", "oracle1d", "corollary1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub m: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub kind: OperatorKind,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(rename = "Lambda", default = "one")]
    pub big_lambda: f64,
    /// Coefficient matrices `[xx, xy, yy]` for the Bellman kinds.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub family: Vec<[f64; 3]>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            kind: OperatorKind::Laplace,
            lambda: 1.0,
            big_lambda: 1.0,
            family: Vec::new(),
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Obstacle,
    Qvi,
    Penalized,
    Sweep,
}

/// A grid field: a number for a constant, or `{"csv": "path"}` (relative to
/// the config file) in the format written by `GridFunction::write_csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSource {
    Constant(f64),
    Csv { csv: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Obstacle side for mode `obstacle`; lower by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<ObstacleSide>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstacle: Option<FieldSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<FieldSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<FieldSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<FieldSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<PenaltyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sweeps: Option<usize>,
    /// SOR factor; the optimal Laplacian factor for the grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Contact,
    Growth,
    Oscillation,
    Semiconcavity,
    Holder,
    Separation,
}

impl ProbeKind {
    fn name(self) -> &'static str {
        match self {
            ProbeKind::Contact => "contact",
            ProbeKind::Growth => "growth",
            ProbeKind::Oscillation => "oscillation",
            ProbeKind::Semiconcavity => "semiconcavity",
            ProbeKind::Holder => "holder",
            ProbeKind::Separation => "separation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default)]
    pub probes: Vec<ProbeKind>,
    #[serde(default = "one")]
    pub modulus_constant: f64,
    #[serde(default = "one")]
    pub modulus_exponent: f64,
    #[serde(default = "half")]
    pub alpha: f64,
    #[serde(default = "default_budget")]
    pub sample_budget: usize,
    #[serde(default = "default_steps")]
    pub steps: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_tol: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            probes: Vec::new(),
            modulus_constant: 1.0,
            modulus_exponent: 1.0,
            alpha: 0.5,
            sample_budget: default_budget(),
            steps: default_steps(),
            contact_tol: None,
            seed: 0,
        }
    }
}

fn half() -> f64 {
    0.5
}

fn default_budget() -> usize {
    10_000
}

fn default_steps() -> Vec<usize> {
    vec![1, 2, 4]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_dir(),
            formats: default_formats(),
        }
    }
}

fn default_dir() -> String {
    "out".to_string()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

/// Problem data defined by a named preset, evaluated onto a grid.
#[derive(Debug, Clone)]
pub struct PresetData {
    pub mode: Mode,
    pub obstacle: Option<GridFunction<f64>>,
    pub cost: Option<GridFunction<f64>>,
    pub f: GridFunction<f64>,
    pub boundary: GridFunction<f64>,
    pub penalty: Option<PenaltyConfig>,
    pub epsilons: Option<Vec<f64>>,
    pub alpha: Option<f64>,
}

/// * `classical`: QVI with cost 1, `f = 1`, zero boundary data.
/// * `oracle1d`: lower obstacle `1/2 - |x|²`, `f = 0`, zero boundary data.
/// * `corollary1`: the `oracle1d` obstacle under the piecewise-linear penalty,
///   swept over `ε = 0.2, 0.1, 0.05, 0.025` with `α = 1/2`.
pub fn preset(name: &str, grid: Arc<Grid<f64>>) -> Result<PresetData, CliError> {
    let zeros = GridFunction::zeros(grid.clone());
    let paraboloid = || GridFunction::from_fn(grid.clone(), |x| 0.5 - x[0] * x[0] - x[1] * x[1]);
    match name {
        "classical" => Ok(PresetData {
            mode: Mode::Qvi,
            obstacle: None,
            cost: Some(GridFunction::constant(grid.clone(), 1.0)),
            f: GridFunction::constant(grid.clone(), 1.0),
            boundary: zeros,
            penalty: None,
            epsilons: None,
            alpha: None,
        }),
        "oracle1d" => Ok(PresetData {
            mode: Mode::Obstacle,
            obstacle: Some(paraboloid()),
            cost: None,
            f: zeros.clone(),
            boundary: zeros,
            penalty: None,
            epsilons: None,
            alpha: None,
        }),
        "corollary1" => Ok(PresetData {
            mode: Mode::Sweep,
            obstacle: Some(paraboloid()),
            cost: None,
            f: zeros.clone(),
            boundary: zeros,
            penalty: Some(PenaltyConfig {
                kind: PenaltyKind::PiecewiseLinear,
                epsilon: None,
                cap: None,
            }),
            epsilons: Some(vec![0.2, 0.1, 0.05, 0.025]),
            alpha: Some(0.5),
        }),
        _ => Err(CliError::UnknownPreset {
            name: name.to_string(),
        }),
    }
}

/// Files written by a run and whether every solve converged.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub converged: bool,
    pub out_dir: PathBuf,
    pub files: Vec<String>,
}

/// Runs a config file and maps the result to an exit code, printing
/// diagnostics to standard error.
pub fn run(config_path: &Path, output: Option<&Path>, quiet: bool) -> i32 {
    match run_config(config_path, output) {
        Ok(outcome) => {
            if !quiet {
                eprintln!(
                    "wrote {} files to {}",
                    outcome.files.len(),
                    outcome.out_dir.display()
                );
            }
            if outcome.converged {
                0
            } else {
                eprintln!("solver did not converge; outputs written");
                2
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run_config(config_path: &Path, output: Option<&Path>) -> Result<RunOutcome, CliError> {
    let text = fs::read_to_string(config_path).map_err(|source| CliError::ReadConfig {
        path: config_path.to_path_buf(),
        source,
    })?;
    let config = ExperimentConfig::from_json(&text)?;
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out_dir = match output {
        Some(p) => p.to_path_buf(),
        None => base.join(&config.output.directory),
    };
    execute(&config, &base, &out_dir)
}

struct Artifacts {
    report: Value,
    solution: GridFunction<f64>,
    extra_csv: BTreeMap<String, String>,
    converged: bool,
}

/// Runs an already parsed config. Field CSVs are resolved against `base`.
pub fn execute(
    config: &ExperimentConfig,
    base: &Path,
    out_dir: &Path,
) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let grid = Arc::new(Grid::new(&config.grid.lo, &config.grid.hi, &config.grid.m)?);
    let mut inputs = BTreeMap::new();
    let data = resolve_problem(config, grid.clone(), base, &mut inputs)?;
    let spec = operator_spec(&config.operator)?;
    let artifacts = match config.problem.mode {
        Mode::Obstacle => run_obstacle(config, &spec, &data)?,
        Mode::Qvi => run_qvi(config, &spec, &data)?,
        Mode::Penalized => run_penalized(config, &spec, &data)?,
        Mode::Sweep => run_sweep(config, &spec, &data)?,
    };

    fs::create_dir_all(out_dir).map_err(|source| CliError::Write {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut outputs = BTreeMap::new();
    let wants = |f: Format| config.output.formats.contains(&f);
    if wants(Format::Csv) {
        write_file(
            out_dir,
            "solution.csv",
            &artifacts.solution.to_csv_string(),
            &mut outputs,
        )?;
        for (name, body) in &artifacts.extra_csv {
            write_file(out_dir, name, body, &mut outputs)?;
        }
    }
    if wants(Format::Json) {
        let body = serde_json::to_string_pretty(&artifacts.report)? + "\n";
        write_file(out_dir, "report.json", &body, &mut outputs)?;
    }
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "converged": artifacts.converged,
        "wall_clock_seconds": start.elapsed().as_secs_f64(),
        "inputs": inputs,
        "outputs": outputs,
    });
    let mut files: Vec<String> = outputs.keys().cloned().collect();
    write_file(
        out_dir,
        "manifest.json",
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
        &mut BTreeMap::new(),
    )?;
    files.push("manifest.json".to_string());
    Ok(RunOutcome {
        converged: artifacts.converged,
        out_dir: out_dir.to_path_buf(),
        files,
    })
}

fn write_file(
    dir: &Path,
    name: &str,
    body: &str,
    digests: &mut BTreeMap<String, String>,
) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| CliError::Write { path, source })?;
    digests.insert(name.to_string(), sha256_hex(body.as_bytes()));
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn operator_spec(c: &OperatorConfig) -> Result<OperatorSpec<f64>, CliError> {
    let family = c
        .family
        .iter()
        .map(|a| SymMat::new(a[0], a[1], a[2]))
        .collect();
    Ok(OperatorSpec::new(c.kind, c.lambda, c.big_lambda, family)?)
}

struct ProblemData {
    grid: Arc<Grid<f64>>,
    obstacle: Option<GridFunction<f64>>,
    cost: Option<GridFunction<f64>>,
    f: GridFunction<f64>,
    boundary: GridFunction<f64>,
    penalty: Option<PenaltyConfig>,
    epsilons: Option<Vec<f64>>,
    alpha: Option<f64>,
}

fn resolve_problem(
    config: &ExperimentConfig,
    grid: Arc<Grid<f64>>,
    base: &Path,
    inputs: &mut BTreeMap<String, String>,
) -> Result<ProblemData, CliError> {
    let p = &config.problem;
    let pre = match &p.preset {
        Some(name) => Some(preset(name, grid.clone())?),
        None => None,
    };
    let mut load = |src: &Option<FieldSource>| -> Result<Option<GridFunction<f64>>, CliError> {
        src.as_ref()
            .map(|s| load_field(s, grid.clone(), base, inputs))
            .transpose()
    };
    let obstacle = load(&p.obstacle)?.or_else(|| pre.as_ref().and_then(|d| d.obstacle.clone()));
    let cost = load(&p.cost)?.or_else(|| pre.as_ref().and_then(|d| d.cost.clone()));
    let f = load(&p.f)?
        .or_else(|| pre.as_ref().map(|d| d.f.clone()))
        .unwrap_or_else(|| GridFunction::zeros(grid.clone()));
    let boundary = load(&p.boundary)?
        .or_else(|| pre.as_ref().map(|d| d.boundary.clone()))
        .unwrap_or_else(|| GridFunction::zeros(grid.clone()));
    let penalty = p
        .penalty
        .clone()
        .or_else(|| pre.as_ref().and_then(|d| d.penalty.clone()));
    let epsilons = p
        .epsilons
        .clone()
        .or_else(|| pre.as_ref().and_then(|d| d.epsilons.clone()));
    let alpha = p.alpha.or_else(|| pre.as_ref().and_then(|d| d.alpha));

    let need = |present: bool, key: &str| {
        if present {
            Ok(())
        } else {
            Err(CliError::Invalid(format!(
                "missing key `problem.{key}` for mode {:?}",
                p.mode
            )))
        }
    };
    match p.mode {
        Mode::Obstacle => need(obstacle.is_some(), "obstacle")?,
        Mode::Qvi => need(cost.is_some(), "cost")?,
        Mode::Penalized => {
            need(obstacle.is_some(), "obstacle")?;
            need(penalty.is_some(), "penalty")?;
            need(
                penalty.as_ref().is_some_and(|q| q.epsilon.is_some()),
                "penalty.epsilon",
            )?;
        }
        Mode::Sweep => {
            need(obstacle.is_some(), "obstacle")?;
            need(penalty.is_some(), "penalty")?;
            need(epsilons.is_some(), "epsilons")?;
        }
    }
    Ok(ProblemData {
        grid,
        obstacle,
        cost,
        f,
        boundary,
        penalty,
        epsilons,
        alpha,
    })
}

fn load_field(
    src: &FieldSource,
    grid: Arc<Grid<f64>>,
    base: &Path,
    inputs: &mut BTreeMap<String, String>,
) -> Result<GridFunction<f64>, CliError> {
    match src {
        FieldSource::Constant(c) => Ok(GridFunction::constant(grid, *c)),
        FieldSource::Csv { csv } => {
            let path = base.join(csv);
            let bytes = fs::read(&path).map_err(|e| CliError::FieldCsv {
                path: path.clone(),
                message: e.to_string(),
            })?;
            inputs.insert(csv.clone(), sha256_hex(&bytes));
            GridFunction::read_csv(grid, BufReader::new(&bytes[..])).map_err(|e| {
                CliError::FieldCsv {
                    path,
                    message: e.to_string(),
                }
            })
        }
    }
}

fn solver_options(c: &SolverConfig, f: &GridFunction<f64>) -> SolverOptions<f64> {
    let mut o = SolverOptions::default_for(f);
    if let Some(t) = c.tol {
        o.tol = t;
    }
    if let Some(n) = c.max_sweeps {
        o.max_sweeps = n;
    }
    match c.relaxation {
        Some(w) => o.with_relaxation(w),
        None => o.with_optimal_relaxation(f),
    }
}

fn modulus(c: &ProbeConfig) -> Result<ModulusFamily<f64>, CliError> {
    Ok(ModulusFamily::new(c.modulus_constant, c.modulus_exponent)?)
}

/// Probes that compare `u` with an obstacle run on the lower-side orientation;
/// upper-side data are negated first.
fn obstacle_probes(
    c: &ProbeConfig,
    u: &GridFunction<f64>,
    obstacle: &GridFunction<f64>,
    side: ObstacleSide,
    reports: &mut BTreeMap<String, ProbeReport>,
    errors: &mut BTreeMap<String, String>,
) -> Result<(), CliError> {
    let (u, obstacle) = match side {
        ObstacleSide::Lower => (u.clone(), obstacle.clone()),
        ObstacleSide::Upper => (u.map(|v| -v), obstacle.map(|v| -v)),
    };
    let tol = c.contact_tol.unwrap_or_else(|| default_contact_tol(&u));
    let contact = extract_contact_set(&u, &obstacle, ObstacleSide::Lower, tol)?;
    let omega = modulus(c)?;
    for &kind in &c.probes {
        let result = match kind {
            ProbeKind::Contact => {
                let mut r = ProbeReport::default();
                r.insert("contact_nodes", contact.nodes.len() as f64, vec![]);
                r.insert(
                    "free_boundary_nodes",
                    contact.free_boundary.len() as f64,
                    vec![],
                );
                r.insert("contact_tol", tol, vec![]);
                Ok(r)
            }
            ProbeKind::Growth => growth_constant(&u, &obstacle, &contact, &omega),
            ProbeKind::Oscillation => contact_oscillation(&u, &obstacle, &contact, &omega, c.seed),
            _ => continue,
        };
        record(kind, result, reports, errors);
    }
    Ok(())
}

fn record(
    kind: ProbeKind,
    result: Result<ProbeReport, ProbeError>,
    reports: &mut BTreeMap<String, ProbeReport>,
    errors: &mut BTreeMap<String, String>,
) {
    match result {
        Ok(r) => {
            reports.insert(kind.name().to_string(), r);
        }
        Err(e) => {
            errors.insert(kind.name().to_string(), e.to_string());
        }
    }
}

fn field_probes(
    c: &ProbeConfig,
    u: &GridFunction<f64>,
    semiconcave_target: &GridFunction<f64>,
    reports: &mut BTreeMap<String, ProbeReport>,
    errors: &mut BTreeMap<String, String>,
) -> Result<(), CliError> {
    let g = u.grid().clone();
    for &kind in &c.probes {
        let result = match kind {
            ProbeKind::Semiconcavity => {
                let region = NodeSet::from_predicate(g.clone(), |x| !g.is_boundary(x));
                semiconcavity_modulus(semiconcave_target, &region, &c.steps)
            }
            ProbeKind::Holder => {
                let region = interior_subbox(u, 0.1)?;
                HessianField::from_function(u, &region)
                    .and_then(|h| holder_seminorm(&h, c.alpha, c.sample_budget, c.seed))
                    .map(|est| {
                        let mut r = ProbeReport::default();
                        let wit = est.witness.map(|(a, b)| vec![a, b]).unwrap_or_default();
                        r.insert("holder_seminorm", est.value, wit);
                        r.insert("pairs", est.pairs as f64, vec![]);
                        r
                    })
            }
            _ => continue,
        };
        record(kind, result, reports, errors);
    }
    Ok(())
}

fn reject_probes(c: &ProbeConfig, allowed: &[ProbeKind], mode: Mode) -> Result<(), CliError> {
    match c.probes.iter().find(|p| !allowed.contains(p)) {
        Some(p) => Err(CliError::Invalid(format!(
            "probe `{}` is not available in mode {mode:?}",
            p.name()
        ))),
        None => Ok(()),
    }
}

fn probe_csvs(reports: &BTreeMap<String, ProbeReport>) -> BTreeMap<String, String> {
    reports
        .iter()
        .filter(|(_, r)| !r.samples.is_empty())
        .map(|(name, r)| (format!("probe_{name}.csv"), r.samples_csv()))
        .collect()
}

fn run_obstacle(
    config: &ExperimentConfig,
    spec: &OperatorSpec<f64>,
    d: &ProblemData,
) -> Result<Artifacts, CliError> {
    use ProbeKind::*;
    reject_probes(
        &config.probe,
        &[Contact, Growth, Oscillation, Semiconcavity, Holder],
        Mode::Obstacle,
    )?;
    let side = config.problem.side.unwrap_or(ObstacleSide::Lower);
    let obstacle = d.obstacle.clone().expect("checked in resolve_problem");
    let problem = ObstacleProblem::new(
        spec.clone(),
        side,
        obstacle.clone(),
        d.f.clone(),
        d.boundary.clone(),
    )?;
    let opts = solver_options(&config.solver, &d.f);
    let (u, rep) = solve_obstacle(&problem, &opts)?;
    let mut reports = BTreeMap::new();
    let mut errors = BTreeMap::new();
    obstacle_probes(
        &config.probe,
        &u,
        &obstacle,
        side,
        &mut reports,
        &mut errors,
    )?;
    field_probes(&config.probe, &u, &u, &mut reports, &mut errors)?;
    let report = json!({
        "mode": "obstacle",
        "side": side,
        "solve": rep,
        "residual": problem.residual(&u)?,
        "probes": reports,
        "probe_errors": errors,
    });
    Ok(Artifacts {
        converged: rep.converged,
        extra_csv: probe_csvs(&reports),
        report,
        solution: u,
    })
}

fn run_qvi(
    config: &ExperimentConfig,
    spec: &OperatorSpec<f64>,
    d: &ProblemData,
) -> Result<Artifacts, CliError> {
    use ProbeKind::*;
    reject_probes(
        &config.probe,
        &[
            Contact,
            Growth,
            Oscillation,
            Semiconcavity,
            Holder,
            Separation,
        ],
        Mode::Qvi,
    )?;
    let cost = CostFunction::new(d.cost.clone().expect("checked"), 0.0, 1.0)?;
    let problem = QviProblem::new(spec.clone(), cost.clone(), d.f.clone(), d.boundary.clone())?;
    let mut opts = QviOptions::default_for(&problem);
    opts.inner = solver_options(&config.solver, &d.f);
    if let Some(t) = config.solver.outer_tol {
        opts.outer_tol = t;
    }
    if let Some(n) = config.solver.max_outer {
        opts.max_outer = n;
    }
    let (u, rep) = solve_qvi(&problem, &opts)?;
    let check = check_qvi(&u, &problem, opts.inner.tol)?;
    let mu = intervention_operator(&u, &cost)?;
    let mut reports = BTreeMap::new();
    let mut errors = BTreeMap::new();
    obstacle_probes(
        &config.probe,
        &u,
        &mu,
        ObstacleSide::Upper,
        &mut reports,
        &mut errors,
    )?;
    // semiconcavity is measured on Mu, the object of the semiconcavity estimate
    field_probes(&config.probe, &u, &mu, &mut reports, &mut errors)?;
    if config.probe.probes.contains(&Separation) {
        let tol = config
            .probe
            .contact_tol
            .unwrap_or_else(|| default_contact_tol(&u));
        let sep = separation_delta(&u, &cost, tol)?;
        let mut r = ProbeReport::default();
        let wit = sep.witness.map(|(a, b)| vec![a, b]).unwrap_or_default();
        r.insert("separation_delta", sep.value, wit);
        r.insert("contact_nodes", sep.contact_nodes as f64, vec![]);
        reports.insert(Separation.name().to_string(), r);
    }
    let report = json!({
        "mode": "qvi",
        "solve": rep,
        "check": check,
        "probes": reports,
        "probe_errors": errors,
    });
    Ok(Artifacts {
        converged: rep.converged,
        extra_csv: probe_csvs(&reports),
        report,
        solution: u,
    })
}

fn run_penalized(
    config: &ExperimentConfig,
    spec: &OperatorSpec<f64>,
    d: &ProblemData,
) -> Result<Artifacts, CliError> {
    use ProbeKind::*;
    reject_probes(&config.probe, &[Semiconcavity, Holder], Mode::Penalized)?;
    let pc = d.penalty.clone().expect("checked");
    let family = PenaltyFamily::new(pc.kind, pc.epsilon.expect("checked"), pc.cap)?;
    let phi = d.obstacle.clone().expect("checked");
    let opts = solver_options(&config.solver, &d.f);
    let (u, rep) = solve_penalized(spec, &phi, &family, &d.f, &d.boundary, &opts)?;
    let mut reports = BTreeMap::new();
    let mut errors = BTreeMap::new();
    field_probes(&config.probe, &u, &u, &mut reports, &mut errors)?;
    let report = json!({
        "mode": "penalized",
        "solve": rep,
        "max_abs_penalty": max_abs_penalty(&u, &phi, &family),
        "probes": reports,
        "probe_errors": errors,
    });
    Ok(Artifacts {
        converged: rep.converged,
        extra_csv: probe_csvs(&reports),
        report,
        solution: u,
    })
}

fn run_sweep(
    config: &ExperimentConfig,
    spec: &OperatorSpec<f64>,
    d: &ProblemData,
) -> Result<Artifacts, CliError> {
    reject_probes(&config.probe, &[], Mode::Sweep)?;
    let pc = d.penalty.clone().expect("checked");
    let setup = SweepSetup {
        spec: spec.clone(),
        phi: d.obstacle.clone().expect("checked"),
        f: d.f.clone(),
        boundary_data: d.boundary.clone(),
        kind: pc.kind,
        alpha: d.alpha.unwrap_or(config.probe.alpha),
        solver: solver_options(&config.solver, &d.f),
        sample_budget: config.probe.sample_budget,
        seed: config.probe.seed,
    };
    let eps = d.epsilons.clone().expect("checked");
    let outcome = epsilon_sweep(&setup, &eps)?;
    let diagnostics: Vec<Value> = outcome
        .diagnostics
        .iter()
        .map(|s| {
            json!({
                "epsilon": s.epsilon,
                "converged": s.converged,
                "final_residual": s.final_residual,
                "max_abs_penalty": s.max_abs_penalty,
                "min_second_quotient": s.min_second_quotient,
            })
        })
        .collect();
    let converged = outcome.diagnostics.iter().all(|s| s.converged);
    let report = json!({
        "mode": "sweep",
        "decay": outcome.report,
        "diagnostics": diagnostics,
        "rejected_epsilons": outcome.rejected,
    });
    let mut extra_csv = BTreeMap::new();
    extra_csv.insert("decay.csv".to_string(), outcome.report.to_csv_string());
    let solution = outcome
        .solutions
        .last()
        .cloned()
        .unwrap_or_else(|| GridFunction::zeros(d.grid.clone()));
    Ok(Artifacts {
        converged,
        extra_csv,
        report,
        solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_evaluate() {
        let g = Arc::new(Grid::new(&[-1.0], &[1.0], &[11]).unwrap());
        let c = preset("classical", g.clone()).unwrap();
        assert!(c.cost.unwrap().values().iter().all(|&v| v == 1.0));
        let o = preset("oracle1d", g.clone()).unwrap();
        let phi = o.obstacle.unwrap();
        assert_eq!(phi.get(5), 0.5);
        assert!((phi.get(0) + 0.5).abs() < 1e-15);
        let err = preset("nope", g).unwrap_err().to_string();
        for name in PRESETS {
            assert!(err.contains(name), "{err}");
        }
    }

    #[test]
    fn missing_grid_is_named() {
        let err = ExperimentConfig::from_json(r#"{"problem": {"mode": "qvi"}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("grid"), "{err}");
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::from_json(
            r#"{"grid": {"lo": [-1], "hi": [1], "m": [11]},
                "problem": {"mode": "qvi", "preset": "classical"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.probe.seed, 0);
        let echoed = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&echoed).unwrap(), cfg);
    }

    #[test]
    fn field_sources_parse() {
        let c: FieldSource = serde_json::from_str("0.25").unwrap();
        assert_eq!(c, FieldSource::Constant(0.25));
        let c: FieldSource = serde_json::from_str(r#"{"csv": "phi.csv"}"#).unwrap();
        assert_eq!(
            c,
            FieldSource::Csv {
                csv: "phi.csv".into()
            }
        );
    }
}
