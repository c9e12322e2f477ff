//! Experiment configuration: JSON with an optional `scenario` preset whose
//! fields are overridden by whatever the file itself sets.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use junction_mfg::costs::{CostField, CostFunctorSpec, CostSpec, CostTable, FunctorKind};
use junction_mfg::hj::{Grid, GridAdjustment};
use junction_mfg::mfg::{control_bound, InitialDistribution, SolverSettings};
use junction_mfg::network::JunctionGeometry;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::scenarios;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub geometry: GeometryConfig,
    pub grid: GridConfig,
    pub costs: CostsConfig,
    pub initial_distribution: InitialDistribution,
    pub solver: SolverSettings,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub num_edges: usize,
    pub edge_truncation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dr: f64,
    pub dt: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsConfig {
    #[serde(default = "constant_kind")]
    pub functor: FunctorKind,
    #[serde(default)]
    pub congestion_strength: f64,
    #[serde(default = "unit_width")]
    pub kernel_width: f64,
    pub base: BaseCosts,
}

fn constant_kind() -> FunctorKind {
    FunctorKind::Constant
}

fn unit_width() -> f64 {
    1.0
}

/// `c0 + cr * r + ct * t`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Affine {
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub cr: f64,
    #[serde(default)]
    pub ct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseCosts {
    /// `l_1 = -1`, `l_2 = 1`, `l_* = -1`, zero terminal costs; two edges.
    ExampleDirac,
    Constant {
        edge_running: Vec<f64>,
        vertex_running: f64,
        edge_terminal: Vec<f64>,
        vertex_terminal: f64,
    },
    Affine {
        edge_running: Vec<Affine>,
        vertex_running: Affine,
        /// The `ct` coefficient is evaluated at the horizon.
        edge_terminal: Vec<Affine>,
        vertex_terminal: f64,
    },
    /// CSV files with header `edge,r,t,value`; edge 0 rows (at `r = 0`)
    /// carry `l_*` in `running` and `g_*` in `terminal`. Relative paths are
    /// resolved against the config file.
    GridCsv { running: PathBuf, terminal: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default = "yes")]
    pub value: bool,
    #[serde(default = "yes")]
    pub residual: bool,
    #[serde(default = "yes")]
    pub flow: bool,
    #[serde(default = "yes")]
    pub trajectories: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self {
            value: true,
            residual: true,
            flow: true,
            trajectories: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Oracle,
    W1,
    Holder,
    Dpp,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Oracle, Suite::W1, Suite::Holder, Suite::Dpp];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Oracle => "oracle",
            Suite::W1 => "w1",
            Suite::Holder => "holder",
            Suite::Dpp => "dpp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub suite: Suite,
    /// Random instances for the `oracle` and `w1` suites.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Parses config text, expanding a `scenario` preset first.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let user: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        let merged = match user.get("scenario") {
            None | Some(Value::Null) => user,
            Some(Value::String(name)) => {
                let preset = scenarios::preset(name).ok_or_else(|| {
                    CliError::Config(format!(
                        "scenario: unknown preset `{name}` (known: {})",
                        scenarios::NAMES.join(", ")
                    ))
                })?;
                let mut base = serde_json::to_value(preset).expect("presets serialize");
                merge(&mut base, user);
                base
            }
            Some(_) => return Err(CliError::Config("scenario: expected a preset name".into())),
        };
        let config: ExperimentConfig = decode(merged)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        if let BaseCosts::GridCsv { running, terminal } = &mut config.costs.base {
            let dir = path.parent().unwrap_or(Path::new("."));
            for p in [running, terminal] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    /// Builds and checks every object the runs need.
    pub fn validate(&self) -> Result<Validated, CliError> {
        let bad = |field: &str, msg: String| CliError::Config(format!("{field}: {msg}"));
        let geometry = JunctionGeometry::new(self.geometry.num_edges, self.geometry.edge_truncation)
            .map_err(|e| bad("geometry", e.to_string()))?;
        let g = self.grid;
        for (name, v) in [("grid.dr", g.dr), ("grid.dt", g.dt), ("grid.horizon", g.horizon)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(name, format!("must be positive, got {v}")));
            }
        }
        if g.dr > geometry.edge_truncation() {
            return Err(bad("grid.dr", "exceeds geometry.edge_truncation".into()));
        }
        if g.dt > g.horizon {
            return Err(bad("grid.dt", "exceeds grid.horizon".into()));
        }
        let grid = Grid::new(geometry, g.dr, g.dt, g.horizon).map_err(|e| bad("grid", e.to_string()))?;
        let base = self.base_costs(grid.horizon())?;
        let functor = match self.costs.functor {
            FunctorKind::Constant => CostFunctorSpec::constant(base),
            FunctorKind::Congestion => {
                CostFunctorSpec::congestion(base, self.costs.congestion_strength, self.costs.kernel_width)
                    .map_err(|e| bad("costs", e.to_string()))?
            }
        };
        let m0 = &self.initial_distribution;
        m0.validate(geometry.num_edges())
            .map_err(|e| bad("initial_distribution", e.to_string()))?;
        let s = self.solver;
        if s.particles == 0 {
            return Err(bad("solver.particles", "must be at least 1".into()));
        }
        if !(s.tol.is_finite() && s.tol > 0.0) {
            return Err(bad("solver.tol", format!("must be positive, got {}", s.tol)));
        }
        if s.max_iter == 0 {
            return Err(bad("solver.max_iter", "must be at least 1".into()));
        }
        let bound = control_bound(&functor, &grid);
        let reach = m0.support_radius() + bound * grid.horizon().sqrt();
        if geometry.edge_truncation() < reach * (1.0 - 1e-12) {
            return Err(bad(
                "geometry.edge_truncation",
                format!(
                    "{} is below the reachable radius {reach} (support {} + C {bound} * sqrt(T))",
                    geometry.edge_truncation(),
                    m0.support_radius()
                ),
            ));
        }
        Ok(Validated {
            adjustment: grid.adjustment(),
            grid,
            functor,
            control_bound: bound,
        })
    }

    fn base_costs(&self, horizon: f64) -> Result<CostSpec, CliError> {
        let n = self.geometry.num_edges;
        let bad = |msg: String| CliError::Config(format!("costs.base: {msg}"));
        let count = |what: &str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(bad(format!("{what} has {len} entries for {n} edges")))
            }
        };
        let spec = match &self.costs.base {
            BaseCosts::ExampleDirac => {
                if n != 2 {
                    return Err(bad(format!("example_dirac needs 2 edges, geometry has {n}")));
                }
                CostSpec::example_dirac(horizon)
            }
            BaseCosts::Constant {
                edge_running,
                vertex_running,
                edge_terminal,
                vertex_terminal,
            } => {
                count("edge_running", edge_running.len())?;
                count("edge_terminal", edge_terminal.len())?;
                CostSpec::constant(edge_running, *vertex_running, edge_terminal, *vertex_terminal, horizon)
            }
            BaseCosts::Affine {
                edge_running,
                vertex_running,
                edge_terminal,
                vertex_terminal,
            } => {
                count("edge_running", edge_running.len())?;
                count("edge_terminal", edge_terminal.len())?;
                let field = |a: &Affine| CostField::Affine {
                    c0: a.c0,
                    cr: a.cr,
                    ct: a.ct,
                };
                CostSpec::new(
                    edge_running.iter().map(field).collect(),
                    field(vertex_running),
                    edge_terminal.iter().map(field).collect(),
                    *vertex_terminal,
                    horizon,
                )
            }
            BaseCosts::GridCsv { running, terminal } => return grid_csv_costs(n, running, terminal, horizon),
        };
        spec.map_err(|e| bad(e.to_string()))
    }
}

/// Overlays `top` onto `base`, recursing into objects.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    // a different cost kind replaces the preset's object wholesale
                    Some(slot) if slot.is_object() && v.is_object() && same_kind(slot, &v) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

fn same_kind(a: &Value, b: &Value) -> bool {
    match (a.get("kind"), b.get("kind")) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

fn decode(v: Value) -> Result<ExperimentConfig, CliError> {
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("config: {e}")))
}

/// What a validated config resolves to.
#[derive(Debug, Clone)]
pub struct Validated {
    pub grid: Grid,
    pub functor: CostFunctorSpec,
    pub adjustment: GridAdjustment,
    pub control_bound: f64,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    edge: usize,
    r: f64,
    t: f64,
    value: f64,
}

fn read_rows(path: &Path) -> Result<Vec<CsvRow>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("costs.base: cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["edge", "r", "t", "value"] {
        return Err(CliError::Config(format!(
            "{}: header must be `edge,r,t,value`",
            path.display()
        )));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::Config(format!("{} row {}: {e}", path.display(), i + 2))))
        .collect()
}

fn grid_csv_costs(n: usize, running: &Path, terminal: &Path, horizon: f64) -> Result<CostSpec, CliError> {
    let table_err = |path: &Path, e: junction_mfg::Error| CliError::Config(format!("{}: {e}", path.display()));
    let running_rows = read_rows(running)?;
    let terminal_rows = read_rows(terminal)?;
    let mut edge_running = Vec::with_capacity(n);
    let mut edge_terminal = Vec::with_capacity(n);
    for edge in 0..=n {
        let samples: Vec<(f64, f64, f64)> =
            running_rows.iter().filter(|r| r.edge == edge).map(|r| (r.r, r.t, r.value)).collect();
        let table = CostTable::from_samples(&samples).map_err(|e| table_err(running, e))?;
        edge_running.push(CostField::Table(Arc::new(table)));
        let samples: Vec<(f64, f64, f64)> =
            terminal_rows.iter().filter(|r| r.edge == edge).map(|r| (r.r, 0.0, r.value)).collect();
        let table = CostTable::from_samples(&samples).map_err(|e| table_err(terminal, e))?;
        edge_terminal.push(CostField::Table(Arc::new(table)));
    }
    if let Some(row) = running_rows.iter().chain(&terminal_rows).find(|r| r.edge > n) {
        return Err(CliError::Config(format!("costs.base: row for edge {} of {n}", row.edge)));
    }
    let vertex_running = edge_running.remove(0);
    let vertex_terminal = edge_terminal.remove(0).eval(0.0, 0.0);
    CostSpec::new(edge_running, vertex_running, edge_terminal, vertex_terminal, horizon)
        .map_err(|e| CliError::Config(format!("costs.base: {e}")))
}
