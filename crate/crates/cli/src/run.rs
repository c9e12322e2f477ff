//! `solve-hj` and `mfg` runs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use junction_mfg::costs::{evaluate_functor, CostBounds, FunctorKind};
use junction_mfg::export::{write_flow_csv, write_measure_csv, write_residual_csv, write_value_csv};
use junction_mfg::hj::{backward_solve, dpp_residual, viscosity_residual, Grid, GridAdjustment};
use junction_mfg::mfg::{holder_ratio, solve_equilibrium, MeasureFlow, StepRule};
use serde::Serialize;

use crate::config::{ExperimentConfig, Validated};
use crate::CliError;

/// Total mass must stay within this of one at every time.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub num_edges: usize,
    pub edge_truncation: f64,
    pub horizon: f64,
    pub dr: f64,
    pub dt: f64,
    pub cells: usize,
    pub steps: usize,
    pub adjustment: GridAdjustment,
}

impl GridSummary {
    pub fn new(grid: &Grid) -> Self {
        Self {
            num_edges: grid.num_edges(),
            edge_truncation: grid.geometry().edge_truncation(),
            horizon: grid.horizon(),
            dr: grid.dr(),
            dt: grid.dt(),
            cells: grid.cells(),
            steps: grid.steps(),
            adjustment: grid.adjustment(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HjSummary {
    pub command: &'static str,
    pub scenario: Option<String>,
    pub grid: GridSummary,
    pub max_abs_u: f64,
    pub bounds: CostBounds,
    /// Largest `|u| - (sup|L| (T - t) + sup|g|)`; nonpositive when bounded.
    pub bound_excess: f64,
    pub bounds_ok: bool,
    pub max_residual: f64,
    /// Over edge nodes with `r > 2 dr`.
    pub max_interior_residual: f64,
    pub max_dpp_residual: f64,
}

pub fn run_solve_hj(config: &ExperimentConfig, out: &Path) -> Result<HjSummary, CliError> {
    let Validated { grid, functor, .. } = config.validate()?;
    if functor.kind != FunctorKind::Constant {
        return Err(CliError::Config(
            "costs.functor: solve-hj needs measure-independent costs".into(),
        ));
    }
    let costs = functor.base;
    let u = backward_solve(&grid, &costs)?;
    let residual = viscosity_residual(&u, &costs)?;
    let bounds = costs.bounds(&grid);
    let bound_excess = u.bound_excess(&bounds);
    let mut max_dpp: f64 = 0.0;
    for k in 0..grid.steps() {
        max_dpp = max_dpp.max(dpp_residual(&u, &costs, k)?);
    }

    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    if config.outputs.value {
        write_artifact(&out.join("value.csv"), |w| write_value_csv(&u, w))?;
    }
    if config.outputs.residual {
        write_artifact(&out.join("residual.csv"), |w| write_residual_csv(&residual, &grid, w))?;
    }
    let summary = HjSummary {
        command: "solve-hj",
        scenario: config.scenario.clone(),
        grid: GridSummary::new(&grid),
        max_abs_u: u.max_abs(),
        bounds,
        bound_excess,
        bounds_ok: bound_excess <= 0.0,
        max_residual: residual.max_abs(),
        max_interior_residual: residual.max_interior(&u, 2.0 * grid.dr(), None),
        max_dpp_residual: max_dpp,
    };
    write_json(&out.join("summary.json"), &summary)?;
    if !summary.bounds_ok {
        return Err(CliError::Verification(format!(
            "value exceeds its bound by {bound_excess}"
        )));
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SnapSummary {
    pub count: usize,
    pub max_displacement: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MfgSummary {
    pub command: &'static str,
    pub scenario: Option<String>,
    pub grid: GridSummary,
    pub step_rule: StepRule,
    pub converged: bool,
    /// Iteration of the reported measure.
    pub iteration: usize,
    pub iterations_run: usize,
    pub exploitability: f64,
    pub control_bound: f64,
    pub particles: usize,
    pub snapped_starts: SnapSummary,
    pub mass_defect: f64,
    pub value_bound_excess: f64,
    pub invariants_ok: bool,
    pub holder_ratio: f64,
    pub vertex_mass: Vec<VertexMass>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct VertexMass {
    pub t: f64,
    pub mass: f64,
}

pub fn run_mfg(config: &ExperimentConfig, out: &Path) -> Result<MfgSummary, CliError> {
    let Validated {
        grid,
        functor,
        control_bound,
        ..
    } = config.validate()?;
    let eq = solve_equilibrium(&functor, &config.initial_distribution, &grid, config.solver)?;

    let frozen = evaluate_functor(&functor, &eq.flow, &grid)?;
    let value = backward_solve(&grid, &frozen)?;
    let value_bound_excess = value.bound_excess(&frozen.bounds(&grid));
    let mass_defect = eq.flow.mass_defect();

    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    if config.outputs.flow {
        write_artifact(&out.join("flow.csv"), |w| write_flow_csv(&eq.flow, &grid, w))?;
    }
    if config.outputs.trajectories {
        write_artifact(&out.join("trajectories.csv"), |w| write_measure_csv(&eq.measure, w))?;
    }
    write_artifact(&out.join("iterations.jsonl"), |w| {
        for record in &eq.log {
            serde_json::to_writer(&mut *w, record)?;
            writeln!(w)?;
        }
        Ok(())
    })?;
    let summary = MfgSummary {
        command: "mfg",
        scenario: config.scenario.clone(),
        grid: GridSummary::new(&grid),
        step_rule: config.solver.step,
        converged: eq.converged,
        iteration: eq.iteration,
        iterations_run: eq.log.len(),
        exploitability: eq.exploitability,
        control_bound,
        particles: eq.measure.particles().len(),
        snapped_starts: SnapSummary {
            count: eq.snapped.len(),
            max_displacement: eq.snapped.iter().map(|s| s.displacement).fold(0.0, f64::max),
        },
        mass_defect,
        value_bound_excess,
        invariants_ok: mass_defect <= MASS_TOLERANCE && value_bound_excess <= 0.0,
        holder_ratio: holder_ratio(&eq.flow, &grid, control_bound)?,
        vertex_mass: vertex_curve(&eq.flow, &grid),
    };
    write_json(&out.join("summary.json"), &summary)?;
    if !summary.invariants_ok {
        return Err(CliError::Verification(format!(
            "mass defect {mass_defect:e}, value bound excess {value_bound_excess:e}"
        )));
    }
    Ok(summary)
}

pub fn vertex_curve(flow: &MeasureFlow, grid: &Grid) -> Vec<VertexMass> {
    flow.vertex_mass()
        .into_iter()
        .enumerate()
        .map(|(k, mass)| VertexMass { t: grid.time(k), mass })
        .collect()
}

pub(crate) fn write_artifact(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    write_artifact(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BaseCosts, CostsConfig};
    use crate::scenarios;

    #[test]
    fn zero_costs_give_a_zero_value() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_solve_hj(&scenarios::preset("constant_zero").unwrap(), dir.path()).unwrap();
        assert_eq!(s.max_abs_u, 0.0);
        assert_eq!(s.max_dpp_residual, 0.0);
        assert!(s.bounds_ok);
        for f in ["value.csv", "residual.csv", "summary.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn solve_hj_refuses_measure_dependent_costs() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_solve_hj(&scenarios::preset("congestion_example").unwrap(), dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn adjusted_steps_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = scenarios::preset("constant_zero").unwrap();
        c.grid.dt = 0.3;
        let s = run_solve_hj(&c, dir.path()).unwrap();
        assert!(s.grid.adjustment.dt_adjusted);
        assert_eq!(s.grid.adjustment.requested_dt, 0.3);
        assert_eq!(s.grid.steps, 4);
        assert_eq!(s.grid.dt, 0.25);
    }

    #[test]
    fn disabled_outputs_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = scenarios::preset("constant_zero").unwrap();
        c.outputs.value = false;
        c.outputs.residual = false;
        run_solve_hj(&c, dir.path()).unwrap();
        assert!(!dir.path().join("value.csv").exists());
        assert!(dir.path().join("summary.json").exists());
    }

    #[test]
    fn constant_costs_converge_immediately() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = scenarios::preset("example_dirac").unwrap();
        c.grid.dr = 0.02;
        c.grid.dt = 0.02;
        c.solver.particles = 40;
        let s = run_mfg(&c, dir.path()).unwrap();
        assert!(s.converged);
        assert!(s.iteration <= 1);
        assert!(s.exploitability <= 1e-6);
        assert!(s.invariants_ok);
        assert!(s.holder_ratio <= 1.0);
        assert_eq!(s.vertex_mass.len(), s.grid.steps + 1);
        assert_eq!(s.vertex_mass[0].mass, 0.0);
    }

    #[test]
    fn mfg_artifacts_are_reproducible() {
        let mut c = scenarios::preset("congestion_example").unwrap();
        c.grid.dr = 0.05;
        c.grid.dt = 0.05;
        c.solver.max_iter = 5;
        c.solver.particles = 20;
        c.costs = CostsConfig { base: BaseCosts::ExampleDirac, ..c.costs };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_mfg(&c, a.path()).unwrap();
        run_mfg(&c, b.path()).unwrap();
        for f in ["flow.csv", "trajectories.csv", "iterations.jsonl", "summary.json"] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            let y = std::fs::read(b.path().join(f)).unwrap();
            assert!(!x.is_empty());
            assert_eq!(x, y, "{f}");
        }
    }
}
