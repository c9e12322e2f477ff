//! Running and terminal costs, trajectory costs and measure-dependent cost
//! functors.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hj::Grid;
use crate::mfg::MeasureFlow;
use crate::network::{distance_unchecked, NetworkPoint};
use crate::trajectory::{Control, Trajectory};

/// A scalar field of `(r, t)`.
///
/// Vertex running costs ignore `r`; terminal costs ignore `t`.
#[derive(Debug, Clone, PartialEq)]
pub enum CostField {
    Constant(f64),
    /// `c0 + cr * r + ct * t`
    Affine { c0: f64, cr: f64, ct: f64 },
    Table(Arc<CostTable>),
}

impl CostField {
    pub fn eval(&self, r: f64, t: f64) -> f64 {
        match self {
            CostField::Constant(c) => *c,
            CostField::Affine { c0, cr, ct } => c0 + cr * r + ct * t,
            CostField::Table(table) => table.eval(r, t),
        }
    }
}

/// Samples on a uniform `(r, t)` lattice anchored at the origin, read back
/// by bilinear interpolation and clamped outside the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    dr: f64,
    dt: f64,
    nr: usize,
    nt: usize,
    /// Row-major in `t`: `values[it * nr + ir]`.
    values: Vec<f64>,
}

impl CostTable {
    pub fn new(dr: f64, dt: f64, nr: usize, nt: usize, values: Vec<f64>) -> Result<Self> {
        if nr == 0 || nt == 0 || values.len() != nr * nt {
            return Err(Error::Table(format!(
                "expected {nr}x{nt} samples, got {}",
                values.len()
            )));
        }
        if (nr > 1 && !(dr > 0.0)) || (nt > 1 && !(dt > 0.0)) {
            return Err(Error::Table("lattice steps must be positive".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Table("cost samples must be finite".into()));
        }
        Ok(Self {
            dr,
            dt,
            nr,
            nt,
            values,
        })
    }

    /// Builds a table from scattered `(r, t, value)` samples that must cover
    /// a full uniform lattice starting at `r = 0, t = 0`.
    pub fn from_samples(samples: &[(f64, f64, f64)]) -> Result<Self> {
        let rs = distinct_sorted(samples.iter().map(|s| s.0));
        let ts = distinct_sorted(samples.iter().map(|s| s.1));
        let dr = uniform_step(&rs, "r")?;
        let dt = uniform_step(&ts, "t")?;
        let (nr, nt) = (rs.len(), ts.len());
        if samples.len() != nr * nt {
            return Err(Error::Table(format!(
                "{} samples do not form a full {nr}x{nt} lattice",
                samples.len()
            )));
        }
        let mut values = vec![f64::NAN; nr * nt];
        for &(r, t, v) in samples {
            let ir = index_on(r, dr, nr);
            let it = index_on(t, dt, nt);
            let slot = &mut values[it * nr + ir];
            if !slot.is_nan() {
                return Err(Error::Table(format!("duplicate sample at r={r}, t={t}")));
            }
            *slot = v;
        }
        Self::new(dr, dt, nr, nt, values)
    }

    pub fn eval(&self, r: f64, t: f64) -> f64 {
        let (ir, fr) = locate(r, self.dr, self.nr);
        let (it, ft) = locate(t, self.dt, self.nt);
        let at = |it: usize, ir: usize| self.values[it * self.nr + ir];
        let ir1 = (ir + 1).min(self.nr - 1);
        let it1 = (it + 1).min(self.nt - 1);
        let lo = at(it, ir) + fr * (at(it, ir1) - at(it, ir));
        if ft == 0.0 {
            return lo;
        }
        let hi = at(it1, ir) + fr * (at(it1, ir1) - at(it1, ir));
        lo + ft * (hi - lo)
    }
}

fn distinct_sorted(xs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = xs.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    v
}

fn uniform_step(xs: &[f64], axis: &str) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Table("no samples".into()));
    }
    if xs[0].abs() > 1e-12 {
        return Err(Error::Table(format!("{axis} lattice must start at 0")));
    }
    if xs.len() == 1 {
        return Ok(0.0);
    }
    let step = xs[1] - xs[0];
    for (k, x) in xs.iter().enumerate() {
        if (x - k as f64 * step).abs() > 1e-9 * (1.0 + x.abs()) {
            return Err(Error::Table(format!("{axis} samples are not uniformly spaced")));
        }
    }
    Ok(step)
}

fn index_on(x: f64, step: f64, n: usize) -> usize {
    if n == 1 {
        0
    } else {
        ((x / step).round() as usize).min(n - 1)
    }
}

fn locate(x: f64, step: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let s = (x / step).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    (i, s - i as f64)
}

/// Static cost data of the optimal control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    edge_running: Vec<CostField>,
    vertex_running: CostField,
    edge_terminal: Vec<CostField>,
    vertex_terminal: f64,
    horizon: f64,
}

/// Uniform bounds `sup|L|` and `sup|g|` sampled on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBounds {
    pub running: f64,
    pub terminal: f64,
}

impl CostSpec {
    pub fn new(
        edge_running: Vec<CostField>,
        vertex_running: CostField,
        edge_terminal: Vec<CostField>,
        vertex_terminal: f64,
        horizon: f64,
    ) -> Result<Self> {
        if edge_running.len() != edge_terminal.len() {
            return domain(format!(
                "{} running costs but {} terminal costs",
                edge_running.len(),
                edge_terminal.len()
            ));
        }
        if edge_running.len() < 2 {
            return domain("costs must be given for at least 2 edges");
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        if !vertex_terminal.is_finite() {
            return domain("vertex terminal cost must be finite");
        }
        Ok(Self {
            edge_running,
            vertex_running,
            edge_terminal,
            vertex_terminal,
            horizon,
        })
    }

    /// Constant costs: `l_i = running[i]`, `l_* = vertex_running`,
    /// `g_i = terminal[i]`, `g_* = vertex_terminal`.
    pub fn constant(
        running: &[f64],
        vertex_running: f64,
        terminal: &[f64],
        vertex_terminal: f64,
        horizon: f64,
    ) -> Result<Self> {
        Self::new(
            running.iter().map(|&c| CostField::Constant(c)).collect(),
            CostField::Constant(vertex_running),
            terminal.iter().map(|&c| CostField::Constant(c)).collect(),
            vertex_terminal,
            horizon,
        )
    }

    pub fn zero(num_edges: usize, horizon: f64) -> Result<Self> {
        let z = vec![0.0; num_edges];
        Self::constant(&z, 0.0, &z, 0.0, horizon)
    }

    /// Two edges with `l_1 = -1`, `l_2 = 1`, `l_* = -1` and zero terminal
    /// costs: mass starting on edge 2 piles up at the vertex.
    pub fn example_dirac(horizon: f64) -> Result<Self> {
        Self::constant(&[-1.0, 1.0], -1.0, &[0.0, 0.0], 0.0, horizon)
    }

    pub fn num_edges(&self) -> usize {
        self.edge_running.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn edge_running(&self, edge: usize, r: f64, t: f64) -> f64 {
        self.edge_running[edge - 1].eval(r, t)
    }

    pub fn vertex_running(&self, t: f64) -> f64 {
        self.vertex_running.eval(0.0, t)
    }

    pub fn edge_terminal(&self, edge: usize, r: f64) -> f64 {
        self.edge_terminal[edge - 1].eval(r, self.horizon)
    }

    pub fn vertex_terminal(&self) -> f64 {
        self.vertex_terminal
    }

    /// `l_O(t) = min{l_*(t), min_i l_i(0, t)}`.
    pub fn vertex_running_effective(&self, t: f64) -> f64 {
        (1..=self.num_edges()).fold(self.vertex_running(t), |m, i| {
            m.min(self.edge_running(i, 0.0, t))
        })
    }

    /// Aggregated running cost `L(x, t)`.
    pub fn running_cost(&self, x: &NetworkPoint, t: f64) -> f64 {
        match *x {
            NetworkPoint::Vertex => self.vertex_running_effective(t),
            NetworkPoint::OnEdge { edge, r } => self.edge_running(edge, r, t),
        }
    }

    /// Aggregated terminal cost `g(x)`.
    pub fn terminal_cost(&self, x: &NetworkPoint) -> f64 {
        match *x {
            NetworkPoint::Vertex => (1..=self.num_edges()).fold(self.vertex_terminal, |m, i| {
                m.min(self.edge_terminal(i, 0.0))
            }),
            NetworkPoint::OnEdge { edge, r } => self.edge_terminal(edge, r),
        }
    }

    /// Samples `sup|L|` and `sup|g|` over every grid node (including `r = 0`
    /// on each edge) and every grid time.
    pub fn bounds(&self, grid: &Grid) -> CostBounds {
        let mut running: f64 = 0.0;
        let mut terminal = self.vertex_terminal.abs();
        for k in 0..=grid.steps() {
            let t = grid.time(k);
            running = running.max(self.vertex_running(t).abs());
            for i in 1..=self.num_edges() {
                for j in 0..=grid.cells() {
                    running = running.max(self.edge_running(i, grid.radius(j), t).abs());
                }
            }
        }
        for i in 1..=self.num_edges() {
            for j in 0..=grid.cells() {
                terminal = terminal.max(self.edge_terminal(i, grid.radius(j)).abs());
            }
        }
        CostBounds { running, terminal }
    }
}

/// Cost of one time step of length `dt` at running cost `ell` and speed `a`.
///
/// The solver, synthesis and the brute-force oracle all price steps through
/// this function so that their values agree bit for bit.
#[inline]
pub(crate) fn step_cost(dt: f64, ell: f64, speed: f64) -> f64 {
    dt * (ell + 0.5 * speed * speed)
}

/// Time quadrature for the running cost of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrature {
    /// Running cost at the segment's time and space midpoint.
    Midpoint,
    /// Running cost at the segment start, the rule the backward solver
    /// discretizes; a move out of `O` is charged `l_i(0, t)`.
    Scheme,
}

/// Cost `J` of an admissible trajectory from its start time to the horizon.
///
/// The kinetic term is exact for piecewise-constant controls. Segment costs
/// are accumulated from the terminal end backwards.
pub fn trajectory_cost(c: &CostSpec, traj: &Trajectory, quadrature: Quadrature) -> Result<f64> {
    traj.validate()?;
    if c.num_edges() < traj.max_edge() {
        return domain("trajectory visits an edge the costs do not define");
    }
    let dt = traj.dt();
    let points = traj.points();
    let mut total = c.terminal_cost(points.last().expect("validated trajectory is nonempty"));
    for (s, control) in traj.controls().iter().enumerate().rev() {
        let t = traj.time(s);
        let from = points[s];
        total += match (*control, quadrature) {
            (Control::Rest, Quadrature::Scheme) => {
                step_cost(dt, c.vertex_running_effective(t), 0.0)
            }
            (Control::Rest, Quadrature::Midpoint) => {
                step_cost(dt, c.vertex_running_effective(t + 0.5 * dt), 0.0)
            }
            (Control::Move { edge, speed }, Quadrature::Scheme) => {
                step_cost(dt, c.edge_running(edge, from.radius(), t), speed)
            }
            (Control::Move { edge, speed }, Quadrature::Midpoint) => {
                let r_mid = from.radius() + 0.5 * speed * dt;
                step_cost(dt, c.edge_running(edge, r_mid, t + 0.5 * dt), speed)
            }
        };
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctorKind {
    Constant,
    Congestion,
}

/// Measure-dependent costs `L_i[m]`, `L_*[m]`, `G_i[m]`, `G_*[m]`.
///
/// The congestion kind adds `kappa * ∫ rho_eps(d(x, y)) dm(y)` to every
/// base cost, with the tent kernel `rho_eps(s) = max(0, 1 - s/eps) / eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFunctorSpec {
    pub kind: FunctorKind,
    pub base: CostSpec,
    pub congestion_strength: f64,
    pub kernel_width: f64,
}

impl CostFunctorSpec {
    pub fn constant(base: CostSpec) -> Self {
        Self {
            kind: FunctorKind::Constant,
            base,
            congestion_strength: 0.0,
            kernel_width: 1.0,
        }
    }

    pub fn congestion(base: CostSpec, strength: f64, width: f64) -> Result<Self> {
        if !(strength.is_finite() && strength >= 0.0) {
            return domain(format!("congestion strength must be >= 0, got {strength}"));
        }
        if !(width.is_finite() && width > 0.0) {
            return domain(format!("kernel width must be > 0, got {width}"));
        }
        Ok(Self {
            kind: FunctorKind::Congestion,
            base,
            congestion_strength: strength,
            kernel_width: width,
        })
    }

    /// Largest value the measure-dependent part can add to any cost.
    pub fn congestion_ceiling(&self) -> f64 {
        match self.kind {
            FunctorKind::Constant => 0.0,
            FunctorKind::Congestion => self.congestion_strength / self.kernel_width,
        }
    }

    /// Bounds on the evaluated costs that hold for every probability measure.
    pub fn uniform_bounds(&self, grid: &Grid) -> CostBounds {
        let b = self.base.bounds(grid);
        let extra = self.congestion_ceiling();
        CostBounds {
            running: b.running + extra,
            terminal: b.terminal + extra,
        }
    }
}

pub fn tent_kernel(s: f64, width: f64) -> f64 {
    (1.0 - s / width).max(0.0) / width
}

/// Freezes the functor at the time marginals of a measure flow.
pub fn evaluate_functor(f: &CostFunctorSpec, flow: &MeasureFlow, grid: &Grid) -> Result<CostSpec> {
    if flow.num_times() != grid.steps() + 1 {
        return domain(format!(
            "flow has {} time slices, grid has {}",
            flow.num_times(),
            grid.steps() + 1
        ));
    }
    if flow.num_edges() != f.base.num_edges()
        || flow.cells() != grid.cells()
        || (flow.dr() - grid.dr()).abs() > 1e-12
    {
        return domain("flow bins do not match the grid");
    }
    if f.kind == FunctorKind::Constant {
        return Ok(f.base.clone());
    }
    let kappa = f.congestion_strength;
    let eps = f.kernel_width;
    let n = f.base.num_edges();
    let nr = grid.cells() + 1;
    let nt = grid.steps() + 1;

    // congestion[k][i][j]: kernel average seen at radius j*dr of edge i at time k
    let mut congestion = vec![vec![0.0; nr * n]; nt];
    for (k, row) in congestion.iter_mut().enumerate() {
        let atoms = flow.slice(k).atoms();
        for i in 1..=n {
            for j in 0..nr {
                let x = NetworkPoint::on_edge(i, grid.radius(j));
                row[(i - 1) * nr + j] = atoms
                    .iter()
                    .map(|(y, m)| m * tent_kernel(distance_unchecked(&x, y), eps))
                    .sum();
            }
        }
    }

    let mut edge_running = Vec::with_capacity(n);
    let mut edge_terminal = Vec::with_capacity(n);
    for i in 1..=n {
        let mut values = Vec::with_capacity(nr * nt);
        for (k, row) in congestion.iter().enumerate() {
            let t = grid.time(k);
            for j in 0..nr {
                values.push(f.base.edge_running(i, grid.radius(j), t) + kappa * row[(i - 1) * nr + j]);
            }
        }
        edge_running.push(CostField::Table(Arc::new(CostTable::new(
            grid.dr(),
            grid.dt(),
            nr,
            nt,
            values,
        )?)));
        let last = &congestion[nt - 1];
        let terminal: Vec<f64> = (0..nr)
            .map(|j| f.base.edge_terminal(i, grid.radius(j)) + kappa * last[(i - 1) * nr + j])
            .collect();
        edge_terminal.push(CostField::Table(Arc::new(CostTable::new(
            grid.dr(),
            grid.dt(),
            nr,
            1,
            terminal,
        )?)));
    }
    // r = 0 on any edge is the vertex, so edge 1's column carries its congestion
    let vertex_values: Vec<f64> = congestion
        .iter()
        .enumerate()
        .map(|(k, row)| f.base.vertex_running(grid.time(k)) + kappa * row[0])
        .collect();
    let vertex_running =
        CostField::Table(Arc::new(CostTable::new(grid.dr(), grid.dt(), 1, nt, vertex_values)?));
    let vertex_terminal = f.base.vertex_terminal() + kappa * congestion[nt - 1][0];
    CostSpec::new(
        edge_running,
        vertex_running,
        edge_terminal,
        vertex_terminal,
        f.base.horizon(),
    )
}
