//! Admissible trajectories, greedy synthesis from a value function and an
//! exhaustive brute-force oracle for tiny instances.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::costs::{trajectory_cost, CostSpec, Quadrature};
use crate::error::{domain, Error, Result};
use crate::hj::{best_arrival, Grid, Node, ValueField};
use crate::network::{NetworkPoint, RADIAL_TOLERANCE};

/// Piecewise-constant control on one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Control {
    /// Stay at the vertex.
    Rest,
    /// Move along `edge` at signed radial `speed` (positive is outward).
    Move { edge: usize, speed: f64 },
}

impl Control {
    pub fn speed(&self) -> f64 {
        match *self {
            Control::Rest => 0.0,
            Control::Move { speed, .. } => speed,
        }
    }
}

/// A curve sampled on the uniform time grid, from time index `start_index`
/// to the horizon, with one control per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    start_index: usize,
    dt: f64,
    points: Vec<NetworkPoint>,
    controls: Vec<Control>,
}

/// First violated step of an inadmissible trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub step: usize,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {}", self.step, self.reason)
    }
}

impl Trajectory {
    /// Assembles a trajectory; call [`check_admissible`] to validate it.
    pub fn new(
        start_index: usize,
        dt: f64,
        points: Vec<NetworkPoint>,
        controls: Vec<Control>,
    ) -> Self {
        Self {
            start_index,
            dt,
            points,
            controls,
        }
    }

    /// Integrates `controls` from `start`, canonicalizing arrivals at `O`.
    pub fn from_controls(start_index: usize, dt: f64, start: NetworkPoint, controls: Vec<Control>) -> Self {
        let mut points = Vec::with_capacity(controls.len() + 1);
        let mut at = start;
        points.push(at);
        for control in &controls {
            at = match *control {
                Control::Rest => NetworkPoint::Vertex,
                Control::Move { edge, speed } => {
                    let r = at.radius() + speed * dt;
                    if r.abs() <= RADIAL_TOLERANCE {
                        NetworkPoint::Vertex
                    } else {
                        NetworkPoint::OnEdge { edge, r }
                    }
                }
            };
            points.push(at);
        }
        Self::new(start_index, dt, points, controls)
    }

    /// Stays at `x` from `start_index` for `steps` steps.
    pub fn resting(start_index: usize, dt: f64, x: NetworkPoint, steps: usize) -> Self {
        let control = match x {
            NetworkPoint::Vertex => Control::Rest,
            NetworkPoint::OnEdge { edge, .. } => Control::Move { edge, speed: 0.0 },
        };
        Self::new(start_index, dt, vec![x; steps + 1], vec![control; steps])
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn points(&self) -> &[NetworkPoint] {
        &self.points
    }

    pub fn controls(&self) -> &[Control] {
        &self.controls
    }

    /// Absolute time of sample `s` (relative to the trajectory start).
    pub fn time(&self, s: usize) -> f64 {
        (self.start_index + s) as f64 * self.dt
    }

    /// Position at absolute time index `k`.
    pub fn position(&self, k: usize) -> Option<&NetworkPoint> {
        k.checked_sub(self.start_index).and_then(|s| self.points.get(s))
    }

    /// Discrete L2 norm of the speed, `sqrt(sum dt a^2)`.
    pub fn control_norm(&self) -> f64 {
        self.controls
            .iter()
            .map(|c| self.dt * c.speed() * c.speed())
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn max_edge(&self) -> usize {
        self.points
            .iter()
            .filter_map(NetworkPoint::edge)
            .chain(self.controls.iter().filter_map(|c| match c {
                Control::Move { edge, .. } => Some(*edge),
                Control::Rest => None,
            }))
            .max()
            .unwrap_or(0)
    }

    /// Grid-independent admissibility: continuity along edges, inward exits
    /// from `O`, rest only at `O`.
    pub fn validate(&self) -> Result<()> {
        self.first_violation(None).map_or(Ok(()), |v| domain(v.to_string()))
    }

    fn first_violation(&self, grid: Option<&Grid>) -> Option<Violation> {
        let fail = |step: usize, reason: String| Some(Violation { step, reason });
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return fail(0, format!("time step {} is not positive", self.dt));
        }
        if self.points.len() != self.controls.len() + 1 {
            return fail(
                0,
                format!(
                    "{} samples for {} controls",
                    self.points.len(),
                    self.controls.len()
                ),
            );
        }
        if let Some(grid) = grid {
            if (self.dt - grid.dt()).abs() > 1e-12 * grid.dt() {
                return fail(0, format!("time step {} differs from grid {}", self.dt, grid.dt()));
            }
            if self.start_index + self.controls.len() != grid.steps() {
                return fail(0, "trajectory does not end at the horizon".into());
            }
        }
        for (s, p) in self.points.iter().enumerate() {
            match *p {
                NetworkPoint::OnEdge { edge, r } => {
                    if !(r > 0.0) || !r.is_finite() {
                        return fail(s, format!("non-canonical radius {r} on edge {edge}"));
                    }
                    if let Some(grid) = grid {
                        if let Err(e) = grid.geometry().validate(p) {
                            return fail(s, e.to_string());
                        }
                    }
                }
                NetworkPoint::Vertex => {}
            }
        }
        for (s, control) in self.controls.iter().enumerate() {
            let (from, to) = (self.points[s], self.points[s + 1]);
            match *control {
                Control::Rest => {
                    if !from.is_vertex() || !to.is_vertex() {
                        return fail(s, "rest control away from the vertex".into());
                    }
                }
                Control::Move { edge, speed } => {
                    if edge == 0 || grid.is_some_and(|g| edge > g.num_edges()) {
                        return fail(s, format!("edge {edge} does not exist"));
                    }
                    if !speed.is_finite() {
                        return fail(s, "speed is not finite".into());
                    }
                    match from {
                        NetworkPoint::Vertex if speed <= 0.0 => {
                            return fail(s, "controls at the vertex must point into an edge".into());
                        }
                        NetworkPoint::OnEdge { edge: e, .. } if e != edge => {
                            return fail(s, format!("moves along edge {edge} while on edge {e}"));
                        }
                        _ => {}
                    }
                    let expected = from.radius() + speed * self.dt;
                    if expected < -RADIAL_TOLERANCE {
                        return fail(s, "passes through the vertex within one step".into());
                    }
                    let ok = if expected.abs() <= RADIAL_TOLERANCE {
                        to.is_vertex()
                    } else {
                        to.edge() == Some(edge) && (to.radius() - expected).abs() <= RADIAL_TOLERANCE
                    };
                    if !ok {
                        return fail(
                            s,
                            format!("lands at {to:?}, expected radius {expected} on edge {edge}"),
                        );
                    }
                }
            }
        }
        None
    }
}

/// Checks every trajectory invariant against `grid`, naming the first
/// violated step.
pub fn check_admissible(traj: &Trajectory, grid: &Grid) -> std::result::Result<(), Violation> {
    match traj.first_violation(Some(grid)) {
        None => Ok(()),
        Some(v) => Err(v),
    }
}

/// Records a start point that was moved onto the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapWarning {
    pub requested: NetworkPoint,
    pub snapped: NetworkPoint,
    pub displacement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    pub trajectory: Trajectory,
    pub snap: Option<SnapWarning>,
}

/// Snaps `x` to the nearest node, reporting any displacement.
pub fn snap_to_grid(grid: &Grid, x: &NetworkPoint) -> Result<(Node, Option<SnapWarning>)> {
    let node = grid.snap(x)?;
    let snapped = grid.point(node);
    let warning = (grid.node_at(x) != Some(node)).then(|| SnapWarning {
        requested: *x,
        snapped,
        displacement: if x.edge() == snapped.edge() || snapped.is_vertex() {
            (x.radius() - snapped.radius()).abs()
        } else {
            x.radius() + snapped.radius()
        },
    });
    Ok((node, warning))
}

/// Follows the argmin of the discrete dynamic programming update from
/// `(x0, k0)` to the horizon.
pub fn synthesize(u: &ValueField, c: &CostSpec, x0: &NetworkPoint, k0: usize) -> Result<Synthesized> {
    let grid = u.grid();
    if k0 > grid.steps() {
        return domain(format!("start level {k0} beyond K_T = {}", grid.steps()));
    }
    let (node, snap) = snap_to_grid(grid, x0)?;
    Ok(Synthesized {
        trajectory: synthesize_from_node(u, c, grid.node_index(node), k0),
        snap,
    })
}

pub(crate) fn synthesize_from_node(u: &ValueField, c: &CostSpec, start: usize, k0: usize) -> Trajectory {
    let grid = u.grid();
    let mut node = start;
    let mut points = vec![grid.point_of(node)];
    let mut controls = Vec::with_capacity(grid.steps() - k0);
    for k in k0..grid.steps() {
        let step = best_arrival(grid, c, u.level(k + 1), u.level_min(k + 1), node, k, true);
        node = step.target;
        points.push(grid.point_of(node));
        controls.push(step.control);
    }
    Trajectory::new(k0, grid.dt(), points, controls)
}

/// Largest instance the oracle will enumerate.
pub const ORACLE_MAX_STEPS: usize = 6;
pub const ORACLE_MAX_ARRIVALS: usize = 5;

/// Minimum of the scheme-quadrature cost over every arrival-node sequence
/// from `(x0, k0)`, found by exhaustive enumeration.
pub fn brute_force_value(grid: &Grid, c: &CostSpec, x0: &NetworkPoint, k0: usize) -> Result<f64> {
    if k0 > grid.steps() {
        return domain(format!("start level {k0} beyond K_T = {}", grid.steps()));
    }
    let steps = grid.steps() - k0;
    let cells = grid.cells();
    let arrivals = (1 + grid.num_edges() * cells).max(1 + cells);
    if steps > ORACLE_MAX_STEPS || arrivals > ORACLE_MAX_ARRIVALS {
        return Err(Error::InstanceTooLarge(format!(
            "{steps} steps with up to {arrivals} arrivals per step (limits {ORACLE_MAX_STEPS}, {ORACLE_MAX_ARRIVALS})"
        )));
    }
    let start = match grid.node_at(x0) {
        Some(Node::Vertex) => NetworkPoint::Vertex,
        Some(Node::Edge { edge, index }) => NetworkPoint::OnEdge {
            edge,
            r: index as f64 * grid.dr(),
        },
        None => return domain(format!("{x0:?} is not a grid node")),
    };

    let dt = grid.dt();
    let mut best = f64::INFINITY;
    let mut controls = Vec::with_capacity(steps);
    let mut path = vec![start];
    enumerate(grid, steps, &mut path, &mut controls, &mut |points, controls| {
        let traj = Trajectory::new(k0, dt, points.to_vec(), controls.to_vec());
        let cost = trajectory_cost(c, &traj, Quadrature::Scheme)?;
        best = best.min(cost);
        Ok(())
    })?;
    Ok(best)
}

/// Radial positions reachable in one step, as `(point, control)`.
fn successors(grid: &Grid, from: &NetworkPoint) -> Vec<(NetworkPoint, Control)> {
    let dt = grid.dt();
    let on = |edge: usize, j: usize| NetworkPoint::OnEdge {
        edge,
        r: j as f64 * grid.dr(),
    };
    match *from {
        NetworkPoint::Vertex => {
            let mut out = vec![(NetworkPoint::Vertex, Control::Rest)];
            for edge in 1..=grid.num_edges() {
                for j in 1..=grid.cells() {
                    let to = on(edge, j);
                    out.push((to, Control::Move { edge, speed: to.radius() / dt }));
                }
            }
            out
        }
        NetworkPoint::OnEdge { edge, r } => {
            let mut out = vec![(NetworkPoint::Vertex, Control::Move { edge, speed: (0.0 - r) / dt })];
            for j in 1..=grid.cells() {
                let to = on(edge, j);
                out.push((to, Control::Move { edge, speed: (to.radius() - r) / dt }));
            }
            out
        }
    }
}

fn enumerate(
    grid: &Grid,
    remaining: usize,
    path: &mut Vec<NetworkPoint>,
    controls: &mut Vec<Control>,
    visit: &mut dyn FnMut(&[NetworkPoint], &[Control]) -> Result<()>,
) -> Result<()> {
    if remaining == 0 {
        return visit(path, controls);
    }
    let from = *path.last().expect("path starts nonempty");
    for (to, control) in successors(grid, &from) {
        path.push(to);
        controls.push(control);
        enumerate(grid, remaining - 1, path, controls, visit)?;
        path.pop();
        controls.pop();
    }
    Ok(())
}
