//! Backward semi-Lagrangian solver on arrival nodes.
//!
//! From node `x` at time level `k` a step of length `dt` may end at any node
//! of the same edge or at `O`; from `O` it may rest or enter any edge with a
//! nonnegative speed. The step costs `dt * (l + a^2/2)` with
//! `a = (sigma(z) - r) / dt`.

use rayon::prelude::*;

use crate::costs::{step_cost, CostBounds, CostSpec};
use crate::error::{domain, Result};
use crate::hj::grid::{Grid, Node};
use crate::network::NetworkPoint;
use crate::trajectory::Control;

/// Discrete value function on grid nodes at every time level.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    grid: Grid,
    values: Vec<f64>,
    level_min: Vec<f64>,
}

impl ValueField {
    /// Wraps raw level-major values, `values[k * num_nodes + node]`.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let n = grid.num_nodes();
        if values.len() != n * (grid.steps() + 1) {
            return domain(format!(
                "expected {} values, got {}",
                n * (grid.steps() + 1),
                values.len()
            ));
        }
        let level_min = values
            .chunks(n)
            .map(|level| level.iter().cloned().fold(f64::INFINITY, f64::min))
            .collect();
        Ok(Self {
            grid,
            values,
            level_min,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let n = self.grid.num_nodes();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn get(&self, node: usize, k: usize) -> f64 {
        self.values[k * self.grid.num_nodes() + node]
    }

    /// Value at a point lying on a grid node.
    pub fn at(&self, x: &NetworkPoint, k: usize) -> Result<f64> {
        match self.grid.node_at(x) {
            Some(node) => Ok(self.get(self.grid.node_index(node), k)),
            None => domain(format!("{x:?} is not a grid node")),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn level_min(&self, k: usize) -> f64 {
        self.level_min[k]
    }

    /// Largest excess of `|u(., t_k)|` over `sup|L| (T - t_k) + sup|g|`;
    /// nonpositive when the boundedness estimate holds.
    pub fn bound_excess(&self, bounds: &CostBounds) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for k in 0..=self.grid.steps() {
            let cap = bounds.running * (self.grid.horizon() - self.grid.time(k)) + bounds.terminal;
            let tol = 1e-9 * (1.0 + cap);
            for &v in self.level(k) {
                worst = worst.max(v.abs() - cap - tol);
            }
        }
        worst
    }

    pub(crate) fn set_level(&mut self, k: usize, level: Vec<f64>) {
        let n = self.grid.num_nodes();
        self.level_min[k] = level.iter().cloned().fold(f64::INFINITY, f64::min);
        self.values[k * n..(k + 1) * n].copy_from_slice(&level);
    }
}

/// Minimizing step of the discrete dynamic programming update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub value: f64,
    /// Arrival node index.
    pub target: usize,
    pub control: Control,
}

/// Ordering used among candidates with equal value: fewer nodes travelled,
/// then lower edge index, then smaller arrival radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct TieKey {
    offset: usize,
    edge: usize,
    arrival: usize,
}

struct Best {
    value: f64,
    key: TieKey,
    target: usize,
    control: Control,
}

impl Best {
    fn offer(&mut self, value: f64, key: TieKey, target: usize, control: Control) {
        if value < self.value || (value == self.value && key < self.key) {
            *self = Best {
                value,
                key,
                target,
                control,
            };
        }
    }
}

/// How many nodes away a strictly-better-than-resting arrival may lie.
///
/// Moving `m` nodes costs at least `(m dr)^2 / (2 dt)` more than resting
/// plus `min u_{k+1} - u_{k+1}(x)`. One extra node absorbs rounding.
fn reach(grid: &Grid, oscillation: f64) -> usize {
    let dist = (2.0 * grid.dt() * oscillation.max(0.0)).sqrt() * (1.0 + 1e-6);
    ((dist / grid.dr()).floor() as usize + 1).min(grid.cells())
}

/// Evaluates the update at `node` for level `k` given level `k + 1`.
///
/// With `prune` the search is restricted to nodes within [`reach`]; the
/// result is identical to the exhaustive search.
pub(crate) fn best_arrival(
    grid: &Grid,
    c: &CostSpec,
    next: &[f64],
    next_min: f64,
    node: usize,
    k: usize,
    prune: bool,
) -> Arrival {
    let dt = grid.dt();
    let t = grid.time(k);
    let window = if prune {
        reach(grid, next[node] - next_min)
    } else {
        grid.cells()
    };
    let best = match grid.node(node) {
        Node::Vertex => {
            let mut best = Best {
                value: step_cost(dt, c.vertex_running_effective(t), 0.0) + next[0],
                key: TieKey {
                    offset: 0,
                    edge: 0,
                    arrival: 0,
                },
                target: 0,
                control: Control::Rest,
            };
            for edge in 1..=grid.num_edges() {
                let ell = c.edge_running(edge, 0.0, t);
                for j in 1..=window {
                    let z = grid.node_index(Node::Edge { edge, index: j });
                    let speed = grid.radius(j) / dt;
                    best.offer(
                        step_cost(dt, ell, speed) + next[z],
                        TieKey {
                            offset: j,
                            edge,
                            arrival: j,
                        },
                        z,
                        Control::Move { edge, speed },
                    );
                }
            }
            best
        }
        Node::Edge { edge, index } => {
            let r = grid.radius(index);
            let ell = c.edge_running(edge, r, t);
            let mut best = Best {
                value: f64::INFINITY,
                key: TieKey {
                    offset: usize::MAX,
                    edge: usize::MAX,
                    arrival: usize::MAX,
                },
                target: node,
                control: Control::Move { edge, speed: 0.0 },
            };
            if index <= window {
                let speed = (0.0 - r) / dt;
                best.offer(
                    step_cost(dt, ell, speed) + next[0],
                    TieKey {
                        offset: index,
                        edge,
                        arrival: 0,
                    },
                    0,
                    Control::Move { edge, speed },
                );
            }
            let lo = index.saturating_sub(window).max(1);
            let hi = (index + window).min(grid.cells());
            for j in lo..=hi {
                let z = grid.node_index(Node::Edge { edge, index: j });
                let speed = (grid.radius(j) - r) / dt;
                best.offer(
                    step_cost(dt, ell, speed) + next[z],
                    TieKey {
                        offset: j.abs_diff(index),
                        edge,
                        arrival: j,
                    },
                    z,
                    Control::Move { edge, speed },
                );
            }
            best
        }
    };
    Arrival {
        value: best.value,
        target: best.target,
        control: best.control,
    }
}

fn update_level(grid: &Grid, c: &CostSpec, next: &[f64], next_min: f64, k: usize, prune: bool) -> Vec<f64> {
    (0..grid.num_nodes())
        .into_par_iter()
        .map(|node| best_arrival(grid, c, next, next_min, node, k, prune).value)
        .collect()
}

fn check_compatible(grid: &Grid, c: &CostSpec) -> Result<()> {
    if c.num_edges() != grid.num_edges() {
        return domain(format!(
            "costs define {} edges, grid has {}",
            c.num_edges(),
            grid.num_edges()
        ));
    }
    if (c.horizon() - grid.horizon()).abs() > 1e-12 * grid.horizon() {
        return domain(format!(
            "cost horizon {} differs from grid horizon {}",
            c.horizon(),
            grid.horizon()
        ));
    }
    Ok(())
}

fn solve(grid: &Grid, c: &CostSpec, prune: bool) -> Result<ValueField> {
    check_compatible(grid, c)?;
    let n = grid.num_nodes();
    let steps = grid.steps();
    let mut field = ValueField::from_values(grid.clone(), vec![0.0; n * (steps + 1)])?;
    let terminal: Vec<f64> = (0..n).map(|i| c.terminal_cost(&grid.point_of(i))).collect();
    field.set_level(steps, terminal);
    for k in (0..steps).rev() {
        let level = update_level(grid, c, field.level(k + 1), field.level_min(k + 1), k, prune);
        field.set_level(k, level);
    }
    Ok(field)
}

/// Computes the discrete value function backwards from the terminal cost.
pub fn backward_solve(grid: &Grid, c: &CostSpec) -> Result<ValueField> {
    solve(grid, c, true)
}

/// Same update without the reach window; used to test that pruning is exact.
pub fn backward_solve_exhaustive(grid: &Grid, c: &CostSpec) -> Result<ValueField> {
    solve(grid, c, false)
}

/// Largest deviation between level `k` and one update of level `k + 1`.
pub fn dpp_residual(u: &ValueField, c: &CostSpec, k: usize) -> Result<f64> {
    let grid = u.grid();
    check_compatible(grid, c)?;
    if k >= grid.steps() {
        return domain(format!("level {k} has no successor (K_T = {})", grid.steps()));
    }
    let recomputed = update_level(grid, c, u.level(k + 1), u.level_min(k + 1), k, true);
    Ok(recomputed
        .iter()
        .zip(u.level(k))
        .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::CostField;
    use crate::network::JunctionGeometry;
    use proptest::prelude::*;

    fn grid(n: usize, r_max: f64, dr: f64, dt: f64, horizon: f64) -> Grid {
        Grid::new(JunctionGeometry::new(n, r_max).unwrap(), dr, dt, horizon).unwrap()
    }

    #[test]
    fn zero_costs_give_zero_value() {
        let g = grid(3, 1.0, 0.1, 0.1, 1.0);
        let u = backward_solve(&g, &CostSpec::zero(3, 1.0).unwrap()).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn uniform_running_cost_accumulates() {
        let g = grid(2, 1.0, 0.1, 0.05, 1.0);
        let c = CostSpec::constant(&[0.7, 0.7], 0.7, &[0.0, 0.0], 0.0, 1.0).unwrap();
        let u = backward_solve(&g, &c).unwrap();
        for k in 0..=g.steps() {
            for &v in u.level(k) {
                assert!((v - 0.7 * (1.0 - g.time(k))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn example_value_matches_closed_form() {
        let g = grid(2, 2.0, 0.02, 0.02, 1.0);
        let c = CostSpec::example_dirac(1.0).unwrap();
        let u = backward_solve(&g, &c).unwrap();
        // -T + 2x on edge 2 (for x <= T/2), -T on edge 1
        for x in [0.1, 0.3, 0.5] {
            let v = u.at(&NetworkPoint::on_edge(2, x), 0).unwrap();
            assert!((v - (-1.0 + 2.0 * x)).abs() < 0.05, "x={x}: {v}");
        }
        for j in 0..=g.cells() {
            let v = u.at(&NetworkPoint::on_edge(1, g.radius(j)), 0).unwrap();
            assert!((v + 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn rejects_incompatible_costs() {
        let g = grid(2, 1.0, 0.1, 0.1, 1.0);
        assert!(backward_solve(&g, &CostSpec::zero(3, 1.0).unwrap()).is_err());
        assert!(backward_solve(&g, &CostSpec::zero(2, 2.0).unwrap()).is_err());
    }

    #[test]
    fn dpp_residual_vanishes_on_solver_output() {
        let g = grid(2, 1.5, 0.05, 0.05, 1.0);
        let c = CostSpec::example_dirac(1.0).unwrap();
        let u = backward_solve(&g, &c).unwrap();
        for k in 0..g.steps() {
            assert_eq!(dpp_residual(&u, &c, k).unwrap(), 0.0);
        }
        assert!(dpp_residual(&u, &c, g.steps()).is_err());
    }

    #[test]
    fn dpp_residual_detects_perturbation() {
        let g = grid(2, 1.5, 0.05, 0.05, 1.0);
        let c = CostSpec::example_dirac(1.0).unwrap();
        let u = backward_solve(&g, &c).unwrap();
        let k = 7;
        let mut level = u.level(k).to_vec();
        let node = g.node_index(Node::Edge { edge: 2, index: 4 });
        level[node] += 0.1;
        let mut bumped = u.clone();
        bumped.set_level(k, level);
        assert!((dpp_residual(&bumped, &c, k).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(dpp_residual(&bumped, &c, k + 1).unwrap(), 0.0);
    }

    #[test]
    fn dpp_on_hand_built_field() {
        // nodes O, (1, dr), (2, dr); levels 0 and 1
        let (dr, dt) = (0.5, 0.25);
        let g = grid(2, 0.5, dr, dt, 0.25);
        let c = CostSpec::new(
            vec![CostField::Constant(0.4), CostField::Constant(-2.0)],
            CostField::Constant(0.3),
            vec![
                CostField::Affine { c0: 1.0, cr: -1.6, ct: 0.0 },
                CostField::Affine { c0: 1.0, cr: -0.2, ct: 0.0 },
            ],
            1.0,
            0.25,
        )
        .unwrap();
        // the terminal level
        let next = [1.0, 0.2, 0.9];
        let a = dr / dt;
        // vertex: rest at l_O = min(0.3, 0.4, -2) = -2, or enter edge 1 or 2
        let rest = dt * -2.0 + 1.0;
        let into1 = dt * (0.4 + a * a / 2.0) + 0.2;
        let into2 = dt * (-2.0 + a * a / 2.0) + 0.9;
        let at_o = rest.min(into1).min(into2);
        assert_eq!(at_o, 0.5);
        let e1 = (dt * 0.4 + 0.2).min(dt * (0.4 + a * a / 2.0) + 1.0);
        let e2 = (dt * -2.0 + 0.9).min(dt * (-2.0 + a * a / 2.0) + 1.0);
        assert_eq!((e1, e2), (0.30000000000000004, 0.4));
        let u = ValueField::from_values(g.clone(), vec![at_o, e1, e2, next[0], next[1], next[2]]).unwrap();
        assert_eq!(dpp_residual(&u, &c, 0).unwrap(), 0.0);
        let solved = backward_solve(&g, &c).unwrap();
        for (got, want) in solved.level(0).iter().zip([at_o, e1, e2]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn vertex_rest_bounds_vertex_value() {
        let g = grid(3, 1.0, 0.05, 0.05, 1.0);
        let c = CostSpec::constant(&[0.5, -0.2, 1.0], 0.1, &[0.3, -0.4, 0.0], 0.2, 1.0).unwrap();
        let u = backward_solve(&g, &c).unwrap();
        for k in 0..g.steps() {
            let rest = g.dt() * c.vertex_running_effective(g.time(k)) + u.get(0, k + 1);
            assert!(u.get(0, k) <= rest);
        }
    }

    fn lipschitz_constants(h: f64) -> (f64, f64) {
        let g = grid(2, 2.0, h, h, 1.0);
        let c = CostSpec::example_dirac(1.0).unwrap();
        let u = backward_solve(&g, &c).unwrap();
        let mut space: f64 = 0.0;
        let mut time: f64 = 0.0;
        for k in 0..=g.steps() {
            for e in 1..=2 {
                for j in 0..g.cells() {
                    let a = u.at(&NetworkPoint::on_edge(e, g.radius(j)), k).unwrap();
                    let b = u.at(&NetworkPoint::on_edge(e, g.radius(j + 1)), k).unwrap();
                    space = space.max((b - a).abs() / h);
                }
            }
            if k < g.steps() {
                for (a, b) in u.level(k).iter().zip(u.level(k + 1)) {
                    time = time.max((a - b).abs());
                }
            }
        }
        (space, time)
    }

    #[test]
    fn regularity_survives_refinement() {
        // |L| <= 1, g = 0: C = 2 bounds the time increments
        for h in [0.05, 0.025, 0.0125] {
            let (space, time) = lipschitz_constants(h);
            // measured 2.5 at every level; growth would show a loss of continuity
            assert!(space <= 3.0, "h={h}: space {space}");
            assert!(time <= 2.0 * h.sqrt() + 2.0 * h, "h={h}: time {time}");
        }
    }

    fn affine_costs(p: &[f64]) -> CostSpec {
        CostSpec::new(
            vec![
                CostField::Affine { c0: p[0], cr: p[1], ct: p[2] },
                CostField::Affine { c0: p[3], cr: p[4], ct: 0.0 },
                CostField::Constant(p[5]),
            ],
            CostField::Affine { c0: p[6], cr: 0.0, ct: p[7] },
            vec![
                CostField::Affine { c0: p[8], cr: p[9], ct: 0.0 },
                CostField::Constant(p[10]),
                CostField::Affine { c0: 0.0, cr: p[11], ct: 0.0 },
            ],
            p[12],
            1.0,
        )
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pruning_is_exact(p in prop::collection::vec(-3.0f64..3.0, 13), h in prop::sample::select(vec![0.05, 0.1, 0.125])) {
            let g = grid(3, 1.0, h, h, 1.0);
            let c = affine_costs(&p);
            let pruned = backward_solve(&g, &c).unwrap();
            let full = backward_solve_exhaustive(&g, &c).unwrap();
            prop_assert_eq!(pruned, full);
        }

        #[test]
        fn value_is_bounded(p in prop::collection::vec(-3.0f64..3.0, 13)) {
            let g = grid(3, 1.0, 0.1, 0.05, 1.0);
            let c = affine_costs(&p);
            let u = backward_solve(&g, &c).unwrap();
            prop_assert!(u.bound_excess(&c.bounds(&g)) <= 0.0);
        }
    }
}
