//! Finite-difference residuals of the junction Hamilton-Jacobi problem.
//!
//! Interior nodes use `-D_t u + H_i(D_r u)` with a forward difference in
//! time and a central difference in space (one-sided at `R_max`; node 1 uses
//! the vertex value at `r = 0`). The vertex uses `-D_t u + H_O(D_1 u, ...)`
//! with one-sided differences into each edge.

use crate::costs::CostSpec;
use crate::error::Result;
use crate::hj::grid::Node;
use crate::hj::hamiltonian::{hamiltonian_edge, hamiltonian_vertex};
use crate::hj::solver::ValueField;

/// Residual per node for time levels `0..K_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    num_nodes: usize,
    values: Vec<f64>,
}

impl ResidualField {
    pub fn get(&self, node: usize, k: usize) -> f64 {
        self.values[k * self.num_nodes + node]
    }

    pub fn levels(&self) -> usize {
        self.values.len() / self.num_nodes
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|residual|` over edge nodes with radius strictly above
    /// `min_radius`, optionally restricted to one edge.
    pub fn max_interior(&self, u: &ValueField, min_radius: f64, edge: Option<usize>) -> f64 {
        let grid = u.grid();
        let mut worst: f64 = 0.0;
        for node in 1..self.num_nodes {
            let Node::Edge { edge: e, index } = grid.node(node) else {
                continue;
            };
            if grid.radius(index) <= min_radius || edge.is_some_and(|want| want != e) {
                continue;
            }
            for k in 0..self.levels() {
                worst = worst.max(self.get(node, k).abs());
            }
        }
        worst
    }
}

pub fn viscosity_residual(u: &ValueField, c: &CostSpec) -> Result<ResidualField> {
    let grid = u.grid();
    let n = grid.num_nodes();
    let (dr, dt) = (grid.dr(), grid.dt());
    let cells = grid.cells();
    let mut values = Vec::with_capacity(n * grid.steps());
    let mut slopes = vec![0.0; grid.num_edges()];
    for k in 0..grid.steps() {
        let now = u.level(k);
        let next = u.level(k + 1);
        let t = grid.time(k);
        for node in 0..n {
            let time_diff = (next[node] - now[node]) / dt;
            let residual = match grid.node(node) {
                Node::Vertex => {
                    for (i, slope) in slopes.iter_mut().enumerate() {
                        let first = grid.node_index(Node::Edge {
                            edge: i + 1,
                            index: 1,
                        });
                        *slope = (now[first] - now[0]) / dr;
                    }
                    -time_diff + hamiltonian_vertex(t, &slopes, c)?
                }
                Node::Edge { edge, index } => {
                    let at = |j: usize| {
                        if j == 0 {
                            now[0]
                        } else {
                            now[grid.node_index(Node::Edge { edge, index: j })]
                        }
                    };
                    let p = if cells == 1 {
                        (at(1) - at(0)) / dr
                    } else if index == cells {
                        (at(index) - at(index - 1)) / dr
                    } else {
                        (at(index + 1) - at(index - 1)) / (2.0 * dr)
                    };
                    -time_diff + hamiltonian_edge(p, c.edge_running(edge, grid.radius(index), t))
                }
            };
            values.push(residual);
        }
    }
    Ok(ResidualField {
        num_nodes: n,
        values,
    })
}
