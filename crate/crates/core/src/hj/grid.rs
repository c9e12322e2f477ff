use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::network::{JunctionGeometry, NetworkPoint, RADIAL_TOLERANCE};

/// A grid node: the vertex, or node `index` (1-based, radius `index * dr`)
/// on `edge`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Vertex,
    Edge { edge: usize, index: usize },
}

/// What the constructor changed to make the steps divide `R_max` and `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAdjustment {
    pub requested_dr: f64,
    pub requested_dt: f64,
    pub dr_adjusted: bool,
    pub dt_adjusted: bool,
}

/// Uniform space-time grid on a truncated junction.
///
/// Node storage is flat: index 0 is the vertex, then edge `i` node `j` sits
/// at `1 + (i - 1) * K + (j - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    geometry: JunctionGeometry,
    dr: f64,
    dt: f64,
    horizon: f64,
    cells: usize,
    steps: usize,
    adjustment: GridAdjustment,
}

fn divisions(length: f64, step: f64) -> usize {
    ((length / step) - 1e-9).ceil().max(1.0) as usize
}

impl Grid {
    /// Builds the grid, shrinking `dr` and `dt` as needed so that
    /// `R_max / dr` and `T / dt` are integers.
    pub fn new(geometry: JunctionGeometry, dr: f64, dt: f64, horizon: f64) -> Result<Self> {
        if !(dr.is_finite() && dr > 0.0) {
            return domain(format!("dr must be positive, got {dr}"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return domain(format!("dt must be positive, got {dt}"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        let r_max = geometry.edge_truncation();
        let cells = divisions(r_max, dr);
        let steps = divisions(horizon, dt);
        let new_dr = r_max / cells as f64;
        let new_dt = horizon / steps as f64;
        let changed = |a: f64, b: f64| (a - b).abs() > 1e-12 * b;
        Ok(Self {
            geometry,
            dr: new_dr,
            dt: new_dt,
            horizon,
            cells,
            steps,
            adjustment: GridAdjustment {
                requested_dr: dr,
                requested_dt: dt,
                dr_adjusted: changed(new_dr, dr),
                dt_adjusted: changed(new_dt, dt),
            },
        })
    }

    pub fn geometry(&self) -> &JunctionGeometry {
        &self.geometry
    }

    pub fn num_edges(&self) -> usize {
        self.geometry.num_edges()
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Nodes per edge, `K`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Time steps, `K_T`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn adjustment(&self) -> GridAdjustment {
        self.adjustment
    }

    pub fn num_nodes(&self) -> usize {
        1 + self.num_edges() * self.cells
    }

    pub fn radius(&self, j: usize) -> f64 {
        j as f64 * self.dr
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn node_index(&self, node: Node) -> usize {
        match node {
            Node::Vertex => 0,
            Node::Edge { edge, index } => 1 + (edge - 1) * self.cells + (index - 1),
        }
    }

    pub fn node(&self, idx: usize) -> Node {
        if idx == 0 {
            Node::Vertex
        } else {
            Node::Edge {
                edge: 1 + (idx - 1) / self.cells,
                index: 1 + (idx - 1) % self.cells,
            }
        }
    }

    pub fn point(&self, node: Node) -> NetworkPoint {
        match node {
            Node::Vertex => NetworkPoint::Vertex,
            Node::Edge { edge, index } => NetworkPoint::OnEdge {
                edge,
                r: self.radius(index),
            },
        }
    }

    pub fn point_of(&self, idx: usize) -> NetworkPoint {
        self.point(self.node(idx))
    }

    /// Node lying exactly (up to radial tolerance) at `x`.
    pub fn node_at(&self, x: &NetworkPoint) -> Option<Node> {
        match *x {
            NetworkPoint::Vertex => Some(Node::Vertex),
            NetworkPoint::OnEdge { edge, r } => {
                if edge == 0 || edge > self.num_edges() {
                    return None;
                }
                let j = (r / self.dr).round();
                if (r - j * self.dr).abs() > RADIAL_TOLERANCE || j > self.cells as f64 {
                    return None;
                }
                Some(if j == 0.0 {
                    Node::Vertex
                } else {
                    Node::Edge {
                        edge,
                        index: j as usize,
                    }
                })
            }
        }
    }

    /// Nearest node to a valid point; exact halves round away from `O`.
    pub fn snap(&self, x: &NetworkPoint) -> Result<Node> {
        self.geometry.validate(x)?;
        Ok(match *x {
            NetworkPoint::Vertex => Node::Vertex,
            NetworkPoint::OnEdge { edge, r } => {
                let j = ((r / self.dr) + 1e-9).round().min(self.cells as f64) as usize;
                if j == 0 {
                    Node::Vertex
                } else {
                    Node::Edge { edge, index: j }
                }
            }
        })
    }
}
