//! Star-network geometry.
//!
//! A junction is `N` half-lines glued at a single vertex `O`. Points are kept
//! in intrinsic coordinates: the vertex, or an edge index (1-based) with a
//! strictly positive radial coordinate. Edges are truncated at a common
//! radius `R_max` so they can be gridded.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Absolute slack used when comparing radii against the truncation radius.
pub const RADIAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionGeometry {
    num_edges: usize,
    edge_truncation: f64,
}

impl JunctionGeometry {
    pub fn new(num_edges: usize, edge_truncation: f64) -> Result<Self> {
        if num_edges < 2 {
            return domain(format!("a junction needs at least 2 edges, got {num_edges}"));
        }
        if !(edge_truncation.is_finite() && edge_truncation > 0.0) {
            return domain(format!(
                "edge truncation must be positive and finite, got {edge_truncation}"
            ));
        }
        Ok(Self {
            num_edges,
            edge_truncation,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn edge_truncation(&self) -> f64 {
        self.edge_truncation
    }

    /// Checks that `x` names an existing edge and lies within the truncation.
    pub fn validate(&self, x: &NetworkPoint) -> Result<()> {
        match *x {
            NetworkPoint::Vertex => Ok(()),
            NetworkPoint::OnEdge { edge, r } => {
                if edge == 0 || edge > self.num_edges {
                    return domain(format!(
                        "edge index {edge} out of range 1..={}",
                        self.num_edges
                    ));
                }
                if !(r.is_finite() && r >= 0.0) {
                    return domain(format!("radial coordinate {r} must be nonnegative"));
                }
                if r > self.edge_truncation + RADIAL_TOLERANCE {
                    return domain(format!(
                        "radial coordinate {r} exceeds truncation {}",
                        self.edge_truncation
                    ));
                }
                Ok(())
            }
        }
    }
}

/// A location on the junction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NetworkPoint {
    Vertex,
    OnEdge { edge: usize, r: f64 },
}

impl NetworkPoint {
    /// Builds a point on `edge`, collapsing `r == 0` onto the vertex.
    pub fn on_edge(edge: usize, r: f64) -> Self {
        canonicalize(NetworkPoint::OnEdge { edge, r })
    }

    pub fn radius(&self) -> f64 {
        match *self {
            NetworkPoint::Vertex => 0.0,
            NetworkPoint::OnEdge { r, .. } => r,
        }
    }

    /// Edge index, or `None` at the vertex.
    pub fn edge(&self) -> Option<usize> {
        match *self {
            NetworkPoint::Vertex => None,
            NetworkPoint::OnEdge { edge, .. } => Some(edge),
        }
    }

    pub fn is_vertex(&self) -> bool {
        matches!(self, NetworkPoint::Vertex)
    }
}

pub fn canonicalize(x: NetworkPoint) -> NetworkPoint {
    match x {
        NetworkPoint::OnEdge { r, .. } if r == 0.0 => NetworkPoint::Vertex,
        other => other,
    }
}

/// Shortest-path distance; paths between different edges pass through `O`.
pub fn geodesic_distance(g: &JunctionGeometry, x: &NetworkPoint, y: &NetworkPoint) -> Result<f64> {
    g.validate(x)?;
    g.validate(y)?;
    Ok(match (canonicalize(*x), canonicalize(*y)) {
        (NetworkPoint::OnEdge { edge: ex, r: rx }, NetworkPoint::OnEdge { edge: ey, r: ry })
            if ex != ey =>
        {
            rx + ry
        }
        (a, b) => (a.radius() - b.radius()).abs(),
    })
}

/// Distance between two points already known to be valid.
pub(crate) fn distance_unchecked(x: &NetworkPoint, y: &NetworkPoint) -> f64 {
    match (x, y) {
        (NetworkPoint::OnEdge { edge: ex, r: rx }, NetworkPoint::OnEdge { edge: ey, r: ry })
            if ex != ey =>
        {
            rx + ry
        }
        (a, b) => (a.radius() - b.radius()).abs(),
    }
}
