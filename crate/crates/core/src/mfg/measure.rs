use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::hj::{Grid, Node};
use crate::network::NetworkPoint;
use crate::trajectory::Trajectory;

/// A measure on the junction binned on grid nodes: an atom at `O` plus the
/// mass at each node `j * dr` of every edge (node `j` collects the bin
/// `[(j - 1/2) dr, (j + 1/2) dr)`).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSlice {
    dr: f64,
    vertex: f64,
    edges: Vec<Vec<f64>>,
}

impl MeasureSlice {
    pub fn empty(num_edges: usize, cells: usize, dr: f64) -> Self {
        Self {
            dr,
            vertex: 0.0,
            edges: vec![vec![0.0; cells]; num_edges],
        }
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn cells(&self) -> usize {
        self.edges.first().map_or(0, Vec::len)
    }

    pub fn vertex_mass(&self) -> f64 {
        self.vertex
    }

    /// Masses on `edge` (1-based), entry `j - 1` for node `j`.
    pub fn edge_masses(&self, edge: usize) -> &[f64] {
        &self.edges[edge - 1]
    }

    pub fn total_mass(&self) -> f64 {
        self.edges
            .iter()
            .flat_map(|e| e.iter())
            .fold(self.vertex, |s, m| s + m)
    }

    pub fn add(&mut self, node: Node, mass: f64) {
        match node {
            Node::Vertex => self.vertex += mass,
            Node::Edge { edge, index } => self.edges[edge - 1][index - 1] += mass,
        }
    }

    /// Nonzero atoms as `(point, mass)`, vertex first.
    pub fn atoms(&self) -> Vec<(NetworkPoint, f64)> {
        let mut out = Vec::new();
        if self.vertex != 0.0 {
            out.push((NetworkPoint::Vertex, self.vertex));
        }
        for (i, masses) in self.edges.iter().enumerate() {
            for (j, &m) in masses.iter().enumerate() {
                if m != 0.0 {
                    out.push((
                        NetworkPoint::OnEdge {
                            edge: i + 1,
                            r: (j + 1) as f64 * self.dr,
                        },
                        m,
                    ));
                }
            }
        }
        out
    }
}

/// Time marginals `m(t_k)` of a trajectory measure.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureFlow {
    slices: Vec<MeasureSlice>,
}

impl MeasureFlow {
    pub fn new(slices: Vec<MeasureSlice>) -> Result<Self> {
        let Some(first) = slices.first() else {
            return domain("a measure flow needs at least one time slice");
        };
        if slices.iter().any(|s| {
            s.num_edges() != first.num_edges() || s.cells() != first.cells() || s.dr != first.dr
        }) {
            return domain("time slices use different bins");
        }
        Ok(Self { slices })
    }

    /// The same slice at every one of `times` grid times.
    pub fn stationary(slice: MeasureSlice, times: usize) -> Self {
        Self {
            slices: vec![slice; times],
        }
    }

    pub fn num_times(&self) -> usize {
        self.slices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.slices[0].num_edges()
    }

    pub fn cells(&self) -> usize {
        self.slices[0].cells()
    }

    pub fn dr(&self) -> f64 {
        self.slices[0].dr
    }

    pub fn slice(&self, k: usize) -> &MeasureSlice {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[MeasureSlice] {
        &self.slices
    }

    pub fn vertex_mass(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.vertex).collect()
    }

    /// Largest `|total mass - 1|` over time.
    pub fn mass_defect(&self) -> f64 {
        self.slices
            .iter()
            .fold(0.0, |m, s| m.max((s.total_mass() - 1.0).abs()))
    }
}

/// Piecewise-constant density on cells `[k h, (k + 1) h)` of one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDensity {
    pub cell_width: f64,
    pub density: Vec<f64>,
}

impl EdgeDensity {
    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell_width
    }

    fn support_radius(&self) -> f64 {
        self.density
            .iter()
            .rposition(|&d| d > 0.0)
            .map_or(0.0, |k| (k + 1) as f64 * self.cell_width)
    }

    /// Mass on `[0, r)`.
    fn cdf(&self, r: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &d) in self.density.iter().enumerate() {
            let lo = k as f64 * self.cell_width;
            if r <= lo {
                break;
            }
            acc += d * (r.min(lo + self.cell_width) - lo);
        }
        acc
    }

    /// Smallest `r` with `cdf(r) = q`, for `0 < q < mass`.
    fn quantile(&self, q: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &d) in self.density.iter().enumerate() {
            let cell = d * self.cell_width;
            if d > 0.0 && acc + cell >= q {
                return k as f64 * self.cell_width + (q - acc) / d;
            }
            acc += cell;
        }
        self.support_radius()
    }
}

/// Initial distribution `m_0`: an atom at `O` plus a density on each edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDistribution {
    #[serde(default)]
    pub vertex_atom: f64,
    pub edges: Vec<EdgeDensity>,
}

impl InitialDistribution {
    pub fn vertex_atom(num_edges: usize) -> Self {
        Self {
            vertex_atom: 1.0,
            edges: vec![
                EdgeDensity {
                    cell_width: 1.0,
                    density: vec![]
                };
                num_edges
            ],
        }
    }

    /// Uniform on `[0, radius]` of every edge.
    pub fn uniform(num_edges: usize, radius: f64) -> Self {
        let density = 1.0 / (num_edges as f64 * radius);
        Self {
            vertex_atom: 0.0,
            edges: vec![
                EdgeDensity {
                    cell_width: radius,
                    density: vec![density]
                };
                num_edges
            ],
        }
    }

    pub fn validate(&self, num_edges: usize) -> Result<()> {
        if self.edges.len() != num_edges {
            return domain(format!(
                "initial distribution has {} edges, geometry has {num_edges}",
                self.edges.len()
            ));
        }
        if !(self.vertex_atom >= 0.0) {
            return domain("vertex atom must be nonnegative");
        }
        for (i, e) in self.edges.iter().enumerate() {
            if !e.density.is_empty() && !(e.cell_width.is_finite() && e.cell_width > 0.0) {
                return domain(format!("edge {}: cell width must be positive", i + 1));
            }
            if e.density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                return domain(format!("edge {}: density must be finite and nonnegative", i + 1));
            }
        }
        let total = self.total_mass();
        if (total - 1.0).abs() > 1e-9 {
            return domain(format!("initial distribution has total mass {total}"));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.edges.iter().map(EdgeDensity::mass).sum::<f64>() + self.vertex_atom
    }

    pub fn support_radius(&self) -> f64 {
        self.edges
            .iter()
            .map(EdgeDensity::support_radius)
            .fold(0.0, f64::max)
    }

    /// Bins `m_0` onto grid nodes; mass within `dr/2` of `O` goes to the
    /// vertex atom.
    pub fn discretize(&self, grid: &Grid) -> MeasureSlice {
        let dr = grid.dr();
        let cells = grid.cells();
        let mut slice = MeasureSlice::empty(grid.num_edges(), cells, dr);
        slice.vertex = self.vertex_atom;
        for (i, e) in self.edges.iter().enumerate() {
            slice.vertex += e.cdf(0.5 * dr);
            for j in 1..=cells {
                let lo = e.cdf((j as f64 - 0.5) * dr);
                let hi = if j == cells {
                    e.mass()
                } else {
                    e.cdf((j as f64 + 0.5) * dr)
                };
                slice.edges[i][j - 1] = hi - lo;
            }
        }
        slice
    }
}

/// Deterministic stratified sample of `m0` with about `n` particles.
///
/// Edge `i` receives `round(n * mass_i)` particles at the quantile midpoints
/// of its density, the vertex atom gets one particle of its own, and the
/// weights are renormalized to sum to one.
pub fn sample_initial(m0: &InitialDistribution, n: usize) -> Result<Vec<(f64, NetworkPoint)>> {
    if n == 0 {
        return domain("at least one particle is required");
    }
    let mut out = Vec::new();
    if m0.vertex_atom > 0.0 {
        out.push((m0.vertex_atom, NetworkPoint::Vertex));
    }
    for (i, e) in m0.edges.iter().enumerate() {
        let mass = e.mass();
        let count = (n as f64 * mass).round() as usize;
        if count == 0 || mass <= 0.0 {
            continue;
        }
        let w = mass / count as f64;
        for q in 0..count {
            let r = e.quantile((q as f64 + 0.5) * w);
            out.push((w, NetworkPoint::on_edge(i + 1, r)));
        }
    }
    let total: f64 = out.iter().map(|p| p.0).sum();
    if out.is_empty() || total <= 0.0 {
        return domain("initial distribution carries no mass");
    }
    for p in &mut out {
        p.0 /= total;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub weight: f64,
    pub trajectory: Trajectory,
}

/// Weighted particle ensemble over trajectories starting at time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeasure {
    particles: Vec<Particle>,
    control_bound: f64,
}

impl TrajectoryMeasure {
    pub fn new(particles: Vec<Particle>, control_bound: f64) -> Result<Self> {
        if particles.is_empty() {
            return domain("a trajectory measure needs at least one particle");
        }
        let total: f64 = particles.iter().map(|p| p.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return domain(format!("particle weights sum to {total}"));
        }
        for (j, p) in particles.iter().enumerate() {
            if !(p.weight > 0.0) {
                return domain(format!("particle {j} has weight {}", p.weight));
            }
            if p.trajectory.start_index() != 0 {
                return domain(format!("particle {j} does not start at time 0"));
            }
            let norm = p.trajectory.control_norm();
            if norm > control_bound * (1.0 + 1e-9) + 1e-12 {
                return domain(format!(
                    "particle {j} has control norm {norm} above the bound {control_bound}"
                ));
            }
        }
        Ok(Self {
            particles,
            control_bound,
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn control_bound(&self) -> f64 {
        self.control_bound
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// `(1 - lambda) self + lambda other`, merging identical trajectories and
    /// dropping weights below `1e-12`.
    pub fn mix(&self, other: &TrajectoryMeasure, lambda: f64) -> Result<TrajectoryMeasure> {
        if !(0.0..=1.0).contains(&lambda) {
            return domain(format!("mixing weight {lambda} outside [0, 1]"));
        }
        let parts = self
            .particles
            .iter()
            .map(|p| (p.weight * (1.0 - lambda), &p.trajectory))
            .chain(other.particles.iter().map(|p| (p.weight * lambda, &p.trajectory)))
            .collect();
        Self::merged(parts, self.control_bound.max(other.control_bound))
    }

    /// Sums the weights of identical trajectories (first occurrence keeps its
    /// place), drops weights below [`PRUNE_WEIGHT`] and renormalizes.
    pub fn merged(parts: Vec<(f64, &Trajectory)>, control_bound: f64) -> Result<TrajectoryMeasure> {
        let mut merged: IndexMap<Vec<(usize, u64)>, Particle> = IndexMap::new();
        for (w, traj) in parts {
            merged
                .entry(path_key(traj))
                .and_modify(|q| q.weight += w)
                .or_insert_with(|| Particle {
                    weight: w,
                    trajectory: traj.clone(),
                });
        }
        let mut particles: Vec<Particle> =
            merged.into_values().filter(|p| p.weight >= PRUNE_WEIGHT).collect();
        let total: f64 = particles.iter().map(|p| p.weight).sum();
        for p in &mut particles {
            p.weight /= total;
        }
        TrajectoryMeasure::new(particles, control_bound)
    }
}

/// Particles lighter than this are dropped when ensembles are mixed.
pub const PRUNE_WEIGHT: f64 = 1e-12;

fn path_key(traj: &Trajectory) -> Vec<(usize, u64)> {
    traj.points()
        .iter()
        .map(|p| (p.edge().unwrap_or(0), p.radius().to_bits()))
        .collect()
}

/// Pushes the measure forward through the evaluation maps `e_t`.
///
/// Particles are deposited in index order so the sums are reproducible.
pub fn marginal_flow(mu: &TrajectoryMeasure, grid: &Grid) -> Result<MeasureFlow> {
    deposit(mu.particles.iter().map(|p| (p.weight, &p.trajectory)), grid)
}

/// Bins weighted trajectories per time; the weights need not sum to one.
pub(crate) fn deposit<'a>(
    parts: impl IntoIterator<Item = (f64, &'a Trajectory)>,
    grid: &Grid,
) -> Result<MeasureFlow> {
    let mut slices =
        vec![MeasureSlice::empty(grid.num_edges(), grid.cells(), grid.dr()); grid.steps() + 1];
    for (j, (weight, traj)) in parts.into_iter().enumerate() {
        if traj.start_index() != 0 || traj.points().len() != grid.steps() + 1 {
            return domain(format!("particle {j} does not span the time grid"));
        }
        for (slice, x) in slices.iter_mut().zip(traj.points()) {
            let node = match grid.node_at(x) {
                Some(node) => node,
                None => grid.snap(x)?,
            };
            slice.add(node, weight);
        }
    }
    MeasureFlow::new(slices)
}
