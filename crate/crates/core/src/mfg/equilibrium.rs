//! Best responses, exploitability and fictitious play.

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{
    evaluate_functor, tent_kernel, trajectory_cost, CostFunctorSpec, CostSpec, FunctorKind, Quadrature,
};
use crate::error::{domain, Result};
use crate::hj::{backward_solve, Grid, ValueField};
use crate::network::{distance_unchecked, NetworkPoint};
use crate::trajectory::{snap_to_grid, synthesize_from_node, SnapWarning, Trajectory};

use super::measure::{
    deposit, marginal_flow, sample_initial, InitialDistribution, MeasureFlow, MeasureSlice, Particle,
    TrajectoryMeasure,
};
use super::wasserstein::{tail_profile, wasserstein1};

/// Control-norm bound `C` with `C^2 = 2 (2 K T + 2 G)`, where `K` and `G`
/// bound the running and terminal costs uniformly over all measures.
///
/// Resting is always admissible, so any optimal control satisfies
/// `||a||_2^2 / 2 <= J(rest) - J_min <= 2 K T + 2 G`.
pub fn control_bound(f: &CostFunctorSpec, grid: &Grid) -> f64 {
    let b = f.uniform_bounds(grid);
    (2.0 * (2.0 * b.running * grid.horizon() + 2.0 * b.terminal)).sqrt()
}

/// Frozen costs and value function against a given flow.
struct Frozen {
    costs: CostSpec,
    value: ValueField,
}

fn freeze(f: &CostFunctorSpec, flow: &MeasureFlow, grid: &Grid) -> Result<Frozen> {
    let costs = evaluate_functor(f, flow, grid)?;
    let value = backward_solve(grid, &costs)?;
    Ok(Frozen { costs, value })
}

fn respond(frozen: &Frozen, starts: &[(f64, NetworkPoint)], bound: f64) -> Result<TrajectoryMeasure> {
    let grid = frozen.value.grid();
    let nodes = starts
        .iter()
        .map(|(_, x)| snap_to_grid(grid, x).map(|(node, _)| grid.node_index(node)))
        .collect::<Result<Vec<_>>>()?;
    let particles = starts
        .par_iter()
        .zip(nodes.par_iter())
        .map(|(&(weight, _), &node)| Particle {
            weight,
            trajectory: synthesize_from_node(&frozen.value, &frozen.costs, node, 0),
        })
        .collect();
    TrajectoryMeasure::new(particles, bound)
}

/// Optimal trajectories for every start against the costs frozen at `flow`.
pub fn best_response(
    f: &CostFunctorSpec,
    flow: &MeasureFlow,
    starts: &[(f64, NetworkPoint)],
    grid: &Grid,
) -> Result<TrajectoryMeasure> {
    let frozen = freeze(f, flow, grid)?;
    respond(&frozen, starts, control_bound(f, grid))
}

/// Weighted optimality gaps of the particles against the value function.
///
/// Costs use the scheme quadrature so that a best-response particle has a
/// gap of exactly zero.
fn weighted_gap(frozen: &Frozen, mu: &TrajectoryMeasure) -> Result<f64> {
    let gaps = mu
        .particles()
        .par_iter()
        .map(|p| particle_gap(frozen, &p.trajectory).map(|g| p.weight * g))
        .collect::<Result<Vec<f64>>>()?;
    Ok(gaps.iter().sum())
}

fn particle_gap(frozen: &Frozen, traj: &Trajectory) -> Result<f64> {
    let start = traj.points()[0];
    let value = frozen.value.at(&start, traj.start_index())?;
    Ok(trajectory_cost(&frozen.costs, traj, Quadrature::Scheme)? - value)
}

/// `sum_j w_j [J(x_j; traj_j) - u(x_j, 0)]` with costs frozen at the
/// measure's own marginals.
pub fn exploitability(f: &CostFunctorSpec, mu: &TrajectoryMeasure, grid: &Grid) -> Result<f64> {
    let flow = marginal_flow(mu, grid)?;
    let frozen = freeze(f, &flow, grid)?;
    weighted_gap(&frozen, mu)
}

/// One line of the fictitious-play log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub exploitability: f64,
    /// `max_t W1(m_k(t), m_{k-1}(t))`; absent for the first iterate.
    pub w1_step: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub measure: TrajectoryMeasure,
    pub flow: MeasureFlow,
    pub exploitability: f64,
    pub converged: bool,
    /// Iteration index of the returned measure.
    pub iteration: usize,
    pub log: Vec<IterationRecord>,
    /// Starts that had to be moved onto grid nodes.
    pub snapped: Vec<SnapWarning>,
}

/// What the solver exposes about each iterate as it goes.
pub struct IterateView<'a> {
    pub iter: usize,
    pub measure: &'a TrajectoryMeasure,
    pub flow: &'a MeasureFlow,
    pub exploitability: f64,
}

/// Mixing weight given to the best response at iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Classical fictitious play, `lambda_k = 1 / (k + 1)`.
    #[default]
    Harmonic,
    /// Pairwise step: for every start, mass moves from its costliest
    /// trajectory in the support to the best response, by the exact
    /// minimizer of the game's quadratic potential along that direction.
    Pairwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub particles: usize,
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub step: StepRule,
}

/// Fictitious play from the rest-in-place ensemble, stopping once
/// exploitability is at most `tol`.
///
/// With [`StepRule::Harmonic`] the update is
/// `mu_{k+1} = (1 - 1/(k+1)) mu_k + 1/(k+1) BR(mu_k)`. When `max_iter` is
/// reached the iterate with the smallest exploitability is returned with
/// `converged = false`.
pub fn solve_equilibrium(
    f: &CostFunctorSpec,
    m0: &InitialDistribution,
    grid: &Grid,
    settings: SolverSettings,
) -> Result<Equilibrium> {
    solve_equilibrium_observed(f, m0, grid, settings, |_| {})
}

pub fn solve_equilibrium_observed(
    f: &CostFunctorSpec,
    m0: &InitialDistribution,
    grid: &Grid,
    settings: SolverSettings,
    mut observe: impl FnMut(&IterateView<'_>),
) -> Result<Equilibrium> {
    if !(settings.tol > 0.0) {
        return domain(format!("tolerance must be positive, got {}", settings.tol));
    }
    if settings.max_iter == 0 {
        return domain("max_iter must be at least 1");
    }
    m0.validate(grid.num_edges())?;
    let bound = control_bound(f, grid);

    let mut snapped = Vec::new();
    let mut starts = Vec::new();
    for (w, x) in sample_initial(m0, settings.particles)? {
        let (node, warning) = snap_to_grid(grid, &x)?;
        snapped.extend(warning);
        starts.push((w, grid.point(node)));
    }
    let resting = starts
        .iter()
        .map(|&(weight, x)| Particle {
            weight,
            trajectory: Trajectory::resting(0, grid.dt(), x, grid.steps()),
        })
        .collect();
    let mut mu = TrajectoryMeasure::new(resting, bound)?;

    let mut log = Vec::new();
    let mut previous: Option<MeasureFlow> = None;
    let mut best: Option<(f64, usize, TrajectoryMeasure, MeasureFlow)> = None;
    let mut k = 0;
    loop {
        let flow = marginal_flow(&mu, grid)?;
        let frozen = freeze(f, &flow, grid)?;
        let gap = weighted_gap(&frozen, &mu)?;
        let w1_step = match &previous {
            Some(prev) => Some(max_slice_distance(grid, prev, &flow)?),
            None => None,
        };
        log.push(IterationRecord {
            iter: k,
            exploitability: gap,
            w1_step,
        });
        observe(&IterateView {
            iter: k,
            measure: &mu,
            flow: &flow,
            exploitability: gap,
        });
        if best.as_ref().is_none_or(|b| gap < b.0) {
            best = Some((gap, k, mu.clone(), flow.clone()));
        }
        if gap <= settings.tol {
            return Ok(Equilibrium {
                measure: mu,
                flow,
                exploitability: gap,
                converged: true,
                iteration: k,
                log,
                snapped,
            });
        }
        if k == settings.max_iter {
            break;
        }
        let response = respond(&frozen, &starts, bound)?;
        mu = match settings.step {
            StepRule::Harmonic => mu.mix(&response, 1.0 / (k as f64 + 1.0))?,
            StepRule::Pairwise => pairwise_step(f, grid, &frozen, &mu, &response)?,
        };
        previous = Some(flow);
        k += 1;
    }
    let (gap, iteration, measure, flow) = best.expect("at least one iterate was evaluated");
    Ok(Equilibrium {
        measure,
        flow,
        exploitability: gap,
        converged: false,
        iteration,
        log,
        snapped,
    })
}

fn max_slice_distance(grid: &Grid, a: &MeasureFlow, b: &MeasureFlow) -> Result<f64> {
    a.slices()
        .iter()
        .zip(b.slices())
        .try_fold(0.0, |m, (x, y)| Ok(f64::max(m, wasserstein1(grid.geometry(), x, y)?)))
}

/// `max_{s < t} W1(m(s), m(t)) / (C sqrt(t - s))` over all grid pairs.
///
/// The Hölder estimate holds when this is at most one.
pub fn holder_ratio(flow: &MeasureFlow, grid: &Grid, bound: f64) -> Result<f64> {
    if flow.num_times() != grid.steps() + 1 {
        return domain("flow does not match the time grid");
    }
    // only bins that ever carry mass contribute to the tail profiles
    let mut active = 0;
    for slice in flow.slices() {
        for edge in 1..=slice.num_edges() {
            if let Some(j) = slice.edge_masses(edge).iter().rposition(|&m| m != 0.0) {
                active = active.max(j + 1);
            }
        }
    }
    let profiles: Vec<Vec<f64>> = flow.slices().iter().map(|s| tail_profile(s, active)).collect();
    let dr = flow.dr();
    let dt = grid.dt();
    let rows: Vec<f64> = (0..profiles.len())
        .into_par_iter()
        .map(|s| {
            let mut worst: f64 = 0.0;
            for t in s + 1..profiles.len() {
                let w1: f64 = profiles[s]
                    .iter()
                    .zip(&profiles[t])
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    * dr;
                let scale = bound * (((t - s) as f64) * dt).sqrt();
                worst = worst.max(if scale > 0.0 { w1 / scale } else if w1 > 0.0 { f64::INFINITY } else { 0.0 });
            }
            worst
        })
        .collect();
    Ok(rows.into_iter().fold(0.0, f64::max))
}

/// For every start point, moves mass from its costliest supported
/// trajectory to the best response from that point.
///
/// Congestion costs derive from the potential
/// `<base, mu> + kappa/2 sum_k w_k <m_k, rho * m_k>` (`w_k = dt` before the
/// horizon, 1 at it), which is quadratic along the move, so the step taken
/// is its exact minimizer over `[0, 1]`.
fn pairwise_step(
    f: &CostFunctorSpec,
    grid: &Grid,
    frozen: &Frozen,
    mu: &TrajectoryMeasure,
    response: &TrajectoryMeasure,
) -> Result<TrajectoryMeasure> {
    let start_key = |t: &Trajectory| {
        let s = t.points()[0];
        (s.edge().unwrap_or(0), s.radius().to_bits())
    };
    let gaps = mu
        .particles()
        .par_iter()
        .map(|p| particle_gap(frozen, &p.trajectory))
        .collect::<Result<Vec<f64>>>()?;
    // costliest particle per start point, in order of first appearance
    let mut away: IndexMap<(usize, u64), usize> = IndexMap::new();
    for (j, p) in mu.particles().iter().enumerate() {
        let slot = away.entry(start_key(&p.trajectory)).or_insert(j);
        if gaps[j] > gaps[*slot] {
            *slot = j;
        }
    }
    let targets: IndexMap<(usize, u64), &Trajectory> = response
        .particles()
        .iter()
        .map(|q| (start_key(&q.trajectory), &q.trajectory))
        .collect();
    let mut moves = Vec::new();
    let mut slope = 0.0;
    for (key, &j) in &away {
        if gaps[j] <= 0.0 {
            continue;
        }
        if let Some(&target) = targets.get(key) {
            let w = mu.particles()[j].weight;
            slope += w * gaps[j];
            moves.push((j, w, target));
        }
    }
    if moves.is_empty() {
        return Ok(mu.clone());
    }
    let from = deposit(moves.iter().map(|&(j, w, _)| (w, &mu.particles()[j].trajectory)), grid)?;
    let to = deposit(moves.iter().map(|&(_, w, t)| (w, t)), grid)?;
    let curvature = match f.kind {
        FunctorKind::Constant => 0.0,
        FunctorKind::Congestion => f.congestion_strength,
    } * interaction_energy(grid, &from, &to, f.kernel_width);
    let lambda = if curvature > 0.0 { (slope / curvature).min(1.0) } else { 1.0 };

    let mut weights: Vec<f64> = mu.particles().iter().map(|p| p.weight).collect();
    for &(j, w, _) in &moves {
        weights[j] -= lambda * w;
    }
    let mut parts: Vec<(f64, &Trajectory)> = mu
        .particles()
        .iter()
        .zip(&weights)
        .map(|(p, &w)| (w, &p.trajectory))
        .collect();
    parts.extend(moves.iter().map(|&(_, w, t)| (lambda * w, t)));
    TrajectoryMeasure::merged(parts, mu.control_bound().max(response.control_bound()))
}

/// `sum_k w_k sum_{x, y} d_k(x) d_k(y) rho(d(x, y))` for `d = b - a`.
fn interaction_energy(grid: &Grid, a: &MeasureFlow, b: &MeasureFlow, width: f64) -> f64 {
    let last = grid.steps();
    (0..=last)
        .into_par_iter()
        .map(|k| {
            let diff = slice_difference(a.slice(k), b.slice(k));
            let mut e = 0.0;
            for (x, mx) in &diff {
                for (y, my) in &diff {
                    e += mx * my * tent_kernel(distance_unchecked(x, y), width);
                }
            }
            let w = if k == last { 1.0 } else { grid.dt() };
            w * e
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

fn slice_difference(a: &MeasureSlice, b: &MeasureSlice) -> Vec<(NetworkPoint, f64)> {
    let mut out = Vec::new();
    let dv = b.vertex_mass() - a.vertex_mass();
    if dv != 0.0 {
        out.push((NetworkPoint::Vertex, dv));
    }
    for edge in 1..=a.num_edges() {
        for (j, (ma, mb)) in a.edge_masses(edge).iter().zip(b.edge_masses(edge)).enumerate() {
            if mb != ma {
                out.push((NetworkPoint::OnEdge { edge, r: (j + 1) as f64 * a.dr() }, mb - ma));
            }
        }
    }
    out
}
