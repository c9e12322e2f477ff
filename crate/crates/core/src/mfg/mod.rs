//! Measures on trajectory space and the Lagrangian mean field game.

mod equilibrium;
mod measure;
mod wasserstein;

pub use equilibrium::{
    best_response, control_bound, exploitability, holder_ratio, solve_equilibrium,
    solve_equilibrium_observed, Equilibrium, IterateView, IterationRecord, SolverSettings, StepRule,
};
pub use measure::{
    marginal_flow, sample_initial, EdgeDensity, InitialDistribution, MeasureFlow, MeasureSlice,
    Particle, TrajectoryMeasure, PRUNE_WEIGHT,
};
pub use wasserstein::{wasserstein1, MASS_TOLERANCE};
